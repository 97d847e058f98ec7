"""Pytest fixtures shipped with the plugin."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import pytest

from bv_veritas.config import RunConfig


@pytest.fixture
def snapshot_dir(request: pytest.FixtureRequest) -> Path:
    """
    Directory for golden files, ``__snapshots__`` next to the test file.

    Args:
        request: Pytest fixture request
    """
    return Path(request.fspath).parent / "__snapshots__"


@pytest.fixture
def snapshot(request: pytest.FixtureRequest, snapshot_dir: Path) -> Any:
    """
    Snapshot helper bound to the current test.

    Returns:
        Snapshot helper instance
    """
    from bv_veritas.snapshot import SnapshotHelper

    return SnapshotHelper(request, snapshot_dir)


@pytest.fixture
def veritas_overrides() -> dict[str, Any]:
    """
    Section overrides merged into :func:`veritas_config`.

    Override in a ``conftest.py`` to change lattice size or truncation for
    a directory of tests.

    Example:
        >>> @pytest.fixture
        >>> def veritas_overrides():
        ...     return {"model": {"Nt": 8, "Nx": 2}, "margins": {"margin": 1}}
    """
    return {}


@pytest.fixture
def veritas_config(veritas_overrides: dict[str, Any]) -> RunConfig:
    """
    Small run configuration: 8x2 lattice, margin 1, ``lambda_max = 1``.

    Returns:
        Validated RunConfig
    """
    from bv_veritas.utils import deep_merge

    base: dict[str, Any] = {
        "model": {"Nt": 8, "Nx": 2},
        "truncation": {"lambda_max": 1, "k_min": -1, "k_max": 1},
        "margins": {"margin": 1},
        "run": {"workers": 2},
    }
    return RunConfig.model_validate(deep_merge(base, veritas_overrides))
