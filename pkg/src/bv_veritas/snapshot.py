"""Golden-file snapshots for polynomials, kernel dumps and rendered reports."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from bv_veritas.kernels import Kernel
from bv_veritas.poly import Poly, to_text
from bv_veritas.report import Report, render_report


class SnapshotHelper:
    """
    Compare engine output against files saved on a previous run.

    The first run writes the snapshot; later runs compare against it. Run
    with ``--veritas-update-snapshots`` to rewrite every snapshot touched.

    Example:
        >>> def test_theta(em_model, snapshot):
        ...     snapshot.assert_match_poly(em_model.theta0, "theta0")
    """

    def __init__(self, request: pytest.FixtureRequest, snapshot_dir: Path) -> None:
        """
        Initialize snapshot helper.

        Args:
            request: Pytest fixture request
            snapshot_dir: Directory to store snapshots
        """
        self.request = request
        self.snapshot_dir = snapshot_dir
        self.update_snapshots = request.config.getoption("--veritas-update-snapshots", False)
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)

    def _get_snapshot_path(self, snapshot_name: str, suffix: str) -> Path:
        test_name = self.request.node.name.split("[")[0]
        return self.snapshot_dir / f"{test_name}__{snapshot_name}{suffix}"

    def _serialize(self, value: Any) -> str:
        if hasattr(value, "model_dump"):
            value = value.model_dump(mode="json")
        return json.dumps(value, indent=2, sort_keys=True, default=str)

    def _compare(self, path: Path, actual: str, snapshot_name: str, update: bool | None) -> None:
        should_update = update if update is not None else self.update_snapshots
        if should_update or not path.exists():
            path.write_text(actual)
            if should_update:
                pytest.skip(f"Updated snapshot: {snapshot_name}")
            return
        expected = path.read_text()
        if actual != expected:
            raise AssertionError(
                f"Snapshot mismatch for '{snapshot_name}'.\n"
                f"Expected:\n{expected}\n\n"
                f"Actual:\n{actual}\n\n"
                f"To update snapshots, run with --veritas-update-snapshots"
            )

    def assert_match(self, value: Any, snapshot_name: str, *, update: bool | None = None) -> None:
        """
        Assert that a JSON-serializable value (or pydantic model) matches its snapshot.

        Raises:
            AssertionError: If value doesn't match snapshot
        """
        path = self._get_snapshot_path(snapshot_name, ".json")
        self._compare(path, self._serialize(value), snapshot_name, update)

    def assert_match_text(self, text: str, snapshot_name: str, *, update: bool | None = None) -> None:
        path = self._get_snapshot_path(snapshot_name, ".txt")
        self._compare(path, text, snapshot_name, update)

    def assert_match_poly(self, poly: Poly, snapshot_name: str, *, update: bool | None = None) -> None:
        """Snapshot the text serialisation of a polynomial."""
        self.assert_match_text(to_text(poly) + "\n", snapshot_name, update=update)

    def assert_match_kernel(self, kernel: Kernel, snapshot_name: str, *, update: bool | None = None) -> None:
        """Snapshot a kernel in the dump format."""
        self.assert_match_text("\n".join(kernel.dump_lines()) + "\n", snapshot_name, update=update)

    def assert_match_report(self, report: Report, snapshot_name: str, *, update: bool | None = None) -> None:
        """Snapshot the Markdown rendering, which carries no timestamp."""
        self.assert_match_text(render_report(report, "md"), snapshot_name, update=update)

    def get_snapshot(self, snapshot_name: str, suffix: str = ".txt") -> str | None:
        path = self._get_snapshot_path(snapshot_name, suffix)
        return path.read_text() if path.exists() else None
