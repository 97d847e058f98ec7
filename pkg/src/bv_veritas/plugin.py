"""Pytest plugin registration for bv-veritas."""

from __future__ import annotations

import logging
from typing import Any

import pytest

from bv_veritas.errors import VeritasError
from bv_veritas.fixtures import snapshot, snapshot_dir, veritas_config, veritas_overrides
from bv_veritas.utils import describe_error

logger = logging.getLogger(__name__)

# Export fixtures so pytest can discover them
__all__ = [
    "snapshot",
    "snapshot_dir",
    "veritas_config",
    "veritas_overrides",
]

# Fixture names that build lattice models; tests using them are exact-arithmetic tests.
MODEL_FIXTURES = frozenset({
    "em_model", "scalar_model", "em_props", "scalar_props", "em_ctx", "scalar_ctx",
    "em_ictx", "scalar_ictx", "em_model2", "em_ictx2", "scalar_ictx_hbar2", "veritas_config",
})
SLOW_FIXTURES = frozenset({"em_ictx", "em_solutions", "em_model2", "em_ictx2"})


def pytest_configure(config: pytest.Config) -> None:
    """
    Register markers and apply the engine log level.

    Args:
        config: Pytest configuration object
    """
    config.addinivalue_line("markers", "veritas: test exercises the verification engine")
    config.addinivalue_line("markers", "veritas_exact: test asserts an exact lattice identity")
    config.addinivalue_line("markers", "veritas_slow: test builds interacting gauge models")

    level = getattr(config.option, "veritas_log_level", None)
    if level:
        logging.getLogger("bv_veritas").setLevel(str(level).upper())

    logger.debug("bv-veritas plugin configured")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    """
    Auto-mark tests by the fixtures they request.

    Args:
        config: Pytest configuration object
        items: List of collected test items
    """
    for item in items:
        fixture_names = set(getattr(item, "fixturenames", ()))
        if fixture_names & MODEL_FIXTURES:
            item.add_marker(pytest.mark.veritas)
            item.add_marker(pytest.mark.veritas_exact)
        if fixture_names & SLOW_FIXTURES:
            item.add_marker(pytest.mark.veritas_slow)


def pytest_addoption(parser: pytest.Parser) -> None:
    """
    Add command-line options.

    Args:
        parser: Pytest parser object
    """
    group = parser.getgroup("veritas")
    group.addoption(
        "--veritas-log-level",
        action="store",
        default="WARNING",
        help="Log level for the bv_veritas logger (DEBUG, INFO, WARNING, ERROR)",
    )
    group.addoption(
        "--veritas-update-snapshots",
        action="store_true",
        default=False,
        help="Update snapshot files instead of comparing",
    )


def pytest_report_header(config: pytest.Config) -> list[str]:
    """
    Report the engine log level in the session header.

    Args:
        config: Pytest configuration object
    """
    headers = []
    if hasattr(config.option, "veritas_log_level"):
        headers.append(f"veritas: log-level={config.option.veritas_log_level}")
    return headers


@pytest.hookimpl(tryfirst=True)
def pytest_exception_interact(
    node: pytest.Item,
    call: pytest.CallInfo[Any],
    report: pytest.TestReport,
) -> None:
    """
    Log a hint when a test dies on an engine error.

    Args:
        node: Test item
        call: Call information
        report: Test report
    """
    if call.excinfo is None:
        return
    exc_value = call.excinfo.value
    if isinstance(exc_value, VeritasError):
        logger.error(f"Engine error in {node.nodeid}: {describe_error(exc_value)}")
