"""Shared helpers for messages and test tooling."""

from __future__ import annotations

from typing import Any

from bv_veritas.errors import (
    AnomalyPresent,
    CMEDefect,
    LaurentOverflow,
    ProfileOutOfBulk,
    QMENotVerified,
    SingularLeadingBlock,
    TooSmall,
    VeritasError,
    WindowMismatch,
)

# Hints printed by the pytest plugin when a test dies on an engine error.
ERROR_HINTS: dict[type[VeritasError], str] = {
    TooSmall: "Use at least a 6x2 lattice.",
    ProfileOutOfBulk: "Enlarge Nt or reduce the margin so the profile fits inside the bulk.",
    LaurentOverflow: "Widen the hbar window (k_min) or lower lambda_max.",
    WindowMismatch: "Build every operand on the same ring and window.",
    QMENotVerified: "Run check_qme first, or use an interaction satisfying the QME.",
    AnomalyPresent: "The current is not conserved or the interaction carries a Laplacian.",
    CMEDefect: "Check the PK condition and the conservation of the current.",
    SingularLeadingBlock: "The lead certificate of the model does not match its kernel.",
}


def short_text(s: str, max_length: int = 200) -> str:
    """Truncate with an ellipsis."""
    if len(s) <= max_length:
        return s
    return s[: max_length - 3] + "..."


def error_hint(exc: BaseException) -> str | None:
    """Hint for the most specific engine error class matching ``exc``."""
    for cls in type(exc).__mro__:
        for err, hint in ERROR_HINTS.items():
            if err is cls:
                return hint
    return None


def describe_error(exc: BaseException) -> str:
    """Error message with its structured detail and a hint when one applies."""
    message = str(exc).strip() or type(exc).__name__
    hint = error_hint(exc)
    return f"{type(exc).__name__}: {message}" + (f"\nHint: {hint}" if hint else "")


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursive dict merge; ``override`` wins on leaves."""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result
