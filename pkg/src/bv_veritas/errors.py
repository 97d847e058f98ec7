"""Exception hierarchy for bv-veritas.

Every error raised by the engine derives from :class:`VeritasError`. Check
functions never raise for a failing identity; errors signal violated
preconditions and are turned into SKIPPED records by the suite scheduler.
"""

from __future__ import annotations

from typing import Any


class VeritasError(Exception):
    """Base class for all engine errors.

    Args:
        message: Human readable description
        **detail: Structured context echoed into report reasons
    """

    def __init__(self, message: str = "", **detail: Any) -> None:
        super().__init__(message)
        self.detail: dict[str, Any] = detail

    def __str__(self) -> str:
        message = super().__str__()
        if not self.detail:
            return message
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.detail.items()))
        return f"{message} ({extra})"


# Series ring
class WindowMismatch(VeritasError):
    """Operands carry different truncation windows, or an index lies outside one."""


class NotInvertible(VeritasError):
    """The lambda^0 part of a series is not a nonzero multiple of hbar^0."""


class LaurentOverflow(VeritasError):
    """A term would need an hbar power below the window's lower bound."""


# Graded polynomials
class ParityMismatch(VeritasError):
    """A substitution image has the wrong Grassmann parity."""


class GradingMismatch(VeritasError):
    """An object does not carry the grading an operation requires."""


class MixedParity(VeritasError):
    """A parity-homogeneous input was required."""


# Lattice and models
class TooSmall(VeritasError):
    """Lattice dimensions below the supported minimum."""


class CurrentNotConserved(VeritasError):
    """The external current has a nonzero codifferential."""


# Green functions
class SingularLeadingBlock(VeritasError):
    """A leading-slice block of P is not square or not invertible."""


class SupportViolation(VeritasError):
    """A propagator column leaks outside the discrete causal cone."""


class EigenFailure(VeritasError):
    """The mode construction of the Wick kernel failed."""


class KernelNotBisolution(VeritasError):
    """The star kernel is not annihilated by P on bulk rows."""


# Products and interaction
class SupportsNotOrdered(VeritasError):
    """Functionals are not separated in time by at least the stencil radius."""


class QMENotVerified(VeritasError):
    """An operation requires a passing quantum master equation."""


class FreeQMEFailed(VeritasError):
    """The free theory's generator of gauge symmetry has a nonzero anomaly."""


class CMEDefect(VeritasError):
    """The classical master equation fails for the chosen action."""


# BRST
class ProfileOutOfBulk(VeritasError):
    """A charge profile does not fit inside the bulk margins."""


class HypothesisFailed(VeritasError):
    """A prerequisite identity of a proposition does not hold."""


class AnomalyPresent(VeritasError):
    """The interaction has a nonzero anomaly."""


# Configuration
class UnknownSuite(VeritasError):
    """A suite name is not registered."""


class ConfigInvalid(VeritasError):
    """A run configuration failed to parse or validate.

    Args:
        message: Summary of the failure
        diagnostics: ``(line_number, message)`` pairs, line 0 when unknown
    """

    def __init__(self, message: str, diagnostics: list[tuple[int, str]] | None = None) -> None:
        super().__init__(message)
        self.diagnostics: list[tuple[int, str]] = list(diagnostics or [])

    def __str__(self) -> str:
        lines = [super().__str__()]
        lines.extend(f"  line {line}: {text}" for line, text in self.diagnostics)
        return "\n".join(lines)
