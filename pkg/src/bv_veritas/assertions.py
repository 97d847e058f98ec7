"""Assertion helpers for tests of lattice identities."""

from __future__ import annotations

from collections.abc import Iterable

from bv_veritas.kernels import Matrix
from bv_veritas.poly import MIXED, Grading, Poly, grading, to_text
from bv_veritas.report import CheckRecord, Status
from bv_veritas.utils import short_text


def assert_poly_zero(poly: Poly, *, what: str = "polynomial") -> None:
    """
    Assert that a polynomial has no terms.

    Raises:
        AssertionError: With the leading terms and the largest coefficient otherwise

    Example:
        >>> assert_poly_zero(antibracket(model.theta0, model.S0), what="{theta0, S0}")
    """
    if not poly.is_zero():
        raise AssertionError(
            f"Expected {what} to vanish; {len(poly)} terms, max |coeff| {poly.abs_max()}: "
            f"{short_text(to_text(poly))}"
        )


def assert_poly_equal(actual: Poly, expected: Poly, *, reliable: int | None = None) -> None:
    """
    Assert two polynomials agree, optionally only on their reliable part.

    Args:
        actual: Computed polynomial
        expected: Expected polynomial
        reliable: Truncation slack passed to ``Poly.reliable`` before comparing
    """
    diff = actual - expected
    if reliable is not None:
        diff = diff.reliable(reliable)
    if not diff.is_zero():
        raise AssertionError(
            f"Polynomials differ in {len(diff)} terms: {short_text(to_text(diff))}"
        )


def assert_check_passes(record: CheckRecord) -> None:
    """Assert a check record is PASS, showing its defect and reason otherwise."""
    if record.status is not Status.PASS:
        raise AssertionError(
            f"Check {record.check_id} ({record.anchor}) is {record.status.value}: "
            f"defect={record.defect} reason={record.reason!r} details={record.details}"
        )


def assert_check_fails(record: CheckRecord) -> None:
    """Assert a negative control produced FAIL with a nonzero defect."""
    if record.status is not Status.FAIL:
        raise AssertionError(
            f"Check {record.check_id} ({record.anchor}) expected FAIL, got {record.status.value}"
        )
    if record.defect in ("", "0"):
        raise AssertionError(f"Check {record.check_id} failed without a defect")


def assert_grading(poly: Poly, *, gh: int | None = None, af: int | None = None, parity: int | None = None) -> Grading:
    """Assert a polynomial is homogeneous with the given gradings and return them."""
    g = grading(poly)
    if g is MIXED or not isinstance(g, Grading):
        raise AssertionError(f"Expected homogeneous grading, got mixed: {short_text(to_text(poly))}")
    for name, want in (("gh", gh), ("af", af), ("parity", parity)):
        have = getattr(g, name)
        if want is not None and have != want:
            raise AssertionError(f"Expected {name}={want}, got {have}")
    return g


def assert_kernel_zero_on_bulk(matrix: Matrix, rows: Iterable[int], cols: Iterable[int] | None = None) -> None:
    """Assert a matrix vanishes on ``rows x cols`` (``cols`` defaults to ``rows``)."""
    rows = set(rows)
    cols = set(cols) if cols is not None else rows
    block = matrix.restrict(rows, cols)
    if not block.is_zero():
        worst = max(block.items(), key=lambda item: item[2].abs_max())
        raise AssertionError(
            f"Expected zero block; {block.nnz()} entries, largest at {worst[0]},{worst[1]} = {worst[2]}"
        )
