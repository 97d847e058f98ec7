"""Tests for exact scalars and truncated coefficient series."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st
from sympy.polys.domains import QQ_I

from bv_veritas.errors import LaurentOverflow, NotInvertible, WindowMismatch
from bv_veritas.series import (
    HBAR,
    MU,
    SERIES_RING,
    I,
    ONE,
    Coeff,
    Scalar,
    Window,
    format_coeff,
    parse_coeff,
)

rationals = st.fractions(min_value=-10, max_value=10, max_denominator=12)
scalars = st.builds(Scalar, rationals, rationals)


class TestScalar:
    """Test suite for Gaussian rationals."""

    def test_i_squared(self) -> None:
        """Test that i * i = -1."""
        assert I * I == Scalar(-1)

    def test_division(self) -> None:
        """Test exact complex division."""
        z = Scalar(1, 2) / Scalar(3, -1)
        assert z * Scalar(3, -1) == Scalar(1, 2)

    def test_division_by_zero(self) -> None:
        """Test division by zero raises."""
        with pytest.raises(ZeroDivisionError):
            ONE / Scalar(0)

    def test_compares_with_rationals(self) -> None:
        """Test that real scalars equal plain ints and fractions."""
        assert Scalar(Fraction(1, 2)) == Fraction(1, 2)
        assert Scalar(3) == 3
        assert Scalar(3, 1) != 3

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("3/2", Scalar(Fraction(3, 2))),
            ("-1/2i", Scalar(0, Fraction(-1, 2))),
            ("1-2i", Scalar(1, -2)),
            ("i", Scalar(0, 1)),
        ],
    )
    def test_parse(self, text: str, expected: Scalar) -> None:
        """Test parsing of the printed forms."""
        assert Scalar.parse(text) == expected

    @given(scalars)
    def test_str_parse_inverse(self, z: Scalar) -> None:
        """Test that parse inverts str."""
        assert Scalar.parse(str(z)) == z

    @given(scalars, scalars, scalars)
    def test_distributive(self, a: Scalar, b: Scalar, c: Scalar) -> None:
        """Test distributivity of exact arithmetic."""
        assert a * (b + c) == a * b + a * c

    def test_abs_max(self) -> None:
        """Test the entry norm used for defects."""
        assert Scalar(-3, 2).abs_max() == 3


class TestWindow:
    """Test suite for truncation windows."""

    def test_symmetric(self) -> None:
        """Test the default symmetric window."""
        assert Window.symmetric(2) == Window(2, -2, 2)

    def test_rejects_window_without_origin(self) -> None:
        """Test that the window must contain lambda^0 hbar^0."""
        with pytest.raises(WindowMismatch):
            Window(1, 1, 2)


class TestCoeff:
    """Test suite for truncated series."""

    @pytest.fixture
    def w(self) -> Window:
        return Window(2, -2, 2)

    def test_monomial_rejects_low_hbar(self, w: Window) -> None:
        """Test that hbar^k with k < -m is not admissible."""
        with pytest.raises(LaurentOverflow):
            Coeff.monomial(0, -1, 1, w)

    def test_truncation_counts_lost_terms(self, w: Window) -> None:
        """Test that terms above the window are discarded and counted."""
        a = Coeff.monomial(2, 0, 1, w)
        product = a * a
        assert product.is_zero()
        assert product.lost == 1

    def test_window_mismatch(self, w: Window) -> None:
        """Test that mixing windows raises."""
        with pytest.raises(WindowMismatch):
            Coeff.one(w) + Coeff.one(Window(1, -1, 1))

    def test_project_outside_window(self, w: Window) -> None:
        """Test projection outside the window raises."""
        with pytest.raises(WindowMismatch):
            Coeff.one(w).project(3, 0)

    def test_shift_below_window(self, w: Window) -> None:
        """Test that dividing by hbar past k_min raises."""
        with pytest.raises(LaurentOverflow):
            Coeff.monomial(1, -1, 1, w).shift(dk=-2)

    def test_shift_below_lambda_order(self, w: Window) -> None:
        """Test that a shift may not leave hbar^k with k < -m even inside k_min."""
        with pytest.raises(LaurentOverflow, match="hbar\\^-2 at lambda\\^1"):
            Coeff.monomial(1, 0, 1, w).shift(dk=-2)
        assert Coeff.monomial(2, 0, 1, w).shift(dk=-2).terms == {(2, -2): ONE}

    def test_stored_in_mu_hbar_ring(self, w: Window) -> None:
        """Test that lambda^m hbar^k is stored as mu^m hbar^(k+m) over QQ_I."""
        a = Coeff.monomial(1, -1, I, w) + Coeff.monomial(2, 1, 3, w)
        assert a.poly.ring == SERIES_RING
        assert a.poly == MU * QQ_I(0, 1) + 3 * MU**2 * HBAR**3

    def test_product_matches_untruncated_expansion(self, w: Window) -> None:
        """Test the truncated product against the full ring product cut to the window."""
        a = Coeff.constant(2, w) + Coeff.monomial(1, -1, I, w) + Coeff.monomial(1, 2, 1, w)
        b = Coeff.monomial(1, 0, 5, w) + Coeff.monomial(0, 1, -1, w)
        full = a.poly * b.poly
        kept = {
            (m, j): v for (m, j), v in full.items() if m <= w.lambda_max and j - m <= w.k_max
        }
        assert (a * b).poly == SERIES_RING.from_dict(kept)
        assert (a * b).lost == 1

    def test_invert(self, w: Window) -> None:
        """Test the geometric-series inverse."""
        a = Coeff.constant(2, w) + Coeff.monomial(1, 0, 3, w) + Coeff.monomial(1, -1, I, w)
        assert a * a.invert() == Coeff.one(w)

    def test_invert_requires_unit(self, w: Window) -> None:
        """Test that a series without a constant unit part is not invertible."""
        with pytest.raises(NotInvertible):
            Coeff.monomial(1, 0, 1, w).invert()

    def test_reliable_region(self, w: Window) -> None:
        """Test that reliable keeps terms with k + m <= k_max - slack."""
        a = Coeff.monomial(1, 1, 1, w) + Coeff.monomial(1, -1, 1, w) + Coeff.one(w)
        assert a.reliable(1).terms == {(1, -1): ONE, (0, 0): ONE}

    def test_format_parse_inverse(self, w: Window) -> None:
        """Test that parse_coeff inverts format_coeff."""
        a = Coeff.monomial(1, -1, Scalar(Fraction(1, 2), -3), w) + Coeff.constant(-2, w)
        assert format_coeff(a) == "(-2)[0,0] + (1/2-3i)[1,-1]"
        assert parse_coeff(format_coeff(a), w) == a

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(-2, 2), scalars), max_size=4))
    def test_product_commutative(self, entries: list[tuple[int, int, Scalar]]) -> None:
        """Test that the series product is commutative."""
        w = Window(2, -2, 2)
        a = Coeff.zero(w)
        for m, k, v in entries:
            if k >= -m:
                a = a + Coeff.monomial(m, k, v, w)
        b = Coeff.constant(3, w) + Coeff.monomial(1, -1, I, w)
        assert a * b == b * a
