"""Tests for Bogoliubov maps, the quantum master equation and s_hat."""

from __future__ import annotations

import random

import pytest
from pytest_mock import MockerFixture

from bv_veritas.assertions import assert_check_passes, assert_poly_equal, assert_poly_zero
from bv_veritas.deformation import ProductContext, random_local_poly
from bv_veritas.errors import QMENotVerified
from bv_veritas.interacting import (
    InteractionContext,
    bogoliubov,
    bogoliubov_inverse,
    check_anomaly_integral,
    check_covariance,
    check_field_equation,
    check_free_theory_change,
    check_glz,
    check_intertwining,
    check_laplacian_v,
    check_laplacian_v_products,
    check_mwi_closed_form,
    check_qbv_nilpotent,
    check_qme,
    check_quantum_bv,
    check_retarded_support,
    check_star_v,
    extract_anomaly,
    laplacian_v,
    quantum_bv,
    retarded_coeffs,
    second_retarded,
)
from bv_veritas.models import Model
from bv_veritas.poly import Poly
from bv_veritas.report import Status


def not_closed(ctx: ProductContext) -> InteractionContext:
    """``lambda (theta0 + A_x(4,0)‡ C(4,0))``; its bracket with S0 is C E_Ax on the slab."""
    model = ctx.model
    anti = model.ring.gen(model.table.antifield(model.id("Ax(4,0)")))
    return InteractionContext.of(ctx, (model.theta0 + anti * model.var("C(4,0)")).shift(dm=1))


class TestBogoliubov:
    """Test suite for the retarded map R_V."""

    def test_free_map_is_identity(self, scalar_ctx: ProductContext) -> None:
        """Test R_0(F) = F."""
        F = scalar_ctx.model.var("phi(4,0)")
        assert bogoliubov(InteractionContext.of(scalar_ctx, scalar_ctx.ring.zero()), F) == F

    def test_zeroth_order(self, scalar_ictx: InteractionContext) -> None:
        """Test that the lambda^0 coefficient of R_V(F) is F."""
        F = scalar_ictx.model.var("phi(4,0)") * scalar_ictx.model.var("phi(4,1)")
        assert retarded_coeffs(scalar_ictx, F, 0) == F

    def test_order_beyond_window(self, scalar_ictx: InteractionContext) -> None:
        """Test that coefficients above lambda_max are refused."""
        with pytest.raises(ValueError, match="beyond"):
            retarded_coeffs(scalar_ictx, scalar_ictx.model.var("phi(4,0)"), 2)

    def test_inverse(self, scalar_ictx: InteractionContext) -> None:
        """Test R_V(R_V^-1(Y)) = Y."""
        Y = scalar_ictx.model.var("phi(4,0)") * scalar_ictx.model.var("phi(3,1)")
        assert_poly_equal(bogoliubov(scalar_ictx, bogoliubov_inverse(scalar_ictx, Y)), Y, reliable=0)

    def test_glz(self, scalar_ictx: InteractionContext) -> None:
        """Test the GLZ relation for two linear fields."""
        model = scalar_ictx.model
        assert_check_passes(check_glz(scalar_ictx, model.var("phi(4,0)"), model.var("phi(3,1)")))

    def test_retarded_support(self, scalar_ictx: InteractionContext) -> None:
        """Test that later and unrelated vertices do not act on F at first order."""
        record = check_retarded_support(scalar_ictx, scalar_ictx.model.var("phi(4,0)"))
        assert_check_passes(record)
        assert int(record.details["nonzero_past_vertices"]) > 0
        assert int(record.details["unrelated_vertices"]) > 0
        assert int(record.details["later_vertices"]) > 0
        assert record.details["second_order_pairs"].startswith("SKIPPED")

    def test_retarded_support_second_order(self, scalar_ictx_hbar2: InteractionContext) -> None:
        """Test R_2 support with hbar^2 kept, including nonzero past pairs."""
        record = check_retarded_support(scalar_ictx_hbar2, scalar_ictx_hbar2.model.var("phi(4,0)"))
        assert_check_passes(record)
        assert int(record.details["second_order_pairs"]) > 0
        assert int(record.details["nonzero_past_pairs"]) > 0

    def test_retarded_support_without_past(self, scalar_ictx: InteractionContext) -> None:
        """Test that an observable no vertex acts on fails the check."""
        record = check_retarded_support(scalar_ictx, scalar_ictx.model.var("phi(1,0)"))
        assert record.status is Status.FAIL
        assert "no vertex" in record.reason

    def test_retarded_support_sees_second_order(
        self, scalar_ictx_hbar2: InteractionContext, mocker: MockerFixture
    ) -> None:
        """Test that a second-order leak fails the check."""
        model = scalar_ictx_hbar2.model
        mocker.patch("bv_veritas.interacting.second_retarded", return_value=model.var("phi(4,0)"))
        record = check_retarded_support(scalar_ictx_hbar2, model.var("phi(4,0)"))
        assert record.status is Status.FAIL
        assert record.defect == "1"

    def test_second_retarded_vanishes_for_later_vertex(self, scalar_ictx_hbar2: InteractionContext) -> None:
        """Test R_2(v, w; F) = 0 when w is later than F."""
        phi = scalar_ictx_hbar2.model.var
        v = phi("phi(2,0)") * phi("phi(2,0)") * phi("phi(2,1)")
        w = phi("phi(6,0)") * phi("phi(6,1)") * phi("phi(6,1)")
        assert_poly_zero(second_retarded(scalar_ictx_hbar2, v, w, phi("phi(4,0)")))

    def test_second_retarded_chain(self, scalar_ictx_hbar2: InteractionContext) -> None:
        """Test that a vertex acting on F through another past vertex gives R_2 != 0."""
        phi = scalar_ictx_hbar2.model.var
        v = phi("phi(3,0)") * phi("phi(3,0)")
        w = phi("phi(2,0)") * phi("phi(2,0)")
        assert not second_retarded(scalar_ictx_hbar2, v, w, phi("phi(4,0)")).is_zero()

    def test_second_retarded_starts_at_hbar2(self, scalar_ictx: InteractionContext) -> None:
        """Test that R_2 has no term below hbar^2."""
        phi = scalar_ictx.model.var
        v = phi("phi(3,0)") * phi("phi(3,0)")
        w = phi("phi(2,0)") * phi("phi(2,0)")
        assert_poly_zero(second_retarded(scalar_ictx, v, w, phi("phi(4,0)")))

    def test_star_v(self, scalar_ictx: InteractionContext) -> None:
        """Test the round trip and associativity of the interacting star product."""
        model = scalar_ictx.model
        F, G = model.var("phi(4,0)"), model.var("phi(3,1)")
        assert_check_passes(check_star_v(scalar_ictx, [(F, G, F * G)]))

    def test_field_equation(self, scalar_ictx: InteractionContext) -> None:
        """Test R_V(E_a - dV/dphi^a) = E_a on the slab."""
        assert_check_passes(check_field_equation(scalar_ictx))

    def test_covariance(self, scalar_ictx: InteractionContext) -> None:
        """Test R_{V+W}(F) = R_V(F) for W later than F."""
        model = scalar_ictx.model
        W = model.var("phi(7,0)").shift(dm=1)
        record = check_covariance(scalar_ictx, model.var("phi(4,0)"), W)
        assert_check_passes(record)
        assert record.details["support"] == "later"

    def test_covariance_earlier_conjugates(self, scalar_ictx: InteractionContext) -> None:
        """Test that an earlier W acts on R_V(F) by the relative S-matrix."""
        model = scalar_ictx.model
        F, W = model.var("phi(4,0)"), model.var("phi(1,0)").shift(dm=1)
        record = check_covariance(scalar_ictx, F, W)
        assert_check_passes(record)
        assert record.details["support"] == "earlier"
        shifted = scalar_ictx.with_interaction(scalar_ictx.V + W)
        assert bogoliubov(shifted, F) != bogoliubov(scalar_ictx, F)

    def test_covariance_overlap_skipped(self, scalar_ictx: InteractionContext) -> None:
        """Test that a W overlapping F is SKIPPED rather than passed."""
        model = scalar_ictx.model
        record = check_covariance(scalar_ictx, model.var("phi(4,0)"), model.var("phi(4,1)").shift(dm=1))
        assert record.status is Status.SKIPPED
        assert "neither later nor earlier" in record.reason

    def test_covariance_vertex_between_skipped(self, scalar_ictx: InteractionContext) -> None:
        """Test that a vertex of V between W and F makes the conjugation inapplicable."""
        model = scalar_ictx.model
        record = check_covariance(scalar_ictx, model.var("phi(4,0)"), model.var("phi(2,0)").shift(dm=1))
        assert record.status is Status.SKIPPED
        assert "between" in record.reason


class TestAnomaly:
    """Test suite for the Master Ward Identity and the anomaly."""

    def test_mwi_closed_form_scalar(self, scalar_ictx: InteractionContext) -> None:
        """Test that the anomaly read off the MWI equals Lap V."""
        assert_check_passes(check_mwi_closed_form(scalar_ictx))

    def test_scalar_anomaly_vanishes(self, scalar_ictx: InteractionContext) -> None:
        """Test that an antifield-free interaction has no anomaly on the slab."""
        assert_poly_zero(scalar_ictx.model.restrict(extract_anomaly(scalar_ictx)))

    def test_anomaly_integral(self, scalar_ictx: InteractionContext) -> None:
        """Test Lap V = int_0^1 Lap_{mu V}(V) d mu."""
        assert_check_passes(check_anomaly_integral(scalar_ictx))

    def test_laplacian_v(self, scalar_ictx: InteractionContext, rng: random.Random) -> None:
        """Test Lap_V = Lap on random quadratic observables."""
        samples = [random_local_poly(scalar_ictx.model, rng) for _ in range(3)]
        assert_check_passes(check_laplacian_v(scalar_ictx, samples))

    def test_qme_scalar(self, scalar_ictx: InteractionContext) -> None:
        """Test the QME for the scalar self-interaction."""
        assert_check_passes(check_qme(scalar_ictx))
        assert scalar_ictx.qme_status == "pass"


class TestQuantumBV:
    """Test suite for s_hat on the Maxwell model."""

    @pytest.fixture
    def linear(self, em_model: Model) -> list[Poly]:
        return [em_model.var("Ax(4,0)"), em_model.var("At(4,1)")]

    def test_qme_em(self, em_ictx: InteractionContext) -> None:
        """Test the QME and its closed form for a conserved current."""
        record = check_qme(em_ictx)
        assert_check_passes(record)
        assert record.details == {"qme.defect": "PASS", "qme.closed_form": "PASS"}

    def test_mwi_closed_form_em(self, em_ictx: InteractionContext) -> None:
        """Test the MWI closed form with theta0 in the interaction."""
        assert_check_passes(check_mwi_closed_form(em_ictx))

    def test_quantum_bv_closed_form(self, em_ictx: InteractionContext, linear: list[Poly]) -> None:
        """Test s_hat from its definition against the closed form."""
        assert_check_passes(check_quantum_bv(em_ictx, linear))

    def test_qbv_nilpotent(self, em_ictx: InteractionContext, linear: list[Poly]) -> None:
        """Test s_hat^2 = 0."""
        assert_check_passes(check_qbv_nilpotent(em_ictx, linear))

    def test_intertwining(self, em_ictx: InteractionContext, linear: list[Poly]) -> None:
        """Test {R_V X, S0}_* = R_V(s_hat X)."""
        assert_check_passes(check_intertwining(em_ictx, linear))

    def test_laplacian_v_em(self, em_ictx: InteractionContext, linear: list[Poly]) -> None:
        """Test Lap_V = Lap on linear fields."""
        assert_check_passes(check_laplacian_v(em_ictx, linear))

    @pytest.fixture
    def charged(self, em_model: Model) -> list[Poly]:
        model = em_model
        return [
            model.var("Ax(4,0)") * model.ring.gen(model.table.antifield(model.id("Ax(4,0)"))),
            model.var("C(4,0)") * model.ring.gen(model.table.antifield(model.id("C(4,0)"))),
        ]

    def test_laplacian_v_odd_from_mwi(self, em_ictx: InteractionContext, charged: list[Poly]) -> None:
        """Test that the odd element Ax Ax‡ gets Lap_V = 1 through the Grassmann direction."""
        odd = charged[0]
        assert odd.parity() == 1
        value = laplacian_v(em_ictx, odd)
        assert_poly_equal(em_ictx.model.restrict(value), em_ictx.model.ring.one())
        assert em_ictx.model.memo["laplacian_direction"] not in value.generators()

    def test_laplacian_v_even_antifield(self, em_ictx: InteractionContext, charged: list[Poly]) -> None:
        """Test Lap_V(C C‡) = -1 read off the Master Ward Identity."""
        value = laplacian_v(em_ictx, charged[1])
        assert_poly_equal(em_ictx.model.restrict(value), -em_ictx.model.ring.one())

    def test_laplacian_v_charged(self, em_ictx: InteractionContext, charged: list[Poly]) -> None:
        """Test Lap_V = Lap on elements carrying antifields."""
        assert_check_passes(check_laplacian_v(em_ictx, charged))

    def test_laplacian_v_products(
        self, em_ictx: InteractionContext, linear: list[Poly], charged: list[Poly]
    ) -> None:
        """Test the product rule of Lap_V for even and odd left factors."""
        pairs = list(zip(linear, charged))
        pairs += [(G, F) for F, G in pairs]
        record = check_laplacian_v_products(em_ictx, pairs)
        assert_check_passes(record)
        assert record.details["pairs"] == "4"

    def test_quantum_bv_charged(self, em_ictx: InteractionContext, charged: list[Poly]) -> None:
        """Test s_hat from its definition on elements with a nonzero Laplacian."""
        assert_check_passes(check_quantum_bv(em_ictx, charged))

    def test_glz_em(self, em_ictx: InteractionContext) -> None:
        """Test the GLZ relation across field components."""
        model = em_ictx.model
        assert_check_passes(check_glz(em_ictx, model.var("Ax(4,0)"), model.var("B(3,0)")))

    def test_field_equation_em(self, em_ictx: InteractionContext) -> None:
        """Test the interacting field equation on even slab rows."""
        assert_check_passes(check_field_equation(em_ictx))

    def test_requires_qme(self, em_ctx: ProductContext) -> None:
        """Test that s_hat refuses an interaction violating the QME."""
        anomalous = not_closed(em_ctx)
        with pytest.raises(QMENotVerified):
            quantum_bv(anomalous, em_ctx.model.var("Ax(4,0)"))
        assert anomalous.qme_status == "fail"


class TestFreeTheoryChange:
    """Test suite for moving theta0 between the free and interacting parts."""

    def test_conserved_current(self, em_ictx: InteractionContext) -> None:
        """Test both splittings agree and the QME holds."""
        conserved = em_ictx.V - em_ictx.model.theta0.shift(dm=1)
        record = check_free_theory_change(em_ictx, conserved)
        assert_check_passes(record)
        assert record.details["defect_original"] == "0"

    def test_non_conserved_current(self, em_ictx: InteractionContext) -> None:
        """Test that a current on a single edge keeps the QME at first order."""
        model = em_ictx.model
        j = model.var("Ax(4,0)").shift(dm=1)
        record = check_free_theory_change(em_ictx, j)
        assert_check_passes(record)
        assert record.details["defect_modified"] == "0"
