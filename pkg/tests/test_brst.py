"""Tests for charge profiles, on-shell reduction and the BRST charge."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from bv_veritas.assertions import assert_check_passes, assert_grading
from bv_veritas.brst import (
    Profile,
    SolutionSpace,
    charge,
    check_current_conservation,
    check_free_charge,
    check_main_theorem,
    divergence_density,
    onshell_defect,
    onshell_reduce,
    profiles_around,
    split_charge,
)
from bv_veritas.deformation import ProductContext
from bv_veritas.errors import HypothesisFailed, ProfileOutOfBulk, QMENotVerified
from bv_veritas.interacting import (
    InteractionContext,
    bogoliubov,
    check_qme,
    laplacian_v,
    quantum_bv,
)
from bv_veritas.models import Model
from bv_veritas.poly import Poly, slices_of
from bv_veritas.series import I


class TestProfile:
    """Test suite for time profiles."""

    def test_plateau(self) -> None:
        """Test a sharp plateau."""
        eta = Profile.plateau(2, 4)
        assert [eta(t) for t in range(6)] == [0, 0, 1, 1, 1, 0]
        assert eta.support == {2, 3, 4}

    def test_ramp(self) -> None:
        """Test the linear ramp on both sides."""
        eta = Profile.plateau(3, 4, ramp=2)
        assert eta(2) == eta(5) == Fraction(1, 2)
        assert eta(1) == 0

    @pytest.mark.parametrize(
        "t1,t2,ramp,match", [(2, 4, 0, "stencil"), (4, 2, 1, "empty")]
    )
    def test_invalid(self, t1: int, t2: int, ramp: int, match: str) -> None:
        """Test that short ramps and empty plateaus are refused."""
        with pytest.raises(ValueError, match=match):
            Profile.plateau(t1, t2, ramp)

    def test_arithmetic(self) -> None:
        """Test that differences of plateaus drop zero weights."""
        wide, narrow = Profile.plateau(1, 5), Profile.plateau(3, 5)
        assert (wide - narrow).support == {1, 2}
        assert (narrow - narrow).support == set()

    def test_validate(self, em_model: Model) -> None:
        """Test that a profile touching slice 0 leaves the bulk."""
        with pytest.raises(ProfileOutOfBulk):
            Profile.plateau(0, 2).validate(em_model)

    def test_profiles_around(self, em_model: Model) -> None:
        """Test eta_plus and eta_minus around an observable at slice 4."""
        plus, minus = profiles_around(em_model.var("Ax(4,0)"), em_model)
        assert plus.support == {2, 3, 4, 5, 6}
        assert minus.values == {1: -1}
        assert (plus - minus).support == set(em_model.bulk)

    def test_profiles_need_room(self, em_model: Model) -> None:
        """Test that an observable too early for eta_minus is refused."""
        with pytest.raises(ProfileOutOfBulk):
            profiles_around(em_model.var("Ax(3,0)"), em_model)

    def test_profiles_need_support(self, em_model: Model) -> None:
        """Test that a constant has no time support."""
        with pytest.raises(ProfileOutOfBulk, match="no support"):
            profiles_around(em_model.ring.one(), em_model)


class TestSolutionSpace:
    """Test suite for on-shell reduction."""

    def test_dimensions(self, em_solutions: SolutionSpace) -> None:
        """Test even directions and Grassmann parameters of the slice-0 data."""
        assert em_solutions.even_dimension == 6
        assert len(em_solutions.parameters) == 4

    def test_sample(self, em_solutions: SolutionSpace, rng: random.Random) -> None:
        """Test that samples cover exactly the even data."""
        data = em_solutions.sample(rng)
        assert len(data) == em_solutions.even_dimension
        assert not set(data) & set(em_solutions.parameters)
        assert all(-7 <= v <= 7 for v in data.values())

    def test_field_equation_vanishes_on_shell(
        self, em_model: Model, em_solutions: SolutionSpace, rng: random.Random
    ) -> None:
        """Test that a free field equation vanishes on every solution."""
        E = em_model.field_equation(em_model.id("Ax(4,0)"))
        assert not E.is_zero()
        assert onshell_defect(E, em_solutions, rng) == 0

    def test_field_is_not_zero_on_shell(
        self, em_model: Model, em_solutions: SolutionSpace, rng: random.Random
    ) -> None:
        """Test that a single field does not vanish on-shell."""
        assert onshell_defect(em_model.var("Ax(4,0)"), em_solutions, rng, samples=8) > 0

    def test_ghosts_stay_symbolic(self, em_model: Model, em_solutions: SolutionSpace) -> None:
        """Test that odd data reduce to Grassmann parameters."""
        reduced = onshell_reduce(em_model.var("C(4,0)"), em_solutions, {})
        assert reduced.generators() <= set(em_solutions.parameters.values())

    def test_build_is_cached(self, em_model: Model, em_solutions: SolutionSpace) -> None:
        """Test that a second build returns the memoized space."""
        assert SolutionSpace.build(em_model) is em_solutions


class TestCharge:
    """Test suite for the smeared BRST charge."""

    def test_divergence_density(self, em_model: Model) -> None:
        """Test one density per bulk site, each of ghost number 1."""
        density = divergence_density(em_model)
        assert density
        for D in density.values():
            if D:
                assert_grading(D, gh=1, af=0)

    def test_charge_is_tagged(self, em_model: Model) -> None:
        """Test that the Maxwell charge carries one power of lambda."""
        eta = Profile.plateau(2, 5)
        assert charge(em_model, eta).lambda_order() == 1
        assert charge(em_model, eta, tagged=False).lambda_order() == 0

    def test_charge_profile_in_bulk(self, em_model: Model) -> None:
        """Test that the charge profile must stay in the bulk."""
        with pytest.raises(ProfileOutOfBulk):
            charge(em_model, Profile.plateau(5, 7))

    def test_free_charge(self, em_model: Model, em_ctx: ProductContext, rng: random.Random) -> None:
        """Test that the free charge generates gamma0 on-shell."""
        record = check_free_charge(em_model, em_ctx, em_model.var("Ax(4,0)"), rng=rng)
        assert_check_passes(record)
        assert record.details["profile"] == "[2, 3, 4, 5, 6]"

    def test_free_charge_rejects_antifields(self, em_model: Model, em_ctx: ProductContext) -> None:
        """Test that the free charge check needs an antifield-free observable."""
        anti = em_model.ring.gen(em_model.table.antifield(em_model.id("Ax(4,0)")))
        with pytest.raises(HypothesisFailed, match="antifield"):
            check_free_charge(em_model, em_ctx, anti)

    def test_split_charge(self, em_model: Model) -> None:
        """Test that a plateau charge splits into one flux per edge."""
        eta = Profile.plateau(2, 6)
        Q = charge(em_model, eta)
        rising, falling = split_charge(Q, eta)
        assert rising + falling == Q
        assert not rising.is_zero() and not falling.is_zero()
        assert max(slices_of(rising)) < 4 <= min(slices_of(falling))

    def test_split_charge_rejects_straddling_monomial(self, em_model: Model) -> None:
        """Test that a monomial reaching across the plateau middle is refused."""
        Q = em_model.var("C(2,0)") * em_model.var("Ax(5,0)")
        with pytest.raises(ProfileOutOfBulk, match="too short"):
            split_charge(Q, Profile.plateau(2, 6))


@pytest.mark.veritas_slow
class TestInteractingCharge:
    """Test suite for the interacting current and charge theorem."""

    def test_current_conservation(self, em_ictx: InteractionContext, rng: random.Random) -> None:
        """Test conservation of the dressed BRST current on-shell."""
        assert_check_passes(check_current_conservation(em_ictx, Profile.plateau(3, 5), rng=rng))

    def test_main_theorem_linear(self, em_ictx: InteractionContext, rng: random.Random) -> None:
        """Test the charge theorem for a linear observable."""
        record = check_main_theorem(em_ictx, em_ictx.model.var("Ax(4,0)"), rng=rng)
        assert_check_passes(record)
        assert set(record.details) == {
            "main.routes", "main.onshell", "main.direct_onshell", "main.star_v",
        }

    def test_main_theorem_requires_qme(self, em_ctx: ProductContext) -> None:
        """Test that the theorem is not evaluated when the QME fails."""
        model = em_ctx.model
        anti = model.ring.gen(model.table.antifield(model.id("Ax(4,0)")))
        broken = InteractionContext.of(em_ctx, (model.theta0 + anti * model.var("C(4,0)")).shift(dm=1))
        with pytest.raises(QMENotVerified):
            check_main_theorem(broken, model.var("Ax(4,0)"))


@pytest.mark.veritas_slow
class TestSecondOrder:
    """Test suite for the charge theorem with lambda_max = 2."""

    @pytest.fixture
    def anomalous(self, em_model2: Model) -> Poly:
        model = em_model2
        anti = model.ring.gen(model.table.antifield(model.id("Ax(4,0)")))
        return model.var("Ax(4,0)") * model.var("C(4,0)") * anti

    def test_qme(self, em_ictx2: InteractionContext) -> None:
        """Test the QME where V first meets itself."""
        record = check_qme(em_ictx2)
        assert_check_passes(record)
        assert em_ictx2.qme_status == "pass"

    def test_main_theorem_linear(self, em_ictx2: InteractionContext, rng: random.Random) -> None:
        """Test both routes of the charge theorem at second order."""
        record = check_main_theorem(em_ictx2, em_ictx2.model.var("Ax(4,0)"), rng=rng)
        assert_check_passes(record)
        assert record.details["main.direct_onshell"] == "PASS"

    def test_main_theorem_with_laplacian(
        self, em_ictx2: InteractionContext, anomalous: Poly, rng: random.Random
    ) -> None:
        """Test the charge theorem for an observable with a nonzero Lap_V."""
        assert not em_ictx2.model.restrict(laplacian_v(em_ictx2, anomalous)).is_zero()
        record = check_main_theorem(em_ictx2, anomalous, rng=rng)
        assert_check_passes(record)
        assert record.details["main.direct_onshell"] == "PASS"

    def test_compact_charge_misses_s_hat(self, em_ictx2: InteractionContext, rng: random.Random) -> None:
        """Test that the commutator with Q(eta_plus), falling edge included, is not R_V(s_hat F) on-shell."""
        model, ctx = em_ictx2.model, em_ictx2.ctx
        F = model.var("Ax(4,0)")
        eta, _ = profiles_around(F, model)
        RF, RQ = bogoliubov(em_ictx2, F), bogoliubov(em_ictx2, charge(model, eta))
        compact = (ctx.star(RF, RQ) - ctx.star(RQ, RF)).scale(I).shift(dk=-1)
        rhs = bogoliubov(em_ictx2, quantum_bv(em_ictx2, F))
        space = SolutionSpace.build(model, ctx.props.omega)
        assert onshell_defect((compact - rhs).reliable(1), space, rng) > 0
