"""BRST charge, on-shell reduction and the interacting charge theorem.

The charge is built from the divergence density of the BRST current,
``D(x) = {theta0(delta_x), S}``, smeared with a time profile ``eta``::

    Q(eta) = -sum_x eta(t_x) D(x) = -{theta0(eta), S}

A functional vanishes on-shell when it vanishes after substituting every
solution of the free field equations. Solutions are fixed by their slice-0
data, so the even data are sampled with random integers and the odd data
stay symbolic as Grassmann parameters.
"""

from __future__ import annotations

import logging
import random
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from bv_veritas.brackets import antibracket, check_cme, extended_action, gamma0_apply
from bv_veritas.deformation import ProductContext
from bv_veritas.errors import (
    AnomalyPresent,
    CMEDefect,
    HypothesisFailed,
    KernelNotBisolution,
    ProfileOutOfBulk,
    QMENotVerified,
)
from bv_veritas.green import check_consistency, solution
from bv_veritas.interacting import (
    InteractionContext,
    bogoliubov,
    check_qme,
    extract_anomaly,
    laplacian_v,
    quantum_bv,
    retarded_derivative,
    star_v,
)
from bv_veritas.kernels import Kernel
from bv_veritas.models import STENCIL_RADIUS, Model, check_pk_condition, smeared_theta
from bv_veritas.poly import Mono, Poly, slices_of, substitute, sum_polys
from bv_veritas.report import CheckRecord, Status, combine, defect_record
from bv_veritas.series import I, ONE, Coeff, Rational, Scalar

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Profile:
    """Time profile ``eta``: one rational weight per slice, zero where absent."""

    values: dict[int, Fraction] = field(default_factory=dict)

    @classmethod
    def plateau(cls, t1: int, t2: int, ramp: int = 1) -> Profile:
        """``eta = 1`` on ``[t1, t2]``, falling linearly to 0 over ``ramp`` slices on each side."""
        if ramp < STENCIL_RADIUS:
            raise ValueError(f"ramp {ramp} is shorter than the stencil radius {STENCIL_RADIUS}")
        if t2 < t1:
            raise ValueError(f"empty plateau [{t1}, {t2}]")
        values = {t: Fraction(1) for t in range(t1, t2 + 1)}
        for k in range(1, ramp):
            height = Fraction(ramp - k, ramp)
            values[t1 - k] = height
            values[t2 + k] = height
        return cls(values)

    def __call__(self, t: int) -> Fraction:
        return self.values.get(t, Fraction(0))

    @property
    def support(self) -> set[int]:
        return {t for t, v in self.values.items() if v}

    def __neg__(self) -> Profile:
        return Profile({t: -v for t, v in self.values.items()})

    def __add__(self, other: Profile) -> Profile:
        keys = self.values.keys() | other.values.keys()
        return Profile({t: self(t) + other(t) for t in keys if self(t) + other(t)})

    def __sub__(self, other: Profile) -> Profile:
        return self + (-other)

    def validate(self, model: Model) -> None:
        """Raises ProfileOutOfBulk unless the support lies inside the bulk slices."""
        outside = sorted(t for t in self.support if t not in model.bulk)
        if outside:
            raise ProfileOutOfBulk(
                "profile reaches outside the bulk", slices=str(outside),
                bulk=f"[{model.bulk.start}, {model.bulk.stop - 1}]",
            )


def profiles_around(F: Poly, model: Model) -> tuple[Profile, Profile]:
    """``(eta_plus, eta_minus)`` for an observable ``F``.

    ``eta_plus`` is 1 from three slices before ``F`` up to two slices after it;
    ``eta_minus`` is -1 on the earlier part of the bulk and ends before the
    charge it carries can reach ``F``. Their difference is a single plateau.

    Raises:
        ProfileOutOfBulk: If the bulk has no room for both profiles
    """
    slices = slices_of(F)
    if not slices:
        raise ProfileOutOfBulk("observable has no support in time")
    lo, hi = min(slices), max(slices)
    first, last = model.bulk.start, model.bulk.stop - 1
    q = lo - 3
    b = hi + 2
    if q < first or b > last:
        raise ProfileOutOfBulk(
            "bulk too small for charge profiles around the observable",
            support=f"[{lo}, {hi}]", bulk=f"[{first}, {last}]",
        )
    return Profile.plateau(q + 1, b), -Profile.plateau(first, q)


@dataclass
class SolutionSpace:
    """Solutions of ``P u = 0`` on valid rows, parametrised by slice-0 data.

    Attributes:
        model: Model whose field equations are solved
        basis: Solution for unit data on each slice-0 field
        parameters: Grassmann parameter standing in for each odd slice-0 datum
    """

    model: Model
    basis: dict[int, dict[int, Scalar]]
    parameters: dict[int, int]
    columns: dict[int, list[tuple[int, Scalar]]] = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, model: Model, omega: Kernel | None = None) -> SolutionSpace:
        """Raises KernelNotBisolution if ``omega`` is not a bisolution on bulk."""
        if omega is not None:
            bulk = set(model.bulk_fields())
            valid = {g for g in bulk if model.is_valid_row(g)}
            defect = max(
                (model.P @ omega).restrict(valid, bulk).abs_max(),
                (omega @ model.P).restrict(bulk, valid).abs_max(),
            )
            if defect:
                raise KernelNotBisolution("two-point kernel is not a bisolution", defect=str(defect))
        cached = model.memo.get("solution_space")
        if cached is not None:
            return cached
        initial = [g for g in model.fields if model.slice_of(g) == 0]
        odd = [g for g in initial if model.table.parity[g]]
        params = model.table.add_parameters(len(odd), 1, "theta") if odd else []
        basis = {g: solution(model, {g: ONE}) for g in initial}
        columns: dict[int, list[tuple[int, Scalar]]] = {}
        for g, psi in basis.items():
            for a, v in psi.items():
                columns.setdefault(a, []).append((g, v))
        space = cls(model, basis, dict(zip(odd, params)), columns)
        model.memo["solution_space"] = space
        logger.debug(
            f"Solution space of {model.name}: {space.even_dimension} even, {len(odd)} odd directions"
        )
        return space

    @property
    def even_dimension(self) -> int:
        return len(self.basis) - len(self.parameters)

    def sample(self, rng: random.Random) -> dict[int, Fraction]:
        return {
            g: Fraction(rng.randint(-7, 7)) for g in self.basis if g not in self.parameters
        }

    def images(self, coefficients: Mapping[int, Rational]) -> dict[int, Poly]:
        """Value of every field on the solution with the given even data."""
        ring = self.model.ring
        out: dict[int, Poly] = {}
        for a in self.model.fields:
            parts = []
            for g, v in self.columns.get(a, ()):
                param = self.parameters.get(g)
                if param is not None:
                    parts.append(ring.gen(param, v))
                elif coefficients.get(g):
                    parts.append(ring.constant(v * Scalar(coefficients[g])))
            out[a] = sum_polys(ring, parts)
        return out


def onshell_reduce(F: Poly, space: SolutionSpace, coefficients: Mapping[int, Rational]) -> Poly:
    """``F`` evaluated on one solution; antifields and odd parameters stay symbolic."""
    return substitute(F, space.images(coefficients))


def onshell_defect(
    F: Poly, space: SolutionSpace, rng: random.Random, samples: int | None = None
) -> Fraction:
    """Largest coefficient of ``F`` over random solutions; zero iff ``F`` vanishes on-shell."""
    n = samples if samples is not None else space.even_dimension + 2
    worst = Fraction(0)
    for _ in range(n):
        worst = max(worst, onshell_reduce(F, space, space.sample(rng)).abs_max())
        if worst:
            break
    return worst


def _require_cme(model: Model) -> None:
    record = model.memo.get("cme")
    if record is None:
        record = check_cme(model)
        model.memo["cme"] = record
    if record.status is not Status.PASS:
        raise CMEDefect("classical master equation fails", defect=record.defect)


def divergence_density(model: Model, which: str = "free") -> dict[int, Poly]:
    """``D(x) = {theta0(delta_x), S}`` for every bulk site ``x``.

    ``which`` selects ``S0`` (``"free"``) or the extended action (``"full"``).

    Raises:
        CMEDefect: If the classical master equation fails
    """
    _require_cme(model)
    S = model.S0 if which == "free" else extended_action(model)
    table = model.table
    bulk = set(model.bulk)
    by_site: dict[int, list[Poly]] = {}
    for mono, c in model.theta0.terms.items():
        anti = next(g for g in mono if table[g].kind == "antifield")
        gen = table[anti]
        if gen.slice not in bulk:
            continue
        by_site.setdefault(gen.site, []).append(Poly(model.ring, {mono: c}))
    return {
        site: antibracket(sum_polys(model.ring, parts), S) for site, parts in sorted(by_site.items())
    }


def charge(model: Model, profile: Profile, which: str = "free", tagged: bool = True) -> Poly:
    """``Q(eta) = -{theta0(eta), S}``; gauge models tag it with ``lambda`` like ``theta0``.

    Raises:
        ProfileOutOfBulk: If ``eta`` leaves the bulk
        CMEDefect: If the classical master equation fails
    """
    profile.validate(model)
    _require_cme(model)
    S = model.S0 if which == "free" else extended_action(model)
    Q = -antibracket(smeared_theta(model, profile.values), S)
    if tagged and model.name == "em":
        Q = Q.shift(dm=1)
    return Q


def split_charge(Q: Poly, profile: Profile) -> tuple[Poly, Poly]:
    """``Q(eta)`` for a plateau ``eta`` as (flux through its rising edge, flux through its falling edge).

    Inside the plateau ``{theta0(eta), S}`` cancels by gauge invariance, so
    every monomial sits within a stencil of one edge. The rising-edge part is
    the charge on a single Cauchy surface.

    Raises:
        ProfileOutOfBulk: If a monomial reaches across the middle of the plateau
    """
    full = [t for t, v in profile.values.items() if v == 1]
    if not full:
        raise ProfileOutOfBulk("profile has no plateau")
    middle = (min(full) + max(full) + 1) // 2
    gens = Q.ring.table.generators
    rising: dict[Mono, Coeff] = {}
    falling: dict[Mono, Coeff] = {}
    for mono, c in Q.terms.items():
        slices = [s for g in mono if (s := gens[g].slice) is not None]
        if max(slices) < middle:
            rising[mono] = c
        elif min(slices) >= middle:
            falling[mono] = c
        else:
            raise ProfileOutOfBulk(
                "plateau too short to separate the charge fluxes",
                plateau=f"[{min(full)}, {max(full)}]", slices=f"[{min(slices)}, {max(slices)}]",
            )
    return Poly(Q.ring, rising), Poly(Q.ring, falling)


def _antifield_free(F: Poly, model: Model) -> bool:
    gens = model.table.generators
    return all(gens[g].ta == 0 for g in F.generators())


def _free_derivative(ctx: ProductContext, G: Poly, F: Poly) -> Poly:
    """``R^(1)_0[G](F) = (i/hbar)(G .T F - G * F)``."""
    return (ctx.tprod(G, F) - ctx.star(G, F)).scale(I).shift(dk=-1)


def check_free_charge(
    model: Model, ctx: ProductContext, F: Poly, profile: Profile | None = None,
    rng: random.Random | None = None, samples: int | None = None,
) -> CheckRecord:
    """``{F, theta0}_* = R^(1)_0[Q(eta)](F)`` on-shell, ``eta = 1`` around ``F``.

    Raises:
        HypothesisFailed: If ``F`` carries antifields or ``P K``, gauge
            consistency of ``omega`` or ``gamma0^2 F = 0`` fail
    """
    w = model.window
    if not _antifield_free(F, model):
        raise HypothesisFailed("free charge check needs an antifield-free observable")
    pk = check_pk_condition(model)
    consistency = check_consistency(ctx.props.omega, model, "omega")
    square = model.restrict(gamma0_apply(gamma0_apply(F, model), model)).abs_max()
    if pk.status is not Status.PASS or consistency.status is not Status.PASS or square:
        raise HypothesisFailed(
            "free BRST hypotheses fail", pk=pk.defect, consistency=consistency.defect,
            gamma0_square=str(square),
        )
    eta = profile if profile is not None else profiles_around(F, model)[0]
    Q = charge(model, eta, tagged=False)
    lhs = antibracket(F, model.theta0, "star", ctx)
    rhs = _free_derivative(ctx, Q, F)
    diff = (lhs - rhs).reliable(1)
    space = SolutionSpace.build(model, ctx.props.omega)
    on = onshell_defect(diff, space, rng or random.Random(0), samples)
    return defect_record(
        "free_charge", "(i/hbar)[F, Q]_* = {F, theta0}_* on-shell", on, w,
        details={"offshell_defect": str(diff.abs_max()), "profile": str(sorted(eta.support))},
    )


def _require_anomaly_free(ictx: InteractionContext, error: type[Exception]) -> None:
    if ictx.qme_status == "unchecked":
        check_qme(ictx)
    if ictx.qme_status != "pass":
        raise QMENotVerified("QME does not hold", defect=str(ictx.qme_defect))
    anomaly = ictx.model.restrict(extract_anomaly(ictx)).reliable(1)
    if not anomaly.is_zero():
        raise error("interaction is anomalous", defect=str(anomaly.abs_max()))


def check_current_conservation(
    ictx: InteractionContext, profile: Profile, rng: random.Random | None = None,
    samples: int | None = None,
) -> CheckRecord:
    """``{e_T^{iV/hbar} .T theta0(eta), S0}_* = 0`` on-shell, and its closed form.

    The closed form is ``S .T dJ(eta) + (i/hbar) S .T theta0(eta) .T Y`` with
    ``dJ(eta) = {theta0(eta), S0 + V}_T - i hbar Lap_V theta0(eta)``; ``Y`` is
    the MWI defect, which vanishes on the slab when the QME holds.

    Raises:
        QMENotVerified: If the QME does not hold
        AnomalyPresent: If the anomaly does not vanish
        ProfileOutOfBulk: If ``eta`` leaves the bulk
    """
    model, ctx, w = ictx.model, ictx.ctx, ictx.window
    profile.validate(model)
    _require_anomaly_free(ictx, AnomalyPresent)
    X = smeared_theta(model, profile.values)
    S = ictx.smatrix
    dressed = ctx.tprod(S, X)
    bracket = antibracket(dressed, model.S0, "star", ctx)
    dJ = antibracket(X, model.S0 + ictx.V, "timeordered", ctx) - laplacian_v(ictx, X).scale(I).shift(dk=1)
    divergence = ctx.tprod(S, dJ)
    correction = ctx.tprod(dressed, ictx.mwi).scale(I).shift(dk=-1)
    closed = (bracket - divergence - correction).reliable(1)
    space = SolutionSpace.build(model, ctx.props.omega)
    rng = rng or random.Random(0)
    on = onshell_defect(bracket.reliable(1), space, rng, samples)
    parts = [
        defect_record("current.closed_form", "MWI form of the dressed divergence", closed.abs_max(), w),
        defect_record(
            "current.onshell", "e_T^{iV/hbar} .T dJ(eta) = 0 on-shell", on, w,
            details={"edge_correction": str(correction.reliable(1).abs_max())},
        ),
    ]
    return combine("current_conservation", "conservation of the interacting BRST current", parts, w)


def check_main_theorem(
    ictx: InteractionContext, F: Poly, rng: random.Random | None = None,
    samples: int | None = None,
) -> CheckRecord:
    """``(i/hbar)[R_V F, R_V Q]_* = R_V(s_hat F)`` on-shell, by the GLZ route and directly.

    ``Q`` is the flux through the rising edge of ``eta_plus``. The compact
    charge ``Q(eta_plus)`` also carries the flux out through its falling edge,
    so its commutator with ``R_V F`` is not the charge action.

    Raises:
        QMENotVerified: If the QME does not hold
        HypothesisFailed: If the anomaly does not vanish
        ProfileOutOfBulk: If the bulk cannot hold the charge profiles
    """
    model, ctx, w = ictx.model, ictx.ctx, ictx.window
    _require_anomaly_free(ictx, HypothesisFailed)
    eta_plus, eta_minus = profiles_around(F, model)
    q_plus = charge(model, eta_plus)
    q_minus = charge(model, eta_minus)
    q_sigma, q_late = split_charge(q_plus, eta_plus)
    sign = -1 if F.parity() else 1

    def derivative(G: Poly, H: Poly) -> Poly:
        return retarded_derivative(ictx, G, H)

    def signed(G: Poly) -> Poly:
        return G if sign > 0 else -G

    glz = signed(derivative(q_plus, F)) - derivative(F, q_minus)
    RF, RQ = bogoliubov(ictx, F), bogoliubov(ictx, q_sigma)
    commutator = ctx.star(RF, RQ) - signed(ctx.star(RQ, RF))
    direct = commutator.scale(I).shift(dk=-1)
    edges = signed(derivative(q_late, F)) + derivative(F, q_sigma - q_minus)
    route = (direct - glz + edges).reliable(1)

    rhs = bogoliubov(ictx, quantum_bv(ictx, F))
    space = SolutionSpace.build(model, ctx.props.omega)
    rng = rng or random.Random(0)
    on = onshell_defect((glz - rhs).reliable(1), space, rng, samples)
    direct_on = onshell_defect((direct - rhs).reliable(1), space, rng, samples)

    pulled = star_v(ictx, F, q_sigma)
    pulled_back = star_v(ictx, q_sigma, F)
    starred = (pulled - signed(pulled_back)).scale(I).shift(dk=-1)
    round_trip = (bogoliubov(ictx, starred) - direct).reliable(1)
    parts = [
        defect_record(
            "main.routes", "direct commutator = GLZ route - R^(1)[Q_late](F) - R^(1)[F](Q - Q(eta-))",
            route.abs_max(), w, details={"edge_terms": str(edges.reliable(1).abs_max())},
        ),
        defect_record("main.onshell", "GLZ route = R_V(s_hat F) on-shell", on, w,
                      details={"offshell_defect": str((glz - rhs).reliable(1).abs_max())}),
        defect_record("main.direct_onshell", "(i/hbar)[R_V F, R_V Q]_* = R_V(s_hat F) on-shell",
                      direct_on, w),
        defect_record("main.star_v", "[F, Q]_{*V} pushed through R_V", round_trip.abs_max(), w),
    ]
    logger.info(f"Charge theorem on {model.name}: on-shell defects {on} (GLZ), {direct_on} (direct)")
    return combine("main_theorem", "interacting BRST charge generates s_hat", parts, w)
