"""Interacting observables: Bogoliubov maps, anomaly, QME and the quantum BV operator.

Every quantity is a truncated series in ``lambda`` and ``hbar``. Intermediate
results carry negative powers of ``hbar`` up to ``hbar^{-lambda_max}``; terms with
``k + m <= k_max - slack`` survive truncation exactly and comparisons are made
on that part only (``Poly.reliable``).
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import factorial
from typing import Literal

from bv_veritas.brackets import antibracket, bv_laplacian
from bv_veritas.deformation import ProductContext, exp_T, is_later, star_inverse
from bv_veritas.errors import FreeQMEFailed, QMENotVerified
from bv_veritas.models import Model
from bv_veritas.poly import Poly, derive, local_decompose, slices_of, sum_polys
from bv_veritas.report import CheckRecord, Status, combine, defect_record, skipped_record
from bv_veritas.series import I, Window

logger = logging.getLogger(__name__)

QMEStatus = Literal["unchecked", "pass", "fail"]


def _graded_sign(F: Poly, G: Poly) -> int:
    return -1 if F.parity() and G.parity() else 1


def _over_hbar(f: Poly) -> Poly:
    """``(i / hbar) f`` for an ``f`` of order ``hbar`` or higher."""
    return f.scale(I).shift(dk=-1)


def _hbar_over_i(f: Poly) -> Poly:
    return f.scale(-I).shift(dk=1)


@dataclass
class InteractionContext:
    """Free products plus an interaction ``V``; S-matrix pieces are computed once."""

    model: Model
    ctx: ProductContext
    V: Poly
    qme_status: QMEStatus = "unchecked"
    qme_defect: Fraction = field(default=Fraction(0))

    @classmethod
    def of(cls, ctx: ProductContext, V: Poly | None = None) -> InteractionContext:
        return cls(ctx.model, ctx, ctx.model.V if V is None else V)

    @property
    def window(self) -> Window:
        return self.model.window

    @cached_property
    def smatrix(self) -> Poly:
        return exp_T(self.V, self.ctx)

    @cached_property
    def smatrix_star_inverse(self) -> Poly:
        return star_inverse(self.smatrix, self.ctx)

    @cached_property
    def smatrix_time_inverse(self) -> Poly:
        """``e_T^{-iV/hbar}``, the inverse for the time-ordered product."""
        return exp_T(-self.V, self.ctx)

    @cached_property
    def smatrix_bracket(self) -> Poly:
        """``{e_T^{iV/hbar}, S0}_*``."""
        return antibracket(self.smatrix, self.model.S0, "star", self.ctx)

    @cached_property
    def mwi(self) -> Poly:
        """``Y = (hbar/i) e_T^{-iV/hbar} .T {e_T^{iV/hbar}, S0}_*``."""
        return _hbar_over_i(self.ctx.tprod(self.smatrix_time_inverse, self.smatrix_bracket))

    def with_interaction(self, V: Poly) -> InteractionContext:
        return InteractionContext.of(self.ctx, V)


def bogoliubov(ictx: InteractionContext, F: Poly) -> Poly:
    """``R_V(F) = S^{*-1} * (S .T F)`` with ``S = e_T^{iV/hbar}``."""
    if ictx.V.is_zero():
        return F
    ctx = ictx.ctx
    return ctx.star(ictx.smatrix_star_inverse, ctx.tprod(ictx.smatrix, F))


def bogoliubov_inverse(ictx: InteractionContext, Y: Poly) -> Poly:
    """Solve ``R_V(X) = Y`` order by order in ``lambda``."""
    X = Y
    for _ in range(ictx.window.lambda_max):
        residue = Y - bogoliubov(ictx, X)
        if residue.is_zero():
            break
        X = X + residue
    return X


def retarded_coeffs(ictx: InteractionContext, F: Poly, n: int) -> Poly:
    """``R_n(V^n; F)`` from ``R_V(F) = sum_n i^n / (hbar^n n!) R_n(V^n; F)``."""
    if n > ictx.window.lambda_max:
        raise ValueError(f"order {n} beyond lambda_max {ictx.window.lambda_max}")
    part = bogoliubov(ictx, F).lambda_part(n)
    if n == 0:
        return part
    return part.shift(dm=-n, dk=n).scale((-I) ** n * factorial(n))


def retarded_derivative(ictx: InteractionContext, G: Poly, F: Poly) -> Poly:
    """``R^(1)_V[G](F) = d/de R_{V + eG}(F)`` at ``e = 0``.

    With a nilpotent ``e``, ``e_T^{i(V+eG)/hbar} = S + e (i/hbar) S .T G``, which
    gives ``(i/hbar) (R_V(G .T F) - R_V(G) * R_V(F))``.
    """
    ctx = ictx.ctx
    inner = bogoliubov(ictx, ctx.tprod(G, F))
    outer = ctx.star(bogoliubov(ictx, G), bogoliubov(ictx, F))
    return _over_hbar(inner - outer)


def check_glz(ictx: InteractionContext, F: Poly, G: Poly) -> CheckRecord:
    """``[R_V F, R_V G]_* = i hbar (R^(1)[F](G) - (-1)^{|F||G|} R^(1)[G](F))``."""
    ctx = ictx.ctx
    RF, RG = bogoliubov(ictx, F), bogoliubov(ictx, G)
    sign = _graded_sign(F, G)
    back = ctx.star(RG, RF)
    lhs = ctx.star(RF, RG) - (back if sign > 0 else -back)
    second = retarded_derivative(ictx, G, F)
    rhs = (retarded_derivative(ictx, F, G) - (second if sign > 0 else -second)).scale(I).shift(dk=1)
    defect = (lhs - rhs).reliable(1).abs_max()
    return defect_record("glz", "[R_V F, R_V G]_* = i hbar (R^(1)[F]G - R^(1)[G]F)", defect,
                         ictx.window)


def _vertices(ictx: InteractionContext) -> list[Poly]:
    """Local vertices of the first-order interaction, one per monomial."""
    ring = ictx.model.ring
    out = []
    for term in local_decompose(ictx.V.lambda_part(1)):
        mono = Poly(ring, {(): term.coeff})
        for factor in term.factors:
            mono = mono * factor
        out.append(mono)
    return out


def _reaches(ictx: InteractionContext, v: Poly, F: Poly) -> bool:
    """Some field of ``v`` has a nonzero retarded response at a field of ``F``."""
    R = ictx.ctx.props.retarded
    table = ictx.model.table
    fields_v = [g for g in v.generators() if table[g].kind == "field"]
    fields_f = [g for g in F.generators() if table[g].kind == "field"]
    return any(R[b, a] for b in fields_f for a in fields_v)


def second_retarded(ictx: InteractionContext, v: Poly, w: Poly, F: Poly) -> Poly:
    """``R_2(v, w; F)`` for even vertices, read off the mixed second order of ``R_V``.

    ``T(vwF) - v*T(wF) - w*T(vF) - T(vw)*F + v*w*F + w*v*F``.
    """
    ctx = ictx.ctx
    vw = ctx.tprod(v, w)
    return (
        ctx.tprod(vw, F)
        - ctx.star(v, ctx.tprod(w, F))
        - ctx.star(w, ctx.tprod(v, F))
        - ctx.star(vw, F)
        + ctx.star(ctx.star(v, w), F)
        + ctx.star(ctx.star(w, v), F)
    )


def check_retarded_support(ictx: InteractionContext, F: Poly, pair_limit: int = 24) -> CheckRecord:
    """``R_1(v; F)`` and ``R_2(v, w; F)`` vanish unless every vertex lies in the past of ``F``.

    Vertices are classified as later than ``F`` (slice separation), unrelated
    (no retarded entry from a field of the vertex to a field of ``F``, which
    covers equal-time and spacelike vertices) or past. Second-order pairs
    join the latest past vertex with every later or unrelated one; its pairs
    with the other past vertices are counted as nonzero witnesses. The
    second order needs ``k_max >= 2``. The record fails when no past vertex
    acts on ``F``.

    Args:
        ictx: Interaction context
        F: Local observable
        pair_limit: Maximum number of second-order pairs
    """
    model = ictx.model
    ctx = ictx.ctx
    later: list[Poly] = []
    unrelated: list[Poly] = []
    past: list[Poly] = []
    for v in _vertices(ictx):
        if is_later(v, F, model):
            later.append(v)
        elif _reaches(ictx, v, F):
            past.append(v)
        else:
            unrelated.append(v)
    leak = Fraction(0)
    acting = 0
    for v in later + unrelated:
        leak = max(leak, (ctx.tprod(v, F) - ctx.star(v, F)).abs_max())
    for v in past:
        if not (ctx.tprod(v, F) - ctx.star(v, F)).is_zero():
            acting += 1
    # R_2 starts at hbar^2: every single-contraction term cancels
    second_order = ictx.window.k_max >= 2
    bare = [v.without_tag().shift(dm=-1) for v in unrelated + later]
    bare_past = sorted(
        (v.without_tag().shift(dm=-1) for v in past), key=lambda p: max(slices_of(p), default=-1)
    )
    pairs: list[tuple[Poly, Poly]] = []
    witnesses: list[tuple[Poly, Poly]] = []
    if bare_past and second_order:
        pairs = [(bare_past[-1], w) for w in bare][:pair_limit]
        witnesses = [(bare_past[-1], p) for p in bare_past[:-1]][:pair_limit]
    for v, w in pairs:
        leak = max(leak, second_retarded(ictx, v, w, F).abs_max())
    past_pairs = sum(1 for v, w in witnesses if not second_retarded(ictx, v, w, F).is_zero())
    details = {
        "later_vertices": str(len(later)),
        "unrelated_vertices": str(len(unrelated)),
        "nonzero_past_vertices": str(acting),
        "second_order_pairs": str(len(pairs)) if second_order else "SKIPPED (k_max < 2)",
        "nonzero_past_pairs": str(past_pairs),
    }
    record = defect_record(
        "retarded_support", "R_n(v_1..v_n; F) = 0 unless every v_i lies in the past of F", leak,
        ictx.window, details=details,
    )
    if acting == 0:
        return record.model_copy(
            update={"status": Status.FAIL, "reason": "no vertex in the past of F acts on it"}
        )
    return record


def star_v(ictx: InteractionContext, F: Poly, G: Poly) -> Poly:
    """Interacting star product ``R_V^{-1}(R_V F * R_V G)``."""
    ctx = ictx.ctx
    return bogoliubov_inverse(ictx, ctx.star(bogoliubov(ictx, F), bogoliubov(ictx, G)))


def check_star_v(ictx: InteractionContext, triples: Sequence[tuple[Poly, Poly, Poly]]) -> CheckRecord:
    """Defining round trip and associativity of the interacting star product."""
    ctx = ictx.ctx
    w = ictx.window
    round_trip = Fraction(0)
    assoc = Fraction(0)
    for F, G, H in triples:
        fg = star_v(ictx, F, G)
        lhs = bogoliubov(ictx, fg)
        rhs = ctx.star(bogoliubov(ictx, F), bogoliubov(ictx, G))
        round_trip = max(round_trip, (lhs - rhs).reliable().abs_max())
        left = star_v(ictx, fg, H)
        right = star_v(ictx, F, star_v(ictx, G, H))
        assoc = max(assoc, (left - right).reliable().abs_max())
    parts = [
        defect_record("star_v.round_trip", "R_V(F *_V G) = R_V F * R_V G", round_trip, w),
        defect_record("star_v.associativity", "(F *_V G) *_V H = F *_V (G *_V H)", assoc, w),
    ]
    return combine("star_v", "interacting star product", parts, w)


def _mwi_classical(ictx: InteractionContext, V: Poly) -> Poly:
    """``{V, S0}_T + 1/2 {V, V}_T``."""
    ctx = ictx.ctx
    return (
        antibracket(V, ictx.model.S0, "timeordered", ctx)
        + antibracket(V, V, "timeordered", ctx).scale(Fraction(1, 2))
    )


def extract_anomaly(ictx: InteractionContext) -> Poly:
    """``Lap(V) = i (Y - {V, S0}_T - 1/2 {V, V}_T) / hbar`` from the Master Ward Identity."""
    rest = ictx.mwi - _mwi_classical(ictx, ictx.V)
    return _over_hbar(rest).reliable(1)


def check_mwi_closed_form(ictx: InteractionContext) -> CheckRecord:
    """The anomaly read off the MWI equals the BV Laplacian of ``V``."""
    model = ictx.model
    anomaly = extract_anomaly(ictx)
    closed = bv_laplacian(ictx.V).reliable(1)
    defect = model.restrict(anomaly - closed).abs_max()
    return defect_record(
        "mwi_closed_form", "Y = {V,S0}_T + 1/2 {V,V}_T - i hbar Lap V", defect, ictx.window,
        details={"anomaly_terms": str(len(model.restrict(anomaly)))},
    )


def _grassmann_direction(model: Model) -> int:
    """Odd parameter ``eta`` used to turn odd insertions into even ones."""
    hit = model.memo.get("laplacian_direction")
    if hit is None:
        hit = model.table.add_parameters(1, 1, "eta")[0]
        model.memo["laplacian_direction"] = hit
    return hit


def _linearized_anomaly(ictx: InteractionContext, X: Poly) -> Poly:
    ctx = ictx.ctx
    S, Z = ictx.smatrix, ictx.smatrix_time_inverse
    moved = ctx.tprod(Z, antibracket(ctx.tprod(S, X), ictx.model.S0, "star", ctx))
    dressed = ctx.tprod(ctx.tprod(Z, X), ictx.smatrix_bracket)
    classical = antibracket(X, ictx.model.S0, "timeordered", ctx) + antibracket(
        X, ictx.V, "timeordered", ctx
    )
    return _over_hbar(moved - dressed - classical).reliable(1)


def laplacian_v(ictx: InteractionContext, X: Poly) -> Poly:
    """``Lap_V(X) = d/de Lap(V + e X)`` at ``e = 0``, read off the linearized Master Ward Identity.

    An odd ``X`` is paired with an odd parameter ``eta`` on the right; ``X eta``
    is even and ``Lap_V(X eta) = Lap_V(X) eta``, so the right derivative by
    ``eta`` recovers ``Lap_V(X)``.

    Raises:
        MixedParity: If ``X`` is not parity homogeneous
    """
    if X.is_zero():
        return X
    if not X.parity():
        return _linearized_anomaly(ictx, X)
    eta = _grassmann_direction(ictx.model)
    paired = _linearized_anomaly(ictx, X * X.ring.gen(eta))
    return derive(paired, eta, "right")


def check_laplacian_v(ictx: InteractionContext, samples: Sequence[Poly]) -> CheckRecord:
    """``Lap_V = Lap`` on lattice polynomials."""
    model = ictx.model
    defect = Fraction(0)
    for X in samples:
        diff = laplacian_v(ictx, X) - bv_laplacian(X).reliable(1)
        defect = max(defect, model.restrict(diff).abs_max())
    return defect_record("laplacian_v", "Lap_V(X) = Lap(X) on regular X", defect, ictx.window)


def check_laplacian_v_products(
    ictx: InteractionContext, pairs: Sequence[tuple[Poly, Poly]]
) -> CheckRecord:
    """``Lap_V(X .T Y) = Lap_V X .T Y + (-1)^|X| (X .T Lap_V Y + {X, Y}_T)``.

    The left side is read off the Master Ward Identity for the product itself.
    The mixed second derivative of the anomaly in ``X`` and ``Y`` drops out on
    the lattice, where the anomaly is linear in the interaction.
    """
    model, ctx = ictx.model, ictx.ctx
    defect = Fraction(0)
    for X, Y in pairs:
        sign = -1 if X.parity() else 1
        whole = laplacian_v(ictx, ctx.tprod(X, Y))
        split = ctx.tprod(laplacian_v(ictx, X), Y) + (
            ctx.tprod(X, laplacian_v(ictx, Y)) + antibracket(X, Y, "timeordered", ctx)
        ).scale(sign)
        defect = max(defect, model.restrict((whole - split).reliable(1)).abs_max())
    return defect_record(
        "laplacian_v_products", "Lap_V(X .T Y) = Lap_V X .T Y + (-1)^|X| (X .T Lap_V Y + {X,Y}_T)",
        defect, ictx.window, details={"pairs": str(len(pairs))},
    )


def check_anomaly_integral(ictx: InteractionContext) -> CheckRecord:
    """``Lap(V) = int_0^1 Lap_{mu V}(V) d mu`` for ``V`` homogeneous of order ``lambda``.

    The ``lambda^n`` part of ``Lap_{mu V}(V)`` carries ``mu^{n-1}``, so the integral
    weighs it by ``1/n``.
    """
    model = ictx.model
    w = ictx.window
    if any(m != 1 for c in ictx.V.terms.values() for m, _ in c.terms):
        return defect_record(
            "anomaly_integral", "Lap(V) = int_0^1 Lap_{mu V}(V) d mu", 0, w,
            reason="interaction not homogeneous of order lambda; nothing to integrate",
        )
    derivative = laplacian_v(ictx, ictx.V) if not ictx.V.parity() else bv_laplacian(ictx.V)
    parts = [
        derivative.lambda_part(n).scale(Fraction(1, n)) for n in range(1, w.lambda_max + 1)
    ]
    integral = sum_polys(model.ring, parts)
    defect = model.restrict(extract_anomaly(ictx) - integral).reliable(1).abs_max()
    return defect_record("anomaly_integral", "Lap(V) = int_0^1 Lap_{mu V}(V) d mu", defect, w)


def qme_defect(ictx: InteractionContext) -> Poly:
    """``e_T^{-iV/hbar} .T {e_T^{iV/hbar}, S0}_*`` up to the factor ``i/hbar``, on the slab."""
    return ictx.model.restrict(ictx.mwi).reliable()


def check_qme(ictx: InteractionContext) -> CheckRecord:
    """Quantum master equation on the slab; also compares with the closed form
    ``1/2 {S0+V, S0+V}_T - i hbar Lap V``."""
    model = ictx.model
    w = ictx.window
    defect = qme_defect(ictx)
    S = model.S0 + ictx.V
    closed = (
        antibracket(S, S, "timeordered", ictx.ctx).scale(Fraction(1, 2))
        - bv_laplacian(ictx.V).scale(I).shift(dk=1)
    )
    closed_defect = (defect - model.restrict(closed).reliable()).abs_max()
    value = defect.abs_max()
    ictx.qme_status = "pass" if value == 0 else "fail"
    ictx.qme_defect = value
    logger.info(f"QME on {model.name}: defect {value}")
    parts = [
        defect_record("qme.defect", "e_T^{-iV/hbar} .T {e_T^{iV/hbar}, S0}_* = 0", value, w),
        defect_record("qme.closed_form", "QME = 1/2 {S0+V,S0+V}_T - i hbar Lap V", closed_defect, w),
    ]
    return combine("qme", "quantum master equation on the slab", parts, w)


def _require_qme(ictx: InteractionContext) -> None:
    if ictx.qme_status == "unchecked":
        check_qme(ictx)
    if ictx.qme_status != "pass":
        raise QMENotVerified("QME does not hold", defect=str(ictx.qme_defect))


def quantum_bv(ictx: InteractionContext, X: Poly) -> Poly:
    """``s_hat X = {X, S0 + V}_T - i hbar Lap_V(X)``.

    Raises:
        QMENotVerified: If the QME has not been verified for this interaction
    """
    _require_qme(ictx)
    ctx = ictx.ctx
    return antibracket(X, ictx.model.S0 + ictx.V, "timeordered", ctx) - laplacian_v(
        ictx, X
    ).scale(I).shift(dk=1)


def quantum_bv_composite(ictx: InteractionContext, X: Poly) -> Poly:
    """``e_T^{-iV/hbar} .T {e_T^{iV/hbar} .T X, S0}_*``."""
    ctx = ictx.ctx
    return ctx.tprod(
        ictx.smatrix_time_inverse, antibracket(ctx.tprod(ictx.smatrix, X), ictx.model.S0, "star", ctx)
    )


def check_quantum_bv(ictx: InteractionContext, samples: Sequence[Poly]) -> CheckRecord:
    """Composite against closed form: they differ by exactly ``(i/hbar) X .T Y``."""
    _require_qme(ictx)
    ctx = ictx.ctx
    defect = Fraction(0)
    for X in samples:
        closed = quantum_bv(ictx, X)
        remainder = _over_hbar(ctx.tprod(X, ictx.mwi))
        diff = quantum_bv_composite(ictx, X) - closed - remainder
        defect = max(defect, diff.reliable(1).abs_max())
    return defect_record("quantum_bv", "s_hat from definition = {X,S0+V}_T - i hbar Lap_V X",
                         defect, ictx.window)


def check_qbv_nilpotent(ictx: InteractionContext, samples: Sequence[Poly]) -> CheckRecord:
    """``s_hat^2 X = 0`` on the slab."""
    model = ictx.model
    defect = Fraction(0)
    for X in samples:
        twice = quantum_bv(ictx, quantum_bv(ictx, X))
        defect = max(defect, model.restrict(twice).reliable(1).abs_max())
    return defect_record("qbv_nilpotent", "s_hat^2 = 0", defect, ictx.window)


def check_intertwining(ictx: InteractionContext, samples: Sequence[Poly]) -> CheckRecord:
    """``{R_V X, S0}_* = R_V(s_hat X)`` on the slab.

    Raises:
        QMENotVerified: If the QME does not hold
    """
    _require_qme(ictx)
    model = ictx.model
    defect = Fraction(0)
    for X in samples:
        lhs = antibracket(bogoliubov(ictx, X), model.S0, "star", ictx.ctx)
        rhs = bogoliubov(ictx, quantum_bv(ictx, X))
        defect = max(defect, model.restrict(lhs - rhs).reliable(1).abs_max())
    return defect_record("intertwining", "{R_V X, S0}_* = R_V(s_hat X)", defect, ictx.window)


def _modified_mwi(ictx: InteractionContext, Vtilde: Poly, S1: Poly) -> Poly:
    """``(hbar/i) e_T^{-iVt/hbar} .T {e_T^{iVt/hbar}, S1}_*`` with free products of ``S0``."""
    ctx = ictx.ctx
    S = exp_T(Vtilde, ctx)
    bracket = antibracket(S, S1, "star", ctx)
    return _hbar_over_i(ctx.tprod(exp_T(-Vtilde, ctx), bracket))


def check_free_theory_change(ictx: InteractionContext, Vtilde: Poly) -> CheckRecord:
    """QME for ``(S0, theta0 + Vt)`` against the QME for ``(S0 + theta0, Vt)``.

    ``theta0`` carries the same order in ``lambda`` in both splittings.

    Raises:
        FreeQMEFailed: If ``theta0`` alone fails the QME
    """
    model = ictx.model
    w = ictx.window
    theta = model.theta0.shift(dm=1) if model.name == "em" else model.theta0
    free = ictx.with_interaction(theta)
    free_defect = qme_defect(free).abs_max() if not theta.is_zero() else Fraction(0)
    if free_defect or not bv_laplacian(theta).is_zero():
        raise FreeQMEFailed("theta0 fails the free QME", defect=str(free_defect))
    joint = ictx.with_interaction(theta + Vtilde)
    first = qme_defect(joint)
    second = model.restrict(_modified_mwi(ictx, Vtilde, model.S0 + theta)).reliable()
    agreement = (first - second).abs_max()
    return defect_record(
        "free_theory_change", "QME(S0; theta0 + Vt) = QME(S0 + theta0; Vt)", agreement, w,
        details={"defect_original": str(first.abs_max()), "defect_modified": str(second.abs_max())},
    )


def check_field_equation(ictx: InteractionContext, rows: Sequence[int] | None = None) -> CheckRecord:
    """``R_V(dS0/dphi^a - dV/dphi^a) = dS0/dphi^a`` on even slab rows.

    ``P = -S0''`` and ``Delta^R`` inverts ``P``, so the interaction enters the
    retarded field equation with a minus sign.
    """
    model = ictx.model
    table = model.table
    rows = rows if rows is not None else [
        a for a in model.bulk_fields(model.slab) if not table.parity[a] and model.is_valid_row(a)
    ]
    defect = Fraction(0)
    for a in rows:
        E = model.field_equation(a)
        lhs = bogoliubov(ictx, E - derive(ictx.V, a, "left"))
        defect = max(defect, model.restrict(lhs - E).reliable().abs_max())
    return defect_record(
        "field_equation", "R_V(dS0/dphi - dV/dphi) = dS0/dphi", defect, ictx.window,
        details={"rows": str(len(rows))},
    )


def check_covariance(ictx: InteractionContext, F: Poly, W: Poly) -> CheckRecord:
    """Change of ``R_V(F)`` under ``V -> V + W`` for a ``W`` causally separated from ``F``.

    A later ``W`` leaves ``R_V(F)`` unchanged at orders ``lambda^0`` and
    ``lambda^1``. An earlier ``W`` conjugates it with the relative S-matrix
    ``U = S(V)^{*-1} * S(V+W)``: ``R_{V+W}(F) = U^{*-1} * R_V(F) * U``. This needs
    every vertex of ``V`` to be later than ``W`` or earlier than ``F``. Any other
    ``W`` is reported as SKIPPED.
    """
    shifted = ictx.with_interaction(ictx.V + W)
    if is_later(W, F, ictx.model):
        diff = bogoliubov(shifted, F) - bogoliubov(ictx, F)
        low = sum_polys(ictx.model.ring, (diff.lambda_part(m) for m in (0, 1)))
        return defect_record("covariance", "R_{V+W}(F) = R_V(F) for W later than F",
                             low.reliable().abs_max(), ictx.window, details={"support": "later"})
    anchor = "R_{V+W}(F) = U^-1 * R_V(F) * U for W earlier than F"
    if not is_later(F, W, ictx.model):
        return skipped_record("covariance", anchor, "W neither later nor earlier than F", ictx.window)
    model = ictx.model
    if any(not is_later(v, W, model) and not is_later(F, v, model) for v in _vertices(ictx)):
        return skipped_record("covariance", anchor, "V has a vertex between W and F", ictx.window)
    ctx = ictx.ctx
    S, S_inv = ictx.smatrix, ictx.smatrix_star_inverse
    conjugated = ctx.star(
        ctx.star(shifted.smatrix_star_inverse, S),
        ctx.star(ctx.star(bogoliubov(ictx, F), S_inv), shifted.smatrix),
    )
    defect = (bogoliubov(shifted, F) - conjugated).reliable().abs_max()
    return defect_record("covariance", anchor, defect, ictx.window, details={"support": "earlier"})
