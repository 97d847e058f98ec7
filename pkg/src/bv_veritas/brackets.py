"""Classical BV structures on lattice polynomials.

The antibracket pairs each field ``phi^a`` with its antifield ``phi‡_a``::

    {X, Y} = sum_a (X <- d_a)(d_a‡ -> Y) - (X <- d_a‡)(d_a -> Y)

so ``{., Y}`` is a right derivation determined by its images on generators.
Those images are computed once per fixed ``Y`` and reused, which keeps
``gamma0`` and ``{., S}`` linear in the size of the argument.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from fractions import Fraction
from typing import TYPE_CHECKING, Literal

from bv_veritas.errors import GradingMismatch
from bv_veritas.green import PropagatorSet
from bv_veritas.models import Model
from bv_veritas.poly import (
    MIXED,
    Grading,
    Mono,
    Poly,
    apply_right_derivation,
    derive,
    grading,
    substitute,
    sum_polys,
)
from bv_veritas.report import CheckRecord, combine, defect_record
from bv_veritas.series import Coeff

if TYPE_CHECKING:
    from bv_veritas.deformation import ProductContext

logger = logging.getLogger(__name__)

BracketKind = Literal["pointwise", "timeordered", "star"]
DifferentialPart = Literal["full", "gamma", "delta"]


def bracket_images(Y: Poly) -> dict[int, Poly]:
    """Images of the right derivation ``{., Y}`` on every generator it touches."""
    table = Y.ring.table
    images: dict[int, Poly] = {}
    for g in Y.generators():
        gen = table[g]
        if gen.kind == "antifield":
            part = derive(Y, g, "left")
            if part:
                images[gen.partner] = images.get(gen.partner, Y.ring.zero()) + part
        elif gen.kind == "field":
            part = derive(Y, g, "left")
            if part:
                images[gen.partner] = images.get(gen.partner, Y.ring.zero()) - part
    return images


def peierls(F: Poly, G: Poly, props: PropagatorSet) -> Poly:
    """``sum (F <- d_a) Delta^{ab} (d_b -> G)`` over field directions."""
    F._check(G)
    ring = F.ring
    causal = props.causal.rows
    left = {g: derive(G, g, "left") for g in G.generators() if ring.table[g].kind == "field"}
    images: dict[int, Poly] = {}
    for a in F.generators():
        row = causal.get(a)
        if not row:
            continue
        parts = [left[b].scale(v) for b, v in row.items() if b in left and left[b]]
        if parts:
            images[a] = sum_polys(ring, parts)
    return apply_right_derivation(F, images)


def antibracket(
    X: Poly, Y: Poly, kind: BracketKind = "pointwise", ctx: ProductContext | None = None
) -> Poly:
    """Antibracket with the pointwise, time-ordered or star product.

    Raises:
        ValueError: If a product kind other than pointwise is requested without ``ctx``
    """
    X._check(Y)
    if kind == "pointwise":
        return apply_right_derivation(X, bracket_images(Y))
    if ctx is None:
        raise ValueError(f"{kind} antibracket needs a product context")
    product = ctx.star if kind == "star" else ctx.tprod
    table = X.ring.table
    parts = []
    for g in X.generators():
        gen = table[g]
        if gen.kind not in ("field", "antifield"):
            continue
        right = derive(X, g, "right")
        left = derive(Y, gen.partner, "left")
        if not right or not left:
            continue
        term = product(right, left)
        parts.append(term if gen.kind == "field" else -term)
    return sum_polys(X.ring, parts)


def bv_laplacian(X: Poly) -> Poly:
    """``sum_a (-1)^{|a|} d^l_{phi^a} d^l_{phi‡_a} X``.

    Normalized so that ``Lap(phi phi‡) = (-1)^{|phi|}``.

    Raises:
        MixedParity: If ``X`` is not parity homogeneous
    """
    X.parity()
    table = X.ring.table
    parts = []
    for g in X.generators():
        gen = table[g]
        if gen.kind != "antifield":
            continue
        inner = derive(X, g, "left")
        outer = derive(inner, gen.partner, "left")
        if outer:
            parts.append(-outer if table[gen.partner].parity else outer)
    return sum_polys(X.ring, parts)


def _images(model: Model, key: str, Y: Poly) -> dict[int, Poly]:
    hit = model.memo.get(key)
    if hit is None:
        hit = bracket_images(Y)
        model.memo[key] = hit
    return hit


def extended_action(model: Model) -> Poly:
    """``S0 + V`` at unit coupling; gauge models carry ``theta0`` inside ``V``."""
    S = model.memo.get("extended_action")
    if S is None:
        S = model.classical_action
        model.memo["extended_action"] = S
    return S


def gamma0_apply(F: Poly, model: Model) -> Poly:
    """Free BRST differential ``gamma0 F = {F, theta0}``."""
    return apply_right_derivation(F, _images(model, "theta0_images", model.theta0))


def _ta(mono: Mono, model: Model) -> int:
    gens = model.table.generators
    return sum(gens[g].ta for g in mono)


def bv_differential(F: Poly, model: Model, part: DifferentialPart = "full") -> Poly:
    """``s F = {F, S_ext}`` split by antifield number into ``delta`` (lowering) and ``gamma``."""
    images = _images(model, "action_images", extended_action(model))
    if part == "full":
        return apply_right_derivation(F, images)
    by_ta: dict[int, dict[Mono, Coeff]] = {}
    for mono, c in F.terms.items():
        by_ta.setdefault(_ta(mono, model), {})[mono] = c
    parts = []
    for ta, terms in by_ta.items():
        image = apply_right_derivation(Poly(F.ring, terms), images)
        lowered = image.filter(lambda m, ta=ta: _ta(m, model) < ta)
        parts.append(lowered if part == "delta" else image - lowered)
    return sum_polys(F.ring, parts)


def gauge_fix(F: Poly, psi: Poly) -> Poly:
    """Replace every antifield ``phi‡_a`` by ``phi‡_a + d^l_a psi``.

    Raises:
        GradingMismatch: If ``psi`` is not of ghost number -1 or contains antifields
    """
    if psi.is_zero():
        return F
    g = grading(psi)
    if g is MIXED or not isinstance(g, Grading) or g.gh != -1 or g.af != 0:
        raise GradingMismatch("gauge fixing fermion must have ghost number -1", grading=str(g))
    table = F.ring.table
    images = {}
    for a in psi.generators():
        if table[a].kind != "field":
            continue
        shift = derive(psi, a, "left")
        if shift:
            anti = table.antifield(a)
            images[anti] = F.ring.gen(anti) + shift
    return substitute(F, images)


def check_gauge_fix(model: Model, psi: Poly, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    """``{alpha_psi F, alpha_psi G} = alpha_psi {F, G}``."""
    defect = Fraction(0)
    for F, G in pairs:
        lhs = antibracket(gauge_fix(F, psi), gauge_fix(G, psi))
        rhs = gauge_fix(antibracket(F, G), psi)
        defect = max(defect, (lhs - rhs).abs_max())
    return defect_record("gauge_fix", "gauge fixing preserves the antibracket", defect, model.window)


def check_cme(model: Model) -> CheckRecord:
    """Free and full classical master equations on the slab."""
    w = model.window
    theta, S0 = model.theta0, model.S0
    S = extended_action(model)
    values = {
        "cme.theta_S0": model.restrict(antibracket(theta, S0)).abs_max(),
        "cme.theta_theta": model.restrict(antibracket(theta, theta)).abs_max(),
        "cme.full": model.restrict(antibracket(S, S)).abs_max(),
    }
    anchors = {
        "cme.theta_S0": "free CME {theta0, S0} = 0",
        "cme.theta_theta": "{theta0, theta0} = 0",
        "cme.full": "{S, S} = 0 for S = S0 + theta0 + V",
    }
    parts = [defect_record(k, anchors[k], v, w) for k, v in values.items()]
    logger.debug(f"CME defects on {model.name}: {values}")
    return combine("cme", "classical master equation on the slab", parts, w)


def check_gamma0_nilpotent(model: Model, samples: Sequence[Poly]) -> CheckRecord:
    defect = Fraction(0)
    for F in samples:
        defect = max(defect, model.restrict(gamma0_apply(gamma0_apply(F, model), model)).abs_max())
    return defect_record("gamma0_nilpotent", "gamma0^2 = 0", defect, model.window)


def check_bv_nilpotent(model: Model, samples: Sequence[Poly]) -> CheckRecord:
    """``s^2 F = 0`` on antifield-free samples, given the CME."""
    defect = Fraction(0)
    for F in samples:
        defect = max(defect, model.restrict(bv_differential(bv_differential(F, model), model)).abs_max())
    return defect_record("bv_nilpotent", "s^2 = 0 when the CME holds", defect, model.window)


def check_bracket_symmetry(model: Model, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    """``{F, G} + (-1)^{(|F|+1)(|G|+1)} {G, F} = 0`` on homogeneous inputs."""
    defect = Fraction(0)
    for F, G in pairs:
        back = antibracket(G, F)
        sign = -1 if (F.parity() + 1) * (G.parity() + 1) % 2 else 1
        defect = max(defect, (antibracket(F, G) + (back if sign > 0 else -back)).abs_max())
    return defect_record("antibracket_symmetry", "graded antisymmetry of the antibracket", defect,
                         model.window)


def check_laplacian(model: Model, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    """``Lap^2 = 0`` and ``Lap(FG) = Lap F G + (-1)^|F| (F Lap G + {F, G})``.

    The bracket term carries ``(-1)^|F|``, so for even ``F`` the rule reads
    ``Lap F G + F Lap G + {F, G}``. Even and odd left factors are reported
    separately.
    """
    w = model.window
    square = Fraction(0)
    leibniz = {0: Fraction(0), 1: Fraction(0)}
    for F, G in pairs:
        square = max(square, bv_laplacian(bv_laplacian(F)).abs_max())
        parity = F.parity()
        tail = F * bv_laplacian(G) + antibracket(F, G)
        expected = bv_laplacian(F) * G + (-tail if parity else tail)
        leibniz[parity] = max(leibniz[parity], (bv_laplacian(F * G) - expected).abs_max())
    parts = [
        defect_record("laplacian.square", "Lap^2 = 0", square, w),
        defect_record("laplacian.leibniz", "Lap(FG) = Lap F G + F Lap G + {F,G} for even F",
                      leibniz[0], w),
        defect_record("laplacian.leibniz_odd", "Lap(FG) = Lap F G - F Lap G - {F,G} for odd F",
                      leibniz[1], w),
    ]
    return combine("laplacian", "BV Laplacian identities", parts, w)


def check_theta_brackets(ctx: ProductContext, samples: Sequence[Poly]) -> CheckRecord:
    """``{F, theta0}_* = {F, theta0} = gamma0 F`` on the slab."""
    model = ctx.model
    defect = Fraction(0)
    for F in samples:
        pointwise = antibracket(F, model.theta0)
        starred = antibracket(F, model.theta0, "star", ctx)
        direct = gamma0_apply(F, model)
        defect = max(
            defect,
            model.restrict(starred - pointwise).abs_max(),
            model.restrict(pointwise - direct).abs_max(),
        )
    return defect_record("theta_brackets", "{., theta0}_* = {., theta0} = gamma0", defect,
                         model.window)


def check_differential_split(model: Model, samples: Sequence[Poly]) -> CheckRecord:
    """``gamma0 delta0 + delta0 gamma0 = 0`` with ``delta0 = {., S0}``."""
    koszul = _images(model, "S0_images", model.S0)
    defect = Fraction(0)
    for F in samples:
        first = gamma0_apply(apply_right_derivation(F, koszul), model)
        second = apply_right_derivation(gamma0_apply(F, model), koszul)
        defect = max(defect, model.restrict(first + second).abs_max())
    return defect_record("gamma_delta", "gamma0 delta0 + delta0 gamma0 = 0", defect, model.window)
