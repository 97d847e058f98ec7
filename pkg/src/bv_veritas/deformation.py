"""Star and time-ordered products, alpha_H transforms and S-matrix series.

Both products are ``m o exp(hbar Gamma'_W)`` with
``Gamma'_W (F (x) G) = sum W^{ab} (F <- d_a)(d_b -> G)``; the star product uses
``omega`` and the time-ordered product ``W_T = i Delta_D + H``. The
exponential is evaluated by iterating a single contraction and dividing by
``n`` at step ``n``; results are memoized per monomial pair.
"""

from __future__ import annotations

import logging
import random
import threading
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from bv_veritas.brackets import gamma0_apply, peierls
from bv_veritas.errors import NotInvertible, SupportsNotOrdered
from bv_veritas.green import PropagatorSet
from bv_veritas.kernels import Kernel
from bv_veritas.models import STENCIL_RADIUS, Model
from bv_veritas.poly import Mono, Poly, PolyRing, derive, derive_mono, slices_of, sum_polys
from bv_veritas.report import CheckRecord, combine, defect_record
from bv_veritas.series import I, ONE, ZERO, Coeff, Scalar

logger = logging.getLogger(__name__)

Contraction = list[tuple[Mono, int, Scalar]]


class Contractor:
    """Memoized ``exp(hbar Gamma'_W)`` on monomial pairs for one kernel."""

    def __init__(self, ring: PolyRing, kernel: Kernel) -> None:
        self.ring = ring
        self.kernel = kernel
        self._cache: dict[tuple[Mono, Mono, int], Contraction] = {}
        self._lock = threading.Lock()

    def contract(self, u: Mono, v: Mono, n_max: int) -> Contraction:
        key = (u, v, n_max)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        result = self._contract(u, v, n_max)
        with self._lock:
            self._cache[key] = result
        return result

    def _contract(self, u: Mono, v: Mono, n_max: int) -> Contraction:
        ring = self.ring
        parity = ring.table.parity
        rows = self.kernel.rows
        out: dict[tuple[Mono, int], Scalar] = {}
        merged = ring.mono_mul(u, v)
        if merged is not None:
            sign, mono = merged
            out[(mono, 0)] = Scalar(sign)
        level: dict[tuple[Mono, Mono], Scalar] = {(u, v): ONE}
        for n in range(1, n_max + 1):
            nxt: dict[tuple[Mono, Mono], Scalar] = {}
            for (x, y), c in level.items():
                y_set = set(y)
                for a in set(x):
                    row = rows.get(a)
                    if not row:
                        continue
                    dx = derive_mono(x, a, "right", parity)
                    assert dx is not None
                    for b in y_set:
                        w = row.get(b)
                        if w is None:
                            continue
                        dy = derive_mono(y, b, "left", parity)
                        assert dy is not None
                        value = c * w * (dx[0] * dy[0]) / n
                        pair = (dx[1], dy[1])
                        total = nxt.get(pair, ZERO) + value
                        if total:
                            nxt[pair] = total
                        else:
                            nxt.pop(pair, None)
            if not nxt:
                break
            for (x, y), c in nxt.items():
                merged = ring.mono_mul(x, y)
                if merged is None:
                    continue
                sign, mono = merged
                total = out.get((mono, n), ZERO) + (c if sign > 0 else -c)
                if total:
                    out[(mono, n)] = total
                else:
                    out.pop((mono, n), None)
            level = nxt
        return [(mono, n, value) for (mono, n), value in out.items()]


def _min_k(f: Poly) -> int:
    return min((k for c in f.terms.values() for _, k in c.terms), default=0)


def bidifferential(F: Poly, G: Poly, contractor: Contractor) -> Poly:
    """``m o exp(hbar Gamma'_W)(F (x) G)`` truncated to the window."""
    F._check(G)
    ring = F.ring
    w = ring.window
    n_max = w.k_max - _min_k(F) - _min_k(G)
    terms: dict[Mono, Coeff] = {}
    g_items = [(v, c, c.lambda_order()) for v, c in G.terms.items()]
    for u, cu in F.terms.items():
        ou = cu.lambda_order()
        for v, cv, ov in g_items:
            if ou + ov > w.lambda_max:
                continue
            cuv = cu * cv
            if not cuv:
                continue
            for mono, n, value in contractor.contract(u, v, n_max):
                term = (cuv.shift(dk=n) if n else cuv).scale(value)
                if not term:
                    continue
                prev = terms.get(mono)
                terms[mono] = term if prev is None else prev + term
    return Poly(ring, {m: c for m, c in terms.items() if c})


@dataclass
class ProductContext:
    """Propagators plus memoized contraction engines for ``omega`` and ``W_T``."""

    model: Model
    props: PropagatorSet
    _star: Contractor = field(init=False, repr=False)
    _tprod: Contractor = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._star = Contractor(self.model.ring, self.props.omega)
        self._tprod = Contractor(self.model.ring, self.props.feynman)

    @property
    def ring(self) -> PolyRing:
        return self.model.ring

    def star(self, F: Poly, G: Poly) -> Poly:
        return bidifferential(F, G, self._star)

    def tprod(self, F: Poly, G: Poly) -> Poly:
        return bidifferential(F, G, self._tprod)

    def with_omega(self, omega: Kernel) -> ProductContext:
        props = PropagatorSet(
            self.props.retarded, self.props.advanced, self.props.causal, self.props.dirac,
            omega, self.props.feynman, self.props.H,
        )
        return ProductContext(self.model, props)


def star(F: Poly, G: Poly, ctx: ProductContext) -> Poly:
    """Star product with kernel ``omega``."""
    return ctx.star(F, G)


def tprod(F: Poly, G: Poly, ctx: ProductContext) -> Poly:
    """Time-ordered product with kernel ``i Delta_D + H``."""
    return ctx.tprod(F, G)


def star_commutator(F: Poly, G: Poly, ctx: ProductContext) -> Poly:
    """Graded commutator ``F * G - (-1)^{|F||G|} G * F`` for homogeneous inputs."""
    sign = -1 if F.parity() and G.parity() else 1
    back = ctx.star(G, F)
    return ctx.star(F, G) - (back if sign > 0 else -back)


def gamma_transform(F: Poly, H: Kernel) -> Poly:
    """``alpha_H F`` via ``alpha(g R) = g alpha(R) + hbar sum_b H^{gb} d^l_b alpha(R)``."""
    ring = F.ring
    memo: dict[Mono, Poly] = {(): ring.one()}
    rows = H.rows

    def alpha(mono: Mono) -> Poly:
        hit = memo.get(mono)
        if hit is not None:
            return hit
        g, rest = mono[0], mono[1:]
        tail = alpha(rest)
        result = ring.gen(g) * tail
        row = rows.get(g)
        if row:
            parts = []
            for b, h in row.items():
                part = derive(tail, b, "left")
                if part:
                    parts.append(part.scale(h))
            if parts:
                result = result + sum_polys(ring, parts).shift(dk=1)
        memo[mono] = result
        return result

    return sum_polys(ring, (alpha(mono).scale(c) for mono, c in F.terms.items()))


def exp_T(V: Poly, ctx: ProductContext) -> Poly:
    """Time-ordered exponential ``sum_n (i/hbar)^n / n! V^{.T n}``.

    Raises:
        ValueError: If some term of ``V`` has lambda order 0
    """
    ring = ctx.ring
    if V.is_zero():
        return ring.one()
    if V.lambda_order() < 1:
        raise ValueError("interaction must be of order lambda >= 1")
    step = V.scale(I).shift(dk=-1)
    result = ring.one()
    term = ring.one()
    for n in range(1, ring.window.lambda_max + 1):
        term = ctx.tprod(term, step).scale(Fraction(1, n))
        if term.is_zero():
            break
        result = result + term
    return result


def star_inverse(A: Poly, ctx: ProductContext) -> Poly:
    """Inverse for the star product by geometric series.

    Raises:
        NotInvertible: If the lambda^0 part of ``A`` is not a nonzero constant
    """
    ring = ctx.ring
    unit_part = A.lambda_part(0)
    if any(mono for mono in unit_part.terms):
        raise NotInvertible("lambda^0 part is not a multiple of 1")
    unit = A.terms.get((), Coeff.zero(ring.window)).lambda_part(0)
    inv_unit = unit.invert()
    x = ring.one() - A.scale(inv_unit)
    result = ring.one()
    power = ring.one()
    for _ in range(ring.window.lambda_max):
        power = ctx.star(power, x)
        if power.is_zero():
            break
        result = result + power
    return result.scale(inv_unit)


def is_later(F: Poly, G: Poly, model: Model) -> bool:
    """All slices of ``F`` at least the stencil radius after those of ``G``."""
    sf, sg = slices_of(F), slices_of(G)
    if not sf or not sg:
        return True
    return min(sf) - max(sg) > STENCIL_RADIUS


def check_causal_factorization(ctx: ProductContext, F: Poly, G: Poly) -> CheckRecord:
    """``F .T G = F * G`` when ``F`` is later than ``G``.

    Raises:
        SupportsNotOrdered: If neither functional is later than the other
    """
    w = ctx.ring.window
    if is_later(F, G, ctx.model):
        defect = (ctx.tprod(F, G) - ctx.star(F, G)).abs_max()
        return defect_record("causal_factorization", "F .T G = F * G for F later than G", defect, w)
    if is_later(G, F, ctx.model):
        sign = -1 if F.parity() and G.parity() else 1
        back = ctx.star(G, F)
        defect = (ctx.tprod(F, G) - (back if sign > 0 else -back)).abs_max()
        return defect_record(
            "causal_factorization", "F .T G = (+-) G * F for G later than F", defect, w
        )
    raise SupportsNotOrdered("supports overlap in time", F=sorted(slices_of(F)), G=sorted(slices_of(G)))


def gamma0_leibniz_defect(ctx: ProductContext, X: Poly, Y: Poly) -> Poly:
    """``gamma0(X * Y) - X * gamma0 Y - (-1)^{|Y|} gamma0 X * Y`` (right derivation)."""
    model = ctx.model
    lhs = gamma0_apply(ctx.star(X, Y), model)
    first = ctx.star(X, gamma0_apply(Y, model))
    second = ctx.star(gamma0_apply(X, model), Y)
    return lhs - first - (second if not Y.parity() else -second)


def check_gamma0_derivation(ctx: ProductContext, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    """``gamma0`` is a derivation of the star product on every pair."""
    model = ctx.model
    defect = Fraction(0)
    for X, Y in pairs:
        defect = max(defect, model.restrict(gamma0_leibniz_defect(ctx, X, Y)).abs_max())
    return defect_record(
        "gamma0_derivation", "gamma0(X*Y) = X*gamma0 Y + (-1)^|Y| gamma0 X * Y", defect,
        ctx.ring.window, details={"pairs": str(len(pairs))},
    )


def check_star_associativity(ctx: ProductContext, triples: Sequence[tuple[Poly, Poly, Poly]]) -> CheckRecord:
    defect = Fraction(0)
    for F, G, H in triples:
        left = ctx.star(ctx.star(F, G), H)
        right = ctx.star(F, ctx.star(G, H))
        defect = max(defect, (left - right).abs_max())
    return defect_record("star_associativity", "(F*G)*H = F*(G*H)", defect, ctx.ring.window)


def check_tprod_commutativity(ctx: ProductContext, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    defect = Fraction(0)
    for F, G in pairs:
        sign = -1 if F.parity() and G.parity() else 1
        back = ctx.tprod(G, F)
        defect = max(defect, (ctx.tprod(F, G) - (back if sign > 0 else -back)).abs_max())
    return defect_record("tprod_commutativity", "F .T G = (-1)^{|F||G|} G .T F", defect, ctx.ring.window)


def check_tprod_definitions(ctx: ProductContext, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    """Direct ``W_T`` contraction against ``alpha_W(alpha_W^{-1} F . alpha_W^{-1} G)``."""
    W = ctx.props.feynman
    minus = Kernel.of(W.table, W.scale(-1))
    defect = Fraction(0)
    for F, G in pairs:
        direct = ctx.tprod(F, G)
        conj = gamma_transform(gamma_transform(F, minus) * gamma_transform(G, minus), W)
        defect = max(defect, (direct - conj).reliable().abs_max())
    return defect_record("tprod_definitions", "F .T G = alpha_W(alpha_W^-1 F . alpha_W^-1 G)",
                         defect, ctx.ring.window)


def check_classical_limit(ctx: ProductContext, pairs: Sequence[tuple[Poly, Poly]]) -> CheckRecord:
    """``hbar^1 lambda^0`` part of the star commutator is ``i`` times the Peierls bracket."""
    defect = Fraction(0)
    for F, G in pairs:
        comm = star_commutator(F, G, ctx).map_coeffs(
            lambda c: Coeff({(0, 0): c.terms[(0, 1)]}, c.window) if (0, 1) in c.terms else Coeff.zero(c.window)
        )
        target = peierls(F, G, ctx.props).lambda_part(0).map_coeffs(
            lambda c: Coeff({(0, 0): c.terms[(0, 0)]}, c.window) if (0, 0) in c.terms else Coeff.zero(c.window)
        ).scale(I)
        defect = max(defect, (comm - target).abs_max())
    return defect_record("classical_limit", "[F,G]_* = i hbar {F,G}_Peierls + O(hbar^2)", defect,
                         ctx.ring.window)


def check_intertwining_products(
    ctx: ProductContext, H: Kernel, pairs: Sequence[tuple[Poly, Poly]]
) -> CheckRecord:
    """``alpha_H(F * G) = alpha_H F *' alpha_H G`` with ``*'`` built on ``omega + H``."""
    shifted = ctx.with_omega(Kernel.of(H.table, ctx.props.omega + H))
    defect = Fraction(0)
    for F, G in pairs:
        lhs = gamma_transform(ctx.star(F, G), H)
        rhs = shifted.star(gamma_transform(F, H), gamma_transform(G, H))
        defect = max(defect, (lhs - rhs).reliable().abs_max())
    return defect_record("intertwining_products", "alpha_H intertwines * and *_H", defect,
                         ctx.ring.window)


def check_gamma_cocycle(model: Model, H1: Kernel, H2: Kernel, samples: Sequence[Poly]) -> CheckRecord:
    """``alpha_{H1} o alpha_{H2} = alpha_{H1+H2}`` and ``alpha_{-H} o alpha_H = id``."""
    total = Kernel.of(H1.table, H1 + H2)
    minus = Kernel.of(H1.table, H1.scale(-1))
    defect = Fraction(0)
    for F in samples:
        composed = gamma_transform(gamma_transform(F, H2), H1)
        defect = max(defect, (composed - gamma_transform(F, total)).reliable().abs_max())
        back = gamma_transform(gamma_transform(F, H1), minus)
        defect = max(defect, (back - F).reliable().abs_max())
    return defect_record("gamma_cocycle", "alpha_H1 alpha_H2 = alpha_{H1+H2}", defect, model.window)


def random_local_poly(
    model: Model, rng: random.Random, degree: int = 2, slices: Sequence[int] | None = None,
    antifields: bool = False, n_terms: int = 3, parity: int | None = None,
) -> Poly:
    """Random polynomial in generators on the given slices (default: the slab)."""
    ring = model.ring
    gens = model.table.generators
    keep = set(slices if slices is not None else model.slab)
    pool = [
        g.id for g in gens
        if g.kind in (("field", "antifield") if antifields else ("field",)) and g.slice in keep
    ]
    parts = []
    attempts = 0
    while len(parts) < n_terms and attempts < 50 * n_terms:
        attempts += 1
        size = rng.randint(1, degree)
        chosen = [rng.choice(pool) for _ in range(size)]
        term = ring.constant(rng.choice([-3, -2, -1, 1, 2, 3]))
        for g in chosen:
            term = term * ring.gen(g)
        if term.is_zero():
            continue
        if parity is not None and term.parity() != parity:
            continue
        parts.append(term)
    return sum_polys(ring, parts)
