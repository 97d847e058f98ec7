"""Lattice field models: the free scalar and the gauge-fixed Maxwell multiplet.

A :class:`Model` bundles everything the engine needs about a free theory
plus its interaction:

- ``P``: graded-symmetric kernel with ``S0 = -1/2 sum phi^a P_ab phi^b``
- ``K``: free BRST kernel, ``gamma0 phi^a = (K phi)^a``
- ``theta0 = sum_a f_a phi‡_a (K phi)^a`` with the plateau cutoff ``f``
- ``V``: interaction, every term of order ``lambda >= 1``
- ``lead``: per-row leading time slice, the certificate for the forward solve

Example:
    >>> model = build_em_model(build_lattice(8, 2), margin=1)
    >>> model.K[model.id("Cb(3,1)"), model.id("B(3,1)")]
    Scalar(1i)
"""

from __future__ import annotations

import logging
import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from bv_veritas.errors import CurrentNotConserved, ProfileOutOfBulk
from bv_veritas.kernels import Kernel, Matrix
from bv_veritas.lattice import Cochain, DiscreteCalculus, Lattice, discrete_calculus
from bv_veritas.poly import FieldSpec, GeneratorTable, Mono, Poly, PolyRing, substitute, sum_polys
from bv_veritas.report import CheckRecord, combine, defect_record
from bv_veritas.series import HALF, I, ONE, Coeff, Rational, Scalar, Window

logger = logging.getLogger(__name__)

STENCIL_RADIUS = 1


@dataclass(frozen=True)
class MultipletEntry:
    name: str
    degree: int
    parity: int
    gh: int


@dataclass(frozen=True)
class Multiplet:
    """Field content; 1-form entries split into ``t`` and ``x`` components."""

    entries: tuple[MultipletEntry, ...]

    def components(self) -> list[tuple[str, MultipletEntry]]:
        out = []
        for entry in self.entries:
            if entry.degree == 1:
                out += [(f"{entry.name}t", entry), (f"{entry.name}x", entry)]
            else:
                out.append((entry.name, entry))
        return out


EM_MULTIPLET = Multiplet(
    (
        MultipletEntry("A", 1, 0, 0),
        MultipletEntry("B", 0, 0, 0),
        MultipletEntry("C", 0, 1, 1),
        MultipletEntry("Cb", 0, 1, -1),
    )
)
SCALAR_MULTIPLET = Multiplet((MultipletEntry("phi", 0, 0, 0),))


@dataclass
class Model:
    """A free lattice theory with its BRST data and interaction.

    Models are built once and treated as immutable afterwards.
    """

    name: str
    lattice: Lattice
    calculus: DiscreteCalculus
    multiplet: Multiplet
    ring: PolyRing
    cochains: dict[str, list[int]]
    P: Kernel
    K: Kernel
    S0: Poly
    theta0: Poly
    V: Poly
    lead: dict[int, int]
    cutoff: dict[int, Fraction]
    margin: int
    phi0: dict[int, Scalar] = field(default_factory=dict)
    current: Cochain | None = None
    couplings: dict[str, Fraction] = field(default_factory=dict)
    memo: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def table(self) -> GeneratorTable:
        return self.ring.table

    @property
    def window(self) -> Window:
        return self.ring.window

    @property
    def fields(self) -> list[int]:
        return self.table.fields

    def id(self, name: str) -> int:
        return self.table.id(name)

    def var(self, name: str) -> Poly:
        return self.ring.var(name)

    def slice_of(self, gid: int) -> int:
        s = self.table[gid].slice
        assert s is not None
        return s

    def is_valid_row(self, gid: int) -> bool:
        """Rows whose equation takes part in the forward solve."""
        return 1 <= self.lead[gid] <= self.lattice.Nt - 1

    @property
    def bulk(self) -> range:
        """Slices where kernel identities are asserted."""
        return self.lattice.slice_range(self.margin)

    @property
    def plateau(self) -> range:
        """Slices where the interaction cutoff equals 1."""
        return self.lattice.slice_range(self.margin)

    @property
    def slab(self) -> range:
        """Plateau shrunk by the stencil radius; identities that rely on the
        interaction cutoff are asserted here."""
        return self.lattice.slice_range(self.margin + STENCIL_RADIUS)

    def bulk_fields(self, slices: Iterable[int] | None = None) -> list[int]:
        keep = set(self.bulk if slices is None else slices)
        return [g for g in self.fields if self.slice_of(g) in keep]

    def restrict(self, f: Poly, slices: Iterable[int] | None = None) -> Poly:
        """Keep monomials whose field and antifield generators all lie in ``slices``
        (default: the slab)."""
        keep = set(self.slab if slices is None else slices)
        gens = self.table.generators

        def inside(mono: Mono) -> bool:
            return all(gens[g].slice is None or gens[g].slice in keep for g in mono)

        return f.filter(inside)

    def classical(self, f: Poly) -> Poly:
        """Set ``lambda = 1`` in every coefficient."""

        def collapse(c: Coeff) -> Coeff:
            terms: dict[tuple[int, int], Scalar] = {}
            for (_, k), v in c.terms.items():
                terms[(0, k)] = terms.get((0, k), Scalar()) + v
            return Coeff({key: v for key, v in terms.items() if v}, c.window)

        return f.map_coeffs(collapse)

    @property
    def classical_action(self) -> Poly:
        """``S0 + V`` at unit coupling; ``theta0`` enters through ``V`` for gauge models."""
        return self.S0 + self.classical(self.V)

    def field_equation(self, gid: int) -> Poly:
        """``E_a = -(P phi)_a`` as a polynomial."""
        return sum_polys(
            self.ring, (self.ring.gen(b, -v) for b, v in self.P.row(gid).items())
        )

    def linear_form(self, values: Mapping[int, Scalar | Rational]) -> Poly:
        return sum_polys(self.ring, (self.ring.gen(g, v) for g, v in values.items() if v))

    def with_interaction(self, V: Poly) -> Model:
        """Copy sharing every free-theory object, with a new interaction."""
        return Model(
            self.name, self.lattice, self.calculus, self.multiplet, self.ring, self.cochains,
            self.P, self.K, self.S0, self.theta0, V, self.lead, self.cutoff, self.margin,
            self.phi0, self.current, self.couplings,
        )

    def with_kernels(self, P: Kernel | None = None, K: Kernel | None = None) -> Model:
        """Perturbed copy for negative controls; ``theta0`` follows the new K."""
        K = K if K is not None else self.K
        theta0 = _theta(self.ring, K, self.cutoff)
        V = self.V
        if self.name == "em":
            tagged = theta0.shift(dm=1)
            V = self.V - self.theta0.shift(dm=1) + tagged
        return Model(
            self.name, self.lattice, self.calculus, self.multiplet, self.ring, self.cochains,
            P if P is not None else self.P, K, self.S0, theta0, V, self.lead, self.cutoff,
            self.margin, self.phi0, self.current, self.couplings,
        )


def plateau_cutoff(lattice: Lattice, margin: int) -> dict[int, Fraction]:
    """``f = 1`` on slices ``[margin, Nt-1-margin]``, else 0."""
    if lattice.Nt - 2 * margin < 1:
        raise ProfileOutOfBulk(f"margin {margin} leaves no plateau", Nt=lattice.Nt)
    inside = lattice.slice_range(margin)
    return {t: Fraction(1 if t in inside else 0) for t in range(lattice.Nt)}


def _register(lattice: Lattice, multiplet: Multiplet, window: Window) -> tuple[PolyRing, dict[str, list[int]]]:
    specs: list[FieldSpec] = []
    for index, (label, entry) in enumerate(multiplet.components()):
        if entry.degree == 0:
            cells = lattice.vertices
        elif entry.degree == 1:
            direction = label[-1]
            cells = tuple(e for e in lattice.edges if e.direction == direction)
        else:
            cells = lattice.faces
        for cell in cells:
            specs.append(
                FieldSpec(
                    f"{label}({cell.t},{cell.x})", index, lattice.site(cell.t, cell.x),
                    cell.t, entry.parity, entry.gh,
                )
            )
    table = GeneratorTable(specs)
    ring = PolyRing(table, window)
    cochains: dict[str, list[int]] = {}
    for label, entry in multiplet.components():
        name = entry.name
        if entry.degree == 0:
            cells = lattice.vertices
        elif entry.degree == 1:
            cells = lattice.edges
        else:
            cells = lattice.faces
        if name in cochains:
            continue
        ids = []
        for cell in cells:
            comp = f"{name}{cell.direction}" if entry.degree == 1 else name
            ids.append(table.id(f"{comp}({cell.t},{cell.x})"))
        cochains[name] = ids
    return ring, cochains


def _embed(target: Matrix, block: Matrix, rows: list[int], cols: list[int], factor: Scalar = ONE) -> None:
    for i, j, v in block.items():
        target.add_entry(rows[i], cols[j], v * factor)


def _quadratic_action(ring: PolyRing, P: Kernel) -> Poly:
    """``-1/2 sum P_ab phi^a phi^b``."""
    terms: dict[Mono, Coeff] = {}
    for a, b, v in P.items():
        merged = ring.mono_mul((a,), (b,))
        if merged is None:
            continue
        sign, mono = merged
        value = Coeff.constant(-HALF * v * sign, ring.window)
        prev = terms.get(mono)
        terms[mono] = value if prev is None else prev + value
    return Poly(ring, {m: c for m, c in terms.items() if c})


def _theta(ring: PolyRing, K: Kernel, cutoff: Mapping[int, Fraction]) -> Poly:
    """``sum_a f_a phi‡_a (K phi)^a``."""
    table = ring.table
    parts = []
    for a, row in K.rows.items():
        weight = cutoff.get(table[a].slice or 0, Fraction(0))
        if not weight:
            continue
        image = sum_polys(ring, (ring.gen(b, v * weight) for b, v in row.items()))
        parts.append(ring.gen(table.antifield(a)) * image)
    return sum_polys(ring, parts)


def smeared_theta(model: Model, weights: Mapping[int, Fraction]) -> Poly:
    """``theta0`` with a per-slice weight in place of the interaction cutoff."""
    return _theta(model.ring, model.K, weights)


def conserved_current(calculus: DiscreteCalculus, seed: int, margin: int) -> Cochain:
    """``j = delta beta`` for a seeded integer 2-form ``beta`` inside the plateau."""
    lat = calculus.lattice
    rng = random.Random(seed)
    beta: Cochain = {}
    for face in lat.faces:
        if margin <= face.t <= lat.Nt - 2 - margin:
            beta[face.index] = Scalar(rng.choice([-2, -1, 1, 2]))
    return calculus.codiff[1].apply(beta)


def build_em_model(
    lattice: Lattice,
    xi: Rational = 1,
    current: Cochain | None = None,
    *,
    current_seed: int | None = None,
    window: Window | None = None,
    margin: int = 2,
    check_current: bool = True,
) -> Model:
    """Gauge-fixed free Maxwell field with ghosts, plus ``V = lambda (theta0 + <j, A>)``.

    Args:
        lattice: Spacetime lattice
        xi: Gauge parameter of the ``B`` term
        current: Edge cochain ``j``; must satisfy ``delta j = 0``
        current_seed: Build ``j = delta beta`` from a seeded ``beta`` instead
        window: Truncation window, default ``Window()``
        margin: Temporal margin of the interaction cutoff
        check_current: Set False to build negative controls with non-conserved currents

    Raises:
        CurrentNotConserved: If ``current`` has a nonzero codifferential
    """
    window = window or Window()
    calc = discrete_calculus(lattice)
    ring, cochains = _register(lattice, EM_MULTIPLET, window)
    A, B, C, Cb = cochains["A"], cochains["B"], cochains["C"], cochains["Cb"]
    d0, d1 = calc.d
    M0, M1, M2 = calc.hodge(0), calc.hodge(1), calc.hodge(2)
    L = d0.transpose() @ M1 @ d0

    P = Matrix()
    _embed(P, d1.transpose() @ M2 @ d1, A, A)
    _embed(P, M1 @ d0, A, B)
    _embed(P, d0.transpose() @ M1, B, A)
    _embed(P, M0, B, B, Scalar(-Fraction(xi)))
    _embed(P, L, Cb, C, -I)
    _embed(P, L, C, Cb, I)
    Pk = Kernel.of(ring.table, P, "symmetric")

    Km = Matrix()
    _embed(Km, d0, A, C)
    _embed(Km, Matrix.identity(range(lattice.n_vertices)), Cb, B, I)
    Kk = Kernel.of(ring.table, Km)

    if current is None and current_seed is not None:
        current = conserved_current(calc, current_seed, margin)
    if current is not None and check_current:
        div = calc.codiff[0].apply(current)
        if div:
            raise CurrentNotConserved(
                "delta j must vanish", max_defect=str(max(v.abs_max() for v in div.values()))
            )

    cutoff = plateau_cutoff(lattice, margin)
    S0 = _quadratic_action(ring, Pk)
    theta0 = _theta(ring, Kk, cutoff)
    V = theta0
    if current is not None:
        weights = calc.metric[1]
        V = V + sum_polys(ring, (ring.gen(A[e], v * weights[e]) for e, v in current.items()))
    V = V.shift(dm=1)

    lead = {}
    for comp, offset in (("A", 1), ("B", 0), ("C", 1), ("Cb", 1)):
        for gid in cochains[comp]:
            lead[gid] = (ring.table[gid].slice or 0) + offset
    logger.info(
        f"Built EM model on {lattice.Nt}x{lattice.Nx}: {len(ring.table.fields)} fields, "
        f"P nnz={Pk.nnz()}, |theta0|={len(theta0)}, |V|={len(V)}"
    )
    return Model(
        "em", lattice, calc, EM_MULTIPLET, ring, cochains, Pk, Kk, S0, theta0, V, lead,
        cutoff, margin, current=current, couplings={"xi": Fraction(xi)},
    )


def build_scalar_model(
    lattice: Lattice,
    mass: Rational = 1,
    g3: Rational = 0,
    g4: Rational = 0,
    *,
    window: Window | None = None,
    margin: int = 2,
) -> Model:
    """Free scalar ``S0 = -1/2 <d phi, d phi> - 1/2 m^2 <phi, phi>`` with
    ``V = lambda sum_plateau vol (g3 phi^3 / 3! + g4 phi^4 / 4!)``."""
    window = window or Window()
    mass = Fraction(mass)
    if mass < 0:
        raise ValueError("mass must be nonnegative")
    calc = discrete_calculus(lattice)
    ring, cochains = _register(lattice, SCALAR_MULTIPLET, window)
    phi = cochains["phi"]
    d0 = calc.d[0]
    P = Matrix()
    _embed(P, d0.transpose() @ calc.hodge(1) @ d0, phi, phi)
    _embed(P, calc.hodge(0), phi, phi, Scalar(mass * mass))
    Pk = Kernel.of(ring.table, P, "symmetric")
    cutoff = plateau_cutoff(lattice, margin)
    vol = lattice.dt * lattice.dx
    g3, g4 = Fraction(g3), Fraction(g4)
    parts = []
    for v, gid in enumerate(phi):
        weight = cutoff[lattice.vertices[v].t] * vol
        if not weight:
            continue
        x = ring.gen(gid)
        if g3:
            parts.append((x * x * x).scale(weight * g3 / 6))
        if g4:
            parts.append((x * x * x * x).scale(weight * g4 / 24))
    V = sum_polys(ring, parts).shift(dm=1)
    lead = {gid: (ring.table[gid].slice or 0) + 1 for gid in phi}
    logger.info(f"Built scalar model on {lattice.Nt}x{lattice.Nx}, m={mass}, g3={g3}, g4={g4}")
    return Model(
        "scalar", lattice, calc, SCALAR_MULTIPLET, ring, cochains, Pk,
        Kernel(ring.table), _quadratic_action(ring, Pk), ring.zero(), V, lead, cutoff, margin,
        couplings={"mass": mass, "g3": g3, "g4": g4},
    )


@dataclass(frozen=True)
class TaylorSplit:
    constant: Poly
    linear: Poly
    quadratic: Poly
    higher: Poly


def taylor_split(S: Poly, phi0: Mapping[int, Scalar | Rational]) -> TaylorSplit:
    """Expand ``S(phi0 + phi)`` and collect by polynomial degree."""
    ring = S.ring
    images = {g: ring.gen(g) + ring.constant(Scalar.coerce(v)) for g, v in phi0.items() if v}
    shifted = substitute(S, images) if images else S
    tag = ring.table.tag
    gens = ring.table.generators
    buckets: dict[int, dict[Mono, Coeff]] = {0: {}, 1: {}, 2: {}, 3: {}}
    for mono, c in shifted.terms.items():
        degree = sum(1 for g in mono if g != tag and gens[g].kind != "parameter")
        buckets[min(degree, 3)][mono] = c
    return TaylorSplit(*(Poly(ring, buckets[n]) for n in range(4)))


def check_pk_condition(model: Model) -> CheckRecord:
    """``(-1)^{|b|} (P K)_{bs} + (K^dag P)_{bs} = 0`` on bulk rows and columns,
    plus the graded adjoint involution ``(O^dag)^dag = O``."""
    parity = model.table.parity
    bulk = set(model.bulk_fields())
    PK = model.P @ model.K
    KdP = model.K.graded_adjoint(operator_parity=1) @ model.P
    combo = Matrix()
    for b, s, v in PK.items():
        combo.add_entry(b, s, -v if parity[b] else v)
    for b, s, v in KdP.items():
        combo.add_entry(b, s, v)
    defect = combo.restrict(bulk, bulk).abs_max()
    involution = (model.K.graded_adjoint(1).graded_adjoint(1) - model.K).abs_max()
    p_sym = (model.P.graded_transpose() - model.P).abs_max()
    parts = [
        defect_record("pk.condition", "PK: (-1)^|b| PK + K^dag P = 0", defect, model.window),
        defect_record("pk.adjoint_involution", "graded adjoint is an involution", involution),
        defect_record("pk.p_graded_symmetric", "P = P^dag", p_sym),
    ]
    return combine("pk_condition", "PK condition on bulk rows/columns", parts, model.window)


def trace_k(model: Model) -> Scalar:
    """``sum_a K^a_a``."""
    total = Scalar()
    for a in model.fields:
        total = total + model.K[a, a]
    return total
