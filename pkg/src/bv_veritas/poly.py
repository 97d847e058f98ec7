"""Supercommutative polynomials in field, antifield, tag and parameter generators.

A monomial is a tuple of generator ids in ascending order. Odd generators and
the nilpotent tag appear at most once; even generators may repeat. The id
order is the canonical generator order: fields sorted by (site, multiplet
index), each field followed by its antifield, then tags, then parameters
appended on demand.

Example:
    >>> ring = PolyRing(GeneratorTable([FieldSpec("c1", 0, 0, 0, 1, 1)]), Window())
    >>> c = ring.var("c1")
    >>> (c * c).is_zero()
    True
"""

from __future__ import annotations

import logging
import threading
from bisect import bisect_right
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

from bv_veritas.errors import MixedParity, ParityMismatch, WindowMismatch
from bv_veritas.series import ONE, Coeff, Rational, Scalar, Window, format_coeff, parse_coeff

logger = logging.getLogger(__name__)

Mono = tuple[int, ...]
Side = Literal["left", "right"]
Kind = Literal["field", "antifield", "tag", "parameter"]


@dataclass(frozen=True)
class FieldSpec:
    """One field generator requested by a model builder.

    Attributes:
        name: Unique printable label, e.g. ``"Ax(3,1)"``
        component: Multiplet index
        site: Base vertex id of the lattice cell carrying the field
        slice: Time slice used for causal bookkeeping
        parity: Grassmann parity 0 or 1
        gh: Ghost number
    """

    name: str
    component: int
    site: int
    slice: int
    parity: int
    gh: int


@dataclass(frozen=True)
class Generator:
    """Registered generator with its gradings."""

    id: int
    name: str
    kind: Kind
    component: int
    site: int
    slice: int | None
    parity: int
    gh: int
    af: int
    ta: int
    partner: int


class GeneratorTable:
    """Ordered registry of generators.

    Fields and their antifields are fixed at construction. A single nilpotent
    even tag generator is always present. Parameter generators (used by
    on-shell reduction) can be appended later; appending never reorders
    existing ids.
    """

    def __init__(self, fields: Sequence[FieldSpec]) -> None:
        self._lock = threading.Lock()
        self.generators: list[Generator] = []
        ordered = sorted(fields, key=lambda f: (f.site, f.component, f.name))
        for spec in ordered:
            fid = len(self.generators)
            self.generators.append(
                Generator(
                    fid, spec.name, "field", spec.component, spec.site, spec.slice,
                    spec.parity, spec.gh, 0, 0, fid + 1,
                )
            )
            self.generators.append(
                Generator(
                    fid + 1, f"{spec.name}‡", "antifield", spec.component, spec.site,
                    spec.slice, 1 - spec.parity, -spec.gh - 1, 1 + max(spec.gh, 0), 1, fid,
                )
            )
        self.tag = len(self.generators)
        self.generators.append(Generator(self.tag, "ε", "tag", -1, -1, None, 0, 0, 0, 0, -1))
        self._reindex()

    def _reindex(self) -> None:
        self.parity = [g.parity for g in self.generators]
        self.by_name = {g.name: g.id for g in self.generators}
        self.fields = [g.id for g in self.generators if g.kind == "field"]
        self.nilpotent = frozenset(
            g.id for g in self.generators if g.parity == 1 or g.kind == "tag"
        )

    def __len__(self) -> int:
        return len(self.generators)

    def __getitem__(self, gid: int) -> Generator:
        return self.generators[gid]

    def id(self, name: str) -> int:
        return self.by_name[name]

    def antifield(self, field_id: int) -> int:
        return self.generators[field_id].partner

    def add_parameters(self, count: int, parity: int, prefix: str) -> list[int]:
        """Append ``count`` parameter generators and return their ids."""
        with self._lock:
            start = len(self.generators)
            for n in range(count):
                name = f"{prefix}{start + n}"
                self.generators.append(
                    Generator(start + n, name, "parameter", -1, -1, None, parity, 0, 0, 0, -1)
                )
            self._reindex()
            return list(range(start, start + count))


class PolyRing:
    """Generator table plus truncation window; the parent of every Poly."""

    def __init__(self, table: GeneratorTable, window: Window) -> None:
        self.table = table
        self.window = window
        self._mul_cache: dict[tuple[Mono, Mono], tuple[int, Mono] | None] = {}

    def zero(self) -> Poly:
        return Poly(self, {})

    def one(self) -> Poly:
        return self.constant(ONE)

    def constant(self, value: Scalar | Rational | Coeff) -> Poly:
        c = value if isinstance(value, Coeff) else Coeff.constant(value, self.window)
        return Poly(self, {(): c} if c else {})

    def gen(self, gid: int, value: Scalar | Rational | Coeff = ONE) -> Poly:
        c = value if isinstance(value, Coeff) else Coeff.constant(value, self.window)
        return Poly(self, {(gid,): c} if c else {})

    def var(self, name: str) -> Poly:
        return self.gen(self.table.id(name))

    def tag(self) -> Poly:
        return self.gen(self.table.tag)

    def coeff(self, m: int, k: int, value: Scalar | Rational = ONE) -> Coeff:
        return Coeff.monomial(m, k, value, self.window)

    def mono_mul(self, u: Mono, v: Mono) -> tuple[int, Mono] | None:
        """Ordered product of two monomials as ``(sign, monomial)`` or None if zero."""
        if not u:
            return 1, v
        if not v:
            return 1, u
        key = (u, v)
        cached = self._mul_cache.get(key, False)
        if cached is not False:
            return cached  # type: ignore[return-value]
        result = _merge(u, v, self.table.parity, self.table.nilpotent)
        self._mul_cache[key] = result
        return result


def _merge(u: Mono, v: Mono, parity: list[int], nilpotent: frozenset[int]) -> tuple[int, Mono] | None:
    merged = tuple(sorted(u + v))
    for a, b in zip(merged, merged[1:]):
        if a == b and a in nilpotent:
            return None
    odd_u = [a for a in u if parity[a]]
    swaps = 0
    if odd_u:
        for b in v:
            if parity[b]:
                swaps += len(odd_u) - bisect_right(odd_u, b)
    return (-1 if swaps % 2 else 1), merged


@dataclass(frozen=True)
class Grading:
    gh: int
    af: int
    ta: int
    parity: int


class _Mixed:
    def __repr__(self) -> str:
        return "Mixed"


MIXED = _Mixed()


class Poly:
    """Finite map monomial -> Coeff, without zero coefficients."""

    __slots__ = ("ring", "terms")

    def __init__(self, ring: PolyRing, terms: dict[Mono, Coeff]) -> None:
        self.ring = ring
        self.terms = terms

    # inspection

    @property
    def table(self) -> GeneratorTable:
        return self.ring.table

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[Mono, Coeff]]:
        return iter(sorted(self.terms.items()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.ring is other.ring and self.terms == other.terms

    def __hash__(self) -> int:
        return hash(frozenset(self.terms))

    def generators(self) -> set[int]:
        return {g for mono in self.terms for g in mono}

    def degree(self) -> int:
        return max((len(mono) for mono in self.terms), default=0)

    def lambda_order(self) -> int:
        return min((c.lambda_order() for c in self.terms.values()), default=self.ring.window.lambda_max + 1)

    def mono_parity(self, mono: Mono) -> int:
        parity = self.ring.table.parity
        return sum(parity[g] for g in mono) % 2

    def parity(self) -> int:
        """Common parity of all monomials.

        Raises:
            MixedParity: If monomials of both parities are present
        """
        values = {self.mono_parity(mono) for mono in self.terms}
        if len(values) > 1:
            raise MixedParity("polynomial is not parity homogeneous")
        return values.pop() if values else 0

    def abs_max(self) -> Fraction:
        return max((c.abs_max() for c in self.terms.values()), default=Fraction(0))

    # arithmetic

    def _check(self, other: Poly) -> None:
        if self.ring is not other.ring:
            raise WindowMismatch("polynomials belong to different rings")

    def __add__(self, other: Poly) -> Poly:
        self._check(other)
        terms = dict(self.terms)
        for mono, c in other.terms.items():
            prev = terms.get(mono)
            total = c if prev is None else prev + c
            if total:
                terms[mono] = total
            else:
                terms.pop(mono, None)
        return Poly(self.ring, terms)

    def __neg__(self) -> Poly:
        return Poly(self.ring, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: Poly) -> Poly:
        return self + (-other)

    def scale(self, factor: Scalar | Rational | Coeff) -> Poly:
        terms = {}
        for mono, c in self.terms.items():
            value = c * factor
            if value:
                terms[mono] = value
        return Poly(self.ring, terms)

    def __mul__(self, other: Poly | Scalar | Rational | Coeff) -> Poly:
        if not isinstance(other, Poly):
            return self.scale(other)
        return poly_mul(self, other)

    def __rmul__(self, other: Scalar | Rational | Coeff) -> Poly:
        return self.scale(other)

    def map_coeffs(self, fn: Callable[[Coeff], Coeff]) -> Poly:
        terms = {}
        for mono, c in self.terms.items():
            value = fn(c)
            if value:
                terms[mono] = value
        return Poly(self.ring, terms)

    def shift(self, dm: int = 0, dk: int = 0) -> Poly:
        """Multiply every coefficient by ``lambda^dm hbar^dk``."""
        return self.map_coeffs(lambda c: c.shift(dm, dk))

    def lambda_part(self, m: int) -> Poly:
        return self.map_coeffs(lambda c: c.lambda_part(m))

    def reliable(self, slack: int = 0) -> Poly:
        return self.map_coeffs(lambda c: c.reliable(slack))

    def conjugate(self) -> Poly:
        return self.map_coeffs(lambda c: c.conjugate())

    def filter(self, keep: Callable[[Mono], bool]) -> Poly:
        return Poly(self.ring, {m: c for m, c in self.terms.items() if keep(m)})

    def tag_part(self) -> Poly:
        """Coefficient of the nilpotent tag, with the tag removed."""
        tag = self.ring.table.tag
        return Poly(
            self.ring,
            {tuple(g for g in m if g != tag): c for m, c in self.terms.items() if tag in m},
        )

    def without_tag(self) -> Poly:
        tag = self.ring.table.tag
        return self.filter(lambda m: tag not in m)

    def __repr__(self) -> str:
        return f"Poly({len(self.terms)} terms)"

    def __str__(self) -> str:
        return to_text(self)


def poly_mul(f: Poly, g: Poly) -> Poly:
    """Supercommutative product with Koszul signs.

    Raises:
        WindowMismatch: If the operands belong to different rings
    """
    f._check(g)
    ring = f.ring
    lmax = ring.window.lambda_max
    terms: dict[Mono, Coeff] = {}
    g_items = [(v, c, c.lambda_order()) for v, c in g.terms.items()]
    for u, cu in f.terms.items():
        ou = cu.lambda_order()
        for v, cv, ov in g_items:
            if ou + ov > lmax:
                continue
            merged = ring.mono_mul(u, v)
            if merged is None:
                continue
            sign, mono = merged
            value = cu * cv
            if sign < 0:
                value = -value
            prev = terms.get(mono)
            total = value if prev is None else prev + value
            if total:
                terms[mono] = total
            else:
                terms.pop(mono, None)
    return Poly(ring, terms)


def derive_mono(mono: Mono, gid: int, side: Side, parity: list[int]) -> tuple[int, Mono] | None:
    """Graded derivative of one monomial as ``(factor, monomial)``."""
    if gid not in mono:
        return None
    idx = mono.index(gid)
    rest = mono[:idx] + mono[idx + 1 :]
    if not parity[gid]:
        return mono.count(gid), rest
    passed = mono[:idx] if side == "left" else mono[idx + 1 :]
    swaps = sum(parity[g] for g in passed)
    return (-1 if swaps % 2 else 1), rest


def derive(f: Poly, gid: int, side: Side = "left") -> Poly:
    """Left or right graded derivative; zero when ``gid`` is absent."""
    parity = f.ring.table.parity
    terms: dict[Mono, Coeff] = {}
    for mono, c in f.terms.items():
        d = derive_mono(mono, gid, side, parity)
        if d is None:
            continue
        factor, rest = d
        value = c * factor
        prev = terms.get(rest)
        total = value if prev is None else prev + value
        if total:
            terms[rest] = total
        else:
            terms.pop(rest, None)
    return Poly(f.ring, terms)


def grading(f: Poly) -> Grading | _Mixed:
    """Common (gh, af, ta, parity) of all monomials, or ``MIXED``."""
    gens = f.ring.table.generators
    found: set[Grading] = set()
    for mono in f.terms:
        found.add(
            Grading(
                sum(gens[g].gh for g in mono),
                sum(gens[g].af for g in mono),
                sum(gens[g].ta for g in mono),
                sum(gens[g].parity for g in mono) % 2,
            )
        )
    if len(found) != 1:
        return MIXED if found else Grading(0, 0, 0, 0)
    return found.pop()


def substitute(f: Poly, images: Mapping[int, Poly]) -> Poly:
    """Graded algebra homomorphism replacing generators by polynomials.

    Raises:
        ParityMismatch: If an image is not homogeneous of its generator's parity
    """
    ring = f.ring
    parity = ring.table.parity
    for gid, image in images.items():
        if image.is_zero():
            continue
        try:
            image_parity = image.parity()
        except MixedParity as exc:
            raise ParityMismatch(f"image of {ring.table[gid].name} is mixed") from exc
        if image_parity != parity[gid]:
            raise ParityMismatch(
                f"image of {ring.table[gid].name} has parity {image_parity}",
                expected=parity[gid],
            )
    powers: dict[tuple[int, int], Poly] = {}

    def power(gid: int, n: int) -> Poly:
        key = (gid, n)
        if key not in powers:
            base = images[gid]
            powers[key] = base if n == 1 else power(gid, n - 1) * base
        return powers[key]

    result = ring.zero()
    for mono, c in f.terms.items():
        if not any(g in images for g in mono):
            result = result + Poly(ring, {mono: c})
            continue
        term = ring.constant(c)
        idx = 0
        while idx < len(mono):
            g = mono[idx]
            run = 1
            while idx + run < len(mono) and mono[idx + run] == g:
                run += 1
            if g in images:
                factor = power(g, run)
            else:
                factor = Poly(ring, {(g,) * run: Coeff.one(ring.window)})
            term = term * factor
            idx += run
            if term.is_zero():
                break
        result = result + term
    return result


def apply_right_derivation(f: Poly, images: Mapping[int, Poly]) -> Poly:
    """``sum_g (f <- d_g) images[g]`` for a derivation given on generators."""
    result = f.ring.zero()
    for gid, image in images.items():
        if image.is_zero():
            continue
        part = derive(f, gid, "right")
        if part:
            result = result + part * image
    return result


def support_of(f: Poly) -> set[int]:
    """Lattice sites (by time slice and site id) touched by field or antifield generators."""
    gens = f.ring.table.generators
    return {gens[g].site for g in f.generators() if gens[g].kind in ("field", "antifield")}


def slices_of(f: Poly) -> set[int]:
    gens = f.ring.table.generators
    return {
        s for g in f.generators() if (s := gens[g].slice) is not None
    }


@dataclass(frozen=True)
class LocalTerm:
    """One monomial written as an ordered product of single-site factors."""

    coeff: Coeff
    factors: tuple[Poly, ...]


def local_decompose(f: Poly) -> list[LocalTerm]:
    """Split every monomial into single-site factors.

    Generator ids are grouped by site in canonical order, so the ordered
    product of the factors reproduces the monomial without a sign. Tags and
    parameters form a trailing factor of their own.
    """
    ring = f.ring
    gens = ring.table.generators
    one = Coeff.one(ring.window)
    out: list[LocalTerm] = []
    for mono, c in sorted(f.terms.items()):
        groups: list[list[int]] = []
        last: tuple[str, int] | None = None
        for g in mono:
            key = ("site", gens[g].site) if gens[g].kind in ("field", "antifield") else ("aux", 0)
            if key != last:
                groups.append([])
                last = key
            groups[-1].append(g)
        out.append(LocalTerm(c, tuple(Poly(ring, {tuple(grp): one}) for grp in groups)))
    return out


def sum_polys(ring: PolyRing, parts: Iterable[Poly]) -> Poly:
    """Sum of many polynomials, accumulated in place."""
    terms: dict[Mono, Coeff] = {}
    for part in parts:
        for mono, c in part.terms.items():
            prev = terms.get(mono)
            terms[mono] = c if prev is None else prev + c
    return Poly(ring, {m: c for m, c in terms.items() if c})


def to_text(f: Poly) -> str:
    """One line per monomial, ``coeff * gen gen ...``, sorted."""
    if f.is_zero():
        return "0"
    gens = f.ring.table.generators
    lines = []
    for mono, c in sorted(f.terms.items()):
        names = " ".join(gens[g].name for g in mono) if mono else "1"
        lines.append(f"{format_coeff(c)} * {names}")
    return "\n".join(lines)


def parse_text(text: str, ring: PolyRing) -> Poly:
    """Inverse of :func:`to_text`."""
    result = ring.zero()
    if text.strip() == "0":
        return result
    for line in text.strip().splitlines():
        coeff_text, _, names = line.rpartition(" * ")
        term = ring.constant(parse_coeff(coeff_text, ring.window))
        if names != "1":
            for name in names.split():
                term = term * ring.var(name)
        result = result + term
    return result
