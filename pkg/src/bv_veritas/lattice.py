"""Finite 1+1 dimensional spacetime lattices and discrete exterior calculus.

Space is periodic with ``Nx`` sites. Time is open: slices ``0 .. Nt-1``. The
time edge at ``(t, x)`` runs from slice ``t`` to ``t+1``; on the last slice its
head vertex lies outside the lattice and is treated as zero, so the complex
is half-open in time and every cell is labelled by its base vertex.

Example:
    >>> lat = build_lattice(6, 4)
    >>> (lat.n_vertices, lat.n_edges, lat.n_faces)
    (24, 48, 24)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

from bv_veritas.errors import TooSmall
from bv_veritas.kernels import Matrix
from bv_veritas.series import Rational, Scalar

logger = logging.getLogger(__name__)

EdgeDirection = Literal["t", "x"]

MIN_SLICES = 6
MIN_SITES = 2


@dataclass(frozen=True)
class Cell:
    """A lattice cell of some degree, labelled by its base vertex."""

    degree: int
    index: int
    t: int
    x: int
    direction: str = ""

    @property
    def label(self) -> str:
        return f"{self.direction}({self.t},{self.x})" if self.direction else f"({self.t},{self.x})"


@dataclass(frozen=True)
class Lattice:
    """Cell registries of a periodic-in-space, open-in-time lattice.

    Attributes:
        Nt: Number of time slices
        Nx: Number of spatial sites
        dt: Temporal spacing
        dx: Spatial spacing
    """

    Nt: int
    Nx: int
    dt: Fraction
    dx: Fraction
    vertices: tuple[Cell, ...] = field(repr=False)
    edges: tuple[Cell, ...] = field(repr=False)
    faces: tuple[Cell, ...] = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def cells(self, degree: int) -> tuple[Cell, ...]:
        return (self.vertices, self.edges, self.faces)[degree]

    def site(self, t: int, x: int) -> int:
        """Base vertex id of ``(t, x mod Nx)``."""
        return t * self.Nx + x % self.Nx

    def vertex(self, t: int, x: int) -> int | None:
        if not 0 <= t < self.Nt:
            return None
        return self.site(t, x)

    def edge(self, t: int, x: int, direction: EdgeDirection) -> int | None:
        if not 0 <= t < self.Nt:
            return None
        offset = 0 if direction == "t" else self.Nt * self.Nx
        return offset + self.site(t, x)

    def face(self, t: int, x: int) -> int | None:
        if not 0 <= t < self.Nt:
            return None
        return self.site(t, x)

    def slice_range(self, margin: int) -> range:
        """Slices at least ``margin`` away from both temporal boundaries."""
        return range(margin, self.Nt - margin)


def build_lattice(Nt: int, Nx: int, dt: Rational = 1, dx: Rational = 1) -> Lattice:
    """Build the cell registries for an ``Nt x Nx`` lattice.

    Raises:
        TooSmall: If ``Nt < 6`` or ``Nx < 2``
    """
    if Nt < MIN_SLICES or Nx < MIN_SITES:
        raise TooSmall(
            f"lattice {Nt}x{Nx} below minimum {MIN_SLICES}x{MIN_SITES}", Nt=Nt, Nx=Nx
        )
    dt, dx = Fraction(dt), Fraction(dx)
    if dt <= 0 or dx <= 0:
        raise TooSmall("spacings must be positive", dt=str(dt), dx=str(dx))
    vertices = tuple(Cell(0, t * Nx + x, t, x) for t in range(Nt) for x in range(Nx))
    time_edges = [Cell(1, t * Nx + x, t, x, "t") for t in range(Nt) for x in range(Nx)]
    space_edges = [
        Cell(1, Nt * Nx + t * Nx + x, t, x, "x") for t in range(Nt) for x in range(Nx)
    ]
    faces = tuple(Cell(2, t * Nx + x, t, x, "f") for t in range(Nt) for x in range(Nx))
    lattice = Lattice(Nt, Nx, dt, dx, vertices, tuple(time_edges + space_edges), faces)
    logger.debug(
        f"Built lattice {Nt}x{Nx}: {lattice.n_vertices} vertices, "
        f"{lattice.n_edges} edges, {lattice.n_faces} faces"
    )
    return lattice


Cochain = dict[int, Scalar]


@dataclass(frozen=True)
class DiscreteCalculus:
    """Coboundaries, codifferentials and Minkowski Hodge weights.

    ``d[p]`` maps p-cochains to (p+1)-cochains and ``codiff[p]`` maps
    (p+1)-cochains back to p-cochains, the adjoint of ``d[p]`` under the
    pairing ``<u, v>_p = sum_i metric[p][i] u_i v_i``.
    """

    lattice: Lattice
    d: tuple[Matrix, Matrix]
    codiff: tuple[Matrix, Matrix]
    metric: tuple[tuple[Fraction, ...], tuple[Fraction, ...], tuple[Fraction, ...]]

    def pairing(self, p: int, u: Cochain, v: Cochain) -> Scalar:
        weights = self.metric[p]
        total = Scalar()
        for i, a in u.items():
            b = v.get(i)
            if b is not None:
                total = total + a * b * weights[i]
        return total

    def hodge(self, p: int) -> Matrix:
        """Diagonal Hodge weight matrix on p-cochains."""
        return Matrix.from_entries((i, i, w) for i, w in enumerate(self.metric[p]))


def discrete_calculus(lattice: Lattice) -> DiscreteCalculus:
    """Exact rational coboundary and codifferential matrices."""
    lat = lattice
    d0 = Matrix()
    for cell in lat.edges:
        t, x = cell.t, cell.x
        tail = lat.vertex(t, x)
        head = lat.vertex(t + 1, x) if cell.direction == "t" else lat.vertex(t, x + 1)
        assert tail is not None
        d0.add_entry(cell.index, tail, Scalar(-1))
        if head is not None:
            d0.add_entry(cell.index, head, Scalar(1))
    d1 = Matrix()
    for cell in lat.faces:
        t, x = cell.t, cell.x
        boundary = (
            (lat.edge(t, x, "x"), 1),
            (lat.edge(t, x + 1, "t"), 1),
            (lat.edge(t + 1, x, "x"), -1),
            (lat.edge(t, x, "t"), -1),
        )
        for edge, sign in boundary:
            if edge is not None:
                d1.add_entry(cell.index, edge, Scalar(sign))

    vol = lat.dt * lat.dx
    m0 = tuple(vol for _ in lat.vertices)
    m1 = tuple(-lat.dx / lat.dt if e.direction == "t" else lat.dt / lat.dx for e in lat.edges)
    m2 = tuple(-1 / vol for _ in lat.faces)
    metric = (m0, m1, m2)

    def codifferential(d: Matrix, lower: tuple[Fraction, ...], upper: tuple[Fraction, ...]) -> Matrix:
        return d.transpose().map(lambda i, j, v: v * upper[j] / lower[i])

    return DiscreteCalculus(
        lat, (d0, d1), (codifferential(d0, m0, m1), codifferential(d1, m1, m2)), metric
    )
