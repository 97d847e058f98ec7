"""Sparse exact matrices and graded two-point kernels."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator
from fractions import Fraction
from typing import Literal

from bv_veritas.poly import GeneratorTable
from bv_veritas.series import ONE, ZERO, Rational, Scalar

Symmetry = Literal["none", "symmetric", "antisymmetric"]


class Matrix:
    """Row-sparse matrix with ``Scalar`` entries; rows and columns are ints."""

    __slots__ = ("rows",)

    def __init__(self, rows: dict[int, dict[int, Scalar]] | None = None) -> None:
        self.rows: dict[int, dict[int, Scalar]] = rows if rows is not None else {}

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, int, Scalar | Rational]]) -> Matrix:
        m = cls()
        for i, j, value in entries:
            m.add_entry(i, j, Scalar.coerce(value))
        return m

    @classmethod
    def identity(cls, indices: Iterable[int]) -> Matrix:
        return cls({i: {i: ONE} for i in indices})

    def add_entry(self, i: int, j: int, value: Scalar) -> None:
        if not value:
            return
        row = self.rows.setdefault(i, {})
        total = row.get(j, ZERO) + value
        if total:
            row[j] = total
        else:
            row.pop(j, None)
            if not row:
                del self.rows[i]

    def __getitem__(self, key: tuple[int, int]) -> Scalar:
        i, j = key
        return self.rows.get(i, {}).get(j, ZERO)

    def row(self, i: int) -> dict[int, Scalar]:
        return self.rows.get(i, {})

    def items(self) -> Iterator[tuple[int, int, Scalar]]:
        for i in sorted(self.rows):
            row = self.rows[i]
            for j in sorted(row):
                yield i, j, row[j]

    def nnz(self) -> int:
        return sum(len(r) for r in self.rows.values())

    def is_zero(self) -> bool:
        return not self.rows

    def copy(self) -> Matrix:
        return type(self)({i: dict(r) for i, r in self.rows.items()})

    def _like(self, rows: dict[int, dict[int, Scalar]]) -> Matrix:
        return Matrix(rows)

    def map(self, fn: Callable[[int, int, Scalar], Scalar]) -> Matrix:
        out = Matrix()
        for i, j, v in self.items():
            out.add_entry(i, j, fn(i, j, v))
        return self._like(out.rows)

    def __add__(self, other: Matrix) -> Matrix:
        out = self.copy()
        for i, j, v in other.items():
            out.add_entry(i, j, v)
        return self._like(out.rows)

    def __neg__(self) -> Matrix:
        return self.map(lambda i, j, v: -v)

    def __sub__(self, other: Matrix) -> Matrix:
        return self + (-other)

    def scale(self, factor: Scalar | Rational) -> Matrix:
        s = Scalar.coerce(factor)
        return self.map(lambda i, j, v: v * s)

    def __matmul__(self, other: Matrix) -> Matrix:
        out: dict[int, dict[int, Scalar]] = {}
        for i, row in self.rows.items():
            acc: dict[int, Scalar] = {}
            for k, a in row.items():
                for j, b in other.row(k).items():
                    acc[j] = acc.get(j, ZERO) + a * b
            acc = {j: v for j, v in acc.items() if v}
            if acc:
                out[i] = acc
        return self._like(out)

    def transpose(self) -> Matrix:
        out = Matrix()
        for i, j, v in self.items():
            out.add_entry(j, i, v)
        return self._like(out.rows)

    def apply(self, vector: dict[int, Scalar]) -> dict[int, Scalar]:
        out: dict[int, Scalar] = {}
        for i, row in self.rows.items():
            acc = ZERO
            for k, a in row.items():
                if k in vector:
                    acc = acc + a * vector[k]
            if acc:
                out[i] = acc
        return out

    def restrict(self, rows: set[int] | None = None, cols: set[int] | None = None) -> Matrix:
        out: dict[int, dict[int, Scalar]] = {}
        for i, row in self.rows.items():
            if rows is not None and i not in rows:
                continue
            kept = {j: v for j, v in row.items() if cols is None or j in cols}
            if kept:
                out[i] = kept
        return self._like(out)

    def abs_max(self) -> Fraction:
        return max((v.abs_max() for _, _, v in self.items()), default=Fraction(0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"{type(self).__name__}(nnz={self.nnz()})"


class Kernel(Matrix):
    """Two-point kernel ``k^{ab}`` indexed by field generator ids.

    Attributes:
        table: Generator table providing parities and positions
        symmetry: Recorded graded symmetry class
    """

    __slots__ = ("table", "symmetry")

    def __init__(
        self,
        table: GeneratorTable,
        rows: dict[int, dict[int, Scalar]] | None = None,
        symmetry: Symmetry = "none",
    ) -> None:
        super().__init__(rows)
        self.table = table
        self.symmetry: Symmetry = symmetry

    @classmethod
    def of(cls, table: GeneratorTable, matrix: Matrix, symmetry: Symmetry = "none") -> Kernel:
        return cls(table, {i: dict(r) for i, r in matrix.rows.items()}, symmetry)

    def _like(self, rows: dict[int, dict[int, Scalar]]) -> Kernel:
        return Kernel(self.table, rows)

    def copy(self) -> Kernel:
        return Kernel(self.table, {i: dict(r) for i, r in self.rows.items()}, self.symmetry)

    def with_symmetry(self, symmetry: Symmetry) -> Kernel:
        return Kernel(self.table, self.rows, symmetry)

    def graded_transpose(self) -> Kernel:
        """``k^T{}^{ab} = (-1)^{|a||b|} k^{ba}``."""
        parity = self.table.parity
        out = Matrix()
        for i, j, v in self.items():
            out.add_entry(j, i, -v if parity[i] and parity[j] else v)
        return Kernel(self.table, out.rows)

    def graded_adjoint(self, operator_parity: int = 0, conjugate: bool = False) -> Kernel:
        """``(O^dag)_{bc} = (-1)^{|O| + |b||c|} O_{cb}``, optionally conjugated.

        The engine pairs generators bilinearly, so the PK condition uses the
        unconjugated form; ``conjugate=True`` gives the sesquilinear variant
        used by the hermiticity check.
        """
        t = self.graded_transpose()
        if operator_parity:
            t = Kernel(self.table, (-t).rows)
        if conjugate:
            t = Kernel(self.table, t.map(lambda i, j, v: v.conjugate()).rows)
        return t

    def conjugate(self) -> Kernel:
        return Kernel(self.table, self.map(lambda i, j, v: v.conjugate()).rows)

    def dump_lines(self) -> list[str]:
        """``alpha x beta y re im`` lines for every nonzero entry, sorted."""
        gens = self.table.generators
        lines = []
        for i, j, v in self.items():
            a, b = gens[i], gens[j]
            lines.append(
                f"{_label(a.name)} {a.slice},{a.site} {_label(b.name)} {b.slice},{b.site} "
                f"{v.re} {v.im}"
            )
        return sorted(lines)


def _label(name: str) -> str:
    return name.split("(", 1)[0]
