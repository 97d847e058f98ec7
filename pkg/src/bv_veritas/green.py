"""Retarded/advanced Green kernels, two-point kernels and their checks.

The forward solve relies on a lead certificate: every row ``r`` of ``P``
involves unknowns at slices ``<= lead[r]`` only, and the rows with lead ``s``
determine the unknowns at slice ``s`` through an invertible square block.
Rows with lead in ``[1, Nt-1]`` are the valid rows; the retarded column of a
valid row ``y`` vanishes below ``lead[y]``.
"""

from __future__ import annotations

import cmath
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from sympy.polys.domains import QQ_I
from sympy.polys.matrices import DomainMatrix
from sympy.polys.matrices.exceptions import DMNonInvertibleMatrixError

from bv_veritas.errors import EigenFailure, SingularLeadingBlock, SupportViolation
from bv_veritas.kernels import Kernel, Matrix
from bv_veritas.models import Model
from bv_veritas.report import CheckRecord, combine, defect_record
from bv_veritas.series import HALF, I, ONE, ZERO, Scalar

logger = logging.getLogger(__name__)


def _domain_inverse(rows: list[list[object]], n: int, what: str, **context: object) -> list[list[Scalar]]:
    """Exact inverse over ``QQ_I`` of an ``n x n`` matrix of ``QQ_I`` elements."""
    if n == 0:
        return []
    try:
        inverse = DomainMatrix(rows, (n, n), QQ_I).inv()
    except DMNonInvertibleMatrixError as exc:
        raise SingularLeadingBlock(f"{what} is singular", size=n, **context) from exc
    return [[Scalar.wrap(v) for v in row] for row in inverse.to_list()]


def _invert(block: list[list[Scalar]], s: int) -> list[list[Scalar]]:
    return _domain_inverse(
        [[v.value for v in row] for row in block], len(block), f"leading block of slice {s}", slice=s
    )


class ForwardSolver:
    """Slice-by-slice exact solver for ``P u = source`` on valid rows.

    Args:
        P: Kernel of the field equations
        lead: Leading slice per row
        n_slices: Number of time slices
    """

    def __init__(self, P: Kernel, lead: Mapping[int, int], n_slices: int) -> None:
        self.P = P
        self.lead = dict(lead)
        self.n_slices = n_slices
        table = P.table
        self.slice = {g: table[g].slice or 0 for g in table.fields}
        self.cols: dict[int, list[int]] = {}
        self.rows: dict[int, list[int]] = {}
        for g in table.fields:
            self.cols.setdefault(self.slice[g], []).append(g)
            if 1 <= self.lead[g] <= n_slices - 1:
                self.rows.setdefault(self.lead[g], []).append(g)
        self._inverse: dict[int, list[list[Scalar]]] = {}
        self._past: dict[int, list[tuple[int, Scalar]]] = {}
        for s in range(1, n_slices):
            rows, cols = self.rows.get(s, []), self.cols.get(s, [])
            if len(rows) != len(cols):
                raise SingularLeadingBlock(
                    f"leading block of slice {s} is {len(rows)}x{len(cols)}", slice=s
                )
            for r in rows:
                past = []
                for c, v in P.row(r).items():
                    cs = self.slice[c]
                    if cs > s:
                        raise SingularLeadingBlock(
                            f"row {table[r].name} reaches slice {cs} beyond its lead {s}"
                        )
                    if cs < s:
                        past.append((c, v))
                self._past[r] = past
            self._inverse[s] = _invert([[P[r, c] for c in cols] for r in rows], s)

    def valid(self, row: int) -> bool:
        return 1 <= self.lead[row] <= self.n_slices - 1

    def solve(
        self, source: Mapping[int, Scalar] | None = None, initial: Mapping[int, Scalar] | None = None,
        start: int = 1,
    ) -> dict[int, Scalar]:
        """Forward solution from ``initial`` data on slices ``< start``."""
        u: dict[int, Scalar] = {g: v for g, v in (initial or {}).items() if v}
        source = source or {}
        for s in range(start, self.n_slices):
            rows, cols = self.rows.get(s, []), self.cols.get(s, [])
            rhs = []
            for r in rows:
                acc = source.get(r, ZERO)
                for c, v in self._past[r]:
                    if c in u:
                        acc = acc - v * u[c]
                rhs.append(acc)
            if not any(rhs):
                continue
            inv = self._inverse[s]
            for i, c in enumerate(cols):
                acc = ZERO
                for j, b in enumerate(rhs):
                    if b:
                        acc = acc + inv[i][j] * b
                if acc:
                    u[c] = acc
        return u


def green_solve(
    P: Kernel, lead: Mapping[int, int], n_slices: int, orientation: str = "retarded"
) -> Kernel:
    """Exact retarded (or advanced) inverse of ``P``.

    The advanced kernel is the graded transpose of the retarded one.

    Raises:
        SingularLeadingBlock: If a leading block is not square or singular
        SupportViolation: If a column leaks below its source's lead slice
    """
    solver = ForwardSolver(P, lead, n_slices)
    out = Matrix()
    for y in P.table.fields:
        if not solver.valid(y):
            continue
        column = solver.solve({y: ONE}, start=lead[y])
        for a, v in column.items():
            if solver.slice[a] < lead[y]:
                raise SupportViolation(
                    f"retarded column of {P.table[y].name} reaches {P.table[a].name}"
                )
            out.add_entry(a, y, v)
    retarded = Kernel.of(P.table, out)
    logger.debug(f"Retarded kernel solved: nnz={retarded.nnz()}")
    if orientation == "retarded":
        return retarded
    if orientation == "advanced":
        return retarded.graded_transpose()
    raise ValueError(f"unknown orientation {orientation!r}")


def dense_retarded(P: Kernel, lead: Mapping[int, int], n_slices: int) -> Kernel:
    """Retarded kernel from one dense exact inverse of the bulk block of ``P``.

    The bulk block pairs the valid rows with the unknowns on slices
    ``1..n_slices-1``; slice-0 data vanish. Cross-check for :func:`green_solve`.

    Raises:
        SingularLeadingBlock: If the bulk block is not square or singular
    """
    table = P.table
    rows = [g for g in table.fields if 1 <= lead[g] <= n_slices - 1]
    cols = [g for g in table.fields if 1 <= (table[g].slice or 0) <= n_slices - 1]
    if len(rows) != len(cols):
        raise SingularLeadingBlock(f"bulk block is {len(rows)}x{len(cols)}")
    pos = {g: n for n, g in enumerate(cols)}
    dense = [[QQ_I.zero] * len(cols) for _ in rows]
    for i, r in enumerate(rows):
        for c, v in P.row(r).items():
            if c in pos:
                dense[i][pos[c]] = v.value
    inverse = _domain_inverse(dense, len(rows), "bulk block")
    out = Matrix()
    for i, a in enumerate(cols):
        for j, y in enumerate(rows):
            if inverse[i][j]:
                out.add_entry(a, y, inverse[i][j])
    logger.debug(f"Dense retarded kernel from a {len(rows)}x{len(rows)} bulk inverse")
    return Kernel.of(table, out)


@dataclass(frozen=True)
class PropagatorSet:
    """Retarded, advanced, causal and Dirac kernels with the star and time-ordered kernels."""

    retarded: Kernel
    advanced: Kernel
    causal: Kernel
    dirac: Kernel
    omega: Kernel
    feynman: Kernel
    H: Kernel


def assemble_propagators(model: Model, H: Kernel | None = None) -> PropagatorSet:
    """``Delta = R - A``, ``Delta_D = (R + A)/2``, ``omega = (i/2) Delta + H``,
    ``W_T = i Delta_D + H``."""
    R = green_solve(model.P, model.lead, model.lattice.Nt, "retarded")
    A = R.graded_transpose()
    H = H if H is not None else Kernel(model.table)
    causal = Kernel.of(model.table, R - A, "antisymmetric")
    dirac = Kernel.of(model.table, (R + A).scale(HALF), "symmetric")
    omega = Kernel.of(model.table, causal.scale(I * HALF) + H)
    feynman = Kernel.of(model.table, dirac.scale(I) + H, "symmetric")
    return PropagatorSet(R, A, causal, dirac, omega, feynman, H)


def check_green_identities(model: Model, props: PropagatorSet) -> CheckRecord:
    """``P R = P A = Id`` and ``R P = Id`` on bulk, agreement with a dense inverse,
    causal support and graded antisymmetry."""
    bulk = set(model.bulk_fields())
    ident = Matrix.identity(bulk)
    w = model.window
    parts = []
    for name, product in (
        ("P_R", model.P @ props.retarded),
        ("P_A", model.P @ props.advanced),
        ("R_P", props.retarded @ model.P),
        ("A_P", props.advanced @ model.P),
    ):
        parts.append(
            defect_record(
                f"green.{name}", f"{name.replace('_', '')} = Id on bulk",
                (product.restrict(bulk, bulk) - ident).abs_max(), w,
            )
        )
    dense = dense_retarded(model.P, model.lead, model.lattice.Nt)
    parts.append(
        defect_record(
            "green.dense_inverse", "R = dense exact inverse of the bulk block",
            (props.retarded - dense).abs_max(), w,
        )
    )
    leak = Fraction(0)
    for a, y, v in props.retarded.items():
        if model.slice_of(a) < model.slice_of(y):
            leak = max(leak, v.abs_max())
    parts.append(defect_record("green.support", "supp R(., y) in the future of y", leak, w))
    anti = (props.causal + props.causal.graded_transpose()).abs_max()
    parts.append(defect_record("green.antisymmetry", "Delta graded antisymmetric", anti, w))
    sym = (props.dirac - props.dirac.graded_transpose()).abs_max()
    parts.append(defect_record("green.dirac_symmetry", "Delta_D graded symmetric", sym, w))
    return combine("green_identities", "retarded/advanced inverses of P", parts, w)


def consistency_defect(kernel: Matrix, K: Kernel, rows: set[int], cols: set[int]) -> Fraction:
    """``(kappa K^T)^{ab} + (-1)^{|b|} (K kappa)^{ab}`` restricted to ``rows x cols``."""
    parity = K.table.parity
    combo = (kernel @ K.transpose()).copy()
    for a, b, v in (K @ kernel).items():
        combo.add_entry(a, b, -v if parity[b] else v)
    return combo.restrict(rows, cols).abs_max()


def check_consistency(kernel: Matrix, model: Model, name: str = "kernel", K: Kernel | None = None) -> CheckRecord:
    """Gauge consistency of a two-point kernel with the BRST kernel ``K``."""
    bulk = set(model.bulk_fields())
    defect = consistency_defect(kernel, K if K is not None else model.K, bulk, bulk)
    return defect_record(
        f"consistency.{name}", "kappa K^T + (-1)^|b| K kappa = 0 on bulk", defect, model.window
    )


def check_two_point(omega: Kernel, props: PropagatorSet, model: Model) -> CheckRecord:
    """Antisymmetric part, bulk bisolution and hermiticity of ``omega``."""
    bulk = set(model.bulk_fields())
    valid = {g for g in model.bulk_fields() if model.is_valid_row(g)}
    w = model.window
    antisym = (omega - omega.graded_transpose()) - props.causal.scale(I)
    bisolution = (model.P @ omega).restrict(valid, bulk)
    right = (omega @ model.P).restrict(bulk, valid)
    herm = omega.conjugate() - omega.transpose()
    parts = [
        defect_record("two_point.antisymmetric_part", "omega - omega^T = i Delta",
                      antisym.restrict(bulk, bulk).abs_max(), w),
        defect_record("two_point.bisolution", "P omega = omega P = 0 on bulk",
                      max(bisolution.abs_max(), right.abs_max()), w),
        defect_record("two_point.hermiticity", "conj omega^{ab} = omega^{ba}",
                      herm.restrict(bulk, bulk).abs_max(), w),
    ]
    record = combine("two_point", "two-point kernel: antisymmetric part, bisolution, hermiticity", parts, w)
    return record.model_copy(update={"details": {**record.details, "wavefront": "SKIPPED"}})


def symmetric_bisolution(model: Model, modes: list[dict[int, Scalar]]) -> Kernel:
    """``H^{ab} = sum_m psi_m(a) psi_m(b)`` from real even solutions ``psi_m``."""
    out = Matrix()
    for psi in modes:
        for a, va in psi.items():
            for b, vb in psi.items():
                out.add_entry(a, b, va * vb)
    return Kernel.of(model.table, out, "symmetric")


def solution(model: Model, initial: Mapping[int, Scalar]) -> dict[int, Scalar]:
    """Solution of the homogeneous equations on valid rows from slice-0 data."""
    return ForwardSolver(model.P, model.lead, model.lattice.Nt).solve(initial=initial)


@dataclass(frozen=True)
class WickKernel:
    """Floating-point two-point kernel over ``ids``."""

    ids: list[int]
    values: np.ndarray

    def entry(self, a: int, b: int) -> complex:
        pos = {g: n for n, g in enumerate(self.ids)}
        return complex(self.values[pos[a], pos[b]])


def wick_two_point(model: Model) -> WickKernel:
    """Positive-frequency two-point function of the free scalar.

    Built from the eigenmodes of the spatial operator ``-D2_x/dx^2 + m^2``; each
    mode evolves with the leapfrog frequency ``cos(Omega) = 1 - dt^2 lambda / 2``.

    Raises:
        EigenFailure: For multi-component models, zero modes or unstable steps
    """
    if len(model.multiplet.components()) != 1:
        raise EigenFailure(f"no mode decomposition for model {model.name!r}")
    lat = model.lattice
    dt, dx = float(lat.dt), float(lat.dx)
    mass = float(model.couplings.get("mass", 0))
    nx = lat.Nx
    spatial = np.zeros((nx, nx))
    for x in range(nx):
        spatial[x, x] += 2 / dx**2 + mass**2
        spatial[x, (x + 1) % nx] -= 1 / dx**2
        spatial[x, (x - 1) % nx] -= 1 / dx**2
    eigvals, eigvecs = np.linalg.eigh(spatial)
    c = 1 - dt**2 * eigvals / 2
    if np.any(np.abs(c) >= 1):
        raise EigenFailure("mode without oscillating solution", eigenvalues=eigvals.tolist())
    freq = np.arccos(c)
    ids = list(model.fields)
    n = len(ids)
    tx = [(model.slice_of(g), model.table[g].site % nx) for g in ids]
    values = np.zeros((n, n), dtype=complex)
    for i, (t, x) in enumerate(tx):
        for j, (s, y) in enumerate(tx):
            tau = t - s
            total = 0j
            for k in range(nx):
                weight = eigvecs[x, k] * eigvecs[y, k]
                total += weight * cmath.exp(1j * freq[k] * tau) / (2 * np.sin(freq[k]))
            values[i, j] = dt / dx * total
    logger.debug(f"Wick kernel built from {nx} modes, frequencies {freq.tolist()}")
    return WickKernel(ids, values)


def wick_symmetric_part(model: Model, wick: WickKernel, max_denominator: int = 10**6) -> Kernel:
    """Exact rational ``H = (omega + omega^T) / 2`` of a Wick kernel.

    The symmetric part of the mode sum is real; each entry is rounded to the
    nearest fraction with denominator at most ``max_denominator``. The result
    is a symmetric kernel for the ``alpha_H`` family.
    """
    sym = (wick.values + wick.values.T).real / 2
    out = Matrix()
    for i, a in enumerate(wick.ids):
        for j, b in enumerate(wick.ids):
            value = Fraction(float(sym[i, j])).limit_denominator(max_denominator)
            if value:
                out.add_entry(a, b, Scalar(value))
    return Kernel.of(model.table, out, "symmetric")


def check_wick(model: Model, props: PropagatorSet, tolerance: float = 1e-9) -> CheckRecord:
    """Floating-point comparison of the Wick kernel with the exact causal kernel."""
    wick = wick_two_point(model)
    pos = {g: n for n, g in enumerate(wick.ids)}
    bulk = model.bulk_fields()
    exact = np.zeros_like(wick.values)
    for a, b, v in props.causal.items():
        exact[pos[a], pos[b]] = complex(float(v.re), float(v.im))
    idx = [pos[g] for g in bulk]
    antisym = wick.values - wick.values.T - 1j * exact
    anti_defect = float(np.max(np.abs(antisym[np.ix_(idx, idx)]))) if idx else 0.0
    P = np.zeros_like(wick.values)
    for a, b, v in model.P.items():
        P[pos[a], pos[b]] = complex(float(v.re), float(v.im))
    valid = [pos[g] for g in bulk if model.is_valid_row(g)]
    bis = (P @ wick.values)[np.ix_(valid, idx)]
    bis_defect = float(np.max(np.abs(bis))) if valid else 0.0
    parts = [
        defect_record("wick.antisymmetric_part", "omega - omega^T = i Delta (float)", anti_defect,
                      tolerance=tolerance),
        defect_record("wick.bisolution", "P omega = 0 on bulk (float)", bis_defect,
                      tolerance=tolerance),
    ]
    rec = combine("wick", "mode-built Hadamard two-point function", parts)
    return rec.model_copy(update={"defect": repr(max(anti_defect, bis_defect))})


def dump_kernels(props: PropagatorSet, directory: Path) -> list[Path]:
    """Write one ``alpha x beta y re im`` file per kernel."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("retarded", "advanced", "causal", "dirac", "omega", "feynman"):
        kernel: Kernel = getattr(props, name)
        path = directory / f"{name}.txt"
        path.write_text("\n".join(kernel.dump_lines()) + "\n")
        written.append(path)
    logger.info(f"Dumped {len(written)} kernels to {directory}")
    return written
