"""Tests for Green kernels, two-point kernels and kernel dumps."""

from __future__ import annotations

import random
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import pytest

from bv_veritas.assertions import assert_check_fails, assert_check_passes, assert_kernel_zero_on_bulk
from bv_veritas.deformation import (
    ProductContext,
    check_gamma_cocycle,
    check_intertwining_products,
    random_local_poly,
)
from bv_veritas.errors import EigenFailure, SingularLeadingBlock
from bv_veritas.green import (
    ForwardSolver,
    PropagatorSet,
    assemble_propagators,
    check_consistency,
    check_green_identities,
    check_two_point,
    check_wick,
    dense_retarded,
    dump_kernels,
    green_solve,
    solution,
    symmetric_bisolution,
    wick_symmetric_part,
    wick_two_point,
)
from bv_veritas.kernels import Kernel, Matrix
from bv_veritas.lattice import build_lattice
from bv_veritas.models import Model, build_scalar_model
from bv_veritas.poly import FieldSpec, GeneratorTable
from bv_veritas.series import ONE, Scalar, Window


class TestForwardSolve:
    """Test suite for the exact retarded solve."""

    @pytest.fixture
    def chain(self) -> tuple[Kernel, dict[int, int]]:
        """Second difference ``u(t+1) - 2u(t) + u(t-1)`` on a single site, 6 slices."""
        table = GeneratorTable([FieldSpec(f"u({t},0)", 0, t, t, 0, 0) for t in range(6)])
        ids = [table.id(f"u({t},0)") for t in range(6)]
        P = Matrix()
        for t, g in enumerate(ids):
            P.add_entry(g, g, Scalar(-2))
            if t + 1 < 6:
                P.add_entry(g, ids[t + 1], ONE)
                P.add_entry(ids[t + 1], g, ONE)
        lead = {g: t + 1 for t, g in enumerate(ids)}
        return Kernel.of(table, P, "symmetric"), lead

    def test_linear_growth(self, chain: tuple[Kernel, dict[int, int]]) -> None:
        """Test R(t, t') = t - t' for t >= t' and 0 before."""
        P, lead = chain
        R = green_solve(P, lead, 6)
        ids = [P.table.id(f"u({t},0)") for t in range(6)]
        for t in range(6):
            for s in range(5):
                assert R[ids[t], ids[s]] == max(t - s, 0)

    def test_advanced_is_graded_transpose(self, chain: tuple[Kernel, dict[int, int]]) -> None:
        """Test the advanced kernel is the transpose of the retarded one."""
        P, lead = chain
        assert green_solve(P, lead, 6, "advanced") == green_solve(P, lead, 6).graded_transpose()

    def test_unknown_orientation(self, chain: tuple[Kernel, dict[int, int]]) -> None:
        """Test that only retarded and advanced are accepted."""
        P, lead = chain
        with pytest.raises(ValueError, match="orientation"):
            green_solve(P, lead, 6, "feynman")

    def test_dense_inverse_matches_forward_solve(self, chain: tuple[Kernel, dict[int, int]]) -> None:
        """Test that one dense exact inverse of the bulk block reproduces the slice solve."""
        P, lead = chain
        assert dense_retarded(P, lead, 6) == green_solve(P, lead, 6)

    def test_dense_inverse_matches_em(self, em_model: Model, em_props: PropagatorSet) -> None:
        """Test the dense cross-check on the Maxwell multiplet."""
        assert dense_retarded(em_model.P, em_model.lead, em_model.lattice.Nt) == em_props.retarded

    def test_dense_inverse_singular(self, chain: tuple[Kernel, dict[int, int]]) -> None:
        """Test that a singular bulk block raises."""
        P, lead = chain
        with pytest.raises(SingularLeadingBlock, match="bulk block is singular"):
            dense_retarded(Kernel(P.table), lead, 6)

    def test_missing_lead_rows(self, scalar_model: Model) -> None:
        """Test that a lead certificate without rows for a slice is refused."""
        lead = {g: 0 for g in scalar_model.fields}
        with pytest.raises(SingularLeadingBlock):
            ForwardSolver(scalar_model.P, lead, scalar_model.lattice.Nt)

    def test_solution_solves_valid_rows(self, scalar_model: Model) -> None:
        """Test that a forward solution from slice-0 data satisfies P u = 0 on valid rows."""
        start = scalar_model.id("phi(0,1)")
        u = solution(scalar_model, {start: Scalar(3)})
        residual = scalar_model.P.apply(u)
        assert not {a: v for a, v in residual.items() if scalar_model.is_valid_row(a)}


class TestPropagators:
    """Test suite for the assembled propagator set."""

    def test_green_identities_em(self, em_model: Model, em_props: PropagatorSet) -> None:
        """Test P R = P A = Id, support and symmetry for the Maxwell multiplet."""
        assert_check_passes(check_green_identities(em_model, em_props))

    def test_green_identities_scalar(self, scalar_model: Model, scalar_props: PropagatorSet) -> None:
        """Test P R = P A = Id for the scalar."""
        assert_check_passes(check_green_identities(scalar_model, scalar_props))

    def test_green_identities_detect_wrong_retarded(self, em_model: Model, em_props: PropagatorSet) -> None:
        """Test that a retarded kernel off the dense inverse fails the dense comparison."""
        tampered = em_props.retarded.copy()
        tampered.add_entry(em_model.id("Ax(5,0)"), em_model.id("Ax(3,1)"), ONE)
        record = check_green_identities(em_model, replace(em_props, retarded=tampered))
        assert_check_fails(record)
        assert record.details["green.dense_inverse"] == "FAIL"

    @pytest.mark.parametrize("name", ["retarded", "advanced", "causal", "omega", "feynman"])
    def test_gauge_consistency(self, em_model: Model, em_props: PropagatorSet, name: str) -> None:
        """Test kappa K^T + (-1)^|b| K kappa = 0 for every kernel."""
        assert_check_passes(check_consistency(getattr(em_props, name), em_model, name))

    def test_two_point(self, em_model: Model, em_props: PropagatorSet) -> None:
        """Test the antisymmetric part, bisolution and hermiticity of omega."""
        record = check_two_point(em_props.omega, em_props, em_model)
        assert_check_passes(record)
        assert record.details["wavefront"] == "SKIPPED"

    def test_two_point_detects_asymmetric_shift(self, em_model: Model, em_props: PropagatorSet) -> None:
        """Test that adding a non-symmetric piece to omega fails."""
        omega = em_props.omega.copy()
        omega.add_entry(em_model.id("B(3,0)"), em_model.id("B(3,1)"), ONE)
        assert_check_fails(check_two_point(Kernel.of(em_model.table, omega), em_props, em_model))

    def test_symmetric_bisolution(self, scalar_model: Model) -> None:
        """Test that mode-built H is graded symmetric and annihilated by P on valid rows."""
        modes = [solution(scalar_model, {scalar_model.id("phi(0,0)"): ONE})]
        H = symmetric_bisolution(scalar_model, modes)
        assert H == H.graded_transpose()
        valid = [g for g in scalar_model.fields if scalar_model.is_valid_row(g)]
        assert_kernel_zero_on_bulk(scalar_model.P @ H, valid, scalar_model.fields)

    def test_hadamard_shift_keeps_antisymmetric_part(self, scalar_model: Model) -> None:
        """Test that omega = (i/2) Delta + H still has antisymmetric part i Delta."""
        modes = [solution(scalar_model, {scalar_model.id("phi(0,1)"): ONE})]
        props = assemble_propagators(scalar_model, symmetric_bisolution(scalar_model, modes))
        assert_check_passes(check_two_point(props.omega, props, scalar_model))


class TestWick:
    """Test suite for the floating-point mode two-point function."""

    @pytest.fixture
    def stable_scalar(self) -> Model:
        """Scalar with dt = 1/2, where every spatial mode oscillates."""
        lattice = build_lattice(8, 2, dt=Fraction(1, 2))
        return build_scalar_model(lattice, mass=1, window=Window(1, -1, 1), margin=1)

    def test_wick_matches_exact_kernel(self, stable_scalar: Model) -> None:
        """Test the Wick kernel against the exact causal kernel."""
        props = assemble_propagators(stable_scalar)
        record = check_wick(stable_scalar, props)
        assert_check_passes(record)
        assert float(record.defect) < 1e-9

    def test_unstable_step(self, scalar_model: Model) -> None:
        """Test that dt = dx = 1 with unit mass has a non-oscillating mode."""
        with pytest.raises(EigenFailure):
            wick_two_point(scalar_model)

    def test_multicomponent_model(self, em_model: Model) -> None:
        """Test that the Maxwell multiplet has no mode decomposition."""
        with pytest.raises(EigenFailure):
            wick_two_point(em_model)

    def test_symmetric_part_is_real_symmetric(self, stable_scalar: Model) -> None:
        """Test that the rounded symmetric part of the Wick kernel is a symmetric kernel."""
        H = wick_symmetric_part(stable_scalar, wick_two_point(stable_scalar))
        assert H.nnz() > 0
        assert all(value == H[b, a] and not value.im for a, b, value in H.items())

    def test_symmetric_part_drives_alpha_h(self, stable_scalar: Model, rng: random.Random) -> None:
        """Test the alpha_H intertwining and cocycle with the Wick H."""
        props = assemble_propagators(stable_scalar)
        ctx = ProductContext(stable_scalar, props)
        H = wick_symmetric_part(stable_scalar, wick_two_point(stable_scalar))
        samples = [random_local_poly(stable_scalar, rng, degree=2) for _ in range(4)]
        pairs = list(zip(samples, reversed(samples)))
        assert_check_passes(check_intertwining_products(ctx, H, pairs))
        assert_check_passes(check_gamma_cocycle(stable_scalar, H, H, samples))


class TestDumpKernels:
    """Test suite for kernel dumps."""

    def test_dump_kernels(self, tmp_path: Path, em_props: PropagatorSet) -> None:
        """Test one sorted file per kernel."""
        paths = dump_kernels(em_props, tmp_path / "kernels")
        assert sorted(p.name for p in paths) == sorted(
            f"{n}.txt" for n in ("retarded", "advanced", "causal", "dirac", "omega", "feynman")
        )
        lines = (tmp_path / "kernels" / "retarded.txt").read_text().splitlines()
        assert lines == sorted(lines)
        assert lines == em_props.retarded.dump_lines()
        alpha, x, beta, y, re, im = lines[0].split()
        assert Fraction(re) or Fraction(im)
