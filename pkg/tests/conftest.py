"""Pytest configuration for bv-veritas tests.

Models are built on the smallest lattices the engine accepts and shared for
the whole session; every engine object is immutable once built, apart from
memo caches that only ever hold values derived from the model itself.
"""

from __future__ import annotations

import random

import pytest

from bv_veritas.brst import SolutionSpace
from bv_veritas.deformation import ProductContext
from bv_veritas.green import PropagatorSet, assemble_propagators
from bv_veritas.interacting import InteractionContext
from bv_veritas.lattice import Lattice, build_lattice
from bv_veritas.models import Model, build_em_model, build_scalar_model
from bv_veritas.series import Window


@pytest.fixture(scope="session")
def window() -> Window:
    """Window with ``lambda_max = 1`` and ``hbar`` powers in ``[-1, 1]``."""
    return Window(1, -1, 1)


@pytest.fixture(scope="session")
def lattice() -> Lattice:
    """8x2 lattice: margin 1 leaves bulk slices 1..6 and slab slices 2..5."""
    return build_lattice(8, 2)


@pytest.fixture(scope="session")
def em_model(lattice: Lattice, window: Window) -> Model:
    return build_em_model(lattice, current_seed=7, window=window, margin=1)


@pytest.fixture(scope="session")
def scalar_model(lattice: Lattice, window: Window) -> Model:
    return build_scalar_model(lattice, mass=1, g3=1, g4=1, window=window, margin=1)


@pytest.fixture(scope="session")
def em_props(em_model: Model) -> PropagatorSet:
    return assemble_propagators(em_model)


@pytest.fixture(scope="session")
def scalar_props(scalar_model: Model) -> PropagatorSet:
    return assemble_propagators(scalar_model)


@pytest.fixture(scope="session")
def em_ctx(em_model: Model, em_props: PropagatorSet) -> ProductContext:
    return ProductContext(em_model, em_props)


@pytest.fixture(scope="session")
def scalar_ctx(scalar_model: Model, scalar_props: PropagatorSet) -> ProductContext:
    return ProductContext(scalar_model, scalar_props)


@pytest.fixture(scope="session")
def em_ictx(em_ctx: ProductContext) -> InteractionContext:
    return InteractionContext.of(em_ctx)


@pytest.fixture(scope="session")
def scalar_ictx(scalar_ctx: ProductContext) -> InteractionContext:
    return InteractionContext.of(scalar_ctx)


@pytest.fixture(scope="session")
def em_solutions(em_model: Model, em_props: PropagatorSet) -> SolutionSpace:
    return SolutionSpace.build(em_model, em_props.omega)


@pytest.fixture
def rng() -> random.Random:
    """Seeded generator; every test gets the same stream."""
    return random.Random(1234)


@pytest.fixture(scope="session")
def em_model2(lattice: Lattice) -> Model:
    """Maxwell model with ``lambda_max = 2``; the first order where ``V`` meets itself."""
    return build_em_model(lattice, current_seed=7, window=Window(2, -2, 2), margin=1)


@pytest.fixture(scope="session")
def em_ictx2(em_model2: Model) -> InteractionContext:
    return InteractionContext.of(ProductContext(em_model2, assemble_propagators(em_model2)))


@pytest.fixture(scope="session")
def scalar_ictx_hbar2(lattice: Lattice) -> InteractionContext:
    """Scalar model keeping ``hbar^2``, where second-order retarded products start."""
    model = build_scalar_model(lattice, mass=1, g3=1, g4=1, window=Window(1, -1, 2), margin=1)
    return InteractionContext.of(ProductContext(model, assemble_propagators(model)))
