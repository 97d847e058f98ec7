"""
bv-veritas: exact lattice verification of BV/BRST quantization identities.

The engine builds free lattice field theories (a scalar and gauge-fixed
Maxwell with ghosts), deforms them with exact star and time-ordered
products, and checks the algebraic identities of the interacting BV
formalism order by order in ``lambda`` and ``hbar``, in rational arithmetic.

Example:
    >>> from bv_veritas import RunConfig, run_suites
    >>> config = RunConfig.model_validate({"run": {"suites": ["free_em"]}})
    >>> report = run_suites(config)
    >>> report.ok
    True
"""

from __future__ import annotations

__version__ = "0.1.0"
__all__ = [
    # Series and polynomials
    "Scalar",
    "Window",
    "Coeff",
    "Poly",
    "PolyRing",
    # Models
    "Model",
    "build_lattice",
    "build_em_model",
    "build_scalar_model",
    # Products and interaction
    "ProductContext",
    "InteractionContext",
    "assemble_propagators",
    # Reports and runs
    "CheckRecord",
    "Report",
    "Status",
    "render_report",
    "parse_report",
    "RunConfig",
    "load_config",
    "run_suites",
    # Errors
    "VeritasError",
]

from bv_veritas.series import Coeff, Scalar, Window
from bv_veritas.poly import Poly, PolyRing

from bv_veritas.lattice import build_lattice
from bv_veritas.models import Model, build_em_model, build_scalar_model

from bv_veritas.green import assemble_propagators
from bv_veritas.deformation import ProductContext
from bv_veritas.interacting import InteractionContext

from bv_veritas.report import CheckRecord, Report, Status, parse_report, render_report
from bv_veritas.config import RunConfig, load_config
from bv_veritas.suites import run_suites

from bv_veritas.errors import VeritasError
