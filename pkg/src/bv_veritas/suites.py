"""Suite registry and the concurrent scheduler behind ``bv-veritas run``.

A suite is a named list of checks with prerequisite suites. Requested suites
are closed under prerequisites and run in registry order; checks inside a
suite run concurrently on worker threads. A suite whose prerequisite failed
contributes a single SKIPPED record.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from typing import Any, TypeVar

import anyio
import anyio.to_thread

from bv_veritas.brackets import (
    check_bracket_symmetry,
    check_bv_nilpotent,
    check_cme,
    check_differential_split,
    check_gamma0_nilpotent,
    check_gauge_fix,
    check_laplacian,
    check_theta_brackets,
)
from bv_veritas.brst import (
    Profile,
    SolutionSpace,
    check_current_conservation,
    check_free_charge,
    check_main_theorem,
)
from bv_veritas.config import SUITE_NAMES, RunConfig
from bv_veritas.deformation import (
    ProductContext,
    check_causal_factorization,
    check_classical_limit,
    check_gamma0_derivation,
    check_gamma_cocycle,
    check_intertwining_products,
    check_star_associativity,
    check_tprod_commutativity,
    check_tprod_definitions,
    random_local_poly,
)
from bv_veritas.errors import HypothesisFailed, UnknownSuite, VeritasError
from bv_veritas.green import (
    PropagatorSet,
    assemble_propagators,
    check_consistency,
    check_green_identities,
    check_two_point,
    check_wick,
    solution,
    symmetric_bisolution,
    wick_symmetric_part,
    wick_two_point,
)
from bv_veritas.interacting import (
    InteractionContext,
    check_anomaly_integral,
    check_covariance,
    check_field_equation,
    check_free_theory_change,
    check_glz,
    check_intertwining,
    check_laplacian_v,
    check_laplacian_v_products,
    check_mwi_closed_form,
    check_qbv_nilpotent,
    check_qme,
    check_quantum_bv,
    check_retarded_support,
    check_star_v,
)
from bv_veritas.kernels import Kernel
from bv_veritas.lattice import build_lattice
from bv_veritas.models import Model, build_em_model, build_scalar_model, check_pk_condition, trace_k
from bv_veritas.poly import Poly, sum_polys
from bv_veritas.report import CheckRecord, Report, Status, defect_record, skipped_record
from bv_veritas.series import ONE, Scalar

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class Check:
    check_id: str
    anchor: str
    run: Callable[[], CheckRecord]


@dataclass(frozen=True)
class Suite:
    name: str
    requires: tuple[str, ...]
    build: Callable[[Workspace], list[Check]]


SUITES: dict[str, Suite] = {}


def suite(name: str, requires: tuple[str, ...] = ()) -> Callable[[Callable[[Workspace], list[Check]]], Callable[[Workspace], list[Check]]]:
    """Register a suite builder under ``name``."""

    def decorator(fn: Callable[[Workspace], list[Check]]) -> Callable[[Workspace], list[Check]]:
        SUITES[name] = Suite(name, requires, fn)
        return fn

    return decorator


class Workspace:
    """Models, propagators and product contexts, built once per run."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self._lock = threading.RLock()
        self._cache: dict[str, Any] = {}

    def _cached(self, key: str, factory: Callable[[], T]) -> T:
        with self._lock:
            if key not in self._cache:
                self._cache[key] = factory()
            return self._cache[key]  # type: ignore[no-any-return]

    def model(self, name: str) -> Model:
        return self._cached(f"model:{name}", lambda: build_model(self.config, name))

    def props(self, name: str) -> PropagatorSet:
        return self._cached(f"props:{name}", lambda: assemble_propagators(self.model(name)))

    def ctx(self, name: str) -> ProductContext:
        return self._cached(f"ctx:{name}", lambda: ProductContext(self.model(name), self.props(name)))

    def ictx(self, name: str) -> InteractionContext:
        return self._cached(f"ictx:{name}", lambda: InteractionContext.of(self.ctx(name)))

    def solutions(self, name: str) -> SolutionSpace:
        return self._cached(
            f"solutions:{name}", lambda: SolutionSpace.build(self.model(name), self.props(name).omega)
        )

    def rng(self, salt: str) -> random.Random:
        return random.Random(f"{self.config.run.seed}:{salt}")


def build_model(config: RunConfig, name: str) -> Model:
    """Model ``name`` on the configured lattice."""
    m = config.model
    lattice = build_lattice(m.Nt, m.Nx, m.dt, m.dx)
    window = config.truncation.window()
    margin = config.margins.margin
    if name == "em":
        return build_em_model(
            lattice, m.xi, current_seed=m.current_seed, window=window, margin=margin
        )
    if name == "scalar":
        return build_scalar_model(lattice, m.mass, m.g3, m.g4, window=window, margin=margin)
    raise ValueError(f"unknown model {name!r}")


def resolve(names: Iterable[str]) -> list[str]:
    """Close ``names`` under prerequisites, in registry order.

    Raises:
        UnknownSuite: If a name is not registered
    """
    wanted: set[str] = set()
    pending = list(names)
    while pending:
        name = pending.pop()
        if name not in SUITES:
            raise UnknownSuite(f"unknown suite {name!r}", known=", ".join(SUITE_NAMES))
        if name not in wanted:
            wanted.add(name)
            pending.extend(SUITES[name].requires)
    return [n for n in SUITE_NAMES if n in wanted]


def expect_failure(record: CheckRecord) -> CheckRecord:
    """Negative control: PASS iff the wrapped check failed."""
    status = Status.PASS if record.status is Status.FAIL else Status.FAIL
    reason = "" if status is Status.PASS else f"control did not fail ({record.status.value})"
    return record.model_copy(
        update={"status": status, "reason": reason, "anchor": f"negative control: {record.anchor}"}
    )


def _samples(ws: Workspace, name: str, salt: str, count: int, **kwargs: Any) -> list[Poly]:
    rng = ws.rng(salt)
    model = ws.model(name)
    out = []
    for _ in range(count):
        F = random_local_poly(model, rng, **kwargs)
        if not F.is_zero():
            out.append(F)
    return out


def _pairs(ws: Workspace, name: str, salt: str, count: int, **kwargs: Any) -> list[tuple[Poly, Poly]]:
    """Even left and odd right factors; graded identities need homogeneous inputs."""
    left = _samples(ws, name, f"{salt}:left", count, parity=0, **kwargs)
    right = _samples(ws, name, f"{salt}:right", count, parity=1, **kwargs)
    return list(zip(left, right))


def _both_ways(pairs: list[tuple[Poly, Poly]]) -> list[tuple[Poly, Poly]]:
    """Pairs with even and with odd left factors."""
    return pairs + [(G, F) for F, G in pairs]


def _mode_kernel(model: Model, count: int, offset: int = 0) -> Kernel:
    """Real symmetric bisolution from even solutions with unit slice-0 data."""
    starts = [g for g in model.fields if model.slice_of(g) == 0 and not model.table.parity[g]]
    modes = [solution(model, {g: ONE}) for g in starts[offset:offset + count]]
    return symmetric_bisolution(model, modes)


def _center(model: Model) -> int:
    return model.bulk.start + 3


def _field(model: Model, label: str, t: int, x: int = 0) -> Poly:
    return model.var(f"{label}({t},{x})")


def _antifield(model: Model, label: str, t: int, x: int = 0) -> Poly:
    return model.ring.gen(model.table.antifield(model.id(f"{label}({t},{x})")))


def _current_poly(model: Model, rng: random.Random) -> Poly:
    """``lambda <j, A>`` for a random edge cochain, generally not conserved."""
    ring = model.ring
    edges = model.cochains["A"]
    parts = [
        ring.gen(g, rng.choice([-2, -1, 1, 2])) for g in edges if model.slice_of(g) in model.plateau
    ]
    return sum_polys(ring, parts).shift(dm=1)


@suite("free_scalar")
def _free_scalar(ws: Workspace) -> list[Check]:
    model, props, ctx = ws.model("scalar"), ws.props("scalar"), ws.ctx("scalar")
    pairs = _pairs(ws, "scalar", "free_scalar", 4, antifields=True)
    singles = [F for F, _ in pairs]

    def wick_h() -> Kernel:
        return ws._cached("scalar:wick_h", lambda: wick_symmetric_part(model, wick_two_point(model)))

    return [
        Check("green_identities", "P R = P A = Id", lambda: check_green_identities(model, props)),
        Check("two_point", "omega conditions", lambda: check_two_point(props.omega, props, model)),
        Check("wick", "mode-built two-point function", lambda: check_wick(model, props)),
        Check("wick_intertwining", "alpha_H intertwines products for the Wick H",
              lambda: check_intertwining_products(ctx, wick_h(), pairs)),
        Check("wick_cocycle", "alpha_H cocycle for the Wick H and a mode kernel",
              lambda: check_gamma_cocycle(model, wick_h(), _mode_kernel(model, 1), singles)),
        Check("laplacian", "BV Laplacian", lambda: check_laplacian(model, _both_ways(pairs))),
        Check("antibracket_symmetry", "graded antisymmetry",
              lambda: check_bracket_symmetry(model, pairs)),
    ]


@suite("free_em")
def _free_em(ws: Workspace) -> list[Check]:
    model, props = ws.model("em"), ws.props("em")
    samples = _samples(ws, "em", "free_em", 6)
    pairs = _pairs(ws, "em", "free_em", 4, antifields=True)
    t = _center(model)
    psi = _field(model, "Cb", t) * _field(model, "B", t)

    def trace() -> CheckRecord:
        value = trace_k(model)
        return defect_record("trace_k", "tr K = 0", max(abs(value.re), abs(value.im)), model.window)

    return [
        Check("pk_condition", "PK", lambda: check_pk_condition(model)),
        Check("green_identities", "P R = P A = Id", lambda: check_green_identities(model, props)),
        Check("consistency.retarded", "consistency of R",
              lambda: check_consistency(props.retarded, model, "retarded")),
        Check("consistency.advanced", "consistency of A",
              lambda: check_consistency(props.advanced, model, "advanced")),
        Check("consistency.causal", "consistency of Delta",
              lambda: check_consistency(props.causal, model, "causal")),
        Check("two_point", "omega conditions", lambda: check_two_point(props.omega, props, model)),
        Check("cme", "classical master equation", lambda: check_cme(model)),
        Check("trace_k", "tr K = 0", trace),
        Check("gamma0_nilpotent", "gamma0^2 = 0", lambda: check_gamma0_nilpotent(model, samples)),
        Check("gamma_delta", "gamma0 delta0 + delta0 gamma0 = 0",
              lambda: check_differential_split(model, samples)),
        Check("bv_nilpotent", "s^2 = 0", lambda: check_bv_nilpotent(model, samples)),
        Check("laplacian", "BV Laplacian", lambda: check_laplacian(model, _both_ways(pairs))),
        Check("antibracket_symmetry", "graded antisymmetry",
              lambda: check_bracket_symmetry(model, pairs)),
        Check("gauge_fix", "gauge fixing", lambda: check_gauge_fix(model, psi, pairs)),
    ]


@suite("deformation", requires=("free_em",))
def _deformation(ws: Workspace) -> list[Check]:
    model, ctx = ws.model("em"), ws.ctx("em")
    pairs = _pairs(ws, "em", "deformation", 20, degree=2)
    small = pairs[:4]
    triples = [(F, G, H) for (F, G), H in zip(small, _samples(ws, "em", "deformation:third", 4))]
    t = _center(model)
    late = _field(model, "Ax", t + 2) * _field(model, "At", t + 2)
    early = _field(model, "Ax", t - 1) * _field(model, "B", t - 1)
    H1, H2 = _mode_kernel(model, 2), _mode_kernel(model, 2, offset=2)
    singles = [F for F, _ in small]
    return [
        Check("gamma0_derivation", "gamma0 is a star derivation",
              lambda: check_gamma0_derivation(ctx, pairs)),
        Check("star_associativity", "star associativity",
              lambda: check_star_associativity(ctx, triples)),
        Check("tprod_commutativity", "T-product commutativity",
              lambda: check_tprod_commutativity(ctx, small)),
        Check("tprod_definitions", "T-product via alpha_{W_T}",
              lambda: check_tprod_definitions(ctx, small)),
        Check("classical_limit", "classical limit", lambda: check_classical_limit(ctx, small)),
        Check("causal_factorization", "causal factorization",
              lambda: check_causal_factorization(ctx, late, early)),
        Check("theta_brackets", "{., theta0}_* = gamma0", lambda: check_theta_brackets(ctx, singles)),
        Check("intertwining_products", "alpha_H intertwines products",
              lambda: check_intertwining_products(ctx, H1, small)),
        Check("gamma_cocycle", "alpha_H cocycle", lambda: check_gamma_cocycle(model, H1, H2, singles)),
    ]


@suite("interacting_scalar", requires=("free_scalar",))
def _interacting_scalar(ws: Workspace) -> list[Check]:
    model, ictx = ws.model("scalar"), ws.ictx("scalar")
    t = _center(model)
    F, G = _field(model, "phi", t), _field(model, "phi", t - 1, 1)
    later = _field(model, "phi", t + 3).shift(dm=1)
    earlier = _field(model, "phi", t - 3).shift(dm=1)
    samples = _samples(ws, "scalar", "interacting_scalar", 3, degree=2)
    triples = [(F, G, F * G)]
    return [
        Check("glz", "GLZ identity", lambda: check_glz(ictx, F, G)),
        Check("retarded_support", "retarded support", lambda: check_retarded_support(ictx, F)),
        Check("star_v", "interacting star product", lambda: check_star_v(ictx, triples)),
        Check("mwi_closed_form", "MWI closed form", lambda: check_mwi_closed_form(ictx)),
        Check("anomaly_integral", "anomaly integral", lambda: check_anomaly_integral(ictx)),
        Check("laplacian_v", "Lap_V = Lap", lambda: check_laplacian_v(ictx, samples)),
        Check("qme", "QME", lambda: check_qme(ictx)),
        Check("field_equation", "interacting field equation", lambda: check_field_equation(ictx)),
        Check("covariance", "covariance", lambda: check_covariance(ictx, F, later)),
        Check("covariance_earlier", "covariance under an earlier W", lambda: check_covariance(ictx, F, earlier)),
    ]


@suite("qme_em", requires=("free_em",))
def _qme_em(ws: Workspace) -> list[Check]:
    model, ictx = ws.model("em"), ws.ictx("em")
    t = _center(model)
    linear = [_field(model, "Ax", t), _field(model, "At", t, 1)]
    charged = [
        _field(model, "Ax", t) * _antifield(model, "Ax", t),
        _field(model, "C", t) * _antifield(model, "C", t),
    ]
    F, G = _field(model, "Ax", t), _field(model, "B", t - 1)
    return [
        Check("mwi_closed_form", "MWI closed form", lambda: check_mwi_closed_form(ictx)),
        Check("qme", "QME", lambda: check_qme(ictx)),
        Check("anomaly_integral", "anomaly integral", lambda: check_anomaly_integral(ictx)),
        Check("laplacian_v", "Lap_V = Lap", lambda: check_laplacian_v(ictx, linear + charged)),
        Check("laplacian_v_products", "Lap_V product rule",
              lambda: check_laplacian_v_products(ictx, _both_ways(list(zip(linear, charged))))),
        Check("quantum_bv", "s_hat closed form", lambda: check_quantum_bv(ictx, linear + charged)),
        Check("qbv_nilpotent", "s_hat^2 = 0", lambda: check_qbv_nilpotent(ictx, linear)),
        Check("intertwining", "R_V intertwines s_hat", lambda: check_intertwining(ictx, linear)),
        Check("glz", "GLZ identity", lambda: check_glz(ictx, F, G)),
        Check("field_equation", "interacting field equation", lambda: check_field_equation(ictx)),
    ]


def _free_panel(model: Model, t: int) -> list[Poly]:
    return [
        _field(model, "Ax", t),
        _field(model, "At", t, 1),
        _field(model, "B", t),
        _field(model, "Ax", t) * _field(model, "At", t),
        _field(model, "Ax", t, 1) * _field(model, "Ax", t, 1),
    ]


@suite("brst_free", requires=("free_em",))
def _brst_free(ws: Workspace) -> list[Check]:
    model, ctx, ictx = ws.model("em"), ws.ctx("em"), ws.ictx("em")
    ws.solutions("em")
    t = _center(model)
    checks = [
        Check(f"free_charge.{n}", "free charge generates gamma0",
              lambda F=F, n=n: check_free_charge(model, ctx, F, rng=ws.rng(f"free_charge:{n}")))
        for n, F in enumerate(_free_panel(model, t))
    ]
    profile = Profile.plateau(t - 1, t + 1)
    checks.append(
        Check("current_conservation", "interacting BRST current",
              lambda: check_current_conservation(ictx, profile, rng=ws.rng("current"))),
    )
    return checks


@suite("main_theorem", requires=("qme_em",))
def _main_theorem(ws: Workspace) -> list[Check]:
    model, ictx = ws.model("em"), ws.ictx("em")
    ws.solutions("em")
    t = _center(model)
    panel = {
        "linear": _field(model, "Ax", t),
        "quadratic": _field(model, "Ax", t) * _field(model, "At", t, 1),
        "anomalous": _field(model, "Ax", t) * _field(model, "C", t) * _antifield(model, "Ax", t),
    }
    return [
        Check(f"main_theorem.{name}", "charge theorem",
              lambda F=F, name=name: check_main_theorem(ictx, F, rng=ws.rng(f"main:{name}")))
        for name, F in panel.items()
    ]


@suite("change_free_theory", requires=("qme_em",))
def _change_free_theory(ws: Workspace) -> list[Check]:
    model, ictx = ws.model("em"), ws.ictx("em")
    conserved = ictx.V - model.theta0.shift(dm=1)
    broken = _current_poly(model, ws.rng("change_free_theory"))
    return [
        Check("free_theory_change.conserved", "QME under a change of free theory",
              lambda: check_free_theory_change(ictx, conserved)),
        Check("free_theory_change.non_conserved", "QME under a change of free theory",
              lambda: check_free_theory_change(ictx, broken)),
    ]


@suite("negative_controls", requires=("free_em",))
def _negative_controls(ws: Workspace) -> list[Check]:
    model, ctx = ws.model("em"), ws.ctx("em")
    t = _center(model)
    a, c = model.id(f"Ax({t},0)"), model.id(f"C({t},1)")
    K = model.K.copy()
    K.add_entry(a, c, Scalar(1))
    broken_k = model.with_kernels(K=Kernel.of(model.table, K))
    omega = ctx.props.omega.copy()
    b = model.id(f"C({t},0)")
    cb = model.id(f"Cb({t},1)")
    omega.add_entry(b, cb, Scalar(1))
    omega.add_entry(cb, b, Scalar(-1))
    broken_ctx = ctx.with_omega(Kernel.of(model.table, omega))
    # gamma0 Ax(t,0) contains C(t,0), so this pair sees the shifted (C, Cb) entry
    pairs = [(_field(model, "Ax", t), _field(model, "Cb", t, 1))] + _pairs(ws, "em", "negative_controls", 2)
    anomalous = InteractionContext.of(
        ctx, model.theta0.shift(dm=1) + _current_poly(model, ws.rng("negative_controls:j"))
    )
    open_ = InteractionContext.of(
        ctx, (model.theta0 + _antifield(model, "Ax", t) * _field(model, "C", t)).shift(dm=1)
    )

    def broken_current() -> CheckRecord:
        # a non-conserved current only enters the QME at lambda^2
        if model.window.lambda_max < 2:
            raise HypothesisFailed("non-conserved current control needs lambda_max >= 2")
        return expect_failure(check_qme(anomalous))

    return [
        Check("control.pk_condition", "perturbed K",
              lambda: expect_failure(check_pk_condition(broken_k))),
        Check("control.gamma0_derivation", "inconsistent two-point kernel",
              lambda: expect_failure(check_gamma0_derivation(broken_ctx, pairs))),
        Check("control.qme", "non-conserved current", broken_current),
        Check("control.qme_open", "interaction not BRST closed",
              lambda: expect_failure(check_qme(open_))),
    ]


async def _run_check(suite_name: str, check: Check, limiter: anyio.CapacityLimiter) -> CheckRecord:
    start = time.perf_counter()
    try:
        record = await anyio.to_thread.run_sync(check.run, limiter=limiter)
    except VeritasError as exc:
        logger.warning(f"{suite_name}/{check.check_id} skipped: {exc}")
        record = skipped_record(check.check_id, check.anchor, str(exc))
    except Exception as exc:  # noqa: BLE001
        logger.error(f"{suite_name}/{check.check_id} crashed: {exc!r}")
        record = CheckRecord(
            check_id=check.check_id, anchor=check.anchor, status=Status.FAIL,
            defect="", reason=f"crashed: {exc!r}",
        )
    elapsed = time.perf_counter() - start
    return record.model_copy(
        update={"check_id": check.check_id, "suite": suite_name, "wall_time": elapsed}
    )


async def _run_suite(
    ws: Workspace, name: str, limiter: anyio.CapacityLimiter
) -> list[CheckRecord]:
    logger.info(f"Running suite {name}")
    try:
        checks = await anyio.to_thread.run_sync(SUITES[name].build, ws, limiter=limiter)
    except VeritasError as exc:
        logger.warning(f"Suite {name} skipped: {exc}")
        return [skipped_record(name, f"suite {name}", str(exc)).model_copy(update={"suite": name})]
    records: list[CheckRecord] = []

    async def one(check: Check) -> None:
        records.append(await _run_check(name, check, limiter))

    async with anyio.create_task_group() as tg:
        for check in checks:
            tg.start_soon(one, check)
    return sorted(records, key=lambda r: r.check_id)


async def run_suites_async(config: RunConfig, workspace: Workspace | None = None) -> Report:
    """Run the configured suites and assemble the report."""
    ws = workspace or Workspace(config)
    limiter = anyio.CapacityLimiter(max(1, config.run.workers))
    records: list[CheckRecord] = []
    failed: set[str] = set()
    for name in resolve(config.run.suites):
        blocked = [req for req in SUITES[name].requires if req in failed]
        if blocked:
            logger.warning(f"Suite {name} skipped: prerequisite {blocked[0]} failed")
            records.append(
                skipped_record(name, f"suite {name}", f"prerequisite {blocked[0]} failed")
                .model_copy(update={"suite": name})
            )
            failed.add(name)
            continue
        suite_records = await _run_suite(ws, name, limiter)
        if any(r.status is Status.FAIL for r in suite_records) or all(
            r.status is Status.SKIPPED for r in suite_records
        ):
            failed.add(name)
        records.extend(suite_records)
    report = Report.build(records, config.echo())
    logger.info(
        f"Run finished: {report.summary.passed} passed, {report.summary.failed} failed, "
        f"{report.summary.skipped} skipped"
    )
    return report


def run_suites(config: RunConfig, workspace: Workspace | None = None) -> Report:
    """Synchronous entry point around :func:`run_suites_async`."""
    return anyio.run(run_suites_async, config, workspace)
