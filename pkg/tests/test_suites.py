"""Tests for the suite registry and the concurrent scheduler."""

from __future__ import annotations

from typing import Any

import pytest
from pytest_mock import MockerFixture

from bv_veritas.config import RunConfig
from bv_veritas.errors import EigenFailure, UnknownSuite
from bv_veritas.report import Status, defect_record
from bv_veritas.suites import (
    SUITES,
    Check,
    Suite,
    Workspace,
    build_model,
    expect_failure,
    resolve,
    run_suites,
    run_suites_async,
)


def config_for(veritas_config: RunConfig, *suites: str) -> RunConfig:
    return veritas_config.model_copy(
        update={"run": veritas_config.run.model_copy(update={"suites": list(suites)})}
    )


def crash() -> Any:
    raise RuntimeError("boom")


def unavailable() -> Any:
    raise EigenFailure("no modes")


class TestResolve:
    """Test suite for prerequisite resolution."""

    def test_closure_in_registry_order(self) -> None:
        """Test that prerequisites are added and ordered."""
        assert resolve(["main_theorem"]) == ["free_em", "qme_em", "main_theorem"]

    def test_no_duplicates(self) -> None:
        """Test that shared prerequisites appear once."""
        assert resolve(["deformation", "brst_free"]) == ["free_em", "deformation", "brst_free"]

    def test_unknown_suite(self) -> None:
        """Test that unregistered names are refused."""
        with pytest.raises(UnknownSuite, match="everything"):
            resolve(["everything"])

    def test_every_configured_name_registered(self) -> None:
        """Test that the registry covers every suite name the config accepts."""
        assert resolve(RunConfig().run.suites) == list(RunConfig().run.suites)


class TestExpectFailure:
    """Test suite for negative controls."""

    def test_failure_becomes_pass(self) -> None:
        """Test that a failing wrapped check passes the control."""
        record = expect_failure(defect_record("pk", "PK", 1))
        assert record.status is Status.PASS
        assert record.anchor == "negative control: PK"
        assert record.defect == "1"

    def test_pass_becomes_failure(self) -> None:
        """Test that a control which does not fail is reported."""
        record = expect_failure(defect_record("pk", "PK", 0))
        assert record.status is Status.FAIL
        assert record.reason == "control did not fail (PASS)"


class TestScheduler:
    """Test suite for running suites with fake builders."""

    @pytest.fixture
    def fake_suites(self, mocker: MockerFixture) -> None:
        checks = [
            Check("ok", "passes", lambda: defect_record("ok", "passes", 0)),
            Check("needs_modes", "raises an engine error", unavailable),
            Check("crashes", "raises a bug", crash),
        ]
        mocker.patch.dict(
            SUITES,
            {
                "free_scalar": Suite("free_scalar", (), lambda ws: checks),
                "interacting_scalar": Suite("interacting_scalar", ("free_scalar",), lambda ws: []),
                "free_em": Suite("free_em", (), lambda ws: checks[:1]),
            },
            clear=True,
        )

    @pytest.mark.usefixtures("fake_suites")
    def test_statuses(self, veritas_config: RunConfig) -> None:
        """Test PASS, SKIPPED on engine errors and FAIL on crashes."""
        report = run_suites(config_for(veritas_config, "free_scalar"))
        by_id = {r.check_id: r for r in report.records}
        assert [r.check_id for r in report.records] == ["crashes", "needs_modes", "ok"]
        assert by_id["ok"].status is Status.PASS
        assert by_id["needs_modes"].status is Status.SKIPPED
        assert "no modes" in by_id["needs_modes"].reason
        assert by_id["crashes"].status is Status.FAIL
        assert by_id["crashes"].reason.startswith("crashed: RuntimeError")
        assert all(r.suite == "free_scalar" for r in report.records)
        assert not report.ok

    @pytest.mark.usefixtures("fake_suites")
    def test_failed_prerequisite_skips(self, veritas_config: RunConfig) -> None:
        """Test that a suite whose prerequisite failed is skipped as a whole."""
        report = run_suites(config_for(veritas_config, "interacting_scalar"))
        last = report.records[-1]
        assert (last.check_id, last.status) == ("interacting_scalar", Status.SKIPPED)
        assert last.reason == "prerequisite free_scalar failed"

    @pytest.mark.usefixtures("fake_suites")
    async def test_async_entry_point(self, veritas_config: RunConfig) -> None:
        """Test the async scheduler and the header timings."""
        report = await run_suites_async(config_for(veritas_config, "free_em"))
        assert report.ok
        assert list(report.header.timings) == ["free_em/ok"]
        assert report.config["run"]["suites"] == ["free_em"]

    def test_build_error_skips_suite(self, mocker: MockerFixture, veritas_config: RunConfig) -> None:
        """Test that a suite failing to build contributes one SKIPPED record."""
        mocker.patch.dict(
            SUITES, {"free_em": Suite("free_em", (), lambda ws: unavailable())}, clear=True
        )
        report = run_suites(config_for(veritas_config, "free_em"))
        (record,) = report.records
        assert record.status is Status.SKIPPED
        assert record.suite == "free_em"


class TestWorkspace:
    """Test suite for the shared model cache."""

    def test_models_are_cached(self, veritas_config: RunConfig) -> None:
        """Test that each model is built once per workspace."""
        ws = Workspace(veritas_config)
        assert ws.model("scalar") is ws.model("scalar")
        assert ws.model("scalar").lattice.Nt == 8

    def test_seeded_rng(self, veritas_config: RunConfig) -> None:
        """Test that sample streams depend only on seed and salt."""
        ws = Workspace(veritas_config)
        assert ws.rng("a").random() == Workspace(veritas_config).rng("a").random()
        assert ws.rng("a").random() != ws.rng("b").random()

    def test_unknown_model(self, veritas_config: RunConfig) -> None:
        """Test that only em and scalar models exist."""
        with pytest.raises(ValueError, match="unknown model"):
            build_model(veritas_config, "yang-mills")


class TestRealRun:
    """Test suite for a real run on the small lattice."""

    def test_free_scalar(self, veritas_config: RunConfig) -> None:
        """Test the free scalar suite; the Wick check is skipped at dt = 1."""
        report = run_suites(config_for(veritas_config, "free_scalar"))
        statuses = {r.check_id: r.status for r in report.records}
        assert statuses == {
            "antibracket_symmetry": Status.PASS,
            "green_identities": Status.PASS,
            "laplacian": Status.PASS,
            "two_point": Status.PASS,
            "wick": Status.SKIPPED,
            "wick_cocycle": Status.SKIPPED,
            "wick_intertwining": Status.SKIPPED,
        }
        assert report.ok

    @pytest.mark.parametrize("veritas_overrides", [{"model": {"dt": "1/2"}}])
    def test_free_scalar_with_wick(self, veritas_config: RunConfig) -> None:
        """Test that the Wick checks run when every mode oscillates."""
        report = run_suites(config_for(veritas_config, "free_scalar"))
        statuses = {r.check_id: r.status for r in report.records}
        assert statuses["wick"] is Status.PASS
        assert statuses["wick_intertwining"] is Status.PASS
        assert statuses["wick_cocycle"] is Status.PASS

    @pytest.mark.veritas_slow
    def test_negative_controls(self, veritas_config: RunConfig) -> None:
        """Test that every broken input is detected; the current control needs lambda^2."""
        report = run_suites(config_for(veritas_config, "negative_controls"))
        statuses = {r.check_id: r.status for r in report.records if r.suite == "negative_controls"}
        assert statuses == {
            "control.gamma0_derivation": Status.PASS,
            "control.pk_condition": Status.PASS,
            "control.qme": Status.SKIPPED,
            "control.qme_open": Status.PASS,
        }

    @pytest.mark.veritas_slow
    @pytest.mark.parametrize(
        "veritas_overrides", [{"truncation": {"lambda_max": 2, "k_min": -2, "k_max": 2}}]
    )
    def test_negative_controls_second_order(self, veritas_config: RunConfig) -> None:
        """Test that the non-conserved current is caught once lambda^2 is kept."""
        report = run_suites(config_for(veritas_config, "negative_controls"))
        statuses = {r.check_id: r.status for r in report.records if r.suite == "negative_controls"}
        assert statuses["control.qme"] is Status.PASS
        assert Status.FAIL not in statuses.values()
