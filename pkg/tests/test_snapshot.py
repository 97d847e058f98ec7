"""Tests for golden-file snapshots."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from bv_veritas.models import Model
from bv_veritas.poly import parse_text
from bv_veritas.report import Report, defect_record
from bv_veritas.snapshot import SnapshotHelper


class TestSnapshotHelper:
    """Test suite for SnapshotHelper."""

    @pytest.fixture
    def temp_snapshot_dir(self, tmp_path: Path) -> Path:
        """Create a temporary snapshot directory."""
        return tmp_path / "__snapshots__"

    @pytest.fixture
    def snapshot_helper(
        self, request: pytest.FixtureRequest, temp_snapshot_dir: Path
    ) -> SnapshotHelper:
        """Create a SnapshotHelper instance for testing."""
        return SnapshotHelper(request, temp_snapshot_dir)

    def test_creates_directory(self, snapshot_helper: SnapshotHelper, temp_snapshot_dir: Path) -> None:
        """Test that the snapshot directory is created on demand."""
        assert temp_snapshot_dir.is_dir()

    def test_get_snapshot_path(self, snapshot_helper: SnapshotHelper) -> None:
        """Test snapshot path generation per suffix."""
        assert snapshot_helper._get_snapshot_path("theta0", ".txt").name == (
            "test_get_snapshot_path__theta0.txt"
        )
        assert snapshot_helper._get_snapshot_path("cfg", ".json").suffix == ".json"

    def test_serialize_with_model_dump(self, snapshot_helper: SnapshotHelper) -> None:
        """Test serialization of pydantic records."""
        record = defect_record("cme", "{S, S} = 0", 0)
        parsed = json.loads(snapshot_helper._serialize(record))
        assert parsed["status"] == "PASS"
        assert "wall_time" not in parsed

    def test_assert_match_creates_then_compares(
        self, snapshot_helper: SnapshotHelper, temp_snapshot_dir: Path
    ) -> None:
        """Test that the first run writes and the second run compares."""
        data = {"lambda_max": 1, "hbar_window": [-1, 1]}
        snapshot_helper.assert_match(data, "window")
        assert len(list(temp_snapshot_dir.glob("*.json"))) == 1
        snapshot_helper.assert_match(data, "window")

    def test_assert_match_fails_on_mismatch(self, snapshot_helper: SnapshotHelper) -> None:
        """Test that a changed value fails with an update hint."""
        snapshot_helper.assert_match({"defect": "0"}, "defect")
        with pytest.raises(AssertionError, match="--veritas-update-snapshots"):
            snapshot_helper.assert_match({"defect": "1/2"}, "defect")

    def test_update_mode(self, snapshot_helper: SnapshotHelper) -> None:
        """Test that update mode rewrites the snapshot and skips."""
        snapshot_helper.assert_match_text("old\n", "text")
        with pytest.raises(pytest.skip.Exception):
            snapshot_helper.assert_match_text("new\n", "text", update=True)
        assert snapshot_helper.get_snapshot("text") == "new\n"

    def test_get_missing_snapshot(self, snapshot_helper: SnapshotHelper) -> None:
        """Test that a snapshot never written reads as None."""
        assert snapshot_helper.get_snapshot("absent") is None

    def test_poly_snapshot_parses_back(
        self, snapshot_helper: SnapshotHelper, em_model: Model
    ) -> None:
        """Test that a polynomial snapshot is its text form."""
        snapshot_helper.assert_match_poly(em_model.theta0, "theta0")
        stored = snapshot_helper.get_snapshot("theta0")
        assert stored is not None
        assert parse_text(stored.strip(), em_model.ring) == em_model.theta0

    def test_kernel_snapshot(self, snapshot_helper: SnapshotHelper, em_model: Model) -> None:
        """Test kernel snapshots in the dump format."""
        snapshot_helper.assert_match_kernel(em_model.K, "K")
        assert snapshot_helper.get_snapshot("K") == "\n".join(em_model.K.dump_lines()) + "\n"

    def test_report_snapshot_ignores_timestamps(self, snapshot_helper: SnapshotHelper) -> None:
        """Test that report snapshots are stable across runs."""
        records = [defect_record("cme", "{S, S} = 0", 0).model_copy(update={"wall_time": 0.1})]
        snapshot_helper.assert_match_report(Report.build(records), "report")
        later = [records[0].model_copy(update={"wall_time": 9.0})]
        snapshot_helper.assert_match_report(Report.build(later), "report")


class TestSnapshotFixture:
    """Test suite for the snapshot fixture."""

    def test_fixture_type(self, snapshot: SnapshotHelper, snapshot_dir: Path) -> None:
        """Test the fixture is bound to the snapshot directory next to the test."""
        assert isinstance(snapshot, SnapshotHelper)
        assert snapshot.snapshot_dir == snapshot_dir
        assert snapshot_dir.name == "__snapshots__"
