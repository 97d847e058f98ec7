"""Verification records and reports.

Every check in the engine returns a :class:`CheckRecord`. The scheduler
collects them into a :class:`Report`, which renders to JSON (pydantic's
``model_dump_json``) or to a Markdown table.

Example:
    >>> rec = defect_record("cme.free", "free CME {theta0, S0} = 0", Fraction(0))
    >>> rec.status
    <Status.PASS: 'PASS'>
"""

from __future__ import annotations

import logging
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

from bv_veritas import __version__
from bv_veritas.series import Window

logger = logging.getLogger(__name__)

ReportFormat = Literal["json", "md"]


class Status(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    SKIPPED = "SKIPPED"


class CheckRecord(BaseModel):
    """Outcome of one identity check.

    ``defect`` is the max absolute coefficient of the defect, printed exactly
    (``"0"`` for an exact zero). ``wall_time`` is excluded from the
    serialized record; the report header carries timings so that records of
    two runs with the same configuration compare byte for byte.
    """

    model_config = ConfigDict(frozen=True)

    check_id: str
    suite: str = ""
    anchor: str
    status: Status
    defect: str = "0"
    lambda_max: int = 0
    hbar_window: tuple[int, int] = (0, 0)
    reason: str = ""
    details: dict[str, str] = Field(default_factory=dict)
    wall_time: float = Field(default=0.0, exclude=True)

    @property
    def passed(self) -> bool:
        return self.status is Status.PASS


def format_defect(value: Fraction | float | int) -> str:
    if isinstance(value, float):
        return repr(value)
    value = Fraction(value)
    return "0" if value == 0 else str(value)


def defect_record(
    check_id: str,
    anchor: str,
    defect: Fraction | float | int,
    window: Window | None = None,
    *,
    tolerance: float | None = None,
    reason: str = "",
    details: dict[str, str] | None = None,
) -> CheckRecord:
    """PASS iff ``defect`` is exactly zero, or below ``tolerance`` when given."""
    if tolerance is None:
        ok = Fraction(defect) == 0
    else:
        ok = float(defect) < tolerance
    status = Status.PASS if ok else Status.FAIL
    if not ok:
        logger.debug(f"Check {check_id} failed with defect {format_defect(defect)}")
    return CheckRecord(
        check_id=check_id,
        anchor=anchor,
        status=status,
        defect=format_defect(defect),
        lambda_max=window.lambda_max if window else 0,
        hbar_window=(window.k_min, window.k_max) if window else (0, 0),
        reason=reason,
        details=details or {},
    )


def skipped_record(check_id: str, anchor: str, reason: str, window: Window | None = None) -> CheckRecord:
    return CheckRecord(
        check_id=check_id,
        anchor=anchor,
        status=Status.SKIPPED,
        defect="",
        lambda_max=window.lambda_max if window else 0,
        hbar_window=(window.k_min, window.k_max) if window else (0, 0),
        reason=reason,
    )


def combine(check_id: str, anchor: str, parts: list[CheckRecord], window: Window | None = None) -> CheckRecord:
    """Fold sub-check records into one; the defect is the largest part defect."""
    failing = [p for p in parts if p.status is Status.FAIL]
    worst = max((Fraction(p.defect) for p in parts if p.defect and "e" not in p.defect), default=Fraction(0))
    details = {p.check_id: p.status.value for p in parts}
    return CheckRecord(
        check_id=check_id,
        anchor=anchor,
        status=Status.FAIL if failing else Status.PASS,
        defect=format_defect(worst),
        lambda_max=window.lambda_max if window else 0,
        hbar_window=(window.k_min, window.k_max) if window else (0, 0),
        reason="; ".join(f"{p.check_id}: {p.reason or p.defect}" for p in failing),
        details=details,
    )


class ReportHeader(BaseModel):
    tool: str = "bv-veritas"
    version: str = __version__
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    timings: dict[str, float] = Field(default_factory=dict)


class Summary(BaseModel):
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    total: int = 0


class Report(BaseModel):
    header: ReportHeader = Field(default_factory=ReportHeader)
    config: dict[str, Any] = Field(default_factory=dict)
    records: list[CheckRecord] = Field(default_factory=list)
    summary: Summary = Field(default_factory=Summary)

    @classmethod
    def build(cls, records: list[CheckRecord], config: dict[str, Any] | None = None) -> Report:
        summary = Summary(
            passed=sum(r.status is Status.PASS for r in records),
            failed=sum(r.status is Status.FAIL for r in records),
            skipped=sum(r.status is Status.SKIPPED for r in records),
            total=len(records),
        )
        header = ReportHeader(timings={f"{r.suite}/{r.check_id}": r.wall_time for r in records})
        return cls(header=header, config=config or {}, records=records, summary=summary)

    @property
    def ok(self) -> bool:
        return self.summary.failed == 0


def render_report(report: Report, fmt: ReportFormat = "json") -> str:
    """Render as JSON or Markdown."""
    if fmt == "json":
        return report.model_dump_json(indent=2)
    s = report.summary
    lines = [
        f"# {report.header.tool} {report.header.version}",
        "",
        "| passed | failed | skipped | total |",
        "|---|---|---|---|",
        f"| {s.passed} | {s.failed} | {s.skipped} | {s.total} |",
        "",
        "| suite | check | status | defect | anchor | reason |",
        "|---|---|---|---|---|---|",
    ]
    for r in report.records:
        reason = r.reason.replace("|", "\\|").replace("\n", " ")
        lines.append(
            f"| {r.suite} | {r.check_id} | {r.status.value} | {r.defect} | {r.anchor} | {reason} |"
        )
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> Report:
    """Inverse of the JSON rendering."""
    return Report.model_validate_json(text)
