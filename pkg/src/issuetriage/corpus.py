"""Issue-report corpus: loading, validation, filtering and month slicing.

The corpus is a JSON Lines file, one report per line, with RFC 3339 UTC
timestamps. Calendar months are UTC months written as "YYYY-MM" strings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

from .errors import DuplicateIdError, InvalidRange, PreconditionViolation

logger = logging.getLogger(__name__)

TeamId = str

_TS_FMT = "%Y-%m-%dT%H:%M:%SZ"


def parse_ts(value: str) -> datetime:
    """Parse an RFC 3339 UTC timestamp into an aware datetime."""
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(_TS_FMT)


def month_of(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    return f"{dt.year:04d}-{dt.month:02d}"


def add_months(month: str, n: int) -> str:
    y, m = (int(p) for p in month.split("-"))
    total = y * 12 + (m - 1) + n
    return f"{total // 12:04d}-{total % 12 + 1:02d}"


def months_between(start_month: str, end_month: str) -> list[str]:
    """Inclusive list of calendar months from start to end."""
    if start_month > end_month:
        raise InvalidRange(f"month range inverted: {start_month} > {end_month}")
    out = [start_month]
    while out[-1] < end_month:
        out.append(add_months(out[-1], 1))
    return out


@dataclass(frozen=True)
class IssueReport:
    """One filed issue report."""

    id: str
    summary: str
    description: str
    opened_at: datetime
    closed_at: Optional[datetime] = None
    initial_team: Optional[TeamId] = None
    closing_team: Optional[TeamId] = None
    status: str = "open"

    def __post_init__(self):
        if self.status not in ("open", "closed"):
            raise ValueError(f"bad status {self.status!r}")
        closed = self.status == "closed"
        if closed != (self.closed_at is not None) or closed != (self.closing_team is not None):
            raise ValueError(
                f"report {self.id}: status {self.status!r} inconsistent with "
                f"closed_at/closing_team presence"
            )
        if self.closed_at is not None and self.closed_at < self.opened_at:
            raise ValueError(f"report {self.id}: closed before opened")
        if not (self.summary.strip() or self.description.strip()):
            raise ValueError(f"report {self.id}: summary and description both empty")

    @property
    def text(self) -> str:
        return f"{self.summary} {self.description}"

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "summary": self.summary,
            "description": self.description,
            "opened_at": format_ts(self.opened_at),
            "closed_at": format_ts(self.closed_at) if self.closed_at else None,
            "initial_team": self.initial_team,
            "closing_team": self.closing_team,
            "status": self.status,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "IssueReport":
        return cls(
            id=str(d["id"]),
            summary=d.get("summary") or "",
            description=d.get("description") or "",
            opened_at=parse_ts(d["opened_at"]),
            closed_at=parse_ts(d["closed_at"]) if d.get("closed_at") else None,
            initial_team=d.get("initial_team"),
            closing_team=d.get("closing_team"),
            status=d.get("status", "open"),
        )


@dataclass
class LoadResult:
    reports: list[IssueReport]
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CorpusSlice:
    """Reports of an inclusive calendar-month range, ascending by opened_at."""

    reports: tuple[IssueReport, ...]
    span: tuple[str, str]


def load_corpus(path, format: str = "jsonl") -> LoadResult:
    """Load a JSONL corpus file.

    Malformed lines are skipped with a per-line diagnostic; duplicate ids
    are fatal.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    reports: list[IssueReport] = []
    diagnostics: list[str] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = IssueReport.from_json_dict(json.loads(line))
            except DuplicateIdError:
                raise
            except Exception as exc:  # malformed line: skip, keep loading
                msg = f"line {lineno}: {exc}"
                diagnostics.append(msg)
                logger.warning("skipping malformed corpus line: %s", msg)
                continue
            if rec.id in seen:
                raise DuplicateIdError(rec.id)
            seen.add(rec.id)
            reports.append(rec)
    return LoadResult(reports=reports, diagnostics=diagnostics)


def save_corpus(path, reports: Iterable[IssueReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json_dict()) + "\n")


def filter_closed(reports: Iterable[IssueReport]) -> list[IssueReport]:
    """Keep only closed reports, order preserved."""
    return [r for r in reports if r.status == "closed"]


def ground_truth(report: IssueReport) -> TeamId:
    """The team that closed the report defines the assignment ground truth."""
    if report.status != "closed" or report.closing_team is None:
        raise PreconditionViolation(f"report {report.id} is not closed")
    return report.closing_team


def month_slice(reports: Iterable[IssueReport], start_month: str, end_month: str) -> CorpusSlice:
    """Reports opened inside the inclusive month range, sorted by opened_at."""
    months = set(months_between(start_month, end_month))
    picked = [r for r in reports if month_of(r.opened_at) in months]
    picked.sort(key=lambda r: (r.opened_at, r.id))
    return CorpusSlice(reports=tuple(picked), span=(start_month, end_month))
