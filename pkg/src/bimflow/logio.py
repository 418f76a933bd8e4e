"""Raw log ingestion: line-delimited parsing and session grouping.

The interchange format is line-delimited JSON (or an equivalent TSV with a
header row). Parsing is forgiving per line and strict per file: malformed
lines are counted and skipped, but a file where most lines fail is treated
as a format mismatch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .types import LogEntry, RawSession

TSV_COLUMNS = ("session", "ts", "category", "prefix", "message", "command_id", "lang")


class FormatMismatchError(ValueError):
    """Raised when the majority of lines fail to parse in the declared format."""


@dataclass
class ParseReport:
    """Counts from one parse run."""

    lines_read: int = 0
    accepted: int = 0
    rejected: int = 0
    errors: list[str] = field(default_factory=list)

    def record_rejection(self, line_no: int, reason: str) -> None:
        self.rejected += 1
        # Cap stored messages; counts stay exact.
        if len(self.errors) < 50:
            self.errors.append(f"line {line_no}: {reason}")

    def to_dict(self) -> dict:
        return {
            "lines_read": self.lines_read,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "errors": list(self.errors),
        }


def _parse_jsonl_line(line: str) -> LogEntry:
    data = json.loads(line)
    if not isinstance(data, dict):
        raise ValueError("line is not a JSON object")
    return LogEntry.from_dict(data)


def _parse_tsv_line(line: str, columns: list[str]) -> LogEntry:
    cells = line.split("\t")
    if len(cells) != len(columns):
        raise ValueError(f"expected {len(columns)} columns, got {len(cells)}")
    return LogEntry.from_dict(dict(zip(columns, cells)))


def parse_log_stream(
    stream: BinaryIO,
    fmt: str = "jsonl",
    report: ParseReport | None = None,
) -> Iterator[LogEntry]:
    """Yield entries from a line-delimited byte stream in file order.

    ``fmt`` is ``"jsonl"`` or ``"tsv"`` (tab-separated with a required header
    row). Malformed lines are counted in ``report`` and skipped. After the
    stream is exhausted, a rejection rate above 50% raises
    :class:`FormatMismatchError`; I/O failures propagate as-is.
    """
    if fmt not in ("jsonl", "tsv"):
        raise ValueError(f"unknown log format: {fmt!r}")
    if report is None:
        report = ParseReport()

    columns: list[str] | None = None
    for line_no, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8", errors="replace").rstrip("\r\n")
        if fmt == "tsv" and columns is None:
            columns = [c.strip() for c in line.split("\t")]
            missing = [c for c in TSV_COLUMNS if c not in columns]
            if missing:
                raise FormatMismatchError(f"TSV header missing columns: {missing}")
            continue
        if not line.strip():
            continue
        report.lines_read += 1
        try:
            if fmt == "jsonl":
                entry = _parse_jsonl_line(line)
            else:
                assert columns is not None
                entry = _parse_tsv_line(line, columns)
        except (ValueError, KeyError, TypeError) as exc:
            report.record_rejection(line_no, str(exc))
            continue
        report.accepted += 1
        yield entry

    if report.lines_read > 0 and report.rejected > report.lines_read // 2:
        raise FormatMismatchError(
            f"{report.rejected}/{report.lines_read} lines rejected; "
            f"input does not look like {fmt}"
        )


def group_into_sessions(entries: Iterable[LogEntry]) -> list[RawSession]:
    """Partition entries into per-session streams sorted by timestamp.

    Sessions are returned in order of first appearance; within a session
    the sort is stable, so timestamp ties keep file order. The total entry
    count is conserved.
    """
    by_session: dict[str, list[LogEntry]] = {}
    for entry in entries:
        by_session.setdefault(entry.session_id, []).append(entry)
    return [RawSession(sid, rows).sorted() for sid, rows in by_session.items()]
