"""Append-only JSON Lines store for completed runs.

One entry per line; a line is written, flushed, and fsynced before the
result is acknowledged to the requester, so a crash can lose at most an
unacknowledged run and never leaves a partial entry behind.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone

from ..channel import CountRecord
from ..chsh import ChshResult, ChshSettings

SOFTWARE_VERSION = "0.1.0"


class LogError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentLogEntry:
    timestamp: str
    settings: ChshSettings
    records: tuple[CountRecord, ...]
    result: ChshResult
    live: bool
    software_version: str = SOFTWARE_VERSION

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "settings": self.settings.to_dict(),
            "records": [r.to_dict() for r in self.records],
            "result": self.result.to_dict(),
            "live": self.live,
            "software_version": self.software_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentLogEntry":
        return cls(
            timestamp=d["timestamp"],
            settings=ChshSettings.from_dict(d["settings"]),
            records=tuple(CountRecord.from_dict(r) for r in d["records"]),
            result=ChshResult.from_dict(d["result"]),
            live=d["live"],
            software_version=d["software_version"],
        )

    @classmethod
    def now(cls, settings, records, result, live) -> "ExperimentLogEntry":
        return cls(
            timestamp=datetime.now(timezone.utc).isoformat(),
            settings=settings,
            records=tuple(records),
            result=result,
            live=live,
        )


def check_writable(path: str) -> None:
    """Fail fast at daemon startup when the log path cannot be appended to."""
    try:
        with open(path, "a", encoding="utf-8"):
            pass
    except OSError as exc:
        raise LogError(f"results log not writable: {path} ({exc})") from exc


def append_log(path: str, entry: ExperimentLogEntry) -> None:
    line = json.dumps(entry.to_dict(), separators=(",", ":"))
    try:
        with open(path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
    except OSError as exc:
        raise LogError(f"cannot append to results log {path}: {exc}") from exc


def read_log(path: str, live: bool | None = None) -> list[ExperimentLogEntry]:
    """All complete entries in order; optionally filtered by the live flag."""
    entries: list[ExperimentLogEntry] = []
    if not os.path.exists(path):
        return entries
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                entry = ExperimentLogEntry.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError):
                continue  # torn or foreign line; readers only see complete entries
            if live is None or entry.live == live:
                entries.append(entry)
    return entries
