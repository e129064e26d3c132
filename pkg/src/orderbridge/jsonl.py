"""Append-only JSON Lines journals and small atomic JSON snapshots.

Every durable store in the system is an append-only journal replayed at
startup. Appends flush per line so a simulated crash (dropping the
in-process object) never loses acknowledged writes; servers can enable
fsync for real-crash durability.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .model import dumps_line


class Journal:
    """One append-only JSONL file, opened lazily, flushed per append."""

    def __init__(self, path: Path | str, fsync: bool = False) -> None:
        self.path = Path(path)
        self.fsync = fsync
        self._fh = None

    def append(self, obj: dict) -> None:
        if self._fh is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        self._fh.write(dumps_line(obj) + "\n")
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def replay(self) -> list[dict]:
        return read_jsonl(self.path)


def read_jsonl(path: Path | str) -> list[dict]:
    """All complete records of a journal; a torn trailing line is ignored.

    A partially written final line is the expected artifact of a crash
    mid-append, so replay treats it as if the write never happened.
    """
    path = Path(path)
    if not path.exists():
        return []
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if not raw.endswith("\n"):
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    break
                continue
            records.append(json.loads(line))
    return records


def write_json_snapshot(path: Path | str, obj: dict) -> None:
    """Replace a small JSON file atomically (write temp, rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
    os.replace(tmp, path)


def read_json_snapshot(path: Path | str) -> dict | None:
    path = Path(path)
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
