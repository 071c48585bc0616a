"""Append-only session event log and poem archive.

The log is one JSON object per line; appends are flushed immediately so a
crash can lose at most the final, partially written line, which replay skips
with a warning. The archive keeps one JSON record per poem plus a
"sequence,id,created_at" index, because individual poems are shareable
artifacts.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .detect import FaceBox
from .engine import EngineEvent, FaceLost, FaceObserved, PoemFailed, PoemReady, Tick
from .errors import CorruptRecord, DuplicateId, IoFailure
from .poems import Poem, poem_from_dict, poem_to_dict

log = logging.getLogger(__name__)


# --- event wire format -------------------------------------------------------


def event_to_dict(event: EngineEvent) -> dict:
    if isinstance(event, FaceObserved):
        b = event.box
        return {
            "ts": event.ts,
            "event": "FaceObserved",
            "box": {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "neighbors": b.neighbors, "score": b.score},
            "dist": list(event.dist),
        }
    if isinstance(event, FaceLost):
        return {"ts": event.ts, "event": "FaceLost"}
    if isinstance(event, PoemReady):
        return {"ts": event.ts, "event": "PoemReady", "poem": poem_to_dict(event.poem)}
    if isinstance(event, PoemFailed):
        return {"ts": event.ts, "event": "PoemFailed", "reason": event.reason}
    if isinstance(event, Tick):
        return {"ts": event.ts, "event": "Tick"}
    raise TypeError(f"not an engine event: {event!r}")


def event_from_dict(d: dict) -> EngineEvent:
    kind = d.get("event")
    ts = d["ts"]
    if kind == "FaceObserved":
        b = d["box"]
        return FaceObserved(
            ts,
            FaceBox(b["x"], b["y"], b["w"], b["h"], b["neighbors"], b["score"]),
            tuple(d["dist"]),
        )
    if kind == "FaceLost":
        return FaceLost(ts)
    if kind == "PoemReady":
        return PoemReady(ts, poem_from_dict(d["poem"]))
    if kind == "PoemFailed":
        return PoemFailed(ts, d["reason"])
    if kind == "Tick":
        return Tick(ts)
    raise ValueError(f"unknown event kind {kind!r}")


# --- session log ---------------------------------------------------------------


class SessionLog:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            # a crash can leave a torn final line; it was never acknowledged,
            # so drop it on reopen to keep the log replayable
            if self.path.exists() and self.path.stat().st_size > 0:
                raw = self.path.read_bytes()
                if not raw.endswith(b"\n"):
                    keep = raw.rfind(b"\n") + 1
                    with open(self.path, "r+b") as fh:
                        fh.truncate(keep)
            self._fh = open(self.path, "a", encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot open log {self.path}: {e}") from None

    def append_event(self, event: EngineEvent) -> None:
        if self._fh is None:
            raise IoFailure(f"log {self.path} is closed")
        try:
            self._fh.write(json.dumps(event_to_dict(event), sort_keys=True) + "\n")
            self._fh.flush()
        except OSError as e:
            raise IoFailure(f"cannot append to {self.path}: {e}") from None

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def replay(path: str | Path) -> list[EngineEvent]:
    """Read events back in order. A malformed final line (the crash case) is
    skipped with a warning; a malformed line anywhere else is an error."""
    try:
        data = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from None
    events: list[EngineEvent] = []
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, line in enumerate(lines):
        try:
            events.append(event_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
            if i == len(lines) - 1:
                log.warning("skipping truncated final log line in %s: %r", path, line[:80])
                break
            raise CorruptRecord(f"{path}:{i + 1}: {e}") from None
    return events


# --- poem archive --------------------------------------------------------------


@dataclass(frozen=True)
class PoemRecord:
    poem: Poem
    archived_at: int
    sequence: int


class PoemArchive:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"cannot create archive dir {root}: {e}") from None
        self._index_path = self.root / "index.csv"
        self._next_seq = 1
        self._ids: set[str] = set()
        if self._index_path.exists():
            for seq, poem_id, _ in self.index():
                self._ids.add(poem_id)
                self._next_seq = max(self._next_seq, seq + 1)

    def archive_poem(self, poem: Poem, archived_at: int | None = None) -> PoemRecord:
        if poem.id in self._ids:
            raise DuplicateId(poem.id)
        if archived_at is None:
            archived_at = time.time_ns() // 1_000_000
        record = PoemRecord(poem, archived_at, self._next_seq)
        try:
            path = self.root / f"{poem.id}.json"
            body = dict(poem_to_dict(poem), archived_at=archived_at, sequence=record.sequence)
            path.write_text(json.dumps(body, sort_keys=True, indent=1), encoding="utf-8")
            with open(self._index_path, "a", encoding="utf-8") as fh:
                fh.write(f"{record.sequence},{poem.id},{poem.created_at}\n")
                fh.flush()
        except OSError as e:
            raise IoFailure(f"cannot archive poem {poem.id}: {e}") from None
        self._ids.add(poem.id)
        self._next_seq += 1
        return record

    def index(self) -> list[tuple[int, str, int]]:
        if not self._index_path.exists():
            return []
        out = []
        try:
            for line in self._index_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                seq, poem_id, created_at = line.split(",")
                out.append((int(seq), poem_id, int(created_at)))
        except (OSError, ValueError) as e:
            raise IoFailure(f"archive index unreadable: {e}") from None
        return out

    def get(self, poem_id: str) -> Poem:
        path = self.root / f"{poem_id}.json"
        if not path.is_file():
            raise KeyError(poem_id)
        try:
            return poem_from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise IoFailure(f"archive record {poem_id} unreadable: {e}") from None
