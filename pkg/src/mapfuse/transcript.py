from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union


@dataclass(frozen=True)
class TranscriptRecord:
    offset: float
    kind: str
    fields: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"offset": self.offset, "kind": self.kind, **self.fields}


class Transcript:
    """Thread-safe in-memory session log, one record per message or pipeline stage.

    Offsets are seconds since the transcript was created, from a monotonic clock.
    When ``max_entries`` is set the oldest records are dropped first.
    """

    def __init__(self, max_entries: Optional[int] = None) -> None:
        self._lock = threading.RLock()
        self._entries: List[TranscriptRecord] = []
        self._max_entries = max_entries
        self._origin = time.perf_counter()

    def add(self, kind: str, **fields: Any) -> TranscriptRecord:
        record = TranscriptRecord(
            offset=time.perf_counter() - self._origin, kind=kind, fields=dict(fields)
        )
        with self._lock:
            self._entries.append(record)
            if self._max_entries is not None and len(self._entries) > self._max_entries:
                del self._entries[0 : len(self._entries) - self._max_entries]
        return record

    def entries(self) -> List[TranscriptRecord]:
        with self._lock:
            return list(self._entries)

    def records_of(self, kind: str) -> List[TranscriptRecord]:
        with self._lock:
            return [e for e in self._entries if e.kind == kind]

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def formatted_entries(self) -> List[Dict[str, Any]]:
        with self._lock:
            return [e.to_dict() for e in self._entries]

    def to_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for entry in self.formatted_entries():
                fh.write(json.dumps(entry, sort_keys=True, default=repr))
                fh.write("\n")
        return path

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
