"""Append-only event log shared by the environment, agents and scenario runner."""

from __future__ import annotations

import threading
from typing import Callable, List, Optional


class Recorder:
    def __init__(self, clock: Optional[Callable[[], int]] = None):
        self.clock = clock or (lambda: 0)
        self.entries: List[dict] = []
        self._lock = threading.Lock()

    def record(self, type: str, **data) -> dict:
        entry = {"type": type, "step": self.clock(), **data}
        with self._lock:
            self.entries.append(entry)
        return entry

    def of_type(self, type: str) -> List[dict]:
        return [e for e in self.entries if e["type"] == type]
