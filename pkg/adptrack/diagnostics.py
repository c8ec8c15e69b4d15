"""
Run notices for assumption monitoring.

The simulation loop calls Notices.add() when something worth surfacing
happens (excitation reached, cbar below its floor, Γ clipped to its bound,
divergence). Notices end up in metrics.json, newest first.
"""
import logging
import uuid

log = logging.getLogger("adptrack.diagnostics")

_MAX = 50   # cap to prevent unbounded growth

_LOG_LEVEL = {"info": logging.INFO, "warn": logging.WARNING, "error": logging.ERROR}


class Notices:
    def __init__(self, cap: int = _MAX):
        self._cap = cap
        self._items: list[dict] = []
        self._once: set[str] = set()

    def add(self, level: str, title: str, message: str, t: float | None = None,
            once: str | None = None) -> None:
        """
        Record a notice.

        level: "info" | "warn" | "error"
        once:  key that suppresses repeats of the same notice within a run
        """
        if once is not None:
            if once in self._once:
                return
            self._once.add(once)
        n = {
            "id": uuid.uuid4().hex[:12],
            "level": level,
            "title": title,
            "message": message,
            "t": t,
        }
        log.log(_LOG_LEVEL.get(level, logging.INFO), "%s: %s", title, message)
        self._items.insert(0, n)
        if len(self._items) > self._cap:
            self._items[:] = self._items[: self._cap]

    def __len__(self) -> int:
        return len(self._items)

    def to_list(self) -> list[dict]:
        return list(self._items)

    def titles(self) -> list[str]:
        return [n["title"] for n in self._items]
