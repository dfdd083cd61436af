"""Order-preserving parallel map with per-item error capture."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

from idaug.errors import IdaugError

log = logging.getLogger("idaug")


@dataclass
class Outcome:
    key: str
    value: Any = None
    error: str | None = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


def default_jobs() -> int:
    return os.cpu_count() or 1


class _Guarded:
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, item: tuple[str, Any]) -> Outcome:
        key, arg = item
        start = time.perf_counter()
        try:
            value = self.fn(arg)
        except (IdaugError, OSError, ValueError) as exc:
            return Outcome(key, error=f"{type(exc).__name__}: {exc}",
                           seconds=time.perf_counter() - start)
        return Outcome(key, value=value, seconds=time.perf_counter() - start)


def run_all(
    fn: Callable,
    items: Sequence[tuple[str, Any]],
    jobs: int = 1,
    threads: bool = False,
    stage: str = "",
) -> list[Outcome]:
    """Apply ``fn`` to every ``(key, arg)`` pair, returning outcomes in input order.

    ``fn`` must be picklable when ``jobs > 1`` and ``threads`` is false.
    Results never depend on ``jobs``.
    """
    guarded = _Guarded(fn)
    jobs = max(1, int(jobs))
    if jobs == 1 or len(items) <= 1:
        outcomes = [guarded(item) for item in items]
    else:
        pool_cls = ThreadPoolExecutor if threads else ProcessPoolExecutor
        with pool_cls(max_workers=min(jobs, len(items))) as pool:
            outcomes = list(pool.map(guarded, items))
    for o in outcomes:
        if o.ok:
            log.debug("stage=%s sample=%s event=done duration=%.4f", stage, o.key, o.seconds)
        else:
            log.warning("stage=%s sample=%s event=failed duration=%.4f error=%s",
                        stage, o.key, o.seconds, o.error)
    return outcomes


def keyed(items: Iterable[Any], key: Callable[[Any], str]) -> list[tuple[str, Any]]:
    return [(key(x), x) for x in items]
