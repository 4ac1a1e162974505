"""Shared runtime plumbing for the concurrent maps and the harness."""

from __future__ import annotations

import itertools
import random
import threading
import time


class UsageError(RuntimeError):
    """Caller broke a usage contract (e.g. operating on a destroyed map)."""


class RunAborted(RuntimeError):
    """A sibling worker failed; this thread gave up waiting on its locks."""


class Jitter:
    """Seeded scheduling perturbation: short random sleeps before lock acquisitions.

    Each thread gets its own RNG derived from the base seed, so the sleep
    pattern is reproducible given the same thread registration order.
    """

    def __init__(self, seed: int, max_us: float = 100.0):
        self._seed = seed
        self._max_s = max_us / 1e6
        self._local = threading.local()
        self._counter = itertools.count()
        self._counter_lock = threading.Lock()

    def pause(self) -> None:
        rng = getattr(self._local, "rng", None)
        if rng is None:
            with self._counter_lock:
                n = next(self._counter)
            rng = random.Random(self._seed * 1000003 + n)
            self._local.rng = rng
        d = rng.random() * self._max_s
        if d > 0:
            time.sleep(d)


def acquire_abortable(lock: threading.Lock, abort: threading.Event | None) -> None:
    """Blocking acquire that bails out if the run has been aborted.

    Without an abort event this is a plain acquire; with one, a thread
    blocked on a lock held by a dead worker raises RunAborted instead of
    hanging the join.
    """
    if abort is None:
        lock.acquire()
        return
    while not lock.acquire(timeout=0.05):
        if abort.is_set():
            raise RunAborted("run aborted while waiting on a node lock")
