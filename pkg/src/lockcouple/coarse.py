"""Coarse-grained baseline: the same map interface behind one global lock.

Used for differential testing against the fine-grained map and as the
contention contrast in benchmarks. Every operation holds the single lock
for its whole critical section, so linearizability holds by construction;
the monitor's shadow map still gets a linearization callback per
operation, inside the critical section.
"""

from __future__ import annotations

import threading

from .monitor import GhostMonitor
from .oracle import (
    ABSENT,
    DELETE_DONE,
    INSERT_DONE,
    MAX_VALUE_LEN,
    Delete,
    Found,
    Insert,
    Lookup,
    OpResult,
    check_key,
    check_value,
)
from .runtime import Jitter, UsageError, acquire_abortable


class CoarseMap:
    """Shareable handle; operations serialize on one lock."""

    def __init__(
        self,
        monitor: GhostMonitor | None = None,
        *,
        jitter: Jitter | None = None,
        abort_event: threading.Event | None = None,
        max_value_len: int = MAX_VALUE_LEN,
    ):
        self._monitor = monitor
        self._jitter = jitter
        self._abort = abort_event
        self._max_value_len = max_value_len
        self._lock = threading.Lock()
        self._state: dict[int, bytes] = {}
        self._destroyed = False

    @property
    def monitor(self) -> GhostMonitor | None:
        return self._monitor

    def _enter(self) -> None:
        if self._destroyed:
            raise UsageError("operation on destroyed map")
        if self._jitter is not None:
            self._jitter.pause()
        acquire_abortable(self._lock, self._abort)

    def _scoped(self, op, body):
        mon = self._monitor
        if mon is None:
            return body()
        mon.op_begin(op)
        try:
            result = body()
        except BaseException:
            mon.op_abort()
            raise
        mon.op_end()
        return result

    def insert(self, k: int, v: bytes) -> OpResult:
        k = check_key(k)
        v = check_value(v, self._max_value_len)
        mon = self._monitor

        def body() -> OpResult:
            self._enter()
            try:
                self._state[k] = v
                if mon is not None:
                    mon.on_linearization(Insert(k, v), INSERT_DONE)
            finally:
                self._lock.release()
            return INSERT_DONE

        return self._scoped(Insert(k, v), body)

    def lookup(self, k: int) -> OpResult:
        k = check_key(k)
        mon = self._monitor

        def body() -> OpResult:
            self._enter()
            try:
                v = self._state.get(k)
                result = Found(v) if v is not None else ABSENT
                if mon is not None:
                    mon.on_linearization(Lookup(k), result)
            finally:
                self._lock.release()
            return result

        return self._scoped(Lookup(k), body)

    def delete(self, k: int) -> OpResult:
        k = check_key(k)
        mon = self._monitor

        def body() -> OpResult:
            self._enter()
            try:
                self._state.pop(k, None)
                if mon is not None:
                    mon.on_linearization(Delete(k), DELETE_DONE)
            finally:
                self._lock.release()
            return DELETE_DONE

        return self._scoped(Delete(k), body)

    def destroy(self) -> None:
        if self._destroyed:
            raise UsageError("double destroy")
        self._state.clear()
        self._destroyed = True

    def snapshot_items(self) -> dict[int, bytes]:
        if self._destroyed:
            raise UsageError("operation on destroyed map")
        return dict(self._state)
