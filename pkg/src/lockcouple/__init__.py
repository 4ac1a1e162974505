"""Concurrent ordered map with hand-over-hand locking, plus its verification kit.

Public surface:

- `oracle`: sequential reference semantics (keys, ranges, ops, results).
- `trees`: pure BSTs, range annotation, leaf-range partition.
- `HandOverHandMap` / `CoarseMap`: the two concurrent map implementations.
- `GhostMonitor`: runtime registry of ranges, shares and linearizations.
- `linz`: history recording and the linearizability checker.
- `harness`: workloads, recorded stress runs, benchmarks, client demo.
- `cli`: the `lockcouple` command.
"""

from .coarse import CoarseMap
from .hoh import HandOverHandMap
from .linz import History, Recorder, Verdict, brute_force_check, check
from .monitor import GhostMonitor, MonitorViolation, QuiescentReport
from .oracle import (
    ABSENT,
    DELETE_DONE,
    FULL_RANGE,
    INSERT_DONE,
    NEG_INF,
    POS_INF,
    Bound,
    Delete,
    Found,
    Insert,
    KeyRange,
    Lookup,
    finite,
)
from .runtime import Jitter, RunAborted, UsageError

__version__ = "0.1.0"

__all__ = [
    "ABSENT",
    "DELETE_DONE",
    "FULL_RANGE",
    "INSERT_DONE",
    "NEG_INF",
    "POS_INF",
    "Bound",
    "CoarseMap",
    "Delete",
    "Found",
    "GhostMonitor",
    "HandOverHandMap",
    "History",
    "Insert",
    "Jitter",
    "KeyRange",
    "Lookup",
    "MonitorViolation",
    "QuiescentReport",
    "Recorder",
    "RunAborted",
    "UsageError",
    "Verdict",
    "brute_force_check",
    "check",
    "finite",
]
