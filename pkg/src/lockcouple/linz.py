"""History recording and linearizability checking.

A history is a globally ordered sequence of invoke/return events; real
time is the order of the shared sequence counter, not wall clocks. A
complete history is linearizable when some total order of its operations
respects real-time precedence (op a before op b whenever a returned
before b was invoked) and replays correctly through the sequential map
semantics.

`check` runs a Wing-Gong style backtracking search with memoization on
(pending set, canonical map state); `brute_force_check` enumerates every
precedence-respecting permutation outright and exists to validate
`check`. Both are for desk-scale histories.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

from . import oracle
from .oracle import Operation, OpResult, apply_op, canonical_state, undo_op


class HistoryError(ValueError):
    """Malformed history: broken alternation, bad pairing, or bad encoding."""


@dataclass(frozen=True)
class HistoryEvent:
    seq: int
    tid: int
    kind: str  # "invoke" | "return"
    op: Operation | None = None  # invoke events
    result: OpResult | None = None  # return events


@dataclass(frozen=True)
class OpRecord:
    """One completed operation: its invoke and return positions in real time."""

    index: int
    tid: int
    op: Operation
    result: OpResult
    inv_seq: int
    ret_seq: int


@dataclass
class History:
    events: list[HistoryEvent] = field(default_factory=list)

    def validate(self) -> None:
        pending: dict[int, Operation] = {}
        last_seq = 0
        for e in self.events:
            if e.seq <= last_seq:
                raise HistoryError(f"sequence numbers not strictly increasing at {e.seq}")
            last_seq = e.seq
            if e.kind == "invoke":
                if e.tid in pending:
                    raise HistoryError(f"tid {e.tid}: invoke while an operation is pending")
                if e.op is None:
                    raise HistoryError(f"seq {e.seq}: invoke without an operation")
                pending[e.tid] = e.op
            elif e.kind == "return":
                if e.tid not in pending:
                    raise HistoryError(f"tid {e.tid}: return without a pending invoke")
                if e.result is None:
                    raise HistoryError(f"seq {e.seq}: return without a result")
                del pending[e.tid]
            else:
                raise HistoryError(f"seq {e.seq}: unknown event kind {e.kind!r}")

    @property
    def complete(self) -> bool:
        self.validate()
        pending = set()
        for e in self.events:
            if e.kind == "invoke":
                pending.add(e.tid)
            else:
                pending.discard(e.tid)
        return not pending

    def ops(self) -> list[OpRecord]:
        """Pair up invokes and returns; requires a complete history."""
        self.validate()
        open_ops: dict[int, tuple[Operation, int]] = {}
        out: list[OpRecord] = []
        for e in self.events:
            if e.kind == "invoke":
                open_ops[e.tid] = (e.op, e.seq)
            else:
                op, inv_seq = open_ops.pop(e.tid)
                out.append(OpRecord(len(out), e.tid, op, e.result, inv_seq, e.seq))
        if open_ops:
            raise HistoryError(f"incomplete history: pending tids {sorted(open_ops)}")
        return out

    # -- JSONL wire format ---------------------------------------------------

    def to_jsonl(self) -> str:
        lines = []
        for e in self.events:
            d: dict = {"seq": e.seq, "tid": e.tid, "kind": e.kind}
            if e.op is not None:
                d["op"] = oracle.op_to_json(e.op)
            if e.result is not None:
                d["result"] = oracle.result_to_json(e.result)
            lines.append(json.dumps(d))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "History":
        events = []
        for i, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                events.append(
                    HistoryEvent(
                        seq=int(d["seq"]),
                        tid=int(d["tid"]),
                        kind=d["kind"],
                        op=oracle.op_from_json(d["op"]) if "op" in d else None,
                        result=oracle.result_from_json(d["result"]) if "result" in d else None,
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise HistoryError(f"line {i}: {exc}") from exc
        h = cls(events)
        h.validate()
        return h


class Recorder:
    """Thread-safe invoke/return recorder with an atomically assigned global order."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._seq = 0
        self._events: list[HistoryEvent] = []
        self._pending: dict[int, Operation] = {}

    def record_invoke(self, tid: int, op: Operation) -> int:
        with self._lock:
            if tid in self._pending:
                raise HistoryError(f"tid {tid}: invoke while an operation is pending")
            self._seq += 1
            self._events.append(HistoryEvent(self._seq, tid, "invoke", op=op))
            self._pending[tid] = op
            return self._seq

    def record_return(self, tid: int, result: OpResult) -> int:
        with self._lock:
            if tid not in self._pending:
                raise HistoryError(f"tid {tid}: return without a pending invoke")
            del self._pending[tid]
            self._seq += 1
            self._events.append(HistoryEvent(self._seq, tid, "return", result=result))
            return self._seq

    def history(self) -> History:
        with self._lock:
            return History(list(self._events))


@dataclass
class Verdict:
    linearizable: bool
    # invoke seqs of the operations, in linearization order
    witness: list[int] | None = None
    # smallest event prefix that is already non-linearizable
    violation: dict | None = None

    def to_json(self) -> dict:
        return {
            "linearizable": self.linearizable,
            "witness": self.witness,
            "violation": self.violation,
        }


def check(history: History) -> Verdict:
    """Decide linearizability of a complete history against the map semantics.

    Sound and complete: searches linearization orders consistent with
    real-time precedence, replaying each prefix through the oracle, with
    memoization on (remaining ops, canonical map state). On failure the
    verdict carries the minimal non-linearizable event prefix.
    """
    recs = history.ops()
    n = len(recs)
    if n == 0:
        return Verdict(True, witness=[])
    order = _search(recs)
    if order is not None:
        return Verdict(True, witness=[recs[i].inv_seq for i in order])
    return Verdict(False, violation=_minimal_violation(history))


def _search(recs: list[OpRecord]) -> list[int] | None:
    n = len(recs)
    inv = [r.inv_seq for r in recs]
    ret = [r.ret_seq for r in recs]
    state: dict[int, bytes] = {}
    remaining = set(range(n))
    order: list[int] = []
    memo: set[tuple[frozenset[int], tuple]] = set()

    def dfs() -> bool:
        if not remaining:
            return True
        key = (frozenset(remaining), canonical_state(state))
        if key in memo:
            return False
        frontier = min(ret[i] for i in remaining)
        for i in sorted(remaining):
            if inv[i] > frontier:
                continue  # some remaining op returned before i was invoked
            got, undo = apply_op(state, recs[i].op)
            if got == recs[i].result:
                remaining.discard(i)
                order.append(i)
                if dfs():
                    return True
                remaining.add(i)
                order.pop()
            undo_op(state, recs[i].op, undo)
        memo.add(key)
        return False

    return list(order) if dfs() else None


def _prefix_linearizable(events: list[HistoryEvent]) -> bool:
    """Linearizability of an event prefix, treating unreturned invokes as optional.

    A pending operation may be linearized (its effect applied, its result
    unconstrained) or skipped entirely; every completed operation must be
    linearized with its recorded result.
    """
    open_ops: dict[int, tuple[Operation, int]] = {}
    complete: list[tuple[Operation, OpResult, int, int]] = []
    for e in events:
        if e.kind == "invoke":
            open_ops[e.tid] = (e.op, e.seq)
        else:
            op, inv_seq = open_ops.pop(e.tid)
            complete.append((op, e.result, inv_seq, e.seq))
    pending = [(op, inv_seq) for op, inv_seq in open_ops.values()]

    state: dict[int, bytes] = {}
    rem_c = set(range(len(complete)))
    rem_p = set(range(len(pending)))
    memo: set[tuple] = set()

    def dfs() -> bool:
        if not rem_c:
            return True
        key = (frozenset(rem_c), frozenset(rem_p), canonical_state(state))
        if key in memo:
            return False
        frontier = min(complete[i][3] for i in rem_c)
        for i in sorted(rem_c):
            op, result, inv_seq, _ = complete[i]
            if inv_seq > frontier:
                continue
            got, undo = apply_op(state, op)
            if got == result:
                rem_c.discard(i)
                if dfs():
                    return True
                rem_c.add(i)
            undo_op(state, op, undo)
        for j in sorted(rem_p):
            op, inv_seq = pending[j]
            if inv_seq > frontier:
                continue
            _, undo = apply_op(state, op)
            rem_p.discard(j)
            if dfs():
                return True
            rem_p.add(j)
            undo_op(state, op, undo)
        memo.add(key)
        return False

    return dfs()


def _minimal_violation(history: History) -> dict:
    events = history.events
    for n in range(1, len(events) + 1):
        if not _prefix_linearizable(events[:n]):
            e = events[n - 1]
            return {
                "prefix_len": n,
                "breaking_seq": e.seq,
                "breaking_tid": e.tid,
                "breaking_kind": e.kind,
            }
    return {"prefix_len": len(events), "breaking_seq": None}  # pragma: no cover


BRUTE_FORCE_MAX_OPS = 8


def brute_force_check(history: History) -> Verdict:
    """Exhaustive oracle for `check`: try every precedence-respecting permutation."""
    recs = history.ops()
    if len(recs) > BRUTE_FORCE_MAX_OPS:
        raise HistoryError(f"brute force limited to {BRUTE_FORCE_MAX_OPS} operations")
    n = len(recs)
    if n == 0:
        return Verdict(True, witness=[])
    preds: list[set[int]] = [set() for _ in range(n)]
    for a in range(n):
        for b in range(n):
            if recs[a].ret_seq < recs[b].inv_seq:
                preds[b].add(a)

    placed: list[int] = []
    used: set[int] = set()

    def orders():
        if len(placed) == n:
            yield list(placed)
            return
        for i in range(n):
            if i not in used and preds[i] <= used:
                used.add(i)
                placed.append(i)
                yield from orders()
                placed.pop()
                used.discard(i)

    for order in orders():
        m: dict[int, bytes] = {}
        if all(apply_op(m, recs[i].op)[0] == recs[i].result for i in order):
            return Verdict(True, witness=[recs[i].inv_seq for i in order])
    return Verdict(False, violation=_minimal_violation(history))
