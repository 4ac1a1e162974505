"""Runtime ghost state for the concurrent maps.

The monitor mirrors a live map with bookkeeping that the map itself never
reads: a registry of per-node key ranges and contents, a shadow map
advanced at linearization points, a ledger of fractional lock-share
ownership, and a per-thread record of held locks. Each callback validates
the protocol step that triggered it; a violation means the map broke its
locking or linearization discipline, so it aborts the run with a
diagnostic rather than returning an error.

All callbacks are serialized by one internal lock. Because every caller
already holds the node lock(s) guarding the mutation it reports, and
reports it before releasing them, the serialized order of linearization
callbacks is a valid witness order for the run.

Share accounting: each node lock is split into two half shares. One half
("self_invariant") is stored in the lock's own invariant and moves to the
acquiring thread on acquire; the other ("parent_invariant", or
"root_box" for the root) is stored with the parent and moves to a thread
when that thread acquires the parent's lock. A lock may be deallocated
only by a thread holding both halves, which is exactly what the
hand-over-hand protocol guarantees at the moment a node is unlinked.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from fractions import Fraction

from .oracle import (
    ABSENT,
    DELETE_DONE,
    FULL_RANGE,
    INSERT_DONE,
    Absent,
    Delete,
    DeleteDone,
    Found,
    Insert,
    InsertDone,
    KeyRange,
    Lookup,
    Operation,
    OpResult,
    finite,
    map_digest,
    op_to_json,
    result_to_json,
    value_digest,
)

HALF = Fraction(1, 2)
ONE = Fraction(1)

SELF_INVARIANT = "self_invariant"
PARENT_INVARIANT = "parent_invariant"
ROOT_BOX = "root_box"
DESTROYER = "destroyer"


def thread_tag(tid: int) -> str:
    return f"thread:{tid}"


class MonitorViolation(RuntimeError):
    """Protocol violation observed at runtime; aborts the offending run."""

    def __init__(self, code: str, **details: object):
        self.code = code
        self.details = {k: str(v) if isinstance(v, KeyRange) else v for k, v in details.items()}
        super().__init__(json.dumps({"violation": code, **self.details}, default=str))

    def to_json(self) -> dict:
        return {"violation": self.code, **self.details}


@dataclass
class GhostContents:
    key: int
    value_digest: int
    left_id: int
    right_id: int


@dataclass
class NodeGhost:
    node_id: int
    range: KeyRange
    contents: GhostContents | None = None

    @property
    def is_leaf(self) -> bool:
        return self.contents is None


@dataclass(frozen=True)
class LockEvent:
    tid: int
    lock_id: int
    kind: str  # "acquire" | "release"
    witness: int | None  # lock id of the held parent, for second acquisitions
    seq: int


@dataclass
class LinRecord:
    op: Operation
    result: OpResult
    pre_digest: int
    post_digest: int
    seq: int


@dataclass
class QuiescentReport:
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"clean": self.ok, "violations": self.violations}


@dataclass
class _OpScope:
    op: Operation
    linearized: bool = False


class GhostMonitor:
    """Shadow state, range registry, lock discipline and share ledger for one map."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._seq = 0
        self._events: list[tuple[int, str, dict]] = []
        # registry
        self.nodes: dict[int, NodeGhost] = {}
        self._parent: dict[int, int | None] = {}
        self.root_id: int | None = None
        self._node_lock: dict[int, int] = {}
        self._lock_node: dict[int, int] = {}
        # ledger: lock id -> holder tag -> fraction (each lock's fractions sum to 1)
        self.ledger: dict[int, dict[str, Fraction]] = {}
        # lock discipline
        self._held: dict[int, list[int]] = {}
        self._scopes: dict[int, _OpScope] = {}
        # shadow state
        self.shadow: dict[int, bytes] = {}
        self._lin_log: list[LinRecord] = []
        self._destroyed = False

    # -- helpers -----------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _record(self, kind: str, payload: dict) -> int:
        seq = self._next_seq()
        self._events.append((seq, kind, payload))
        return seq

    def events(self, kind: str | None = None) -> list[tuple[int, str, dict]]:
        with self._lock:
            evs = list(self._events)
        if kind is not None:
            evs = [e for e in evs if e[1] == kind]
        return evs

    def linearization_log(self) -> list[LinRecord]:
        with self._lock:
            return list(self._lin_log)

    def node_range(self, node_id: int) -> KeyRange:
        with self._lock:
            return self.nodes[node_id].range

    # -- registry: creation and structural updates --------------------------

    def on_node_created(
        self,
        node_id: int,
        rng: KeyRange,
        contents: GhostContents | None = None,
        parent_id: int | None = None,
        *,
        lock_id: int,
    ) -> None:
        with self._lock:
            self._node_created(node_id, rng, contents, parent_id, lock_id)

    def _node_created(
        self,
        node_id: int,
        rng: KeyRange,
        contents: GhostContents | None,
        parent_id: int | None,
        lock_id: int,
    ) -> None:
        if node_id in self.nodes:
            raise MonitorViolation("duplicate-node-id", node=node_id)
        if lock_id in self.ledger:
            raise MonitorViolation("duplicate-lock-id", lock=lock_id)
        if parent_id is None:
            if self.root_id is not None:
                raise MonitorViolation("second-root", node=node_id)
            if rng != FULL_RANGE:
                raise MonitorViolation("root-range-not-full", node=node_id, range=rng)
            self.root_id = node_id
            slot = ROOT_BOX
        else:
            if parent_id not in self.nodes:
                raise MonitorViolation("unknown-parent", node=node_id, parent=parent_id)
            slot = PARENT_INVARIANT
        self.nodes[node_id] = NodeGhost(node_id, rng, contents)
        self._parent[node_id] = parent_id
        self._node_lock[node_id] = lock_id
        self._lock_node[lock_id] = node_id
        self.ledger[lock_id] = {SELF_INVARIANT: HALF, slot: HALF}
        self._record("node_created", {"node": node_id, "range": str(rng), "lock": lock_id})

    def on_insert_at(
        self,
        node_id: int,
        key: int,
        vdigest: int,
        left_id: int,
        left_lock_id: int,
        right_id: int,
        right_lock_id: int,
    ) -> None:
        """A held leaf gains contents (key, value) and two fresh leaf children.

        Child ranges are derived here, under the monitor lock, from the
        node's current range, so a concurrent widen of that range cannot
        race the derivation.
        """
        with self._lock:
            node = self._known(node_id)
            self._require_held_node(node_id)
            if not node.is_leaf:
                raise MonitorViolation("insert-at-internal", node=node_id)
            if not node.range.contains(key):
                raise MonitorViolation("insert-outside-range", node=node_id, key=key, range=node.range)
            if key in self.shadow:
                raise MonitorViolation("leaf-insert-but-key-bound", node=node_id, key=key)
            left_r, right_r = node.range.split(key)
            self._node_created(left_id, left_r, None, node_id, left_lock_id)
            self._node_created(right_id, right_r, None, node_id, right_lock_id)
            node.contents = GhostContents(key, vdigest, left_id, right_id)
            self._record("insert_at", {"node": node_id, "key": key, "left": left_id, "right": right_id})

    def on_value_written(self, node_id: int, vdigest: int) -> None:
        with self._lock:
            node = self._known(node_id)
            self._require_held_node(node_id)
            if node.is_leaf:
                raise MonitorViolation("overwrite-at-leaf", node=node_id)
            if node.contents.key not in self.shadow:
                raise MonitorViolation("overwrite-but-key-unbound", node=node_id, key=node.contents.key)
            node.contents.value_digest = vdigest

    def on_range_widen(self, node_id: int, new_range: KeyRange) -> None:
        with self._lock:
            self._widen(node_id, new_range)

    def _widen(self, node_id: int, new_range: KeyRange) -> None:
        node = self._known(node_id)
        if not new_range.encloses(node.range):
            raise MonitorViolation("range-shrink", node=node_id, old=node.range, new=new_range)
        self._record("widen", {"node": node_id, "old": str(node.range), "new": str(new_range)})
        node.range = new_range

    def on_rotate(self, target_id: int, rc_id: int) -> None:
        """Left rotation of target with its internal right child.

        The rotated-up node takes the target's old range; the target's new
        range is (old lower, right child's key). All other ranges are
        untouched; this is the one range change that is not a widen, and it
        is only legal because the calling thread holds both locks.
        """
        with self._lock:
            t = self._known(target_id)
            rc = self._known(rc_id)
            if t.is_leaf or rc.is_leaf:
                raise MonitorViolation("rotate-leaf", target=target_id, right_child=rc_id)
            if t.contents.right_id != rc_id:
                raise MonitorViolation("rotate-not-right-child", target=target_id, right_child=rc_id)
            self._require_held_node(target_id)
            self._require_held_node(rc_id)
            a, b = t.contents.key, rc.contents.key
            new_t_range = KeyRange(t.range.lower, finite(b))
            if not new_t_range.contains(a):
                raise MonitorViolation("rotate-key-escapes-range", target=target_id)
            mid_id = rc.contents.left_id
            up_range = t.range
            rc.range = up_range
            t.range = new_t_range
            t.contents.right_id = mid_id
            rc.contents.left_id = target_id
            # the rotated-up node takes the target's place under its parent
            p = self._parent[target_id]
            self._replace_child(p, target_id, rc_id)
            self._parent[rc_id] = p
            self._parent[target_id] = rc_id
            self._parent[mid_id] = target_id
            # ghost ids follow node contents across the physical body swap,
            # so the two ids trade locks
            tl, rl = self._node_lock[target_id], self._node_lock[rc_id]
            self._node_lock[target_id], self._node_lock[rc_id] = rl, tl
            self._lock_node[rl], self._lock_node[tl] = target_id, rc_id
            self._record(
                "rotate",
                {
                    "target": target_id,
                    "right_child": rc_id,
                    "target_range": str(t.range),
                    "up_range": str(rc.range),
                },
            )

    def on_splice(self, target_id: int) -> None:
        """Remove a held node whose right child is an empty leaf.

        The left child's ghost is lifted into the target's position and
        widened to the target's range; the upper bounds along its right
        spine widen to match. The target's ghost and its right sentinel
        are retired. The lift is the only range event here that crosses a
        lock boundary, and it is authorized by the spliced ancestor's lock,
        which the calling thread holds.
        """
        with self._lock:
            t = self._known(target_id)
            if t.is_leaf:
                raise MonitorViolation("splice-at-leaf", target=target_id)
            self._require_held_node(target_id)
            lc_id, rc_id = t.contents.left_id, t.contents.right_id
            rc = self._known(rc_id)
            if not rc.is_leaf:
                raise MonitorViolation("splice-right-not-leaf", target=target_id, right_child=rc_id)
            upper = t.range.upper
            # widen the lifted subtree's right spine, deepest first, the
            # lifted node itself last
            spine: list[int] = []
            cur = self.nodes[lc_id]
            while not cur.is_leaf:
                spine.append(cur.contents.right_id)
                cur = self.nodes[spine[-1]]
            for nid in reversed(spine):
                node = self.nodes[nid]
                self._widen(nid, KeyRange(node.range.lower, upper))
            self._widen(lc_id, t.range)
            p = self._parent[target_id]
            self._replace_child(p, target_id, lc_id)
            self._parent[lc_id] = p
            del self.nodes[target_id]
            del self.nodes[rc_id]
            del self._parent[target_id]
            self._parent.pop(rc_id, None)
            # the target's physical lock now guards the lifted ghost; the
            # lifted ghost's old lock is about to be deallocated
            t_lock = self._node_lock.pop(target_id)
            lc_lock = self._node_lock.pop(lc_id)
            self._lock_node.pop(lc_lock, None)
            self._node_lock[lc_id] = t_lock
            self._lock_node[t_lock] = lc_id
            self._node_lock.pop(rc_id, None)
            self._record("splice", {"target": target_id, "lifted": lc_id, "removed": [target_id, rc_id]})

    def _replace_child(self, parent_id: int | None, old: int, new: int) -> None:
        if parent_id is None:
            if self.root_id != old:
                raise MonitorViolation("root-mismatch", expected=self.root_id, got=old)
            self.root_id = new
            return
        c = self.nodes[parent_id].contents
        if c is None:
            raise MonitorViolation("parent-is-leaf", parent=parent_id)
        if c.left_id == old:
            c.left_id = new
        elif c.right_id == old:
            c.right_id = new
        else:
            raise MonitorViolation("not-a-child", parent=parent_id, child=old)

    def _known(self, node_id: int) -> NodeGhost:
        node = self.nodes.get(node_id)
        if node is None:
            raise MonitorViolation("unknown-node", node=node_id)
        return node

    def _require_held_node(self, node_id: int) -> None:
        lock_id = self._node_lock.get(node_id)
        tid = threading.get_ident()
        if lock_id is None or lock_id not in self._held.get(tid, ()):
            raise MonitorViolation("node-lock-not-held", node=node_id, tid=tid)

    # -- lock events and share ledger ----------------------------------------

    def on_lock_event(
        self,
        kind: str,
        lock_id: int,
        *,
        witness: int | None = None,
        hop_key: int | None = None,
        tid: int | None = None,
    ) -> LockEvent:
        """Record an acquire/release and enforce the hand-over-hand discipline.

        Acquire: a thread holding nothing may only take the root lock; a
        thread holding one lock must name it as witness, and the acquired
        node must be that lock's child in the current tree. hop_key, when
        given, is the traversal target key, which must lie inside the
        acquired node's range (the traversal loop invariant). Two locks is
        the ceiling. Ledger: the lock's self half moves to the thread,
        along with the parent-held halves of the node's current children.

        Release: the reverse transfers for the node's current children; the
        thread keeps any self halves of still-held child locks.
        """
        with self._lock:
            tid = threading.get_ident() if tid is None else tid
            tag = thread_tag(tid)
            if lock_id not in self.ledger:
                raise MonitorViolation("unknown-lock", lock=lock_id)
            held = self._held.setdefault(tid, [])
            node_id = self._lock_node.get(lock_id)
            if node_id is None:
                raise MonitorViolation("lock-guards-nothing", lock=lock_id)
            node = self.nodes[node_id]
            if kind == "acquire":
                if lock_id in held:
                    raise MonitorViolation("double-acquire", lock=lock_id, tid=tid)
                if len(held) >= 2:
                    raise MonitorViolation("held-count-exceeded", lock=lock_id, tid=tid, held=list(held))
                if not held:
                    if node_id != self.root_id:
                        raise MonitorViolation(
                            "first-acquire-not-root", lock=lock_id, node=node_id, tid=tid
                        )
                else:
                    if witness is None or witness not in held:
                        raise MonitorViolation("missing-parent-witness", lock=lock_id, tid=tid)
                    if self._parent.get(node_id) != self._lock_node.get(witness):
                        raise MonitorViolation(
                            "acquire-not-child-of-held",
                            lock=lock_id,
                            node=node_id,
                            witness=witness,
                            tid=tid,
                        )
                if hop_key is not None and not node.range.contains(hop_key):
                    raise MonitorViolation(
                        "traversal-key-outside-range", node=node_id, key=hop_key, range=node.range
                    )
                self._transfer(lock_id, SELF_INVARIANT, tag, HALF)
                if node.contents is not None:
                    for child in (node.contents.left_id, node.contents.right_id):
                        self._transfer(self._node_lock[child], PARENT_INVARIANT, tag, HALF)
                held.append(lock_id)
            elif kind == "release":
                if lock_id not in held:
                    raise MonitorViolation("release-without-acquire", lock=lock_id, tid=tid)
                self._transfer(lock_id, tag, SELF_INVARIANT, HALF)
                if node.contents is not None:
                    for child in (node.contents.left_id, node.contents.right_id):
                        clock = self._node_lock[child]
                        if self.ledger[clock].get(tag, Fraction(0)) >= HALF:
                            self._transfer(clock, tag, PARENT_INVARIANT, HALF)
                        elif self.ledger[clock].get(PARENT_INVARIANT, Fraction(0)) < HALF:
                            raise MonitorViolation("child-share-missing", lock=clock, parent_lock=lock_id)
                held.remove(lock_id)
            else:
                raise MonitorViolation("bad-lock-event-kind", kind=kind)
            seq = self._record(
                "lock_" + kind, {"lock": lock_id, "tid": tid, "witness": witness, "node": node_id}
            )
            return LockEvent(tid, lock_id, kind, witness, seq)

    def on_lock_destroyed(self, lock_id: int) -> None:
        """Deallocate a lock the calling thread holds with a full share assembled."""
        with self._lock:
            tid = threading.get_ident()
            tag = thread_tag(tid)
            held = self._held.get(tid, [])
            if lock_id not in held:
                raise MonitorViolation("destroy-unheld-lock", lock=lock_id, tid=tid)
            shares = self.ledger.get(lock_id)
            if shares is None:
                raise MonitorViolation("unknown-lock", lock=lock_id)
            if shares.get(tag, Fraction(0)) != ONE:
                raise MonitorViolation(
                    "destroy-without-full-share", lock=lock_id, tid=tid, shares=dict(shares)
                )
            del self.ledger[lock_id]
            held.remove(lock_id)
            node = self._lock_node.pop(lock_id, None)
            if node is not None:
                self._node_lock.pop(node, None)
            self._record("lock_destroyed", {"lock": lock_id, "tid": tid})

    def ledger_transfer(self, lock_id: int, frm: str, to: str, fraction: Fraction) -> None:
        with self._lock:
            self._transfer(lock_id, frm, to, fraction)

    def _transfer(self, lock_id: int, frm: str, to: str, fraction: Fraction) -> None:
        shares = self.ledger.get(lock_id)
        if shares is None:
            raise MonitorViolation("unknown-lock", lock=lock_id)
        have = shares.get(frm, Fraction(0))
        if have < fraction:
            raise MonitorViolation(
                "insufficient-share", lock=lock_id, holder=frm, held=str(have), wanted=str(fraction)
            )
        if have == fraction:
            del shares[frm]
        else:
            shares[frm] = have - fraction
        shares[to] = shares.get(to, Fraction(0)) + fraction

    # -- linearization points -----------------------------------------------

    def op_begin(self, op: Operation) -> None:
        with self._lock:
            tid = threading.get_ident()
            if tid in self._scopes:
                raise MonitorViolation("nested-operation", tid=tid)
            if self._held.get(tid):
                raise MonitorViolation("locks-held-at-op-start", tid=tid)
            self._scopes[tid] = _OpScope(op)

    def op_end(self) -> None:
        with self._lock:
            tid = threading.get_ident()
            scope = self._scopes.pop(tid, None)
            if scope is None:
                raise MonitorViolation("op-end-without-begin", tid=tid)
            if not scope.linearized:
                raise MonitorViolation("operation-never-linearized", tid=tid, op=op_to_json(scope.op))
            if self._held.get(tid):
                raise MonitorViolation("locks-held-at-op-end", tid=tid, held=self._held[tid])

    def op_abort(self) -> None:
        """Drop the current op scope after a failure, without masking the cause."""
        with self._lock:
            self._scopes.pop(threading.get_ident(), None)

    def on_linearization(self, op: Operation, result: OpResult) -> None:
        """Advance the shadow map by one oracle transition, exactly once per op.

        The caller must hold the lock guarding the node that realizes the
        effect (checked whenever this monitor tracks a node registry); the
        result must match what the sequential semantics would produce on
        the current shadow state.
        """
        with self._lock:
            tid = threading.get_ident()
            scope = self._scopes.get(tid)
            if scope is not None:
                if scope.linearized:
                    raise MonitorViolation("double-linearization", tid=tid, op=op_to_json(op))
                scope.linearized = True
            if self.nodes:
                held = self._held.get(tid, [])
                covered = any(
                    self.nodes[self._lock_node[l]].range.contains(op.key)
                    for l in held
                    if self._lock_node.get(l) in self.nodes
                )
                if not covered:
                    raise MonitorViolation("linearization-without-lock", tid=tid, op=op_to_json(op))
            pre = map_digest(self.shadow)
            if isinstance(op, Insert) and isinstance(result, InsertDone):
                self.shadow[op.key] = op.value
            elif isinstance(op, Lookup) and isinstance(result, Found):
                if self.shadow.get(op.key) != result.value:
                    raise MonitorViolation(
                        "transition-mismatch", op=op_to_json(op), result=result_to_json(result)
                    )
            elif isinstance(op, Lookup) and isinstance(result, Absent):
                if op.key in self.shadow:
                    raise MonitorViolation(
                        "transition-mismatch", op=op_to_json(op), result=result_to_json(result)
                    )
            elif isinstance(op, Delete) and isinstance(result, DeleteDone):
                self.shadow.pop(op.key, None)
            else:
                raise MonitorViolation(
                    "result-kind-mismatch", op=op_to_json(op), result=result_to_json(result)
                )
            seq = self._next_seq()
            self._lin_log.append(LinRecord(op, result, pre, map_digest(self.shadow), seq))

    # -- teardown -------------------------------------------------------------

    def on_destroy_reclaim(self, lock_id: int, node_id: int) -> None:
        """Assemble the full share of one lock at map destruction and retire its node."""
        with self._lock:
            shares = self.ledger.get(lock_id)
            if shares is None:
                raise MonitorViolation("unknown-lock", lock=lock_id)
            for tid, held in self._held.items():
                if lock_id in held:
                    raise MonitorViolation("destroy-while-held", lock=lock_id, tid=tid)
            for holder in list(shares):
                if holder not in (SELF_INVARIANT, PARENT_INVARIANT, ROOT_BOX):
                    raise MonitorViolation(
                        "ledger-incomplete", lock=lock_id, stray_holder=holder, shares=dict(shares)
                    )
                self._transfer(lock_id, holder, DESTROYER, shares[holder])
            if shares.get(DESTROYER) != ONE:
                raise MonitorViolation("ledger-incomplete", lock=lock_id, shares=dict(shares))
            del self.ledger[lock_id]
            if self._lock_node.get(lock_id) != node_id:
                raise MonitorViolation("destroy-binding-mismatch", lock=lock_id, node=node_id)
            del self._lock_node[lock_id]
            del self._node_lock[node_id]
            del self.nodes[node_id]
            del self._parent[node_id]

    def on_destroy_complete(self) -> None:
        with self._lock:
            if self.nodes:
                raise MonitorViolation("leaked-node-ids", nodes=sorted(self.nodes))
            if self.ledger:
                raise MonitorViolation("leaked-locks", locks=sorted(self.ledger))
            self.root_id = None
            self._destroyed = True

    # -- quiescent verification -------------------------------------------------

    def quiescent_check(self, handle) -> QuiescentReport:
        """Full consistency audit; caller guarantees no operation is in flight.

        Checks the registry tree (well-formed, derived ranges equal stored
        ranges, contents keys inside ranges), the shadow map against both
        the registry and the handle's snapshot, the leaf-range partition,
        ledger conservation, and that replaying the linearization log
        reproduces its recorded digests.
        """
        report = QuiescentReport()
        with self._lock:
            for tid, held in self._held.items():
                if held:
                    report.violations.append({"violation": "locks-held-at-quiescence", "tid": tid})
            for lock_id, shares in self.ledger.items():
                if sum(shares.values(), Fraction(0)) != ONE:
                    report.violations.append(
                        {"violation": "ledger-sum", "lock": lock_id, "shares": {k: str(v) for k, v in shares.items()}}
                    )
            leaf_rs: list[tuple[int, KeyRange]] = []
            keys: dict[int, int] = {}  # key -> value digest
            if self.root_id is not None:
                seen: set[int] = set()

                def walk(nid: int, derived: KeyRange) -> None:
                    if nid in seen:
                        report.violations.append({"violation": "node-shared-or-cyclic", "node": nid})
                        return
                    seen.add(nid)
                    node = self.nodes.get(nid)
                    if node is None:
                        report.violations.append({"violation": "dangling-child-id", "node": nid})
                        return
                    if node.range != derived:
                        report.violations.append(
                            {
                                "violation": "range-derivation-mismatch",
                                "node": nid,
                                "stored": str(node.range),
                                "derived": str(derived),
                            }
                        )
                    if node.contents is None:
                        leaf_rs.append((nid, node.range))
                        return
                    c = node.contents
                    if not node.range.contains(c.key):
                        report.violations.append(
                            {"violation": "key-outside-range", "node": nid, "key": c.key, "range": str(node.range)}
                        )
                        return
                    keys[c.key] = c.value_digest
                    left_r, right_r = node.range.split(c.key)
                    walk(c.left_id, left_r)
                    walk(c.right_id, right_r)

                walk(self.root_id, FULL_RANGE)
                unreachable = set(self.nodes) - seen
                if unreachable:
                    report.violations.append(
                        {"violation": "unreachable-nodes", "nodes": sorted(unreachable)}
                    )
                # registry implements the shadow map
                if set(keys) != set(self.shadow):
                    report.violations.append(
                        {
                            "violation": "registry-shadow-key-mismatch",
                            "registry_only": sorted(set(keys) - set(self.shadow)),
                            "shadow_only": sorted(set(self.shadow) - set(keys)),
                        }
                    )
                else:
                    for k, dv in keys.items():
                        if value_digest(self.shadow[k]) != dv:
                            report.violations.append(
                                {"violation": "registry-shadow-value-mismatch", "key": k}
                            )
                # leaf ranges partition the absent keys (probe a window
                # around every finite bound)
                probes: set[int] = set()
                for _, r in leaf_rs:
                    for b in (r.lower, r.upper):
                        if b.tag == 0:
                            probes.update((b.key - 1, b.key, b.key + 1))
                probes.update(keys)
                for k in probes:
                    hits = [nid for nid, r in leaf_rs if r.contains(k)]
                    want = 0 if k in keys else 1
                    if len(hits) != want:
                        report.violations.append(
                            {"violation": "leaf-partition", "key": k, "containing_leaves": hits}
                        )
            shadow_copy = dict(self.shadow)
            log_copy = list(self._lin_log)
        phys = getattr(handle, "physical_structure", None)
        if phys is not None and self.root_id is not None:
            self._check_physical(phys(), report)
        snap = handle.snapshot_items()
        if snap != shadow_copy:
            report.violations.append(
                {
                    "violation": "shadow-snapshot-mismatch",
                    "shadow_only": sorted(set(shadow_copy) - set(snap)),
                    "snapshot_only": sorted(set(snap) - set(shadow_copy)),
                    "value_diffs": sorted(
                        k for k in set(snap) & set(shadow_copy) if snap[k] != shadow_copy[k]
                    ),
                }
            )
        self._check_log_replay(log_copy, report)
        return report

    def _check_physical(self, struct, report: QuiescentReport) -> None:
        with self._lock:
            def walk(entry, expected_id: int) -> None:
                node_id, lock_id, body = entry
                if node_id != expected_id:
                    report.violations.append(
                        {"violation": "physical-id-mismatch", "expected": expected_id, "got": node_id}
                    )
                    return
                node = self.nodes.get(node_id)
                if node is None:
                    report.violations.append({"violation": "physical-unregistered", "node": node_id})
                    return
                if self._node_lock.get(node_id) != lock_id:
                    report.violations.append(
                        {"violation": "lock-binding-mismatch", "node": node_id, "lock": lock_id}
                    )
                if body is None:
                    if not node.is_leaf:
                        report.violations.append({"violation": "physical-leaf-ghost-internal", "node": node_id})
                    return
                key, value, left, right = body
                if node.is_leaf:
                    report.violations.append({"violation": "physical-internal-ghost-leaf", "node": node_id})
                    return
                c = node.contents
                if c.key != key or c.value_digest != value_digest(value):
                    report.violations.append({"violation": "physical-contents-mismatch", "node": node_id})
                walk(left, c.left_id)
                walk(right, c.right_id)

            if self.root_id is not None:
                walk(struct, self.root_id)

    def _check_log_replay(self, log: list[LinRecord], report: QuiescentReport) -> None:
        m: dict[int, bytes] = {}
        for rec in log:
            if map_digest(m) != rec.pre_digest:
                report.violations.append({"violation": "log-replay-pre-digest", "seq": rec.seq})
                return
            expected: OpResult
            if isinstance(rec.op, Insert):
                m[rec.op.key] = rec.op.value
                expected = INSERT_DONE
            elif isinstance(rec.op, Lookup):
                v = m.get(rec.op.key)
                expected = Found(v) if v is not None else ABSENT
            else:
                m.pop(rec.op.key, None)
                expected = DELETE_DONE
            if rec.result != expected:
                report.violations.append({"violation": "log-replay-result", "seq": rec.seq})
                return
            if map_digest(m) != rec.post_digest:
                report.violations.append({"violation": "log-replay-post-digest", "seq": rec.seq})
                return
