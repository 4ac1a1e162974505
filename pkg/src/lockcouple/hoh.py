"""Concurrent ordered map with per-node hand-over-hand locking.

Every tree position is a cell with its own mutual-exclusion lock; a cell
with no body is an empty leaf. Traversals hold at most two locks at a
time, always acquiring a child's lock before releasing its parent's, so
the link being crossed cannot be unlinked mid-step. Insert materializes a
body in the leaf it lands on (plus two fresh locked leaves); delete finds
its key and then pushes the doomed node down with left rotations until
its right child is empty, at which point the node is spliced out and its
cells reclaimed.

Rotations and splices never touch the parent of the subtree they
rearrange: the parent keeps pointing at the same cell, and the two locked
cells trade bodies instead. Ghost node ids travel with the bodies, so the
attached monitor sees the tree the way the proof sketch does: node 40
moves down and keeps its identity while its cell changes.

Linearization points (reported to the monitor while the relevant lock is
held): the body write for insert, the value read or the empty leaf for
lookup, the empty leaf for an absent delete, and the splice for a
successful delete.
"""

from __future__ import annotations

import itertools
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
    value_digest,
)
from .runtime import Jitter, UsageError, acquire_abortable


class _Body:
    __slots__ = ("key", "value", "left", "right")

    def __init__(self, key: int, value: bytes, left: "_Cell", right: "_Cell"):
        self.key = key
        self.value = value
        self.left = left
        self.right = right


class _Cell:
    __slots__ = ("lock", "lock_id", "node_id", "body", "dead")

    def __init__(self, node_id: int, lock_id: int):
        self.lock = threading.Lock()
        self.lock_id = lock_id
        self.node_id = node_id
        self.body: _Body | None = None
        self.dead = False


class HandOverHandMap:
    """Shareable handle to a lock-coupling BST; create/destroy are not thread-safe."""

    def __init__(
        self,
        monitor: GhostMonitor | None = None,
        *,
        jitter: Jitter | None = None,
        abort_event: threading.Event | None = None,
        max_value_len: int = MAX_VALUE_LEN,
        inject_bug: str | None = None,
    ):
        if inject_bug not in (None, "release-before-acquire"):
            raise UsageError(f"unknown bug injection {inject_bug!r}")
        self._monitor = monitor
        self._jitter = jitter
        self._abort = abort_event
        self._max_value_len = max_value_len
        self._bug_release_first = inject_bug == "release-before-acquire"
        self._node_ids = itertools.count(1)
        self._lock_ids = itertools.count(1)
        self._destroyed = False
        self._root = self._new_cell()
        if monitor is not None:
            from .oracle import FULL_RANGE

            monitor.on_node_created(
                self._root.node_id, FULL_RANGE, None, None, lock_id=self._root.lock_id
            )

    @property
    def monitor(self) -> GhostMonitor | None:
        return self._monitor

    # -- locking ---------------------------------------------------------------

    def _new_cell(self) -> _Cell:
        return _Cell(next(self._node_ids), next(self._lock_ids))

    def _acquire(self, cell: _Cell, witness: _Cell | None, hop_key: int | None) -> None:
        if self._jitter is not None:
            self._jitter.pause()
        acquire_abortable(cell.lock, self._abort)
        if self._monitor is not None:
            self._monitor.on_lock_event(
                "acquire",
                cell.lock_id,
                witness=witness.lock_id if witness is not None else None,
                hop_key=hop_key,
            )

    def _release(self, cell: _Cell) -> None:
        # report before the physical release so the monitor never sees the
        # next holder acquire a lock it still believes is held
        if self._monitor is not None:
            self._monitor.on_lock_event("release", cell.lock_id)
        cell.lock.release()

    def _step(self, cur: _Cell, child: _Cell, hop_key: int) -> _Cell:
        """Move the traversal from cur to child, hand over hand."""
        if self._bug_release_first:
            self._release(cur)
            self._acquire(child, None, hop_key)
        else:
            self._acquire(child, cur, hop_key)
            self._release(cur)
        return child

    def _check_live(self) -> None:
        if self._destroyed:
            raise UsageError("operation on destroyed map")

    # -- operations --------------------------------------------------------------

    def insert(self, k: int, v: bytes) -> OpResult:
        self._check_live()
        k = check_key(k)
        v = check_value(v, self._max_value_len)
        mon = self._monitor
        if mon is None:
            return self._insert_locked(k, v)
        mon.op_begin(Insert(k, v))
        try:
            result = self._insert_locked(k, v)
        except BaseException:
            mon.op_abort()
            raise
        mon.op_end()
        return result

    def lookup(self, k: int) -> OpResult:
        self._check_live()
        k = check_key(k)
        mon = self._monitor
        if mon is None:
            return self._lookup_locked(k)
        mon.op_begin(Lookup(k))
        try:
            result = self._lookup_locked(k)
        except BaseException:
            mon.op_abort()
            raise
        mon.op_end()
        return result

    def delete(self, k: int) -> OpResult:
        self._check_live()
        k = check_key(k)
        mon = self._monitor
        if mon is None:
            return self._delete_locked(k)
        mon.op_begin(Delete(k))
        try:
            result = self._delete_locked(k)
        except BaseException:
            mon.op_abort()
            raise
        mon.op_end()
        return result

    def _insert_locked(self, k: int, v: bytes) -> OpResult:
        mon = self._monitor
        cur = self._root
        self._acquire(cur, None, k)
        while True:
            body = cur.body
            if body is None:
                left, right = self._new_cell(), self._new_cell()
                if mon is not None:
                    mon.on_insert_at(
                        cur.node_id,
                        k,
                        value_digest(v),
                        left.node_id,
                        left.lock_id,
                        right.node_id,
                        right.lock_id,
                    )
                cur.body = _Body(k, v, left, right)
                if mon is not None:
                    mon.on_linearization(Insert(k, v), INSERT_DONE)
                self._release(cur)
                return INSERT_DONE
            if k < body.key:
                cur = self._step(cur, body.left, k)
            elif body.key < k:
                cur = self._step(cur, body.right, k)
            else:
                body.value = v
                if mon is not None:
                    mon.on_value_written(cur.node_id, value_digest(v))
                    mon.on_linearization(Insert(k, v), INSERT_DONE)
                self._release(cur)
                return INSERT_DONE

    def _lookup_locked(self, k: int) -> OpResult:
        mon = self._monitor
        cur = self._root
        self._acquire(cur, None, k)
        while True:
            body = cur.body
            if body is None:
                if mon is not None:
                    mon.on_linearization(Lookup(k), ABSENT)
                self._release(cur)
                return ABSENT
            if k < body.key:
                cur = self._step(cur, body.left, k)
            elif body.key < k:
                cur = self._step(cur, body.right, k)
            else:
                result = Found(body.value)
                if mon is not None:
                    mon.on_linearization(Lookup(k), result)
                self._release(cur)
                return result

    def _delete_locked(self, k: int) -> OpResult:
        mon = self._monitor
        cur = self._root
        self._acquire(cur, None, k)
        while True:
            body = cur.body
            if body is None:
                # empty leaf with k in range: k is absent, no-op delete
                if mon is not None:
                    mon.on_linearization(Delete(k), DELETE_DONE)
                self._release(cur)
                return DELETE_DONE
            if k < body.key:
                cur = self._step(cur, body.left, k)
            elif body.key < k:
                cur = self._step(cur, body.right, k)
            else:
                self._pushdown_left(cur, k)
                return DELETE_DONE

    # -- deletion internals ---------------------------------------------------

    def _pushdown_left(self, tgt: _Cell, k: int) -> None:
        """Rotate the node holding k down until its right child is empty, then splice.

        Entered holding tgt's lock; returns holding none. After each
        rotation the thread keeps the lock of the cell that now contains
        k and releases the rotated-up cell's lock.
        """
        mon = self._monitor
        while True:
            body = tgt.body
            rc = body.right
            self._acquire(rc, tgt, None)
            if rc.body is None:
                lc = body.left
                # right sentinel: we hold both halves of its lock, reclaim it
                if mon is not None:
                    mon.on_lock_destroyed(rc.lock_id)
                rc.dead = True
                self._acquire(lc, tgt, None)
                if mon is not None:
                    mon.on_splice(tgt.node_id)
                tgt.body = lc.body
                tgt.node_id = lc.node_id
                if mon is not None:
                    mon.on_linearization(Delete(k), DELETE_DONE)
                    mon.on_lock_destroyed(lc.lock_id)
                lc.dead = True
                self._release(tgt)
                return
            self._turn_left(tgt, rc)
            self._release(tgt)  # rotated-up node's lock
            tgt = rc  # cell that now holds the key under deletion

    def _turn_left(self, tgt: _Cell, rc: _Cell) -> None:
        """Left rotation under both locks; the parent's pointer to tgt is untouched.

        The two cells swap bodies: tgt's cell ends up holding the old right
        child's body (promoted), rc's cell holds the doomed key's body with
        the promoted node's former left subtree as its right child.
        """
        t_id, r_id = tgt.node_id, rc.node_id
        p, q = tgt.body, rc.body
        p.right = q.left
        q.left = rc
        tgt.body, rc.body = q, p
        tgt.node_id, rc.node_id = r_id, t_id
        if self._monitor is not None:
            self._monitor.on_rotate(t_id, r_id)

    # -- lifecycle and quiescent inspection -------------------------------------

    def destroy(self) -> None:
        """Reclaim every cell and lock; caller guarantees no operation is in flight."""
        self._check_live()
        mon = self._monitor
        stack = [self._root]
        while stack:
            cell = stack.pop()
            if cell.body is not None:
                stack.append(cell.body.left)
                stack.append(cell.body.right)
            if mon is not None:
                mon.on_destroy_reclaim(cell.lock_id, cell.node_id)
            cell.dead = True
        if mon is not None:
            mon.on_destroy_complete()
        self._destroyed = True

    def snapshot_items(self) -> dict[int, bytes]:
        """Current contents; only meaningful at quiescence."""
        self._check_live()
        out: dict[int, bytes] = {}
        stack = [self._root]
        while stack:
            body = stack.pop().body
            if body is not None:
                out[body.key] = body.value
                stack.append(body.left)
                stack.append(body.right)
        return out

    def physical_structure(self):
        """Nested (node_id, lock_id, body) view of the live cells, for the monitor."""
        self._check_live()

        def conv(cell: _Cell):
            if cell.body is None:
                return (cell.node_id, cell.lock_id, None)
            b = cell.body
            return (cell.node_id, cell.lock_id, (b.key, b.value, conv(b.left), conv(b.right)))

        return conv(self._root)
