"""Sequential reference semantics for the ordered map.

Everything else in the package is checked against this module: the
concurrent maps must behave, operation by operation, like `seq_insert`,
`seq_lookup` and `seq_delete` applied to a plain key->value map, and the
linearizability checker replays candidate orders through the same
functions.

Keys are 64-bit signed integers; values are opaque byte strings compared
byte-wise. Key ranges are open intervals over keys extended with -inf
and +inf.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

KEY_MIN = -(2**63)
KEY_MAX = 2**63 - 1

MAX_VALUE_LEN = 64


class OracleError(ValueError):
    """Invalid key/value/range handed to the reference semantics."""


def check_key(k: int) -> int:
    if not isinstance(k, int) or isinstance(k, bool) or not KEY_MIN <= k <= KEY_MAX:
        raise OracleError(f"key out of 64-bit signed range: {k!r}")
    return k


def check_value(v: bytes, max_len: int = MAX_VALUE_LEN) -> bytes:
    if not isinstance(v, (bytes, bytearray)):
        raise OracleError(f"value must be bytes, got {type(v).__name__}")
    if len(v) > max_len:
        raise OracleError(f"value length {len(v)} exceeds limit {max_len}")
    return bytes(v)


# ---------------------------------------------------------------------------
# Bounds and ranges
# ---------------------------------------------------------------------------

_NEG, _FIN, _POS = -1, 0, 1


@dataclass(frozen=True)
class Bound:
    """Extended key: -inf, a finite key, or +inf.

    Total order: NegInf < Finite(a) < PosInf, with finite bounds ordered
    by key. The (tag, key) tuple gives exactly that order.
    """

    tag: int
    key: int = 0

    def _tuple(self) -> tuple[int, int]:
        return (self.tag, self.key)

    def __lt__(self, other: "Bound") -> bool:
        return self._tuple() < other._tuple()

    def __le__(self, other: "Bound") -> bool:
        return self._tuple() <= other._tuple()

    def __str__(self) -> str:
        if self.tag == _NEG:
            return "-inf"
        if self.tag == _POS:
            return "+inf"
        return str(self.key)


NEG_INF = Bound(_NEG)
POS_INF = Bound(_POS)


def finite(k: int) -> Bound:
    return Bound(_FIN, check_key(k))


@dataclass(frozen=True)
class KeyRange:
    """Open interval (lower, upper); membership is lower < k < upper."""

    lower: Bound
    upper: Bound

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise OracleError(f"degenerate range ({self.lower},{self.upper})")

    def contains(self, k: int) -> bool:
        b = finite(k)
        return self.lower < b and b < self.upper

    def encloses(self, other: "KeyRange") -> bool:
        """True iff other is a sub-interval of self (widen goes the other way)."""
        return self.lower <= other.lower and other.upper <= self.upper

    def split(self, k: int) -> tuple["KeyRange", "KeyRange"]:
        """Child ranges for a node with key k: (lower,k) and (k,upper)."""
        if not self.contains(k):
            raise OracleError(f"key {k} not inside {self}")
        b = finite(k)
        return KeyRange(self.lower, b), KeyRange(b, self.upper)

    def __str__(self) -> str:
        return f"({self.lower},{self.upper})"


FULL_RANGE = KeyRange(NEG_INF, POS_INF)


# ---------------------------------------------------------------------------
# Operations and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Insert:
    key: int
    value: bytes


@dataclass(frozen=True)
class Lookup:
    key: int


@dataclass(frozen=True)
class Delete:
    key: int


Operation = Insert | Lookup | Delete


@dataclass(frozen=True)
class InsertDone:
    pass


@dataclass(frozen=True)
class Found:
    value: bytes


@dataclass(frozen=True)
class Absent:
    pass


@dataclass(frozen=True)
class DeleteDone:
    pass


OpResult = InsertDone | Found | Absent | DeleteDone

INSERT_DONE = InsertDone()
ABSENT = Absent()
DELETE_DONE = DeleteDone()


def op_to_json(op: Operation) -> dict:
    if isinstance(op, Insert):
        return {"type": "insert", "key": op.key, "value": op.value.hex()}
    if isinstance(op, Lookup):
        return {"type": "lookup", "key": op.key}
    if isinstance(op, Delete):
        return {"type": "delete", "key": op.key}
    raise OracleError(f"not an operation: {op!r}")


def op_from_json(d: dict) -> Operation:
    t = d.get("type")
    if t == "insert":
        return Insert(check_key(d["key"]), bytes.fromhex(d["value"]))
    if t == "lookup":
        return Lookup(check_key(d["key"]))
    if t == "delete":
        return Delete(check_key(d["key"]))
    raise OracleError(f"unknown operation type {t!r}")


def result_to_json(r: OpResult) -> dict:
    if isinstance(r, InsertDone):
        return {"type": "insert_done"}
    if isinstance(r, Found):
        return {"type": "found", "value": r.value.hex()}
    if isinstance(r, Absent):
        return {"type": "absent"}
    if isinstance(r, DeleteDone):
        return {"type": "delete_done"}
    raise OracleError(f"not a result: {r!r}")


def result_from_json(d: dict) -> OpResult:
    t = d.get("type")
    if t == "insert_done":
        return INSERT_DONE
    if t == "found":
        return Found(bytes.fromhex(d["value"]))
    if t == "absent":
        return ABSENT
    if t == "delete_done":
        return DELETE_DONE
    raise OracleError(f"unknown result type {t!r}")


# ---------------------------------------------------------------------------
# Map semantics
# ---------------------------------------------------------------------------
#
# The abstract map is a plain dict[int, bytes] treated as immutable by the
# seq_* functions (they return fresh dicts). `apply_op`/`undo_op` provide
# the same transitions in-place for replay loops that cannot afford a copy
# per step (the linearizability search, large oracle folds).


def seq_insert(m: dict[int, bytes], k: int, v: bytes) -> dict[int, bytes]:
    """m[k := v]; overwrites any existing binding, all others unchanged."""
    out = dict(m)
    out[check_key(k)] = check_value(v)
    return out


def seq_lookup(m: dict[int, bytes], k: int) -> bytes | None:
    return m.get(check_key(k))


def seq_delete(m: dict[int, bytes], k: int) -> dict[int, bytes]:
    """m without k; deleting an absent key is a no-op."""
    out = dict(m)
    out.pop(check_key(k), None)
    return out


def apply_op(m: dict[int, bytes], op: Operation) -> tuple[OpResult, bytes | None]:
    """Apply op to m in place; return (oracle result, undo token).

    The undo token is the previous binding of op.key (None if unbound),
    sufficient to reverse the mutation via `undo_op`.
    """
    prev = m.get(op.key)
    if isinstance(op, Insert):
        m[op.key] = op.value
        return INSERT_DONE, prev
    if isinstance(op, Lookup):
        return (Found(prev) if prev is not None else ABSENT), prev
    if isinstance(op, Delete):
        m.pop(op.key, None)
        return DELETE_DONE, prev
    raise OracleError(f"not an operation: {op!r}")


def undo_op(m: dict[int, bytes], op: Operation, token: bytes | None) -> None:
    if token is None:
        m.pop(op.key, None)
    else:
        m[op.key] = token


def replay(ops: list[Operation]) -> tuple[dict[int, bytes], list[OpResult]]:
    """Fold a sequence of operations over the empty map."""
    m: dict[int, bytes] = {}
    results = [apply_op(m, op)[0] for op in ops]
    return m, results


# ---------------------------------------------------------------------------
# Digests
# ---------------------------------------------------------------------------


def value_digest(v: bytes) -> int:
    """Stable 64-bit digest of a value payload."""
    return int.from_bytes(hashlib.blake2b(v, digest_size=8).digest(), "big")


def canonical_state(m: dict[int, bytes]) -> tuple[tuple[int, bytes], ...]:
    """Canonical form of a map state: key-sorted item tuple (exact, hashable)."""
    return tuple(sorted(m.items()))


def map_digest(m: dict[int, bytes]) -> int:
    """64-bit digest of the canonical serialization of a map state."""
    h = hashlib.blake2b(digest_size=8)
    for k, v in sorted(m.items()):
        h.update(str(k).encode())
        h.update(b"=")
        h.update(v)
        h.update(b";")
    return int.from_bytes(h.digest(), "big")
