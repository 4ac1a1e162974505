"""Pure binary search trees and range annotation.

The abstract tree is the structural counterpart of the abstract map: a
sorted binary tree "implements" a map when its key-value pairs are
exactly the map's bindings, regardless of shape. Range annotation
derives, for every position in the tree, the open interval of keys that
may legally live in that subtree; the ranges of the empty leaf positions
partition the keys absent from the tree.
"""

from __future__ import annotations

from dataclasses import dataclass

from .oracle import FULL_RANGE, KeyRange, OracleError


class Leaf:
    """Empty tree position (singleton: use LEAF)."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "Leaf"


LEAF = Leaf()


@dataclass(frozen=True)
class Node:
    key: int
    value: object
    left: "Node | Leaf"
    right: "Node | Leaf"
    id: int | None = None


Tree = Node | Leaf


class RangeViolation(OracleError):
    """A key fell outside the range derived for its position."""


@dataclass(frozen=True)
class AnnotLeaf:
    range: KeyRange


@dataclass(frozen=True)
class AnnotNode:
    key: int
    value: object
    range: KeyRange
    left: "AnnotNode | AnnotLeaf"
    right: "AnnotNode | AnnotLeaf"


Annotated = AnnotNode | AnnotLeaf


def annotate_ranges(t: Tree, r: KeyRange = FULL_RANGE) -> Annotated:
    """Attach to every position its derived range, starting from r at the root.

    A node with key k and range (i,j) passes (i,k) to its left child and
    (k,j) to its right child. Raises RangeViolation if any key falls
    outside the range derived for it, i.e. if the tree is not sorted
    within r.
    """
    if isinstance(t, Leaf):
        return AnnotLeaf(r)
    if not r.contains(t.key):
        raise RangeViolation(f"key {t.key} outside derived range {r}")
    left_r, right_r = r.split(t.key)
    return AnnotNode(
        t.key, t.value, r, annotate_ranges(t.left, left_r), annotate_ranges(t.right, right_r)
    )


def ranges_by_key(a: Annotated) -> dict[int, KeyRange]:
    """Map each internal key to its annotated range (keys are unique in a sorted tree)."""
    out: dict[int, KeyRange] = {}

    def walk(n: Annotated) -> None:
        if isinstance(n, AnnotNode):
            out[n.key] = n.range
            walk(n.left)
            walk(n.right)

    walk(a)
    return out


def leaf_ranges(t: Tree) -> list[KeyRange]:
    """Ranges of all empty leaf positions, in-order.

    Together these partition the set of keys absent from the tree: every
    absent key lies in exactly one of them, every present key in none.
    """
    out: list[KeyRange] = []

    def walk(n: Annotated) -> None:
        if isinstance(n, AnnotLeaf):
            out.append(n.range)
        else:
            walk(n.left)
            walk(n.right)

    walk(annotate_ranges(t))
    return out


def is_sorted(t: Tree) -> bool:
    try:
        annotate_ranges(t)
    except RangeViolation:
        return False
    return True


def tree_items(t: Tree) -> list[tuple[int, object]]:
    """In-order key-value pairs."""
    out: list[tuple[int, object]] = []

    def walk(n: Tree) -> None:
        if isinstance(n, Node):
            walk(n.left)
            out.append((n.key, n.value))
            walk(n.right)

    walk(t)
    return out


def node_ids(t: Tree) -> list[int]:
    out: list[int] = []

    def walk(n: Tree) -> None:
        if isinstance(n, Node):
            if n.id is not None:
                out.append(n.id)
            walk(n.left)
            walk(n.right)

    walk(t)
    return out


def tree_implements(t: Tree, m: dict[int, object]) -> bool:
    """True iff t is sorted and its key-value pairs are exactly m's bindings.

    Shape-independent: any sorted rearrangement of the same pairs
    implements the same map. Nodes carrying ids must all be distinct.
    """
    if not is_sorted(t):
        return False
    ids = node_ids(t)
    if len(ids) != len(set(ids)):
        return False
    return dict(tree_items(t)) == dict(m)


def tree_insert(t: Tree, k: int, v: object) -> Tree:
    """Standard unbalanced BST insert (pure); equal key overwrites the value."""
    if isinstance(t, Leaf):
        return Node(k, v, LEAF, LEAF)
    if k < t.key:
        return Node(t.key, t.value, tree_insert(t.left, k, v), t.right, t.id)
    if t.key < k:
        return Node(t.key, t.value, t.left, tree_insert(t.right, k, v), t.id)
    return Node(t.key, v, t.left, t.right, t.id)


def build_tree(items: list[tuple[int, object]]) -> Tree:
    t: Tree = LEAF
    for k, v in items:
        t = tree_insert(t, k, v)
    return t
