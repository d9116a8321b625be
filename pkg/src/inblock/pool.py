"""Sparse (bisection) allocation over a single managed prefix.

The pool is a binary tree of prefixes.  Every node is Free, Split or
Allocated; children exist only under Split nodes and are created on demand,
so a /20 pool carved into /48s never materializes untouched subtrees.

Placement rule for a fresh request of length L: among Free nodes of length
<= L pick the shortest (largest free aggregate), lowest address on ties,
then descend through lower halves until length L.  This keeps the most
room around every allocation for later contiguous growth.
"""

from __future__ import annotations

from collections import Counter
from fractions import Fraction

from sortedcontainers import SortedSet

from .prefix import LengthOutOfRange, Prefix, buddy, contains, parent, split

FREE = "free"
SPLIT = "split"
ALLOCATED = "allocated"


class PoolError(Exception):
    pass


class PoolExhausted(PoolError):
    pass


class NotAllocated(PoolError):
    pass


class NotFree(PoolError):
    pass


class PoolState:
    def __init__(self, root: Prefix):
        self.root = root
        self._nodes: dict[Prefix, str] = {}
        self._free: dict[int, SortedSet] = {}
        self._set(root, FREE)

    # -- bookkeeping -------------------------------------------------------

    def _set(self, node: Prefix, state: str | None) -> None:
        old = self._nodes.get(node)
        if old == FREE:
            self._free[node.length].discard(node.address)
        if state is None:
            del self._nodes[node]
            return
        self._nodes[node] = state
        if state == FREE:
            self._free.setdefault(node.length, SortedSet()).add(node.address)

    def _check_length(self, length: int) -> None:
        if not self.root.length < length <= self.root.width:
            raise LengthOutOfRange(
                f"/{length} cannot be carved from {self.root}")

    def _carve(self, node: Prefix, target: Prefix) -> None:
        # node is Free and contains target
        while node != target:
            self._set(node, SPLIT)
            lower, upper = split(node)
            if contains(lower, target):
                node, other = lower, upper
            else:
                node, other = upper, lower
            self._set(other, FREE)
        self._set(target, ALLOCATED)

    def _covering(self, p: Prefix) -> tuple[Prefix, str] | None:
        """Deepest existing node containing ``p``."""
        if not contains(self.root, p):
            return None
        node = self.root
        while True:
            state = self._nodes[node]
            if state != SPLIT or node == p:
                return node, state
            lower, upper = split(node)
            node = lower if contains(lower, p) else upper

    # -- queries -----------------------------------------------------------

    def state_of(self, p: Prefix) -> str | None:
        return self._nodes.get(p)

    def is_free(self, p: Prefix) -> bool:
        """True if the whole range of ``p`` is unallocated."""
        found = self._covering(p)
        return found is not None and found[1] == FREE

    def is_allocated(self, p: Prefix) -> bool:
        return self._nodes.get(p) == ALLOCATED

    def allocated(self) -> list[Prefix]:
        return sorted(p for p, s in self._nodes.items() if s == ALLOCATED)

    def free_nodes(self) -> list[Prefix]:
        return sorted(p for p, s in self._nodes.items() if s == FREE)

    def nodes(self) -> dict[Prefix, str]:
        return dict(self._nodes)

    def utilization(self) -> tuple[dict[int, int], Fraction]:
        """Allocated node counts per length, and the free share of the root."""
        counts = Counter(p.length for p, s in self._nodes.items() if s == ALLOCATED)
        free = sum(p.size for p, s in self._nodes.items() if s == FREE)
        return dict(sorted(counts.items())), Fraction(free, self.root.size)

    # -- transitions -------------------------------------------------------

    def best_free_node(self, length: int) -> Prefix | None:
        """Shortest Free node able to host a /length, lowest address first."""
        for free_len in sorted(self._free):
            if free_len > length:
                break
            addrs = self._free[free_len]
            if addrs:
                return Prefix(addrs[0], free_len, self.root.width)
        return None

    def allocate_sparse(self, length: int) -> Prefix:
        self._check_length(length)
        host = self.best_free_node(length)
        if host is None:
            raise PoolExhausted(f"no free space for a /{length} in {self.root}")
        target = Prefix(host.address, length, host.width)
        self._carve(host, target)
        return target

    def allocate_at(self, p: Prefix) -> Prefix:
        """Allocate exactly ``p``; it must be entirely free."""
        self._check_length(p.length)
        found = self._covering(p)
        if found is None or found[1] != FREE:
            raise NotFree(f"{p} is not entirely free")
        self._carve(found[0], p)
        return p

    def allocate_contiguous(self, existing: Prefix) -> tuple[Prefix, bool]:
        """Allocate the buddy of ``existing`` if free.

        Returns ``(prefix, aggregatable)``.  When the buddy is taken the
        request falls back to sparse placement and ``aggregatable`` is False.
        """
        if not self.is_allocated(existing):
            raise NotAllocated(f"{existing} is not allocated")
        if existing != self.root:
            b = buddy(existing)
            if self._nodes.get(b) == FREE:
                self._set(b, ALLOCATED)
                return b, True
        return self.allocate_sparse(existing.length), False

    def release(self, p: Prefix) -> None:
        if self._nodes.get(p) != ALLOCATED:
            raise NotAllocated(f"{p} is not allocated")
        self._set(p, FREE)
        node = p
        while node != self.root:
            sibling = buddy(node)
            if self._nodes.get(sibling) != FREE:
                break
            self._set(node, None)
            self._set(sibling, None)
            node = parent(node)
            self._set(node, FREE)

    # -- value semantics ---------------------------------------------------

    def copy(self) -> PoolState:
        clone = PoolState.__new__(PoolState)
        clone.root = self.root
        clone._nodes = dict(self._nodes)
        clone._free = {k: SortedSet(v) for k, v in self._free.items()}
        return clone

    @classmethod
    def from_allocated(cls, root: Prefix, allocated) -> PoolState:
        """Rebuild the canonical tree holding exactly ``allocated``."""
        pool = cls(root)
        for p in sorted(allocated):
            pool.allocate_at(p)
        return pool

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoolState):
            return NotImplemented
        return self.root == other.root and self._nodes == other._nodes

    def __repr__(self) -> str:
        counts, free = self.utilization()
        return f"PoolState({self.root}, allocated={counts}, free={free})"
