"""Smallest set of smallest rings and its symmetrized variant.

Candidate rings are built from pairs of shortest paths out of every root,
which is enough to contain every ring of every minimum cycle basis.  Rings
are then selected by Gaussian elimination over GF(2) on edge bitmasks.
"""
from __future__ import annotations

from collections import deque

from .bonds import BondGraph

RING_KEYS = ("R3", "R4", "R5", "R6", "R7+")


def _adjacency(g) -> list[list[int]]:
    return g.adjacency() if isinstance(g, BondGraph) else [sorted(a) for a in g]


def cycle_rank(g) -> int:
    adj = _adjacency(g)
    n_edges = sum(len(a) for a in adj) // 2
    seen, comps = set(), 0
    for s in range(len(adj)):
        if s in seen:
            continue
        comps += 1
        stack = [s]
        seen.add(s)
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
    return n_edges - len(adj) + comps


def _shortest_paths(adj, root):
    dist = {root: 0}
    preds: dict[int, list[int]] = {root: []}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                preds[u] = [v]
                queue.append(u)
            elif dist[u] == dist[v] + 1:
                preds[u].append(v)
    memo: dict[int, list[tuple[int, ...]]] = {root: [(root,)]}

    def paths(v):
        if v not in memo:
            memo[v] = [p + (v,) for w in sorted(preds[v]) for p in paths(w)]
        return memo[v]

    return dist, paths


def _edges_of(cycle: tuple[int, ...]) -> frozenset:
    n = len(cycle)
    return frozenset(
        (min(cycle[k], cycle[(k + 1) % n]), max(cycle[k], cycle[(k + 1) % n])) for k in range(n)
    )


def candidate_cycles(g) -> list[frozenset]:
    """Edge sets of all cycles made of two shortest paths from a common root."""
    adj = _adjacency(g)
    found: set[frozenset] = set()
    for r in range(len(adj)):
        dist, paths = _shortest_paths(adj, r)
        for v in dist:
            # odd rings: edge (v, y) on the far side
            for y in adj[v]:
                if v < y and dist.get(y) == dist[v] and dist[v] > 0:
                    for p in paths(v):
                        for q in paths(y):
                            if set(p) & set(q) == {r}:
                                found.add(_edges_of(p + q[::-1][:-1]))
            # even rings: vertex v on the far side
            inner = sorted(x for x in adj[v] if dist.get(x) == dist[v] - 1)
            for a in range(len(inner)):
                for b in range(a + 1, len(inner)):
                    for p in paths(inner[a]):
                        for q in paths(inner[b]):
                            if set(p) & set(q) == {r}:
                                found.add(_edges_of(p + (v,) + q[::-1][:-1]))
    return sorted(found, key=lambda c: (len(c), sorted(c)))


class _GF2Basis:
    def __init__(self):
        self.rows: dict[int, int] = {}

    def reduce(self, x: int) -> int:
        while x:
            top = x.bit_length() - 1
            row = self.rows.get(top)
            if row is None:
                return x
            x ^= row
        return 0

    def add(self, x: int) -> bool:
        x = self.reduce(x)
        if x:
            self.rows[x.bit_length() - 1] = x
            return True
        return False


def _bitmasks(cycles):
    index: dict[tuple[int, int], int] = {}
    masks = []
    for c in cycles:
        m = 0
        for e in sorted(c):
            m |= 1 << index.setdefault(e, len(index))
        masks.append(m)
    return masks


def sssr(g) -> list[frozenset]:
    """A minimum cycle basis, greedily from the shortest candidates."""
    cycles = candidate_cycles(g)
    rank = cycle_rank(g)
    basis, chosen = _GF2Basis(), []
    for c, m in zip(cycles, _bitmasks(cycles)):
        if len(chosen) == rank:
            break
        if basis.add(m):
            chosen.append(c)
    return chosen


def relevant_cycles(g) -> list[frozenset]:
    """Rings that are not a sum of strictly smaller rings (the union of all minimum bases)."""
    cycles = candidate_cycles(g)
    masks = _bitmasks(cycles)
    basis, out = _GF2Basis(), []
    k = 0
    while k < len(cycles):
        size = len(cycles[k])
        group = [i for i in range(k, len(cycles)) if len(cycles[i]) == size]
        out += [cycles[i] for i in group if basis.reduce(masks[i])]
        for i in group:
            basis.add(masks[i])
        k = group[-1] + 1
    return out


def size_histogram(cycles) -> dict[str, int]:
    counts = dict.fromkeys(RING_KEYS, 0)
    for c in cycles:
        n = len(c)
        if n >= 7:
            counts["R7+"] += 1
        elif n >= 3:
            counts[f"R{n}"] += 1
    return counts


def ring_counts(g) -> dict[str, int]:
    """Symmetrized SSSR ring counts by size."""
    return size_histogram(relevant_cycles(g))


def sssr_counts(g) -> dict[str, int]:
    return size_histogram(sssr(g))
