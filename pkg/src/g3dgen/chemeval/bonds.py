"""Bond perception from covalent radii plus exact-valence bond order assignment."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..elements import BOND_TOLERANCE, COVALENT_RADII, VALENCES
from ..geometry import PointSet, pairwise_distances

VALENCE_TABLE = VALENCES


@dataclass
class BondGraph:
    elements: list[str]
    bonds: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (i, j), o in self.bonds.items():
            if i == j:
                raise ValueError("self bond")
            if int(o) < 1:
                raise ValueError("bond orders must be positive")
            clean[(min(i, j), max(i, j))] = int(o)
        self.bonds = dict(sorted(clean.items()))

    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.bonds)

    def neighbors(self, i: int) -> list[int]:
        return self.adjacency()[i]

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.elements]
        for i, j in self.bonds:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def order(self, i: int, j: int) -> int:
        return self.bonds.get((min(i, j), max(i, j)), 0)

    def order_sum(self, i: int) -> int:
        return sum(o for (a, b), o in self.bonds.items() if i in (a, b))

    def components(self) -> list[list[int]]:
        adj = self.adjacency()
        seen = [False] * self.n_atoms
        comps = []
        for s in range(self.n_atoms):
            if seen[s]:
                continue
            seen[s] = True
            comp, queue = [], deque([s])
            while queue:
                v = queue.popleft()
                comp.append(v)
                for u in adj[v]:
                    if not seen[u]:
                        seen[u] = True
                        queue.append(u)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n_atoms > 0 and len(self.components()) == 1

    @classmethod
    def from_edges(cls, elements, edges) -> "BondGraph":
        """``edges`` as (i, j) or (i, j, order) tuples."""
        bonds = {}
        for e in edges:
            i, j = e[0], e[1]
            bonds[(i, j)] = e[2] if len(e) > 2 else 1
        return cls(list(elements), bonds)


def candidate_bonds(structure: PointSet, tolerance: float = BOND_TOLERANCE) -> list[tuple[int, int]]:
    els = structure.atom_types
    if not els:
        return []
    d = pairwise_distances(structure.atom_positions)
    radii = np.array([COVALENT_RADII[e] for e in els])
    limit = radii[:, None] + radii[None, :] + tolerance
    i, j = np.nonzero(np.triu(d <= limit, k=1))
    return list(zip(i.tolist(), j.tolist()))


def assign_orders(elements, edges, valences=VALENCES) -> dict[tuple[int, int], int] | None:
    """First order assignment (1..3 per edge) matching every valence exactly, or None."""
    n = len(elements)
    rem = [valences[e] for e in elements]
    deg = [0] * n
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    if any(not (deg[k] <= rem[k] <= 3 * deg[k]) for k in range(n)):
        return None
    slack = [rem[k] - deg[k] for k in range(n)]
    edges = sorted(edges, key=lambda e: (min(slack[e[0]], slack[e[1]]), e))
    left = deg[:]
    orders: dict[tuple[int, int], int] = {}

    def ok(k):
        return left[k] <= rem[k] <= 3 * left[k]

    def search(pos: int) -> bool:
        if pos == len(edges):
            return all(r == 0 for r in rem)
        i, j = edges[pos]
        left[i] -= 1
        left[j] -= 1
        for o in (1, 2, 3):
            if o > rem[i] or o > rem[j]:
                break
            rem[i] -= o
            rem[j] -= o
            if ok(i) and ok(j) and search(pos + 1):
                orders[(i, j)] = o
                return True
            rem[i] += o
            rem[j] += o
        left[i] += 1
        left[j] += 1
        return False

    return orders if search(0) else None


def perceive_bonds(structure: PointSet, tolerance: float = BOND_TOLERANCE) -> BondGraph | None:
    """Bonds with integer orders for an atoms-only structure, None if no assignment exists."""
    els = structure.atom_types
    if not els or any(e not in VALENCES for e in els):
        return None
    orders = assign_orders(els, candidate_bonds(structure, tolerance))
    if orders is None:
        return None
    return BondGraph(els, orders)


@dataclass(frozen=True)
class Validity:
    valid: bool
    reason: str | None = None
    bonds: BondGraph | None = None

    def __bool__(self) -> bool:
        return self.valid


def check_validity(structure: PointSet) -> Validity:
    els = structure.atom_types
    if not els:
        return Validity(False, "empty")
    unknown = sorted({e for e in els if e not in VALENCES})
    if unknown:
        return Validity(False, f"unknown element {unknown[0]}")
    g = perceive_bonds(structure)
    if g is None:
        return Validity(False, "valence")
    if not g.is_connected():
        return Validity(False, "disconnected", g)
    return Validity(True, None, g)
