"""Radial and angular distribution functions over corpora of structures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..geometry import PointSet
from .bonds import BondGraph, perceive_bonds


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        """Normalized to unit area; all zeros for an empty histogram."""
        if self.total == 0:
            return np.zeros(len(self.counts))
        return self.counts / (self.total * np.diff(self.edges))

    def merged(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("histograms use different bins")
        return Histogram(self.edges, self.counts + other.counts)

    def to_text(self) -> str:
        return "".join(f"{c:.6f} {d:.9g}\n" for c, d in zip(self.centers, self.density))


def _edges(lo: float, hi: float, width: float) -> np.ndarray:
    if width <= 0:
        raise ValueError("bin width must be positive")
    n = max(1, int(math.ceil((hi - lo) / width - 1e-9)))
    return lo + np.arange(n + 1) * width


def rdf(structures: Iterable[PointSet], pair: tuple[str, str], bin_width: float = 0.1,
        r_max: float = 10.0) -> Histogram:
    edges = _edges(0.0, r_max, bin_width)
    a, b = pair
    dists = []
    for s in structures:
        els = np.array(s.atom_types)
        pos = s.atom_positions
        ia, ib = np.nonzero(els == a)[0], np.nonzero(els == b)[0]
        if not len(ia) or not len(ib):
            continue
        d = np.sqrt(((pos[ia][:, None] - pos[ib][None]) ** 2).sum(-1))
        if a == b:
            d = d[np.triu_indices(len(ia), k=1)]
        dists.append(d.ravel())
    values = np.concatenate(dists) if dists else np.zeros(0)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts)


def bond_angles(structure: PointSet, bonds: BondGraph, triple: tuple[str, str, str]) -> list[float]:
    a, b, c = triple
    els = structure.atom_types
    pos = structure.atom_positions
    adj = bonds.adjacency()
    out = []
    for j, el in enumerate(els):
        if el != b:
            continue
        nb = adj[j]
        for x in range(len(nb)):
            for y in range(x + 1, len(nb)):
                i, k = nb[x], nb[y]
                if (els[i], els[k]) not in ((a, c), (c, a)):
                    continue
                u, v = pos[i] - pos[j], pos[k] - pos[j]
                cos = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
                out.append(float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))))
    return out


def adf(structures: Iterable, triple: tuple[str, str, str], bin_width: float = 1.0) -> Histogram:
    """Angles at the middle atom of bonded chains; items may be (structure, bonds) pairs."""
    edges = _edges(0.0, 180.0, bin_width)
    edges[-1] = 180.0
    angles = []
    for item in structures:
        s, g = item if isinstance(item, tuple) else (item, perceive_bonds(item))
        if g is None:
            continue
        angles += bond_angles(s, g, triple)
    counts, _ = np.histogram(np.array(angles), bins=edges)
    return Histogram(edges, counts)
