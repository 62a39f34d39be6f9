"""RMSD between two structures of the same constitution, minimized over atom correspondences."""
from __future__ import annotations

import math

import networkx as nx
import numpy as np
from networkx.algorithms.isomorphism import GraphMatcher

from ..geometry import PointSet, kabsch_rmsd
from .bonds import BondGraph


def _nx(g: BondGraph) -> nx.Graph:
    h = nx.Graph()
    for i, e in enumerate(g.elements):
        h.add_node(i, element=e)
    for (i, j), o in g.bonds.items():
        h.add_edge(i, j, order=o)
    return h


def matched_rmsd(a: PointSet, ga: BondGraph, b: PointSet, gb: BondGraph,
                 max_mappings: int = 100_000) -> float:
    """Smallest Kabsch RMSD over all bond-graph isomorphisms; inf if none exists."""
    if ga.n_atoms != gb.n_atoms:
        return math.inf
    matcher = GraphMatcher(
        _nx(ga), _nx(gb),
        node_match=lambda x, y: x["element"] == y["element"],
        edge_match=lambda x, y: x["order"] == y["order"],
    )
    best = math.inf
    pa = a.atoms()
    for k, mapping in enumerate(matcher.isomorphisms_iter()):
        if k >= max_mappings:
            break
        order = [mapping[i] for i in range(ga.n_atoms)]
        pb = PointSet(b.atom_positions[order], [b.atom_types[i] for i in order])
        best = min(best, kabsch_rmsd(pa, pb))
    return best
