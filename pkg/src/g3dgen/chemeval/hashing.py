"""Canonical labeling of bond graphs by color refinement and individualization.

Terminal atoms hanging off a non-terminal atom are folded into that atom's
label first, so interchangeable hydrogens never branch the search.
"""
from __future__ import annotations

import hashlib

from .bonds import BondGraph


def _fold_leaves(g: BondGraph):
    adj = g.adjacency()
    deg = [len(a) for a in adj]
    leaf = [deg[v] == 1 and deg[adj[v][0]] >= 2 for v in range(g.n_atoms)]
    keep = [v for v in range(g.n_atoms) if not leaf[v]]
    new_id = {v: k for k, v in enumerate(keep)}
    hanging: dict[int, list] = {v: [] for v in keep}
    for v in range(g.n_atoms):
        if leaf[v]:
            u = adj[v][0]
            hanging[u].append((g.elements[v], g.order(u, v)))
    labels = [(g.elements[v], tuple(sorted(hanging[v]))) for v in keep]
    edges = {(new_id[i], new_id[j]): o for (i, j), o in g.bonds.items()
             if not leaf[i] and not leaf[j]}
    return labels, edges


def _refine(colors: list[int], nbrs) -> list[int]:
    n_cells = len(set(colors))
    while True:
        sig = [(colors[v], tuple(sorted((colors[u], o) for u, o in nbrs[v])))
               for v in range(len(colors))]
        ranks = {s: k for k, s in enumerate(sorted(set(sig)))}
        colors = [ranks[s] for s in sig]
        if len(ranks) == n_cells:
            return colors
        n_cells = len(ranks)


def canonical_form(g: BondGraph):
    labels, edges = _fold_leaves(g)
    n = len(labels)
    nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for (i, j), o in edges.items():
        nbrs[i].append((j, o))
        nbrs[j].append((i, o))
    label_rank = {lab: k for k, lab in enumerate(sorted(set(labels)))}
    best = None

    def certificate(colors):
        return (
            tuple(lab for _, lab in sorted(zip(colors, labels))),
            tuple(sorted((min(colors[i], colors[j]), max(colors[i], colors[j]), o)
                         for (i, j), o in edges.items())),
        )

    def search(colors):
        nonlocal best
        colors = _refine(colors, nbrs)
        if len(set(colors)) == n:
            cert = certificate(colors)
            if best is None or cert < best:
                best = cert
            return
        sizes: dict[int, int] = {}
        for c in colors:
            sizes[c] = sizes.get(c, 0) + 1
        target = min(c for c, s in sizes.items() if s > 1)
        for v in range(n):
            if colors[v] == target:
                search([2 * c + (1 if c == target and u != v else 0)
                        for u, c in enumerate(colors)])

    search([label_rank[lab] for lab in labels])
    return best


def canonical_hash(g: BondGraph) -> str:
    form = canonical_form(g)
    return hashlib.sha256(repr(form).encode()).hexdigest()
