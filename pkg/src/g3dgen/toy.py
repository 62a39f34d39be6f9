"""Hand-built small-molecule geometries for smoke runs and overfit experiments."""
from __future__ import annotations

import numpy as np

from .dataio import MoleculeRecord

TETRAHEDRAL = np.degrees(np.arccos(-1.0 / 3.0))


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _perp(axis):
    trial = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return _unit(np.cross(axis, trial))


def cone(axis, angle_deg: float, n: int, phase_deg: float = 0.0):
    """``n`` unit vectors at ``angle_deg`` from ``axis``, evenly spaced around it."""
    axis = _unit(axis)
    a = _perp(axis)
    b = np.cross(axis, a)
    th = np.radians(angle_deg)
    out = []
    for k in range(n):
        phi = np.radians(phase_deg) + 2 * np.pi * k / n
        out.append(np.cos(th) * axis + np.sin(th) * (np.cos(phi) * a + np.sin(phi) * b))
    return np.array(out)


def methane() -> MoleculeRecord:
    dirs = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
    return MoleculeRecord(["C"] + ["H"] * 4, np.vstack([np.zeros(3), 1.09 * dirs]))


def ammonia() -> MoleculeRecord:
    # H-N-H of 106.7 deg puts each N-H at ~112.2 deg from the C3 axis
    hnh = np.radians(106.7)
    tilt = np.degrees(np.arccos(-np.sqrt((1 + 2 * np.cos(hnh)) / 3)))
    h = 1.01 * cone([0, 0, 1], tilt, 3)
    return MoleculeRecord(["N", "H", "H", "H"], np.vstack([np.zeros(3), h]))


def water() -> MoleculeRecord:
    half = np.radians(104.5 / 2)
    h = 0.96 * np.array([[np.sin(half), 0, np.cos(half)], [-np.sin(half), 0, np.cos(half)]])
    return MoleculeRecord(["O", "H", "H"], np.vstack([np.zeros(3), h]))


def ethane() -> MoleculeRecord:
    c1, c2 = np.zeros(3), np.array([0, 0, 1.54])
    h1 = c1 + 1.09 * cone([0, 0, -1], 180 - TETRAHEDRAL, 3, 0.0)
    h2 = c2 + 1.09 * cone([0, 0, 1], 180 - TETRAHEDRAL, 3, 60.0)
    return MoleculeRecord(["C", "C"] + ["H"] * 6, np.vstack([c1, c2, h1, h2]))


def methylamine() -> MoleculeRecord:
    c, n = np.zeros(3), np.array([0, 0, 1.47])
    hc = c + 1.09 * cone([0, 0, -1], 180 - TETRAHEDRAL, 3, 0.0)
    # two N-H bonds of a tetrahedral nitrogen, staggered against the methyl group
    hn = n + 1.01 * cone([0, 0, 1], 180 - TETRAHEDRAL, 3, 60.0)[:2]
    return MoleculeRecord(["C", "N"] + ["H"] * 5, np.vstack([c, n, hc, hn]))


def toy_set() -> list[MoleculeRecord]:
    return [methane(), ammonia(), water(), ethane(), methylamine()]
