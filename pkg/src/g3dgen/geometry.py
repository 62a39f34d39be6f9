"""Point sets, auxiliary tokens, distance discretization and rigid-motion helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

STOP = "stop"
FOCUS = "focus"
ORIGIN = "origin"


@dataclass(frozen=True)
class TypeVocabulary:
    """Element codes plus the stop / focus / origin sentinels.

    Embedding indices are laid out as ``elements + (stop, focus, origin)``.
    """

    elements: tuple[str, ...] = ("H", "C", "N", "O", "F")
    stop_type: str = STOP
    focus_type: str = FOCUS
    origin_type: str = ORIGIN
    use_origin_token: bool = True

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        codes = list(self.elements) + [self.stop_type, self.focus_type, self.origin_type]
        if len(set(codes)) != len(codes):
            raise ValueError(f"vocabulary codes must be distinct: {codes}")
        if not self.elements:
            raise ValueError("vocabulary needs at least one element")

    @property
    def codes(self) -> tuple[str, ...]:
        return self.elements + (self.stop_type, self.focus_type, self.origin_type)

    @property
    def predictable(self) -> tuple[str, ...]:
        return self.elements + (self.stop_type,)

    @property
    def token_types(self) -> tuple[str, ...]:
        if self.use_origin_token:
            return (self.focus_type, self.origin_type)
        return (self.focus_type,)

    @property
    def n_tokens(self) -> int:
        return len(self.token_types)

    @property
    def size(self) -> int:
        return len(self.codes)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.codes)}

    def index(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise KeyError(f"unknown type code {code!r}") from None

    def indices(self, codes: Sequence[str]) -> np.ndarray:
        return np.array([self.index(c) for c in codes], dtype=np.int64)

    def is_element(self, code: str) -> bool:
        return code in self.elements

    def to_dict(self) -> dict:
        return {
            "elements": list(self.elements),
            "stop_type": self.stop_type,
            "focus_type": self.focus_type,
            "origin_type": self.origin_type,
            "use_origin_token": self.use_origin_token,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TypeVocabulary":
        return cls(
            elements=tuple(d["elements"]),
            stop_type=d["stop_type"],
            focus_type=d["focus_type"],
            origin_type=d["origin_type"],
            use_origin_token=bool(d["use_origin_token"]),
        )


@dataclass
class PointSet:
    """Ordered positions and types; the first ``n_tokens`` entries are tokens."""

    positions: np.ndarray
    types: list[str]
    n_tokens: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.types = list(self.types)
        if len(self.positions) != len(self.types):
            raise ValueError("positions and types differ in length")
        if not 0 <= self.n_tokens <= len(self.types):
            raise ValueError("token count out of range")
        tokens = self.types[: self.n_tokens]
        for code in (FOCUS, ORIGIN):
            if tokens.count(code) > 1:
                raise ValueError(f"more than one {code} token")
        if any(t in (FOCUS, ORIGIN, STOP) for t in self.types[self.n_tokens:]):
            raise ValueError("sentinel type found in the atom block")

    def __len__(self) -> int:
        return len(self.types)

    @property
    def atom_positions(self) -> np.ndarray:
        return self.positions[self.n_tokens:]

    @property
    def atom_types(self) -> list[str]:
        return self.types[self.n_tokens:]

    def atoms(self) -> "PointSet":
        """Copy with the token block stripped."""
        return PointSet(self.atom_positions.copy(), self.atom_types, 0)

    def transformed(self, rotation: np.ndarray, translation=(0.0, 0.0, 0.0)) -> "PointSet":
        pos = self.positions @ np.asarray(rotation).T + np.asarray(translation)
        return PointSet(pos, self.types, self.n_tokens)

    def permuted(self, order: Sequence[int]) -> "PointSet":
        """Reorder the atom block; tokens keep their leading slots."""
        order = list(order)
        if sorted(order) != list(range(len(self) - self.n_tokens)):
            raise ValueError("order must permute the atom block")
        idx = list(range(self.n_tokens)) + [self.n_tokens + i for i in order]
        return PointSet(self.positions[idx], [self.types[i] for i in idx], self.n_tokens)


@dataclass(frozen=True)
class DistanceBinSpec:
    n_bins: int = 300
    bin_width: float = 0.05

    def __post_init__(self):
        if self.n_bins < 1 or self.bin_width <= 0:
            raise ValueError("need n_bins >= 1 and bin_width > 0")

    @property
    def max_distance(self) -> float:
        return self.n_bins * self.bin_width

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width

    def to_dict(self) -> dict:
        return {"n_bins": self.n_bins, "bin_width": self.bin_width}

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceBinSpec":
        return cls(int(d["n_bins"]), float(d["bin_width"]))


@dataclass(frozen=True)
class CandidateGrid:
    """Cubic lattice of candidate positions around ``center``.

    ``rotation`` orients the lattice axes; identity unless a test co-rotates it.
    """

    center: np.ndarray
    extent: float = 1.7
    step: float = 0.05
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def half_width(self) -> int:
        # small epsilon so 1.7/0.05 does not floor to 33
        return int(np.floor(self.extent / self.step + 1e-9))

    @property
    def cells_per_axis(self) -> int:
        return 2 * self.half_width + 1

    def __len__(self) -> int:
        return self.cells_per_axis**3

    @cached_property
    def offsets(self) -> np.ndarray:
        k = np.arange(-self.half_width, self.half_width + 1, dtype=np.float64) * self.step
        g = np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1).reshape(-1, 3)
        return g @ np.asarray(self.rotation, dtype=np.float64).T

    @property
    def cells(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64) + self.offsets

    @property
    def center_index(self) -> int:
        return len(self) // 2


def pairwise_distances(ps: PointSet | np.ndarray) -> np.ndarray:
    pos = ps.positions if isinstance(ps, PointSet) else np.asarray(ps, dtype=np.float64)
    if len(pos) == 0:
        raise ValueError("empty point set")
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt((diff**2).sum(-1))


RBF_CENTERS = np.linspace(0.0, 10.0, 25)
RBF_WIDTH = RBF_CENTERS[1] - RBF_CENTERS[0]


def rbf_expand(d, centers: np.ndarray = RBF_CENTERS, width: float = RBF_WIDTH) -> np.ndarray:
    """Gaussian expansion of distances; appends one axis of ``len(centers)``."""
    d = np.asarray(d, dtype=np.float64)
    return np.exp(-((d[..., None] - centers) ** 2) / (2.0 * width**2))


TIE_TOLERANCE = 1e-10  # Å; gaps closer than this count as ties


def nearest_bin(d, spec: DistanceBinSpec = DistanceBinSpec()):
    """Index of the closest bin center, clamped; ties go to the lower bin.

    Lattice cells around a focus often sit exactly on a bin boundary (0.05,
    0.10, 0.25 Å, ...).  Treating near-ties as ties keeps the lookup stable
    when a rotation perturbs such distances by round-off.
    """
    d = np.asarray(d, dtype=np.float64)
    w = spec.bin_width
    lo = np.clip(np.floor(d / w - 0.5).astype(np.int64), 0, spec.n_bins - 1)
    hi = np.minimum(lo + 1, spec.n_bins - 1)
    # compare the two neighbouring centers with the same arithmetic as the centers array
    d_lo = np.abs(d - (lo + 0.5) * w)
    d_hi = np.abs(d - (hi + 0.5) * w)
    idx = np.where(d_hi < d_lo - TIE_TOLERANCE, hi, lo)
    return idx if idx.ndim else int(idx)


def build_candidate_grid(center, extent: float = 1.7, step: float = 0.05,
                         rotation: np.ndarray | None = None) -> CandidateGrid:
    if extent <= 0 or step <= 0:
        raise ValueError(f"grid extent and step must be positive (got {extent}, {step})")
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    return CandidateGrid(np.asarray(center, dtype=np.float64).reshape(3), extent, step, rot)


def kabsch_rmsd(a: PointSet, b: PointSet) -> float:
    """Minimal RMSD over proper rotations and translations."""
    if len(a.atom_types) != len(b.atom_types):
        raise ValueError("point sets differ in length")
    if a.atom_types != b.atom_types:
        raise ValueError("point sets differ in type sequence")
    p = a.atom_positions - a.atom_positions.mean(0)
    q = b.atom_positions - b.atom_positions.mean(0)
    if len(p) == 0:
        return 0.0
    h = p.T @ q
    u, _, vt = np.linalg.svd(h)
    sign = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rot = vt.T @ np.diag([1.0, 1.0, sign]) @ u.T
    diff = p @ rot.T - q
    return float(np.sqrt(max((diff**2).sum() / len(p), 0.0)))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform proper rotation from a random unit quaternion."""
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
