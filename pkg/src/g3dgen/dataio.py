"""Extended-XYZ ingestion, dataset splits, property filters and structure output."""
from __future__ import annotations

import math
import os
import shlex
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import PointSet

DEFAULT_ELEMENTS = ("H", "C", "N", "O", "F")


class XYZFormatError(ValueError):
    pass


@dataclass
class MoleculeRecord:
    elements: list[str]
    positions: np.ndarray
    properties: dict[str, float] = field(default_factory=dict)
    bonds: list[tuple[int, int, int]] | None = None
    info: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.elements = list(self.elements)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if len(self.elements) != len(self.positions):
            raise ValueError("elements and positions differ in length")
        if not np.isfinite(self.positions).all():
            raise ValueError("non-finite coordinates")
        if any(not k for k in self.properties):
            raise ValueError("property names must be nonempty")

    def __len__(self) -> int:
        return len(self.elements)

    def to_pointset(self) -> PointSet:
        return PointSet(self.positions, self.elements, 0)

    @classmethod
    def from_pointset(cls, ps: PointSet, **kw) -> "MoleculeRecord":
        return cls(ps.atom_types, ps.atom_positions.copy(), **kw)


@dataclass
class Dataset:
    records: list[MoleculeRecord]
    splits: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[int] = set()
        for name, idx in self.splits.items():
            if any(i < 0 or i >= len(self.records) for i in idx):
                raise ValueError(f"split {name!r} has indices out of range")
            if seen & set(idx):
                raise ValueError(f"split {name!r} overlaps another split")
            seen |= set(idx)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> MoleculeRecord:
        return self.records[i]

    def subset(self, name: str) -> "Dataset":
        return Dataset([self.records[i] for i in self.splits[name]])


def _parse_value(v: str):
    try:
        return float(v.replace("*^", "e"))
    except ValueError:
        return v


def _parse_bonds(spec: str, n: int, lineno: int) -> list[tuple[int, int, int]]:
    bonds = []
    for item in filter(None, spec.split(",")):
        try:
            pair, _, order = item.partition(":")
            i, j = (int(x) for x in pair.split("-"))
            o = int(order) if order else 1
        except ValueError:
            raise XYZFormatError(f"line {lineno}: bad bond entry {item!r}") from None
        if not (0 <= i < n and 0 <= j < n) or i == j or o < 1:
            raise XYZFormatError(f"line {lineno}: bond {item!r} out of range")
        bonds.append((min(i, j), max(i, j), o))
    return bonds


def parse_xyz(text: str, elements: Sequence[str] = DEFAULT_ELEMENTS,
              source: str = "<string>") -> list[MoleculeRecord]:
    lines = text.splitlines()
    records = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            n = int(lines[i].strip())
        except ValueError:
            raise XYZFormatError(f"{source}:{i + 1}: expected an atom count, got {lines[i]!r}") from None
        if n < 0:
            raise XYZFormatError(f"{source}:{i + 1}: negative atom count")
        if i + 1 >= len(lines):
            raise XYZFormatError(f"{source}:{i + 1}: frame is missing its comment line")
        comment_no = i + 2
        props, info, bonds_spec = {}, {}, None
        try:
            tokens = shlex.split(lines[i + 1])
        except ValueError:
            tokens = lines[i + 1].split()
        for tok in tokens:
            key, eq, val = tok.partition("=")
            if not eq or not key:
                continue
            if key == "bonds":
                bonds_spec = val
                continue
            parsed = _parse_value(val)
            if isinstance(parsed, float):
                props[key] = parsed
            else:
                info[key] = parsed
        els, pos = [], []
        for k in range(n):
            lineno = i + 3 + k
            if i + 2 + k >= len(lines):
                raise XYZFormatError(
                    f"{source}:{lineno}: frame declares {n} atoms but the file ends after {k}")
            parts = lines[i + 2 + k].split()
            if len(parts) < 4:
                raise XYZFormatError(
                    f"{source}:{lineno}: frame declares {n} atoms but found {lines[i + 2 + k]!r}")
            el = parts[0]
            if el not in elements:
                raise XYZFormatError(f"{source}:{lineno}: unknown element {el!r}")
            try:
                xyz = [float(p.replace("*^", "e")) for p in parts[1:4]]
            except ValueError:
                raise XYZFormatError(f"{source}:{lineno}: malformed coordinates") from None
            if not all(math.isfinite(c) for c in xyz):
                raise XYZFormatError(f"{source}:{lineno}: non-finite coordinates")
            els.append(el)
            pos.append(xyz)
        bonds = _parse_bonds(bonds_spec, n, comment_no) if bonds_spec is not None else None
        records.append(MoleculeRecord(els, np.array(pos).reshape(-1, 3), props, bonds, info))
        i += 2 + n
    return records


def load_xyz(paths, elements: Sequence[str] = DEFAULT_ELEMENTS) -> Dataset:
    """Read one or more (multi-frame) extended-XYZ files into a Dataset."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    records = []
    for p in paths:
        p = Path(p)
        records += parse_xyz(p.read_text(), elements, source=str(p))
    return Dataset(records)


def split(dataset: Dataset, sizes: Sequence[int], seed: int,
          names: Sequence[str] = ("train", "validation", "test")) -> Dataset:
    if len(sizes) > len(names):
        raise ValueError("more split sizes than split names")
    if any(s < 0 for s in sizes) or sum(sizes) > len(dataset):
        raise ValueError(f"split sizes {tuple(sizes)} exceed {len(dataset)} records")
    order = np.random.default_rng(seed).permutation(len(dataset))
    splits, start = {}, 0
    for name, size in zip(names, sizes):
        splits[name] = sorted(int(i) for i in order[start:start + size])
        start += size
    return Dataset(dataset.records, splits)


def property_predicate(op: str, threshold: float) -> Callable[[float], bool]:
    if op == "<=":
        return lambda v: v <= threshold
    if op == ">=":
        return lambda v: v >= threshold
    raise ValueError(f"unsupported comparison {op!r}")


def filter_by_property(dataset: Dataset, name: str, op: str, threshold: float) -> Dataset:
    missing = [i for i, r in enumerate(dataset.records) if name not in r.properties]
    if missing:
        raise KeyError(f"property {name!r} missing on records {missing}")
    keep = property_predicate(op, threshold)
    return Dataset([r for r in dataset.records if keep(r.properties[name])])


def parse_filter(expr: str) -> tuple[str, str, float]:
    """``"gap<=4.5"`` -> ("gap", "<=", 4.5)."""
    for op in ("<=", ">="):
        if op in expr:
            name, _, value = expr.partition(op)
            return name.strip(), op, float(value)
    raise ValueError(f"filter {expr!r} must look like name<=value or name>=value")


def format_frame(elements: Sequence[str], positions: np.ndarray, comment: str = "") -> str:
    out = [str(len(elements)), comment]
    for el, (x, y, z) in zip(elements, np.asarray(positions).reshape(-1, 3)):
        out.append(f"{el} {x:.9f} {y:.9f} {z:.9f}")
    return "\n".join(out) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_records(records: Iterable[MoleculeRecord], path) -> None:
    frames = []
    for r in records:
        tokens = [f"{k}={shlex.quote(str(v))}" for k, v in r.info.items()]
        tokens += [f"{k}={v!r}" for k, v in r.properties.items()]
        if r.bonds:
            tokens.append("bonds=" + ",".join(
                f"{b[0]}-{b[1]}:{b[2] if len(b) > 2 else 1}" for b in r.bonds))
        frames.append(format_frame(r.elements, r.positions, " ".join(tokens)))
    atomic_write_text(path, "".join(frames))


def save_structures(results, path) -> None:
    """Write completed generation results as extended-XYZ frames."""
    frames = []
    for res in results:
        if res.status != "completed":
            raise ValueError(f"only completed results are saved (got {res.status})")
        comment = f"status={res.status} seed={res.seed} index={res.index}"
        frames.append(format_frame(res.structure.atom_types, res.structure.atom_positions, comment))
    atomic_write_text(path, "".join(frames))
