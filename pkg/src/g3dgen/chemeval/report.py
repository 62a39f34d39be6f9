"""Validity / uniqueness / novelty and structural statistics for generated corpora."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..dataio import atomic_write_text
from ..elements import VALENCES
from ..geometry import PointSet
from .bonds import check_validity
from .distributions import Histogram, adf, rdf
from .hashing import canonical_hash
from .rings import RING_KEYS, ring_counts

DEFAULT_RDF_PAIRS = (("C", "C"), ("C", "O"))
DEFAULT_ADF_TRIPLES = (("C", "C", "C"), ("C", "C", "O"))
BOND_KEYS = ("B1", "B2", "B3")


@dataclass
class StatsReport:
    n_generated: int
    n_valid: int
    n_unique: int
    n_novel: int
    n_unseen: int
    mean_atoms: dict[str, float]
    mean_bonds: dict[str, float]
    mean_rings: dict[str, float]
    rdf: dict[tuple[str, str], Histogram] = field(default_factory=dict)
    adf: dict[tuple[str, str, str], Histogram] = field(default_factory=dict)

    @staticmethod
    def _pct(num: int, den: int) -> float:
        return 100.0 * num / den if den else 0.0

    @property
    def pct_valid(self) -> float:
        return self._pct(self.n_valid, self.n_generated)

    @property
    def pct_unique(self) -> float:
        return self._pct(self.n_unique, self.n_valid)

    @property
    def pct_novel(self) -> float:
        return self._pct(self.n_novel, self.n_valid)

    @property
    def pct_unseen(self) -> float:
        return self._pct(self.n_unseen, self.n_valid)

    def items(self) -> list[tuple[str, float]]:
        rows = [
            ("n_generated", self.n_generated), ("n_valid", self.n_valid),
            ("n_unique", self.n_unique), ("n_novel", self.n_novel), ("n_unseen", self.n_unseen),
            ("pct_valid", self.pct_valid), ("pct_unique", self.pct_unique),
            ("pct_novel", self.pct_novel), ("pct_unseen", self.pct_unseen),
        ]
        rows += [(f"atoms_{k}", v) for k, v in self.mean_atoms.items()]
        rows += [(f"bonds_{k}", v) for k, v in self.mean_bonds.items()]
        rows += [(f"rings_{k}", v) for k, v in self.mean_rings.items()]
        return rows

    def to_kv(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.items())

    def to_table(self) -> str:
        lines = [f"{'quantity':<16} {'value':>10}"]
        for k, v in self.items():
            val = f"{v:10d}" if isinstance(v, int) else f"{v:10.3f}"
            lines.append(f"{k:<16} {val}")
        return "\n".join(lines) + "\n"


def _hashes(structures) -> set[str]:
    out = set()
    for s in structures:
        v = check_validity(s)
        if v.valid:
            out.add(canonical_hash(v.bonds))
    return out


def statistics_report(generated: Sequence[PointSet], train: Sequence[PointSet] = (),
                      reference: Sequence[PointSet] = (),
                      rdf_pairs=DEFAULT_RDF_PAIRS, adf_triples=DEFAULT_ADF_TRIPLES,
                      rdf_bin: float = 0.1, adf_bin: float = 1.0,
                      elements: Sequence[str] = tuple(VALENCES)) -> StatsReport:
    train_h, ref_h = _hashes(train), _hashes(reference)
    n_valid = 0
    seen: set[str] = set()
    unique = []
    n_novel = n_unseen = 0
    for s in generated:
        v = check_validity(s)
        if not v.valid:
            continue
        n_valid += 1
        h = canonical_hash(v.bonds)
        if h in seen:
            continue
        seen.add(h)
        unique.append((s, v.bonds))
        n_novel += h not in ref_h
        n_unseen += h not in train_h
    n = len(unique)
    atoms = dict.fromkeys(elements, 0.0)
    bonds = dict.fromkeys(BOND_KEYS, 0.0)
    rings = dict.fromkeys(RING_KEYS, 0.0)
    for s, g in unique:
        for e in s.atom_types:
            atoms[e] = atoms.get(e, 0.0) + 1
        for o in g.bonds.values():
            bonds[f"B{o}"] += 1
        for k, c in ring_counts(g).items():
            rings[k] += c
    if n:
        for d in (atoms, bonds, rings):
            for k in d:
                d[k] /= n
    structures = [s for s, _ in unique]
    return StatsReport(
        n_generated=len(generated), n_valid=n_valid, n_unique=n,
        n_novel=n_novel, n_unseen=n_unseen,
        mean_atoms=atoms, mean_bonds=bonds, mean_rings=rings,
        rdf={p: rdf(structures, p, rdf_bin) for p in rdf_pairs},
        adf={t: adf(unique, t, adf_bin) for t in adf_triples},
    )


def write_report(report: StatsReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = {outdir / "report.txt": report.to_table(), outdir / "report.kv": report.to_kv()}
    for pair, h in report.rdf.items():
        files[outdir / f"rdf_{'-'.join(pair)}.txt"] = h.to_text()
    for triple, h in report.adf.items():
        files[outdir / f"adf_{'-'.join(triple)}.txt"] = h.to_text()
    for path, text in files.items():
        atomic_write_text(path, text)
    return list(files)
