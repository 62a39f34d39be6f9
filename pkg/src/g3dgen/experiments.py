"""Desk-scale experiments: overfit-and-regenerate, and biasing by fine-tuning.

Both are used by the acceptance suite and by the runnable scripts.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chemeval import canonical_hash, check_validity
from .chemeval.matching import matched_rmsd
from .dataio import MoleculeRecord
from .generator import GenerationConfig, GenerationResult, generate_batch
from .geometry import DistanceBinSpec, PointSet, TypeVocabulary
from .model import ModelConfig
from .trainer import (
    Checkpoint, TrainingConfig, finetune, label_entropy, make_labels, record_bonds, train,
    validation_steps,
)


def entropy_floor(records: Sequence[MoleculeRecord], config: TrainingConfig,
                  vocab: TypeVocabulary, bins: DistanceBinSpec = DistanceBinSpec()) -> float:
    """Mean label entropy over the validation steps: the loss of a perfect distance head."""
    steps = validation_steps(records, config, vocab)
    gamma = config.label_width(bins)
    return float(np.mean([label_entropy(make_labels(s, gamma, bins, vocab)[1]) for s in steps]))


@dataclass
class MatchSummary:
    n_generated: int
    n_completed_valid: int
    n_matched: int
    compositions: dict[str, int] = field(default_factory=dict)

    @property
    def frac_completed_valid(self) -> float:
        return self.n_completed_valid / self.n_generated if self.n_generated else 0.0

    @property
    def frac_matched(self) -> float:
        return self.n_matched / self.n_completed_valid if self.n_completed_valid else 0.0


def _formula(types: Sequence[str]) -> str:
    counts = {e: list(types).count(e) for e in sorted(set(types))}
    return "".join(f"{e}{n if n > 1 else ''}" for e, n in counts.items())


def match_to_training(results: Sequence[GenerationResult], records: Sequence[MoleculeRecord],
                      rmsd_tol: float = 0.3) -> MatchSummary:
    """Count completed+valid structures and those reproducing a training molecule."""
    train = []
    for r in records:
        g = record_bonds(r)
        train.append((canonical_hash(g), r.to_pointset(), g))
    n_ok = n_match = 0
    comps: dict[str, int] = {}
    for res in results:
        if not res.completed:
            continue
        v = check_validity(res.structure)
        if not v.valid:
            continue
        n_ok += 1
        f = _formula(res.structure.atom_types)
        comps[f] = comps.get(f, 0) + 1
        h = canonical_hash(v.bonds)
        if any(h == th and matched_rmsd(res.structure, v.bonds, tp, tg) < rmsd_tol
               for th, tp, tg in train):
            n_match += 1
    return MatchSummary(len(results), n_ok, n_match, dict(sorted(comps.items())))


@dataclass
class OverfitRun:
    checkpoint: Checkpoint
    train_seconds: float
    val_loss: float
    floor: float
    results: list[GenerationResult]
    summary: MatchSummary

    @property
    def excess_loss(self) -> float:
        return self.val_loss - self.floor


def overfit_regenerate(records: Sequence[MoleculeRecord], training: TrainingConfig,
                       generation: GenerationConfig, *, vocab: TypeVocabulary = TypeVocabulary(),
                       model_config: ModelConfig = ModelConfig(),
                       on_epoch: Callable[[dict], None] | None = None) -> OverfitRun:
    start = time.perf_counter()
    ckpt = train(list(records), training, vocab=vocab, model_config=model_config, on_epoch=on_epoch)
    seconds = time.perf_counter() - start
    floor = entropy_floor(records, training, vocab, ckpt.bins)
    results = generate_batch(ckpt, generation)
    return OverfitRun(ckpt, seconds, ckpt.val_loss, floor, results,
                      match_to_training(results, records))


def sign_test(wins: int, losses: int) -> float:
    """One-sided exact sign test: P(at least ``wins`` of ``wins + losses`` fair coin flips)."""
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n


def contains_element(element: str) -> Callable[[GenerationResult], bool]:
    def motif(res: GenerationResult) -> bool:
        return res.completed and element in res.structure.atom_types
    return motif


@dataclass
class BiasingRun:
    checkpoint: Checkpoint
    before: list[bool]
    after: list[bool]

    @property
    def wins(self) -> int:
        return sum(a and not b for a, b in zip(self.after, self.before))

    @property
    def losses(self) -> int:
        return sum(b and not a for a, b in zip(self.after, self.before))

    @property
    def p_value(self) -> float:
        return sign_test(self.wins, self.losses)


def biasing(base: Checkpoint, subset: Sequence[MoleculeRecord], generation: GenerationConfig,
            motif: Callable[[GenerationResult], bool], training: TrainingConfig | None = None,
            before: Sequence[GenerationResult] | None = None) -> BiasingRun:
    """Fine-tune on ``subset`` and compare motif frequency on seed-paired samples."""
    if before is None:
        before = generate_batch(base, generation)
    tuned = finetune(base, list(subset), training)
    after = generate_batch(tuned, generation)
    return BiasingRun(tuned, [motif(r) for r in before], [motif(r) for r in after])


def structure_formula(ps: PointSet) -> str:
    return _formula(ps.atom_types)
