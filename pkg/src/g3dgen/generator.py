"""Autoregressive sampling of complete structures from a trained checkpoint."""
from __future__ import annotations

import contextlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch

from .geometry import PointSet, build_candidate_grid
from .heads import (
    GridDistribution, TypeDistribution, distance_log_distributions, position_distribution,
    type_log_distribution,
)
from .model import GenerativeModel
from .seeding import substream

COMPLETED = "completed"
DISCARDED = "discarded_max_atoms"


@dataclass
class GenerationConfig:
    temperature: float = 0.1
    max_atoms: int = 35
    grid_extent: float = 1.7
    grid_step: float = 0.05
    n_molecules: int = 1
    seed: int = 0
    grid_rotation: np.ndarray | None = None

    def __post_init__(self):
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be at least 1")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.grid_extent <= 0 or self.grid_step <= 0:
            raise ValueError("grid extent and step must be positive")


@dataclass
class StepRecord:
    focus: int | None
    sampled_type: str
    cell: int | None = None


@dataclass
class GenerationResult:
    structure: PointSet
    status: str
    steps: list[StepRecord] = field(default_factory=list)
    seed: int = 0
    index: int = 0

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED


@contextlib.contextmanager
def _single_thread():
    n = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(n)


def _context(model: GenerativeModel, focus_pos, placed_pos, placed_types) -> PointSet:
    vocab = model.vocab
    pos = [focus_pos] + ([np.zeros(3)] if vocab.use_origin_token else []) + list(placed_pos)
    return PointSet(np.array(pos).reshape(-1, 3),
                    list(vocab.token_types) + list(placed_types), vocab.n_tokens)


def _as_model(model_or_ckpt) -> GenerativeModel:
    from .trainer import Checkpoint

    if isinstance(model_or_ckpt, Checkpoint):
        return model_or_ckpt.build_model()
    return model_or_ckpt


def generate_one(model, config: GenerationConfig, rng: np.random.Generator) -> GenerationResult:
    """One run; ``model`` is a GenerativeModel or a Checkpoint."""
    model = _as_model(model)
    vocab = model.vocab
    positions: list[np.ndarray] = []
    types: list[str] = []
    finished: set[int] = set()
    log: list[StepRecord] = []

    def result(status):
        ps = PointSet(np.array(positions).reshape(-1, 3), types, 0)
        return GenerationResult(ps, status, log)

    with torch.no_grad(), _single_thread():
        while True:
            if positions:
                open_atoms = [a for a in range(len(positions)) if a not in finished]
                if not open_atoms:
                    return result(COMPLETED)
                focus = open_atoms[int(rng.integers(len(open_atoms)))]
                center = positions[focus]
            else:
                focus, center = None, np.zeros(3)
            ctx = _context(model, center, positions, types)
            idx = torch.as_tensor(vocab.indices(ctx.types))[None]
            pos = torch.as_tensor(ctx.positions)[None]
            x = model.encoder(idx, pos)[0]
            tdist = TypeDistribution(vocab.predictable,
                                     np.exp(type_log_distribution(x, model).numpy()))
            # an empty molecule is meaningless, so stop is excluded at step one
            t = tdist.sample(rng, exclude=(vocab.stop_type,) if focus is None else ())
            if t == vocab.stop_type:
                finished.add(focus)
                log.append(StepRecord(focus, t))
                continue
            if len(positions) >= config.max_atoms:
                log.append(StepRecord(focus, t))
                return result(DISCARDED)
            logd = distance_log_distributions(x, vocab.index(t), model).numpy()
            grid = build_candidate_grid(center, config.grid_extent, config.grid_step,
                                        config.grid_rotation)
            gdist: GridDistribution = position_distribution(
                ctx, logd, grid, config.temperature, model.bins, log=True)
            cell, new_pos = gdist.sample(rng)
            positions.append(new_pos)
            types.append(t)
            log.append(StepRecord(focus, t, cell))


def run_seed(seed: int, index: int) -> np.random.Generator:
    return substream(seed, "generate", index)


def _generate_indexed(model, config, index) -> GenerationResult:
    res = generate_one(model, config, run_seed(config.seed, index))
    res.seed, res.index = config.seed, index
    return res


_WORKER_MODEL: GenerativeModel | None = None


def _worker_init(ckpt):
    global _WORKER_MODEL
    torch.set_num_threads(1)
    _WORKER_MODEL = ckpt.build_model()


def _worker_run(args):
    config, index = args
    return _generate_indexed(_WORKER_MODEL, config, index)


def generate_batch(model_or_ckpt, config: GenerationConfig, jobs: int = 1) -> list[GenerationResult]:
    """``config.n_molecules`` independent runs; results are ordered by run index."""
    from .trainer import Checkpoint

    if config.n_molecules < 1:
        raise ValueError("n_molecules must be at least 1")
    if isinstance(model_or_ckpt, Checkpoint):
        ckpt, model = model_or_ckpt, None
    else:
        ckpt, model = None, model_or_ckpt
    if jobs > 1 and ckpt is not None:
        with ProcessPoolExecutor(jobs, initializer=_worker_init, initargs=(ckpt,)) as ex:
            return list(ex.map(_worker_run, [(config, i) for i in range(config.n_molecules)]))
    if model is None:
        model = ckpt.build_model()
    return [_generate_indexed(model, config, i) for i in range(config.n_molecules)]
