"""Next-type, per-point distance and grid position distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import Dense
from .geometry import CandidateGrid, DistanceBinSpec, PointSet, nearest_bin


class MLP(nn.Module):
    """Atom-wise dense stack with shifted softplus between layers."""

    def __init__(self, n_in: int, widths):
        super().__init__()
        widths = list(widths)
        dims = [n_in] + widths
        self.layers = nn.Sequential(*(
            Dense(dims[i], dims[i + 1], activation=i < len(widths) - 1)
            for i in range(len(widths))
        ))

    def forward(self, x):
        return self.layers(x)


def per_point_type_scores(x: torch.Tensor, model) -> torch.Tensor:
    """Scores of shape (..., N, K) for every point and predictable type."""
    if x.shape[-1] != model.config.n_features:
        raise ValueError(f"expected {model.config.n_features} features, got {x.shape[-1]}")
    emb = model.encoder.embedding.weight[model.predictable_idx]
    h = x[..., :, None, :] * emb
    return model.type_mlp(h).squeeze(-1)


def type_log_distribution(x: torch.Tensor, model, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Log of the normalized product of per-point type distributions, shape (..., K)."""
    lp = torch.log_softmax(per_point_type_scores(x, model), dim=-1)
    if mask is not None:
        lp = lp * mask[..., None]
    return torch.log_softmax(lp.sum(dim=-2), dim=-1)


def distance_log_distributions(x: torch.Tensor, type_idx, model) -> torch.Tensor:
    """Per-point log distance distributions (..., N, n_bins) for the chosen next type."""
    emb = model.encoder.embedding.weight[type_idx]
    h = x * emb[..., None, :]
    return torch.log_softmax(model.dist_mlp(h), dim=-1)


@dataclass
class TypeDistribution:
    codes: tuple[str, ...]
    probs: np.ndarray

    def sample(self, rng: np.random.Generator, exclude: tuple[str, ...] = ()) -> str:
        p = self.probs.copy()
        for code in exclude:
            p[self.codes.index(code)] = 0.0
        return self.codes[_draw(p, rng)]


@dataclass
class GridDistribution:
    grid: CandidateGrid
    log_weights: np.ndarray
    probs: np.ndarray
    temperature: float

    def sample(self, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        idx = _draw(self.probs, rng)
        return idx, self.grid.cells[idx]


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(p) - 1)


def type_distribution(x: torch.Tensor, model) -> TypeDistribution:
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a (points, features) matrix with at least one point")
    with torch.no_grad():
        lp = type_log_distribution(x, model)
    return TypeDistribution(model.vocab.predictable, np.exp(lp.numpy()))


def distance_distributions(x: torch.Tensor, sampled_type: str, model) -> np.ndarray:
    vocab = model.vocab
    if not vocab.is_element(sampled_type):
        raise ValueError(f"no position is sampled for type {sampled_type!r}")
    with torch.no_grad():
        lp = distance_log_distributions(x, vocab.index(sampled_type), model)
    return np.exp(lp.numpy())


def position_distribution(ps: PointSet, dists: np.ndarray, grid: CandidateGrid,
                          temperature: float = 0.1, bins: DistanceBinSpec = DistanceBinSpec(),
                          log: bool = False) -> GridDistribution:
    """Tempered product of per-point distance probabilities over the grid cells.

    ``dists`` holds one bin distribution per context point (probabilities, or
    log-probabilities when ``log`` is set).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if len(grid) == 0:
        raise ValueError("empty grid")
    logd = np.asarray(dists, dtype=np.float64)
    if not log:
        with np.errstate(divide="ignore"):
            logd = np.log(logd)
    if logd.shape != (len(ps), bins.n_bins):
        raise ValueError(f"expected distance distributions of shape {(len(ps), bins.n_bins)}")
    cells = grid.cells
    logw = np.zeros(len(cells))
    for j, r in enumerate(ps.positions):
        d = np.sqrt(((cells - r) ** 2).sum(axis=1))
        logw += logd[j][nearest_bin(d, bins)]
    z = logw / temperature
    if not np.isfinite(z.max()):
        raise ValueError("every grid cell has zero probability")
    z = z - z.max()
    w = np.exp(z)
    return GridDistribution(grid, logw, w / w.sum(), temperature)
