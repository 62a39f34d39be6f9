"""Rotation/translation invariant per-point features from continuous-filter convolutions."""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .geometry import RBF_CENTERS, RBF_WIDTH, PointSet, TypeVocabulary

LOG2 = math.log(2.0)


def shifted_softplus(x: torch.Tensor) -> torch.Tensor:
    # ln(0.5 e^x + 0.5)
    return nn.functional.softplus(x) - LOG2


class Dense(nn.Linear):
    def __init__(self, n_in: int, n_out: int, activation: bool = False):
        super().__init__(n_in, n_out, bias=True, dtype=torch.float64)
        self.activation = activation

    def forward(self, x):
        y = super().forward(x)
        return shifted_softplus(y) if self.activation else y


class GaussianExpansion(nn.Module):
    def __init__(self, centers=RBF_CENTERS, width: float = RBF_WIDTH):
        super().__init__()
        self.register_buffer("centers", torch.as_tensor(centers, dtype=torch.float64))
        self.width = float(width)

    def forward(self, d: torch.Tensor) -> torch.Tensor:
        return torch.exp(-((d[..., None] - self.centers) ** 2) / (2.0 * self.width**2))


class InteractionBlock(nn.Module):
    """Residual continuous-filter convolution update."""

    def __init__(self, n_features: int = 128, n_rbf: int = 25):
        super().__init__()
        self.atomwise_in = Dense(n_features, n_features)
        self.filter_net = nn.Sequential(
            Dense(n_rbf, n_features, activation=True), Dense(n_features, n_features)
        )
        self.atomwise_mid = Dense(n_features, n_features, activation=True)
        self.atomwise_out = Dense(n_features, n_features)

    def forward(self, x, rbf, pair_mask):
        """x: (B, N, F); rbf: (B, N, N, K); pair_mask: (B, N, N), False on the diagonal."""
        v = self.atomwise_in(x)
        w = self.filter_net(rbf) * pair_mask[..., None]
        m = (v[:, None, :, :] * w).sum(dim=2)
        return x + self.atomwise_out(self.atomwise_mid(m))


class Encoder(nn.Module):
    def __init__(self, vocab_size: int, n_features: int = 128, n_blocks: int = 9,
                 rbf_centers=RBF_CENTERS, rbf_width: float = RBF_WIDTH):
        super().__init__()
        self.n_features = n_features
        self.embedding = nn.Embedding(vocab_size, n_features, dtype=torch.float64)
        self.expansion = GaussianExpansion(rbf_centers, rbf_width)
        self.blocks = nn.ModuleList(
            InteractionBlock(n_features, len(rbf_centers)) for _ in range(n_blocks)
        )

    def forward(self, types, positions, mask=None):
        """types: (B, N) embedding indices; positions: (B, N, 3); mask: (B, N) bool."""
        if mask is None:
            mask = torch.ones(types.shape, dtype=torch.bool)
        if positions.shape[:2] != types.shape:
            raise ValueError("positions and types disagree in shape")
        x = self.embedding(types)
        diff = positions[:, :, None, :] - positions[:, None, :, :]
        dist = torch.sqrt((diff**2).sum(-1))
        n = types.shape[1]
        pair_mask = (mask[:, :, None] & mask[:, None, :]
                     & ~torch.eye(n, dtype=torch.bool)[None]).to(torch.float64)
        rbf = self.expansion(dist)
        for block in self.blocks:
            x = block(x, rbf, pair_mask)
        return x


def init_parameters(module: nn.Module, rng: np.random.Generator) -> None:
    """Uniform(+-1/sqrt(fan_in)) dense weights, N(0, 1) embeddings, zero biases."""
    with torch.no_grad():
        for name, p in sorted(module.named_parameters()):
            if name.endswith("bias"):
                p.zero_()
            elif "embedding" in name:
                p.copy_(torch.from_numpy(rng.standard_normal(tuple(p.shape))))
            else:
                bound = 1.0 / math.sqrt(p.shape[1])
                p.copy_(torch.from_numpy(rng.uniform(-bound, bound, tuple(p.shape))))


def embed_types(types, vocab: TypeVocabulary, encoder: Encoder) -> torch.Tensor:
    idx = torch.as_tensor(vocab.indices(types), dtype=torch.long)
    return encoder.embedding(idx)


def interaction_block(x, distances, block: InteractionBlock) -> torch.Tensor:
    """Apply one block to a single point set; x: (N, F), distances: (N, N)."""
    x = torch.as_tensor(x, dtype=torch.float64)
    d = torch.as_tensor(distances, dtype=torch.float64)
    if d.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"distance matrix {tuple(d.shape)} does not match {x.shape[0]} points")
    n = x.shape[0]
    pair_mask = (~torch.eye(n, dtype=torch.bool)).to(torch.float64)[None]
    rbf = GaussianExpansion().to(x.device)(d)[None]
    return block(x[None], rbf, pair_mask)[0]


def encode(ps: PointSet, vocab: TypeVocabulary, encoder: Encoder) -> torch.Tensor:
    """Features for one point set, shape (len(ps), F)."""
    if len(ps) == 0:
        raise ValueError("cannot encode an empty point set")
    idx = torch.as_tensor(vocab.indices(ps.types), dtype=torch.long)[None]
    pos = torch.as_tensor(ps.positions, dtype=torch.float64)[None]
    return encoder(idx, pos)[0]
