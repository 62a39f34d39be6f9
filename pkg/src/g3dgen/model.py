"""The full network: shared embedding, interaction blocks and both output heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .encoder import Encoder, init_parameters
from .geometry import DistanceBinSpec, PointSet, TypeVocabulary
from .heads import MLP


@dataclass(frozen=True)
class ModelConfig:
    n_features: int = 128
    n_blocks: int = 9
    type_widths: tuple[int, ...] = (128, 96, 64, 32, 1)
    dist_widths: tuple[int, ...] = (128, 171, 214, 257, 300)

    def __post_init__(self):
        object.__setattr__(self, "type_widths", tuple(int(w) for w in self.type_widths))
        object.__setattr__(self, "dist_widths", tuple(int(w) for w in self.dist_widths))
        if self.type_widths[-1] != 1:
            raise ValueError("type head must end in a single score")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["type_widths"] = list(self.type_widths)
        d["dist_widths"] = list(self.dist_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(int(d["n_features"]), int(d["n_blocks"]),
                   tuple(d["type_widths"]), tuple(d["dist_widths"]))


class GenerativeModel(nn.Module):
    def __init__(self, vocab: TypeVocabulary, bins: DistanceBinSpec = DistanceBinSpec(),
                 config: ModelConfig = ModelConfig()):
        super().__init__()
        if config.dist_widths[-1] != bins.n_bins:
            raise ValueError("distance head width must equal the number of bins")
        self.vocab = vocab
        self.bins = bins
        self.config = config
        self.encoder = Encoder(vocab.size, config.n_features, config.n_blocks)
        self.type_mlp = MLP(config.n_features, config.type_widths)
        self.dist_mlp = MLP(config.n_features, config.dist_widths)
        self.register_buffer(
            "predictable_idx", torch.as_tensor(vocab.indices(vocab.predictable)), persistent=False
        )

    def reset_parameters(self, rng: np.random.Generator) -> "GenerativeModel":
        init_parameters(self, rng)
        return self

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().numpy().copy() for k, v in self.named_parameters()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(arrays):
            raise ValueError("parameter names do not match the model layout")
        with torch.no_grad():
            for k, p in params.items():
                p.copy_(torch.from_numpy(np.asarray(arrays[k], dtype=np.float64)))


class Batch(NamedTuple):
    types: torch.Tensor      # (B, N) embedding indices
    positions: torch.Tensor  # (B, N, 3)
    mask: torch.Tensor       # (B, N) bool


def collate(pointsets: Sequence[PointSet], vocab: TypeVocabulary) -> Batch:
    n = max(len(ps) for ps in pointsets)
    b = len(pointsets)
    types = np.zeros((b, n), dtype=np.int64)
    pos = np.zeros((b, n, 3))
    mask = np.zeros((b, n), dtype=bool)
    for i, ps in enumerate(pointsets):
        k = len(ps)
        types[i, :k] = vocab.indices(ps.types)
        pos[i, :k] = ps.positions
        mask[i, :k] = True
    return Batch(torch.from_numpy(types), torch.from_numpy(pos), torch.from_numpy(mask))
