"""Generation traces, labels, the two-term cross-entropy and the training loop."""
from __future__ import annotations

import copy
import io
import json
import logging
import math
import os
import tempfile
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .chemeval.bonds import BondGraph, perceive_bonds
from .dataio import Dataset, MoleculeRecord
from .elements import MASSES
from .geometry import DistanceBinSpec, PointSet, TypeVocabulary, nearest_bin
from .heads import distance_log_distributions, type_log_distribution
from .model import Batch, GenerativeModel, ModelConfig, collate
from .seeding import substream

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
LOG_FLOOR = math.log(PROB_FLOOR)
FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    lr0: float = 1e-4
    plateau_patience: int = 10
    lr_decay: float = 0.5
    lr_stop: float = 1e-6
    batch_size: int = 32
    seed: int = 0
    gamma: float | None = None  # None: 10% of the bin width
    max_epochs: int = 1000

    def __post_init__(self):
        if not self.lr0 > self.lr_stop > 0:
            raise ValueError("need lr0 > lr_stop > 0")
        if not 0 < self.lr_decay < 1:
            raise ValueError("lr_decay must lie in (0, 1)")
        if self.batch_size < 1 or self.plateau_patience < 1 or self.max_epochs < 0:
            raise ValueError("batch_size and plateau_patience must be >= 1, max_epochs >= 0")

    def label_width(self, bins: DistanceBinSpec) -> float:
        return self.gamma if self.gamma is not None else 0.1 * bins.bin_width

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# --- traces -----------------------------------------------------------------

@dataclass
class TraceStep:
    context: PointSet
    target_type: str
    target_position: np.ndarray | None = None
    focus: int | None = None  # index into the molecule, None at step one

    @property
    def is_stop(self) -> bool:
        return self.target_position is None


def center_of_mass(elements, positions) -> np.ndarray:
    m = np.array([MASSES[e] for e in elements])
    return (m[:, None] * np.asarray(positions)).sum(0) / m.sum()


def record_bonds(record: MoleculeRecord) -> BondGraph:
    if record.bonds is not None:
        return BondGraph.from_edges(record.elements, record.bonds)
    g = perceive_bonds(record.to_pointset())
    if g is None:
        raise ValueError("bond perception failed for a training molecule")
    return g


def _context(vocab, focus_pos, origin, placed_pos, placed_types) -> PointSet:
    pos = [focus_pos] + ([origin] if vocab.use_origin_token else []) + list(placed_pos)
    return PointSet(np.array(pos).reshape(-1, 3),
                    list(vocab.token_types) + list(placed_types), vocab.n_tokens)


def sample_trace(mol: MoleculeRecord, bonds: BondGraph, rng: np.random.Generator,
                 vocab: TypeVocabulary = TypeVocabulary()) -> list[TraceStep]:
    """Decompose a molecule into placement and stop steps around random foci."""
    n = len(mol)
    if n == 0:
        raise ValueError("empty molecule")
    if not bonds.is_connected():
        raise ValueError("molecule is disconnected under its bonds; no trace covers it")
    pos, els = mol.positions, mol.elements
    com = center_of_mass(els, pos)
    to_com = np.linalg.norm(pos - com, axis=1)
    adj = bonds.adjacency()
    first = int(np.argmin(to_com))
    steps = [TraceStep(_context(vocab, com, com, [], []), els[first], pos[first].copy())]
    placed = [first]
    is_placed = np.zeros(n, dtype=bool)
    is_placed[first] = True
    finished: set[int] = set()
    while len(finished) < n:
        open_atoms = [a for a in placed if a not in finished]
        focus = open_atoms[int(rng.integers(len(open_atoms)))]
        ctx = _context(vocab, pos[focus], com, pos[placed], [els[a] for a in placed])
        cand = [a for a in adj[focus] if not is_placed[a]]
        if cand:
            nxt = min(cand, key=lambda a: (to_com[a], a))
            steps.append(TraceStep(ctx, els[nxt], pos[nxt].copy(), focus))
            placed.append(nxt)
            is_placed[nxt] = True
        else:
            steps.append(TraceStep(ctx, vocab.stop_type, None, focus))
            finished.add(focus)
    return steps


# --- labels and loss ----------------------------------------------------------

def distance_label(d, gamma: float, bins: DistanceBinSpec = DistanceBinSpec()) -> np.ndarray:
    """Normalized Gaussian label over the bins; leading axes follow ``d``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    z = -((np.asarray(d, dtype=np.float64)[..., None] - bins.centers) ** 2) / gamma
    z -= z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def make_labels(step: TraceStep, gamma: float, bins: DistanceBinSpec = DistanceBinSpec(),
                vocab: TypeVocabulary = TypeVocabulary()):
    """(one-hot type label over predictable types, per-context-point distance labels or None)."""
    q_type = np.zeros(len(vocab.predictable))
    q_type[vocab.predictable.index(step.target_type)] = 1.0
    if step.is_stop:
        return q_type, None
    d = np.linalg.norm(step.context.positions - step.target_position, axis=1)
    return q_type, distance_label(d, gamma, bins)


def label_entropy(q_dist: np.ndarray | None) -> float:
    """Average entropy of distance labels, the floor of the distance term."""
    if q_dist is None:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(q_dist > 0, q_dist * np.log(q_dist), 0.0).sum(-1)
    return float(h.mean())


def step_loss(p_type, q_type, p_dist=None, q_dist=None) -> float:
    """Type cross-entropy plus the mean per-point distance cross-entropy (placements only)."""
    p_type, q_type = np.asarray(p_type, float), np.asarray(q_type, float)
    if p_type.shape != q_type.shape:
        raise ValueError("type prediction and label differ in shape")
    loss = -float((q_type * np.log(np.maximum(p_type, PROB_FLOOR))).sum())
    if q_dist is not None:
        p_dist, q_dist = np.asarray(p_dist, float), np.asarray(q_dist, float)
        if p_dist.shape != q_dist.shape:
            raise ValueError("distance prediction and label differ in shape")
        loss -= float((q_dist * np.log(np.maximum(p_dist, PROB_FLOOR))).sum(-1).mean())
    return loss


@dataclass
class StepBatch:
    inputs: Batch
    target: torch.Tensor      # (B,) index into predictable types
    placement: torch.Tensor   # (B,) bool
    dist_type: torch.Tensor   # (B,) embedding index of the placed type
    q_dist: torch.Tensor      # (B, N, n_bins), zero rows for stops and padding
    entropy: torch.Tensor     # (B,) label entropy floor per step

    def __len__(self) -> int:
        return len(self.target)


def make_batch(steps: Sequence[TraceStep], vocab: TypeVocabulary, bins: DistanceBinSpec,
               gamma: float) -> StepBatch:
    inputs = collate([s.context for s in steps], vocab)
    b, n = inputs.types.shape
    q = np.zeros((b, n, bins.n_bins))
    target, place, dtype, ent = [], [], [], []
    for i, s in enumerate(steps):
        q_type, q_dist = make_labels(s, gamma, bins, vocab)
        target.append(int(np.argmax(q_type)))
        place.append(q_dist is not None)
        dtype.append(vocab.index(s.target_type) if q_dist is not None else 0)
        if q_dist is not None:
            q[i, : len(q_dist)] = q_dist
        ent.append(label_entropy(q_dist))
    return StepBatch(inputs, torch.tensor(target), torch.tensor(place), torch.tensor(dtype),
                     torch.from_numpy(q), torch.tensor(ent, dtype=torch.float64))


def batch_losses(model: GenerativeModel, batch: StepBatch) -> torch.Tensor:
    """Per-step losses, shape (B,)."""
    types, positions, mask = batch.inputs
    x = model.encoder(types, positions, mask)
    maskf = mask.to(torch.float64)
    lpt = type_log_distribution(x, model, maskf).clamp_min(LOG_FLOOR)
    loss = -lpt.gather(1, batch.target[:, None])[:, 0]
    sel = batch.placement
    if bool(sel.any()):
        lpd = distance_log_distributions(x[sel], batch.dist_type[sel], model).clamp_min(LOG_FLOOR)
        ce = -(batch.q_dist[sel] * lpd).sum(-1)
        m = maskf[sel]
        dist_term = (ce * m).sum(-1) / m.sum(-1)
        loss = loss + torch.zeros_like(loss).masked_scatter(sel, dist_term)
    return loss


# --- checkpoints ----------------------------------------------------------------

@dataclass
class Checkpoint:
    vocab: TypeVocabulary
    bins: DistanceBinSpec
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    training: TrainingConfig = field(default_factory=TrainingConfig)
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_step: int = 0
    lr: float | None = None
    epoch: int = 0
    val_loss: float | None = None
    history: list[dict] = field(default_factory=list)

    def build_model(self) -> GenerativeModel:
        model = GenerativeModel(self.vocab, self.bins, self.model_config)
        model.load_arrays(self.params)
        return model

    @classmethod
    def initial(cls, vocab: TypeVocabulary, seed: int = 0, bins: DistanceBinSpec = DistanceBinSpec(),
                model_config: ModelConfig = ModelConfig(),
                training: TrainingConfig | None = None) -> "Checkpoint":
        model = GenerativeModel(vocab, bins, model_config)
        model.reset_parameters(substream(seed, "init"))
        return cls(vocab, bins, model_config, model.named_arrays(), training or TrainingConfig())


def _manifest(ckpt: Checkpoint) -> dict:
    return {
        "format": "g3dgen-checkpoint",
        "format_version": FORMAT_VERSION,
        "vocabulary": ckpt.vocab.to_dict(),
        "bins": ckpt.bins.to_dict(),
        "model": ckpt.model_config.to_dict(),
        "training": asdict(ckpt.training),
        "optimizer_step": ckpt.optimizer_step,
        "lr": ckpt.lr,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "history": ckpt.history,
    }


def _zip_entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Zip container: manifest.json plus raw little-endian float64 tensors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(ckpt)
    tensors = {}
    blobs = []
    for group, arrays in (("params", ckpt.params), ("optimizer", ckpt.optimizer)):
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name], dtype="<f8")
            entry = f"tensors/{len(blobs):05d}.bin"
            tensors[f"{group}/{name}"] = {"shape": list(a.shape), "entry": entry}
            blobs.append((entry, a.tobytes(order="C")))
    manifest["tensors"] = tensors
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr(_zip_entry("manifest.json"), json.dumps(manifest, indent=1, sort_keys=True))
        for entry, data in blobs:
            zf.writestr(_zip_entry(entry), data)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != "g3dgen-checkpoint":
            raise ValueError(f"{path} is not a checkpoint")
        if manifest["format_version"] > FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest['format_version']}")
        groups: dict[str, dict[str, np.ndarray]] = {"params": {}, "optimizer": {}}
        for key, meta in manifest["tensors"].items():
            group, _, name = key.partition("/")
            data = np.frombuffer(zf.read(meta["entry"]), dtype="<f8")
            groups[group][name] = data.reshape(meta["shape"]).astype(np.float64)
    return Checkpoint(
        vocab=TypeVocabulary.from_dict(manifest["vocabulary"]),
        bins=DistanceBinSpec.from_dict(manifest["bins"]),
        model_config=ModelConfig.from_dict(manifest["model"]),
        params=groups["params"],
        training=TrainingConfig.from_dict(manifest["training"]),
        optimizer=groups["optimizer"],
        optimizer_step=int(manifest["optimizer_step"]),
        lr=manifest["lr"],
        epoch=int(manifest["epoch"]),
        val_loss=manifest["val_loss"],
        history=manifest["history"],
    )


def _optimizer_arrays(model, opt) -> tuple[dict[str, np.ndarray], int]:
    out, step = {}, 0
    for name, p in model.named_parameters():
        st = opt.state.get(p)
        if not st:
            continue
        out[f"exp_avg/{name}"] = st["exp_avg"].detach().numpy().copy()
        out[f"exp_avg_sq/{name}"] = st["exp_avg_sq"].detach().numpy().copy()
        step = int(st["step"])
    return out, step


# --- optimization ---------------------------------------------------------------

@dataclass
class PlateauSchedule:
    lr: float
    patience: int = 10
    decay: float = 0.5
    best: float = math.inf
    wait: int = 0

    def update(self, val_loss: float) -> bool:
        """Record a validation loss; returns True when it is a new best."""
        if val_loss < self.best:
            self.best = val_loss
            self.wait = 0
            return True
        self.wait += 1
        if self.wait >= self.patience:
            self.lr *= self.decay
            self.wait = 0
        return False


def evaluate_loss(model: GenerativeModel, batches: Sequence[StepBatch]) -> float:
    total, count = 0.0, 0
    with torch.no_grad():
        for b in batches:
            total += float(batch_losses(model, b).sum())
            count += len(b)
    return total / max(count, 1)


def _trace_steps(records, bonds, rng, vocab) -> list[TraceStep]:
    steps = []
    for rec, g in zip(records, bonds):
        steps += sample_trace(rec, g, rng, vocab)
    return steps


def validation_steps(records: Sequence[MoleculeRecord], config: TrainingConfig,
                     vocab: TypeVocabulary) -> list[TraceStep]:
    """The fixed traces used for validation loss (one per molecule, seeded)."""
    bonds = [record_bonds(r) for r in records]
    return _trace_steps(records, bonds, substream(config.seed, "validation"), vocab)


def _chunks(steps, size):
    return [steps[k:k + size] for k in range(0, len(steps), size)]


def _fit(ckpt: Checkpoint, train_records: Sequence[MoleculeRecord],
         val_records: Sequence[MoleculeRecord], config: TrainingConfig, resume_optimizer: bool,
         on_epoch: Callable[[dict], None] | None = None) -> Checkpoint:
    if not train_records or not val_records:
        raise ValueError("training needs nonempty train and validation sets")
    vocab, bins = ckpt.vocab, ckpt.bins
    for rec in list(train_records) + list(val_records):
        bad = sorted(set(rec.elements) - set(vocab.elements))
        if bad:
            raise ValueError(f"elements {bad} are not in the model vocabulary")
    gamma = config.label_width(bins)
    model = ckpt.build_model()
    opt = torch.optim.Adam(model.parameters(), lr=config.lr0, betas=(0.9, 0.999), eps=1e-8)
    sched = PlateauSchedule(config.lr0, config.plateau_patience, config.lr_decay)
    if resume_optimizer and ckpt.optimizer:
        _restore_optimizer(model, opt, ckpt)
        sched.lr = ckpt.lr if ckpt.lr is not None else config.lr0
        for g in opt.param_groups:
            g["lr"] = sched.lr
    train_bonds = [record_bonds(r) for r in train_records]
    val_steps = validation_steps(val_records, config, vocab)
    val_batches = [make_batch(c, vocab, bins, gamma) for c in _chunks(val_steps, 256)]
    trace_rng = substream(config.seed, "traces")
    shuffle_rng = substream(config.seed, "shuffle")

    best_loss = evaluate_loss(model, val_batches)
    sched.best = best_loss
    best = (model.named_arrays(), *_optimizer_arrays(model, opt), sched.lr, 0)
    history = list(ckpt.history)
    for epoch in range(1, config.max_epochs + 1):
        if sched.lr <= config.lr_stop:
            break
        steps = _trace_steps(train_records, train_bonds, trace_rng, vocab)
        order = shuffle_rng.permutation(len(steps))
        steps = [steps[i] for i in order]
        total = 0.0
        for k, chunk in enumerate(_chunks(steps, config.batch_size)):
            batch = make_batch(chunk, vocab, bins, gamma)
            losses = batch_losses(model, batch)
            loss = losses.mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}, batch {k}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(losses.detach().sum())
        val_loss = evaluate_loss(model, val_batches)
        entry = {"epoch": epoch, "train_loss": total / len(steps), "val_loss": val_loss,
                 "lr": sched.lr}
        history.append(entry)
        if on_epoch:
            on_epoch(entry)
        if sched.update(val_loss):
            best_loss = val_loss
            best = (model.named_arrays(), *_optimizer_arrays(model, opt), sched.lr, epoch)
        for g in opt.param_groups:
            g["lr"] = sched.lr
    params, opt_arrays, opt_step, lr, epoch = best
    return Checkpoint(vocab, bins, ckpt.model_config, params, config, opt_arrays, opt_step,
                      lr, epoch, best_loss, history)


def _restore_optimizer(model, opt, ckpt: Checkpoint) -> None:
    state = opt.state_dict()
    for i, (name, _) in enumerate(model.named_parameters()):
        if f"exp_avg/{name}" in ckpt.optimizer:
            state["state"][i] = {
                "step": torch.tensor(float(ckpt.optimizer_step)),
                "exp_avg": torch.from_numpy(ckpt.optimizer[f"exp_avg/{name}"].copy()),
                "exp_avg_sq": torch.from_numpy(ckpt.optimizer[f"exp_avg_sq/{name}"].copy()),
            }
    opt.load_state_dict(state)


def _splits(dataset: Dataset | Sequence[MoleculeRecord]):
    if isinstance(dataset, Dataset):
        if "train" in dataset.splits:
            train = dataset.subset("train").records
            val = dataset.subset("validation").records if dataset.splits.get("validation") else []
            return train, val
        return dataset.records, dataset.records
    return list(dataset), list(dataset)


def train(dataset, config: TrainingConfig = TrainingConfig(), *,
          vocab: TypeVocabulary = TypeVocabulary(), bins: DistanceBinSpec = DistanceBinSpec(),
          model_config: ModelConfig = ModelConfig(), init: Checkpoint | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> Checkpoint:
    """Train from scratch (or continue ``init`` with its optimizer state).

    ``dataset`` is a Dataset with train/validation splits; an unsplit Dataset
    or a plain record list is used for both.
    """
    train_records, val_records = _splits(dataset)
    start = init or Checkpoint.initial(vocab, config.seed, bins, model_config, config)
    return _fit(start, train_records, val_records, config, resume_optimizer=init is not None,
                on_epoch=on_epoch)


def finetune(ckpt: Checkpoint, dataset, config: TrainingConfig | None = None, *,
             on_epoch: Callable[[dict], None] | None = None) -> Checkpoint:
    """Continue from ``ckpt`` parameters with a fresh optimizer at lr0."""
    config = config or ckpt.training
    train_records, val_records = _splits(dataset)
    if not train_records:
        raise ValueError("fine-tuning subset is empty")
    fresh = copy.copy(ckpt)
    fresh.optimizer, fresh.optimizer_step, fresh.lr = {}, 0, None
    return _fit(fresh, train_records, val_records, config, resume_optimizer=False, on_epoch=on_epoch)


# --- gradient verification ---------------------------------------------------------

def finite_difference_check(model: GenerativeModel, steps: Sequence[TraceStep], eps: float = 1e-3,
                            n_params: int = 200, rng: np.random.Generator | None = None,
                            gamma: float | None = None, grad_scale: float = 1.0) -> float:
    """Max relative error between analytic and central-difference gradients.

    The default step is 1e-3: at 1e-5 float64 round-off in an O(1) loss
    swamps gradients of order 1e-7.  ``grad_scale`` multiplies the analytic gradient (fault injection).
    """
    rng = rng or np.random.default_rng(0)
    gamma = gamma if gamma is not None else 0.1 * model.bins.bin_width
    batch = make_batch(list(steps), model.vocab, model.bins, gamma)
    params = [p for _, p in sorted(model.named_parameters())]
    sizes = np.array([p.numel() for p in params])
    total = int(sizes.sum())
    n = min(n_params, total)
    if n == 0:
        return 0.0
    model.zero_grad()
    batch_losses(model, batch).mean().backward()
    flat = rng.choice(total, size=n, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    with torch.no_grad():
        for f in np.sort(flat):
            k = int(np.searchsorted(offsets, f, side="right") - 1)
            p, i = params[k].view(-1), int(f - offsets[k])
            analytic = grad_scale * float(params[k].grad.view(-1)[i])
            orig = float(p[i])
            p[i] = orig + eps
            up = float(batch_losses(model, batch).mean())
            p[i] = orig - eps
            down = float(batch_losses(model, batch).mean())
            p[i] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, err)
    model.zero_grad()
    return worst
