"""Command line entry point: ``g3dgen train|generate|evaluate|finetune``."""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataio import Dataset, atomic_write_text, filter_by_property, load_xyz, parse_filter, save_structures, split
from .generator import COMPLETED, DISCARDED, GenerationConfig, generate_batch
from .geometry import TypeVocabulary
from .model import ModelConfig
from .trainer import TrainingConfig, finetune, load_checkpoint, save_checkpoint, train

log = logging.getLogger("g3dgen")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a non-negative 64-bit integer")
    return v


@dataclass
class RunConfig:
    """Merged view of file values and flags (flag > file > default)."""

    training: TrainingConfig = field(default_factory=TrainingConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    use_origin_token: bool = True
    train_size: int | None = None
    val_size: int = 0
    split_seed: int = 0
    dataset: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    jobs: int = 1


_TRAIN_KEYS = {"lr0": float, "plateau_patience": int, "lr_decay": float, "lr_stop": float,
               "batch_size": int, "seed": int, "gamma": float, "max_epochs": int}
_GEN_KEYS = {"temperature": float, "max_atoms": int, "grid_extent": float, "grid_step": float,
             "n_molecules": int, "seed": int}


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def load_run_config(path: str | None, args: argparse.Namespace,
                    base_training: TrainingConfig | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp.read(path)

    def get(section, key, conv, default=None):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"[{section}] {key}: {exc}") from None
        return default

    tr = {k: get("train", k, c) for k, c in _TRAIN_KEYS.items()}
    gen = {k: get("generate", k, c) for k, c in _GEN_KEYS.items()}
    flag = vars(args)
    if flag.get("seed") is not None:
        tr["seed"] = gen["seed"] = flag["seed"]
    if flag.get("epochs") is not None:
        tr["max_epochs"] = flag["epochs"]
    if flag.get("lr") is not None:
        tr["lr0"] = flag["lr"]
    if flag.get("temperature") is not None:
        gen["temperature"] = flag["temperature"]
    if flag.get("n") is not None:
        gen["n_molecules"] = flag["n"]
    if flag.get("max_atoms") is not None:
        gen["max_atoms"] = flag["max_atoms"]
    try:
        base = asdict(base_training) if base_training is not None else {}
        training = TrainingConfig(**{**base, **{k: v for k, v in tr.items() if v is not None}})
        generation = GenerationConfig(**{k: v for k, v in gen.items() if v is not None})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mdefaults = ModelConfig()
    model = ModelConfig(
        n_features=get("model", "n_features", int, mdefaults.n_features),
        n_blocks=get("model", "n_blocks", int, mdefaults.n_blocks),
        type_widths=get("model", "type_widths", _ints, mdefaults.type_widths),
        dist_widths=get("model", "dist_widths", _ints, mdefaults.dist_widths),
    )
    origin = flag.get("use_origin_token")
    if origin is None:
        origin = get("model", "use_origin_token", _bool, True)

    def pick(name, section="paths"):
        v = flag.get(name)
        return v if v is not None else get(section, name, str)

    return RunConfig(
        training=training, generation=generation, model=model, use_origin_token=origin,
        train_size=get("data", "train_size", int), val_size=get("data", "val_size", int, 0),
        split_seed=get("data", "split_seed", int, 0),
        dataset=pick("dataset"), checkpoint=pick("checkpoint"), out=pick("out"),
        jobs=flag.get("jobs") or get("run", "jobs", int, 1),
    )


def _require(value, what: str):
    if value is None:
        raise UsageError(f"missing {what}")
    return value


def _existing(path: str, what: str) -> str:
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _split_for_training(ds: Dataset, cfg: RunConfig) -> Dataset:
    if cfg.val_size <= 0:
        # no held-out molecules: validate on the training molecules themselves
        return ds
    n_train = cfg.train_size if cfg.train_size is not None else len(ds) - cfg.val_size
    return split(ds, (n_train, cfg.val_size), cfg.split_seed)


def _log_writer(lines: list[str]):
    lines.append("epoch\ttrain_loss\tval_loss\tlr")

    def on_epoch(e):
        line = f"{e['epoch']}\t{e['train_loss']!r}\t{e['val_loss']!r}\t{e['lr']!r}"
        lines.append(line)
        log.info("epoch %d train %.5f val %.5f lr %.3g",
                 e["epoch"], e["train_loss"], e["val_loss"], e["lr"])
    return on_epoch


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args)
    dataset_path = _existing(_require(cfg.dataset, "--dataset"), "dataset")
    ckpt_path = _require(cfg.checkpoint, "--checkpoint")
    ds = _split_for_training(load_xyz(dataset_path), cfg)
    vocab = TypeVocabulary(use_origin_token=cfg.use_origin_token)
    lines: list[str] = []
    ckpt = train(ds, cfg.training, vocab=vocab, model_config=cfg.model, on_epoch=_log_writer(lines))
    save_checkpoint(ckpt, ckpt_path)
    atomic_write_text(cfg.out or ckpt_path + ".log", "\n".join(lines) + "\n")
    log.info("best epoch %d, validation loss %.5f", ckpt.epoch, ckpt.val_loss)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config, args)
    ckpt = load_checkpoint(_existing(_require(cfg.checkpoint, "--checkpoint"), "checkpoint"))
    out = _require(cfg.out, "--out")
    results = generate_batch(ckpt, cfg.generation, jobs=cfg.jobs)
    done = [r for r in results if r.status == COMPLETED]
    save_structures(done, out)
    summary = (f"requested\t{len(results)}\n{COMPLETED}\t{len(done)}\n"
               f"{DISCARDED}\t{len(results) - len(done)}\n")
    atomic_write_text(out + ".summary.txt", summary)
    log.info("generated %d structures, %d discarded", len(done), len(results) - len(done))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .chemeval import statistics_report, write_report

    structures = load_xyz(_existing(_require(args.structures, "--structures"), "structures"))
    train_set = load_xyz(_existing(args.train_set, "train set")) if args.train_set else Dataset([])
    ref_set = load_xyz(_existing(args.reference_set, "reference set")) if args.reference_set else train_set
    out = _require(args.out, "--out")
    report = statistics_report(
        [r.to_pointset() for r in structures.records],
        [r.to_pointset() for r in train_set.records],
        [r.to_pointset() for r in ref_set.records],
    )
    write_report(report, out)
    sys.stdout.write(report.to_table())
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = load_run_config(args.config, args)
    ckpt = load_checkpoint(_existing(_require(cfg.checkpoint, "--checkpoint"), "checkpoint"))
    cfg = load_run_config(args.config, args, base_training=ckpt.training)
    ds = load_xyz(_existing(_require(cfg.dataset, "--dataset"), "dataset"))
    name, op, threshold = parse_filter(_require(args.filter, "--filter"))
    subset = filter_by_property(ds, name, op, threshold)
    log.info("property filter %s%s%g keeps %d of %d molecules", name, op, threshold,
             len(subset), len(ds))
    if len(subset) == 0:
        raise ValueError(f"filter {args.filter!r} leaves no molecules")
    out = _require(cfg.out, "--out")
    lines = [f"# subset_size\t{len(subset)}"]
    new = finetune(ckpt, _split_for_training(subset, cfg), cfg.training, on_epoch=_log_writer(lines))
    save_checkpoint(new, out)
    atomic_write_text(out + ".log", "\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="g3dgen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *, dataset=False, checkpoint_help="checkpoint path", out_help="output path"):
        p.add_argument("--config", help="INI config file (default: none)")
        if dataset:
            p.add_argument("--dataset", help="extended-XYZ dataset (default: [paths] dataset)")
        p.add_argument("--checkpoint", help=f"{checkpoint_help} (default: [paths] checkpoint)")
        p.add_argument("--out", help=f"{out_help} (default: [paths] out)")
        p.add_argument("--seed", type=_seed, help="run seed (default: 0)")
        p.add_argument("--jobs", type=int, help="worker processes (default: 1)")

    p = sub.add_parser("train", help="train a model from scratch")
    common(p, dataset=True, checkpoint_help="checkpoint to write",
           out_help="training log (default name: <checkpoint>.log)")
    p.add_argument("--use-origin-token", type=_bool, metavar="{true,false}",
                   help="feed the origin token (default: true)")
    p.add_argument("--epochs", type=int, help="maximum epochs (default: 1000)")
    p.add_argument("--lr", type=_positive, help="initial learning rate (default: 1e-4)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample structures from a checkpoint")
    common(p, checkpoint_help="trained checkpoint", out_help="extended-XYZ file to write")
    p.add_argument("--n", type=int, help="number of molecules (default: 1)")
    p.add_argument("--temperature", type=_positive, help="grid temperature T (default: 0.1)")
    p.add_argument("--max-atoms", type=int, help="discard after this many atoms (default: 35)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="validity, uniqueness, novelty and statistics")
    p.add_argument("--structures", help="generated structures, extended-XYZ (required)")
    p.add_argument("--train-set", help="training molecules (default: none)")
    p.add_argument("--reference-set", help="reference corpus for novelty (default: train set)")
    p.add_argument("--out", help="report directory (required)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("finetune", help="bias a checkpoint on a property-filtered subset")
    common(p, dataset=True, checkpoint_help="checkpoint to start from",
           out_help="fine-tuned checkpoint to write")
    p.add_argument("--filter", help="property filter such as 'gap<=4.5' (required)")
    p.add_argument("--epochs", type=int, help="maximum epochs (default: from checkpoint)")
    p.add_argument("--lr", type=_positive, help="initial learning rate (default: 1e-4)")
    p.set_defaults(func=cmd_finetune)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"g3dgen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # one-line cause for every module error
        print(f"g3dgen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
