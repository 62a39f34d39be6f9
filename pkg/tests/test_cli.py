import json
import zipfile

import pytest

from g3dgen.cli import build_parser, main
from g3dgen.dataio import load_xyz, save_records
from g3dgen.toy import methane, toy_set

SMALL_INI = """\
[model]
n_features = 16
n_blocks = 2

[train]
max_epochs = 2
batch_size = 16

[generate]
max_atoms = 8
grid_extent = 1.0
grid_step = 0.1
"""


@pytest.fixture
def workdir(tmp_path):
    recs = toy_set()
    for gap, r in zip((3.0, 5.0, 4.4, 6.0, 4.0), recs):
        r.properties["gap"] = gap
    save_records(recs, tmp_path / "toy.xyz")
    (tmp_path / "small.ini").write_text(SMALL_INI)
    return tmp_path


def _train(d, *extra):
    return main(["train", "--config", str(d / "small.ini"), "--dataset", str(d / "toy.xyz"),
                 "--checkpoint", str(d / "m.ckpt"), "--seed", "1", *extra])


def _manifest(path):
    with zipfile.ZipFile(path) as zf:
        return json.loads(zf.read("manifest.json"))


def test_train_smoke(workdir):
    assert _train(workdir) == 0
    assert (workdir / "m.ckpt").exists()
    log = (workdir / "m.ckpt.log").read_text().splitlines()
    assert log[0].split("\t") == ["epoch", "train_loss", "val_loss", "lr"]
    assert len(log) >= 2
    assert _manifest(workdir / "m.ckpt")["vocabulary"]["use_origin_token"] is True


def test_origin_token_flag_recorded(workdir):
    assert _train(workdir, "--use-origin-token=false") == 0
    assert _manifest(workdir / "m.ckpt")["vocabulary"]["use_origin_token"] is False


def test_missing_dataset_names_path(workdir, capsys):
    code = main(["train", "--dataset", str(workdir / "nope.xyz"),
                 "--checkpoint", str(workdir / "m.ckpt")])
    assert code == 2
    assert "nope.xyz" in capsys.readouterr().err


def test_generate_is_reproducible(workdir):
    assert _train(workdir) == 0
    outs = []
    for name in ("a.xyz", "b.xyz"):
        assert main(["generate", "--config", str(workdir / "small.ini"),
                     "--checkpoint", str(workdir / "m.ckpt"), "--out", str(workdir / name),
                     "--n", "10", "--seed", "3"]) == 0
        outs.append((workdir / name).read_bytes())
    assert outs[0] == outs[1]
    summary = (workdir / "a.xyz.summary.txt").read_text().splitlines()
    counts = dict(line.split("\t") for line in summary)
    assert int(counts["requested"]) == 10
    assert int(counts["completed"]) + int(counts["discarded_max_atoms"]) == 10
    assert len(load_xyz(workdir / "a.xyz")) == int(counts["completed"])


def test_zero_temperature_is_a_usage_error(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--checkpoint", "x", "--out", "y", "--temperature", "0"])
    assert exc.value.code == 1
    assert "temperature" in capsys.readouterr().err


def test_evaluate_counts(workdir, capsys):
    save_records([methane()] * 3, workdir / "ch4.xyz")
    assert main(["evaluate", "--structures", str(workdir / "ch4.xyz"),
                 "--train-set", str(workdir / "toy.xyz"), "--out", str(workdir / "rep")]) == 0
    kv = dict(line.split("=", 1) for line in (workdir / "rep" / "report.kv").read_text().split())
    assert float(kv["pct_valid"]) == 100.0
    assert float(kv["pct_unique"]) == pytest.approx(100 / 3)
    assert float(kv["pct_novel"]) == 0.0
    assert "pct_unique" in capsys.readouterr().out


def test_evaluate_empty_set(workdir):
    (workdir / "empty.xyz").write_text("")
    assert main(["evaluate", "--structures", str(workdir / "empty.xyz"),
                 "--out", str(workdir / "rep")]) == 0
    kv = (workdir / "rep" / "report.kv").read_text()
    assert "n_generated=0\n" in kv and "pct_valid=0.0\n" in kv


def test_finetune(workdir):
    assert _train(workdir) == 0
    out = workdir / "biased.ckpt"
    assert main(["finetune", "--checkpoint", str(workdir / "m.ckpt"),
                 "--dataset", str(workdir / "toy.xyz"), "--filter", "gap<=4.5",
                 "--out", str(out), "--epochs", "2", "--lr", "1e-3"]) == 0
    assert (workdir / "biased.ckpt.log").read_text().startswith("# subset_size\t3\n")
    assert out.read_bytes() != (workdir / "m.ckpt").read_bytes()
    assert _manifest(out)["model"]["n_blocks"] == 2


def test_finetune_empty_subset_fails(workdir, capsys):
    assert _train(workdir) == 0
    code = main(["finetune", "--checkpoint", str(workdir / "m.ckpt"),
                 "--dataset", str(workdir / "toy.xyz"), "--filter", "gap<=1",
                 "--out", str(workdir / "b.ckpt")])
    assert code == 2
    assert "no molecules" in capsys.readouterr().err


def test_config_precedence(workdir):
    from g3dgen.cli import load_run_config
    args = build_parser().parse_args(["generate", "--config", str(workdir / "small.ini"),
                                      "--temperature", "0.5"])
    cfg = load_run_config(args.config, args)
    assert cfg.generation.temperature == 0.5          # flag
    assert cfg.generation.max_atoms == 8              # file
    assert cfg.generation.grid_step == 0.1            # file
    assert cfg.training.lr0 == 1e-4                   # default


def test_bad_config_value_is_usage_error(workdir):
    (workdir / "bad.ini").write_text("[train]\nlr0 = fast\n")
    assert main(["train", "--config", str(workdir / "bad.ini"), "--dataset",
                 str(workdir / "toy.xyz"), "--checkpoint", str(workdir / "x.ckpt")]) == 1


@pytest.mark.parametrize("command", ["train", "generate", "evaluate", "finetune"])
def test_help_lists_flags_with_defaults(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for action in build_parser()._subparsers._group_actions[0].choices[command]._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.help and action.dest != "help":
            assert "default" in action.help or "required" in action.help


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 1
