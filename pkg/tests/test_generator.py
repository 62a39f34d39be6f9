import math

import numpy as np
import pytest

from g3dgen.chemeval import canonical_hash, perceive_bonds
from g3dgen.generator import (
    COMPLETED, DISCARDED, GenerationConfig, generate_batch, generate_one, run_seed,
)
from g3dgen.geometry import kabsch_rmsd, random_rotation
from g3dgen.trainer import Checkpoint

from conftest import SMALL, small_model


def _config(**kw):
    base = dict(max_atoms=6, grid_extent=1.0, grid_step=0.1, n_molecules=6, seed=5)
    base.update(kw)
    return GenerationConfig(**base)


@pytest.fixture(scope="module")
def ckpt():
    from g3dgen.geometry import TypeVocabulary
    return Checkpoint.initial(TypeVocabulary(), seed=1, model_config=SMALL)


def test_config_validation():
    for bad in (dict(max_atoms=0), dict(temperature=0.0), dict(grid_step=-0.1)):
        with pytest.raises(ValueError):
            GenerationConfig(**bad)


def test_generation_is_deterministic(ckpt):
    a = generate_batch(ckpt, _config())
    b = generate_batch(ckpt, _config())
    assert [r.status for r in a] == [r.status for r in b]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.structure.positions, y.structure.positions)
        assert x.structure.types == y.structure.types
        assert [(s.focus, s.sampled_type, s.cell) for s in x.steps] == \
               [(s.focus, s.sampled_type, s.cell) for s in y.steps]
    assert [r.index for r in a] == list(range(6))


def test_parallel_matches_serial(ckpt):
    serial = generate_batch(ckpt, _config())
    parallel = generate_batch(ckpt, _config(), jobs=2)
    for x, y in zip(serial, parallel):
        assert x.status == y.status
        np.testing.assert_array_equal(x.structure.positions, y.structure.positions)


def test_generate_one_accepts_model_or_checkpoint(ckpt):
    cfg = _config()
    a = generate_one(ckpt, cfg, run_seed(cfg.seed, 0))
    b = generate_one(ckpt.build_model(), cfg, run_seed(cfg.seed, 0))
    np.testing.assert_array_equal(a.structure.positions, b.structure.positions)


def test_structure_invariants(ckpt):
    cfg = _config(n_molecules=8)
    for res in generate_batch(ckpt, cfg):
        s = res.structure
        assert s.n_tokens == 0
        assert not {"focus", "origin", "stop"} & set(s.types)
        assert len(s) >= 1
        if res.status == COMPLETED:
            assert len(s) <= cfg.max_atoms
            stops = [st.focus for st in res.steps if st.sampled_type == "stop"]
            assert sorted(stops) == list(range(len(s)))
        assert res.steps[0].sampled_type != "stop"
        # every placement lies within the grid around its focus (origin at step one)
        k = 0
        for st in res.steps:
            if st.cell is None:
                continue
            center = np.zeros(3) if st.focus is None else s.positions[st.focus]
            assert np.linalg.norm(s.positions[k] - center) <= cfg.grid_extent * math.sqrt(3) + 1e-12
            k += 1


def test_max_atoms_one_mostly_discards(ckpt):
    res = generate_batch(ckpt, _config(max_atoms=1, n_molecules=10))
    assert sum(r.status == DISCARDED for r in res) >= 5
    assert all(len(r.structure) == 1 for r in res)


def test_rotated_grid_gives_rotated_structure():
    model = small_model(seed=4)
    rot = random_rotation(np.random.default_rng(0))
    plain = generate_one(model, _config(grid_step=0.05, grid_extent=0.8), run_seed(9, 0))
    turned = generate_one(model, _config(grid_step=0.05, grid_extent=0.8, grid_rotation=rot),
                          run_seed(9, 0))
    assert plain.structure.types == turned.structure.types
    assert kabsch_rmsd(plain.structure, turned.structure) < 0.05
    np.testing.assert_allclose(turned.structure.positions, plain.structure.positions @ rot.T,
                               atol=1e-9)


def test_without_origin_token():
    from g3dgen.geometry import TypeVocabulary
    ck = Checkpoint.initial(TypeVocabulary(use_origin_token=False), seed=2, model_config=SMALL)
    res = generate_batch(ck, _config(n_molecules=2))
    assert all(r.structure.n_tokens == 0 for r in res)


def test_completed_results_feed_chemeval(ckpt):
    for r in generate_batch(ckpt, _config()):
        g = perceive_bonds(r.structure)
        if g is not None:
            assert isinstance(canonical_hash(g), str)
