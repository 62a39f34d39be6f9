import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from g3dgen.geometry import (
    RBF_WIDTH, CandidateGrid, DistanceBinSpec, PointSet, TypeVocabulary, build_candidate_grid,
    kabsch_rmsd, nearest_bin, pairwise_distances, random_rotation, rbf_expand,
)

coords = arrays(np.float64, st.tuples(st.integers(1, 8), st.just(3)),
                elements=st.floats(-10, 10, allow_nan=False))


def test_vocabulary_layout():
    v = TypeVocabulary()
    assert v.predictable == ("H", "C", "N", "O", "F", "stop")
    assert v.token_types == ("focus", "origin")
    assert len(set(v.codes)) == v.size == 8
    assert TypeVocabulary(use_origin_token=False).token_types == ("focus",)
    with pytest.raises(KeyError, match="Xe"):
        v.index("Xe")


def test_vocabulary_round_trip():
    v = TypeVocabulary(elements=("C", "O"), use_origin_token=False)
    assert TypeVocabulary.from_dict(v.to_dict()) == v


def test_pointset_invariants():
    with pytest.raises(ValueError):
        PointSet(np.zeros((2, 3)), ["C"])
    with pytest.raises(ValueError):
        PointSet(np.zeros((2, 3)), ["focus", "focus"], 2)
    with pytest.raises(ValueError):
        PointSet(np.zeros((2, 3)), ["focus", "origin"], 1)
    ps = PointSet(np.arange(9.0).reshape(3, 3), ["focus", "C", "H"], 1)
    assert ps.atom_types == ["C", "H"]
    assert ps.atoms().n_tokens == 0
    perm = ps.permuted([1, 0])
    assert perm.types == ["focus", "H", "C"]
    np.testing.assert_array_equal(perm.positions[0], ps.positions[0])


def test_pairwise_distances_examples():
    d = pairwise_distances(np.array([[0.0, 0, 0], [3, 4, 0]]))
    assert d[0, 1] == d[1, 0] == 5.0
    assert pairwise_distances(np.zeros((1, 3))).shape == (1, 1)


@given(coords, st.integers(0, 2**32 - 1))
def test_pairwise_distances_rigid_and_permutation(x, seed):
    rng = np.random.default_rng(seed)
    rot = random_rotation(rng)
    d = pairwise_distances(x)
    moved = x @ rot.T + rng.normal(size=3)
    np.testing.assert_allclose(pairwise_distances(moved), d, atol=1e-12 * (1 + np.abs(x).max()) * 10)
    p = rng.permutation(len(x))
    np.testing.assert_array_equal(pairwise_distances(x[p]), d[np.ix_(p, p)])
    assert np.all(np.diag(d) == 0) and np.array_equal(d, d.T)


def test_rbf_examples():
    assert rbf_expand(0.0)[0] == 1.0
    assert np.all(rbf_expand(25.0) < 1e-10)
    prof = rbf_expand(5.0)
    assert np.argmax(prof) == 12
    np.testing.assert_allclose(prof[:12], prof[13:][::-1], rtol=1e-12)
    assert RBF_WIDTH == pytest.approx(10 / 24)


@given(st.floats(0, 10))
def test_rbf_range(d):
    v = rbf_expand(d)
    assert np.all(v <= 1.0) and np.all(v >= 0.0)
    assert v.max() >= np.exp(-1 / 8)


def test_nearest_bin_examples():
    assert nearest_bin(0.025) == 0
    assert nearest_bin(100.0) == 299
    assert nearest_bin(1.50) == 29
    spec = DistanceBinSpec()
    np.testing.assert_array_equal(nearest_bin(spec.centers), np.arange(300))


@given(st.floats(0, 20))
def test_nearest_bin_is_argmin(d):
    centers = DistanceBinSpec().centers
    gaps = np.abs(d - centers)
    assert gaps[nearest_bin(d)] <= gaps.min() + 1e-12


def test_bin_spec():
    spec = DistanceBinSpec()
    assert spec.max_distance == pytest.approx(15.0)
    assert spec.centers[0] == pytest.approx(0.025)
    assert np.allclose(np.diff(spec.centers), 0.05)


@pytest.mark.parametrize("extent,step,per_axis", [(1.7, 0.05, 69), (0.05, 0.05, 3), (0.04, 0.05, 1)])
def test_grid_sizes(extent, step, per_axis):
    g = build_candidate_grid(np.zeros(3), extent, step)
    assert g.cells_per_axis == per_axis
    assert len(g) == per_axis ** 3


def test_grid_default_size_and_center():
    g = build_candidate_grid(np.array([1.0, -2.0, 0.5]))
    assert len(g) == 328_509
    np.testing.assert_allclose(g.cells[g.center_index], [1.0, -2.0, 0.5])
    np.testing.assert_allclose(g.offsets.min(0), [-1.7] * 3)
    np.testing.assert_allclose(g.offsets.max(0), [1.7] * 3)


@pytest.mark.parametrize("extent,step", [(0.0, 0.05), (1.0, 0.0), (-1.0, 0.05)])
def test_grid_rejects_nonpositive(extent, step):
    with pytest.raises(ValueError):
        build_candidate_grid(np.zeros(3), extent, step)


def test_kabsch_examples():
    a = PointSet(np.array([[0.0, 0, 0], [1.0, 0, 0]]), ["C", "C"])
    b = PointSet(np.array([[0.0, 0, 0], [1.2, 0, 0]]), ["C", "C"])
    assert kabsch_rmsd(a, b) == pytest.approx(0.1, abs=1e-12)
    assert kabsch_rmsd(a, a) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        kabsch_rmsd(a, PointSet(np.zeros((2, 3)), ["C", "O"]))
    with pytest.raises(ValueError):
        kabsch_rmsd(a, PointSet(np.zeros((3, 3)), ["C"] * 3))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_kabsch_removes_rigid_motion_and_is_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    a = PointSet(x, ["C"] * n)
    b = a.transformed(random_rotation(rng), rng.normal(size=3))
    assert kabsch_rmsd(a, b) < 1e-9
    c = PointSet(x + 0.1 * rng.normal(size=x.shape), ["C"] * n)
    assert kabsch_rmsd(a, c) == pytest.approx(kabsch_rmsd(c, a), abs=1e-12)


def test_random_rotation_is_proper():
    r = random_rotation(np.random.default_rng(0))
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0)


def test_rotated_grid_matches_rotated_offsets():
    rot = random_rotation(np.random.default_rng(3))
    g = build_candidate_grid(np.zeros(3), 0.1, 0.05)
    gr = build_candidate_grid(np.zeros(3), 0.1, 0.05, rot)
    np.testing.assert_allclose(gr.offsets, g.offsets @ rot.T, atol=1e-15)
    assert isinstance(gr, CandidateGrid)


def test_nearest_bin_round_off_at_boundaries_counts_as_tie():
    for k in (1, 2, 5, 30):
        edge = 0.05 * k
        assert nearest_bin(edge + 1e-13) == nearest_bin(edge - 1e-13) == k - 1
