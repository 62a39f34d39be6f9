import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from g3dgen.dataio import (
    Dataset, MoleculeRecord, XYZFormatError, filter_by_property, load_xyz, parse_filter,
    parse_xyz, save_records, save_structures, split,
)
from g3dgen.generator import GenerationResult
from g3dgen.geometry import PointSet
from g3dgen.toy import methane

CH4 = """5
gap=3.2 name="methane gas" bonds=0-1,0-2,0-3,0-4:1
C 0.0 0.0 0.0
H 0.629 0.629 0.629
H 0.629 -0.629 -0.629
H -0.629 0.629 -0.629
H -0.629 -0.629 0.629
"""


def test_parse_single_frame(tmp_path):
    p = tmp_path / "ch4.xyz"
    p.write_text(CH4)
    ds = load_xyz(p)
    assert len(ds) == 1 and len(ds[0]) == 5
    rec = ds[0]
    assert rec.properties == {"gap": 3.2}
    assert rec.info == {"name": "methane gas"}
    assert rec.bonds == [(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)]
    assert rec.elements == ["C", "H", "H", "H", "H"]


def test_multiple_frames_and_mathematica_exponents():
    text = CH4 + "1\n\nO 1.5*^-1 0 0\n"
    recs = parse_xyz(text)
    assert len(recs) == 2
    assert recs[1].positions[0, 0] == pytest.approx(0.15)
    assert recs[1].properties == {} and recs[1].bonds is None


@pytest.mark.parametrize("text,match", [
    (CH4.replace("H -0.629 -0.629 0.629\n", ""), r":7: frame declares 5 atoms"),
    ("x\n\n", r":1: expected an atom count"),
    ("1\n\nS 0 0 0\n", r":3: unknown element 'S'"),
    ("1\n\nC 0 zero 0\n", r":3: malformed coordinates"),
    ("2\nbonds=0-5\nC 0 0 0\nC 1 0 0\n", r"line 2: bond"),
])
def test_malformed_input_names_the_line(text, match):
    with pytest.raises(XYZFormatError, match=match):
        parse_xyz(text)


def test_short_frame_in_middle_of_file():
    text = CH4 + "3\n\nC 0 0 0\nH 1 0 0\n" + CH4
    with pytest.raises(XYZFormatError, match="declares 3 atoms"):
        parse_xyz(text)


def test_split_partition_and_determinism():
    ds = Dataset([methane() for _ in range(10)])
    a = split(ds, (6, 2, 2), seed=4)
    b = split(ds, (6, 2, 2), seed=4)
    assert a.splits == b.splits
    idx = sum(a.splits.values(), [])
    assert sorted(idx) == list(range(10))
    assert [len(a.splits[k]) for k in ("train", "validation", "test")] == [6, 2, 2]
    with pytest.raises(ValueError):
        split(ds, (20, 0, 0), seed=0)
    partial = split(ds, (3, 3), seed=1)
    assert len(set(partial.splits["train"]) | set(partial.splits["validation"])) == 6


def test_dataset_rejects_overlapping_splits():
    with pytest.raises(ValueError):
        Dataset([methane()] * 3, {"train": [0, 1], "validation": [1]})
    with pytest.raises(ValueError):
        Dataset([methane()] * 3, {"train": [5]})


def _gapped(values):
    out = []
    for v in values:
        r = methane()
        if v is not None:
            r.properties["gap"] = v
        out.append(r)
    return Dataset(out)


def test_filter_by_property():
    ds = _gapped([3.0, 5.0, 4.4])
    kept = filter_by_property(ds, "gap", "<=", 4.5)
    assert [r.properties["gap"] for r in kept.records] == [3.0, 4.4]
    assert len(filter_by_property(ds, "gap", "<=", 1.0)) == 0
    assert len(filter_by_property(ds, "gap", ">=", 4.4)) == 2
    with pytest.raises(KeyError, match=r"\[1\]"):
        filter_by_property(_gapped([3.0, None]), "gap", "<=", 4.5)


def test_parse_filter():
    assert parse_filter("gap<=4.5") == ("gap", "<=", 4.5)
    assert parse_filter(" mu >= -1 ") == ("mu", ">=", -1.0)
    with pytest.raises(ValueError):
        parse_filter("gap<4.5")


def _result(ps, index=0):
    return GenerationResult(ps, "completed", [], seed=3, index=index)


def test_save_structures(tmp_path):
    structures = [methane().to_pointset() for _ in range(3)]
    path = tmp_path / "out.xyz"
    save_structures([_result(s, i) for i, s in enumerate(structures)], path)
    back = load_xyz(path)
    assert len(back) == 3
    assert back[2].info == {"status": "completed"} and back[2].properties["index"] == 2
    save_structures([], tmp_path / "empty.xyz")
    assert (tmp_path / "empty.xyz").read_text() == ""
    with pytest.raises(ValueError):
        save_structures([GenerationResult(structures[0], "discarded_max_atoms")], path)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.just(3)), elements=finite),
       st.lists(st.sampled_from(["H", "C", "N", "O", "F"]), min_size=12, max_size=12))
def test_round_trip_positions(tmp_path_factory, pos, els):
    els = els[: len(pos)]
    path = tmp_path_factory.mktemp("rt") / "s.xyz"
    save_structures([_result(PointSet(pos, els))], path)
    first = load_xyz(path)[0]
    assert first.elements == els
    assert np.abs(first.positions - pos).max() <= 1e-9
    save_records([first], path)
    second = load_xyz(path)[0]
    np.testing.assert_array_equal(second.positions, first.positions)


def test_record_round_trip_keeps_properties_and_bonds(tmp_path):
    rec = MoleculeRecord(["C", "O"], [[0, 0, 0], [1.2, 0, 0]], {"gap": 4.25}, [(0, 1, 2)],
                         {"name": "carbon monoxide"})
    save_records([rec], tmp_path / "r.xyz")
    back = load_xyz(tmp_path / "r.xyz")[0]
    assert back.properties == {"gap": 4.25} and back.bonds == [(0, 1, 2)]
    assert back.info == {"name": "carbon monoxide"}


def test_record_validation():
    with pytest.raises(ValueError):
        MoleculeRecord(["C"], [[0, 0, np.nan]])
    with pytest.raises(ValueError):
        MoleculeRecord(["C", "H"], [[0, 0, 0]])
