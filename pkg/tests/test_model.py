import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panopteval import (ClassDef, ClassRegistry, PanopticMap, UnknownClassError,
                        canonicalize_stuff, extract_segments, validate_map)
from .conftest import make_map


class TestClassRegistry:
    def test_partition(self, registry):
        assert registry.stuff_ids == {1, 2}
        assert registry.thing_ids == {3, 4}
        assert registry.is_thing(3) and not registry.is_thing(1)
        assert len(registry) == 4

    def test_void_reserved(self):
        with pytest.raises(ValueError, match="reserved"):
            ClassRegistry([ClassDef(0, "void", False)])

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ClassRegistry([ClassDef(1, "a", False), ClassDef(1, "b", True)])


class TestExtractSegments:
    def test_all_void(self, registry):
        m = make_map(np.zeros((4, 4), int), np.zeros((4, 4), int))
        assert extract_segments(m, registry) == []

    def test_halves(self, registry):
        cls = [[1] * 2 + [2] * 2] * 4
        inst = [[1, 1, 0, 0]] * 4
        m = make_map(cls, inst)
        segs = extract_segments(m, registry)
        assert [(s.key, s.area) for s in segs] == [((1, 1), 8), ((2, 0), 8)]

    def test_split_instances(self, registry):
        cls = np.full((4, 4), 3)
        inst = np.ones((4, 4), int)
        inst.ravel()[:5] = 2
        m = make_map(cls, inst)
        segs = extract_segments(m, registry)
        assert [(s.key, s.area) for s in segs] == [((3, 1), 11), ((3, 2), 5)]

    def test_unknown_class_names_pixel(self, registry):
        cls = np.zeros((3, 3), int)
        cls[1, 2] = 9
        m = make_map(cls, np.zeros((3, 3), int))
        with pytest.raises(UnknownClassError, match=r"\(y=1, x=2\).*9"):
            extract_segments(m, registry)

    def test_areas_sum_to_non_void(self, registry):
        rng = np.random.default_rng(0)
        cls = rng.integers(0, 5, size=(16, 16))
        inst = rng.integers(0, 3, size=(16, 16))
        m = make_map(cls, inst)
        segs = extract_segments(m, registry)
        assert sum(s.area for s in segs) == int((cls != 0).sum())


class TestCanonicalizeStuff:
    def test_merges_stuff_instances(self, registry):
        cls = np.full((4, 4), 2)
        inst = np.array([[1] * 4] * 2 + [[7] * 4] * 2)
        out = canonicalize_stuff(make_map(cls, inst), registry)
        segs = extract_segments(out, registry)
        assert [(s.key, s.area) for s in segs] == [((2, 0), 16)]

    def test_things_untouched(self, registry):
        cls = np.full((2, 2), 3)
        inst = np.array([[1, 1], [2, 2]])
        m = make_map(cls, inst)
        out = canonicalize_stuff(m, registry)
        assert out == m

    def test_idempotent(self, registry):
        rng = np.random.default_rng(1)
        m = make_map(rng.integers(0, 5, (8, 8)), rng.integers(0, 3, (8, 8)))
        once = canonicalize_stuff(m, registry)
        twice = canonicalize_stuff(once, registry)
        assert once == twice

    def test_preserves_thing_segments(self, registry):
        rng = np.random.default_rng(2)
        m = make_map(rng.integers(0, 5, (8, 8)), rng.integers(0, 3, (8, 8)))
        out = canonicalize_stuff(m, registry)
        before = {s.key: s.area for s in extract_segments(m, registry)
                  if s.isthing}
        after = {s.key: s.area for s in extract_segments(out, registry)
                 if s.isthing}
        assert before == after


class TestValidateMap:
    def test_well_formed(self, registry):
        m = make_map([[1, 3]], [[0, 1]])
        assert validate_map(m, registry) == []

    def test_unknown_class(self, registry):
        m = make_map([[9]], [[0]])
        report = validate_map(m, registry)
        assert [v.code for v in report] == ["unknown-class"]
        assert "9" in report[0].message

    def test_crowd_on_stuff(self, registry):
        m = make_map([[1]], [[0]], crowd=[(1, 0)])
        assert [v.code for v in validate_map(m, registry)] == ["crowd-on-stuff"]

    def test_instance_overflow(self, registry):
        m = make_map([[3]], [[70000]])
        assert [v.code for v in validate_map(m, registry)] == ["instance-overflow"]

    def test_stale_crowd_flag(self, registry):
        m = make_map([[3]], [[1]], crowd=[(4, 2)])
        assert [v.code for v in validate_map(m, registry)] == ["stale-crowd-flag"]


class TestPanopticMap:
    def test_immutable_arrays(self, registry):
        m = make_map([[1]], [[0]])
        with pytest.raises(ValueError):
            m.class_ids[0, 0] = 2

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            PanopticMap(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_void_instance_canonicalized(self):
        m = make_map([[0, 0]], [[5, 9]])
        assert m.instance_ids.tolist() == [[0, 0]]

    def test_from_segment_index_round_trip(self):
        raster = np.array([[0, 1], [2, 2]])
        m = PanopticMap.from_segment_index(raster, [(1, 0), (3, 2)])
        assert m.class_ids.tolist() == [[0, 1], [3, 3]]
        assert m.instance_ids.tolist() == [[0, 0], [2, 2]]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_partition_property(self, seed):
        # every pixel belongs to exactly one segment key or void
        rng = np.random.default_rng(seed)
        cls = rng.integers(0, 4, size=(6, 6))
        inst = rng.integers(0, 3, size=(6, 6))
        m = PanopticMap(cls, inst)
        _, keys, areas = m.segment_index()
        assert sum(areas) == int((cls != 0).sum())
        assert len(set(keys)) == len(keys)
