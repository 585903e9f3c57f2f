import json
import math

import numpy as np
import pytest

from textgrasp.assets import default_category_map, fixture_root
from textgrasp.cornell import (
    IMAGE_WISE,
    OBJECT_WISE,
    AnnotationFormatError,
    CategoryMap,
    CornellSample,
    FoldAssignment,
    IngestError,
    load_dataset,
    parse_annotation_file,
    serialize_annotations,
    split_folds,
)

SIMPLE_CPOS = "100 100\n300 100\n300 200\n100 200\n"


def make_stub_samples(n_images: int, n_objects: int) -> list[CornellSample]:
    samples = []
    for i in range(n_images):
        samples.append(CornellSample(
            image_id=f"pcd{i:04d}",
            image_path=None,
            width=640,
            height=480,
            object_id=i % n_objects,
            category="object",
            positive_rects=[],
        ))
    return samples


class TestParseAnnotationFile:
    def test_single_rectangle_geometry(self):
        parsed = parse_annotation_file(SIMPLE_CPOS)
        assert len(parsed.rects) == 1
        assert parsed.dropped_count == 0
        r = parsed.rects[0]
        assert r.w == pytest.approx(100.0, abs=1e-9)
        assert r.plate_len == pytest.approx(200.0, abs=1e-9)
        assert r.theta == pytest.approx(-math.pi / 2, abs=1e-9)

    def test_two_rectangles(self):
        content = SIMPLE_CPOS + "10 10\n20 10\n20 30\n10 30\n"
        parsed = parse_annotation_file(content)
        assert len(parsed.rects) == 2

    def test_nan_group_dropped(self):
        content = "100 100\nNaN 100\n300 200\n100 200\n"
        parsed = parse_annotation_file(content)
        assert parsed.rects == []
        assert parsed.dropped_count == 1

    def test_nan_group_does_not_poison_others(self):
        content = "100 100\nNaN 100\n300 200\n100 200\n" + SIMPLE_CPOS
        parsed = parse_annotation_file(content)
        assert len(parsed.rects) == 1
        assert parsed.dropped_count == 1

    def test_line_count_not_multiple_of_four(self):
        with pytest.raises(AnnotationFormatError):
            parse_annotation_file("1 1\n2 2\n3 3\n")

    def test_unparseable_token(self):
        with pytest.raises(AnnotationFormatError, match="line 2"):
            parse_annotation_file("1 1\nfoo bar\n3 3\n4 4\n")

    def test_wrong_token_count(self):
        with pytest.raises(AnnotationFormatError):
            parse_annotation_file("1 1 1\n2 2\n3 3\n4 4\n")

    def test_skewed_quad_is_canonicalized(self):
        # integer-rounded near-rectangle, as found in real annotations
        content = "100 101\n301 100\n300 199\n99 200\n"
        parsed = parse_annotation_file(content)
        assert len(parsed.rects) == 1
        r = parsed.rects[0]
        e = r.vertices
        assert np.hypot(*(e[1] - e[0])) == pytest.approx(np.hypot(*(e[3] - e[2])), rel=1e-9)
        dot = np.dot(e[1] - e[0], e[2] - e[1])
        assert abs(dot) < 1e-6 * np.hypot(*(e[1] - e[0])) * np.hypot(*(e[2] - e[1]))

    def test_reserialize_idempotent(self):
        content = "100 101\n301 100\n300 199\n99 200\n" + SIMPLE_CPOS
        first = parse_annotation_file(content).rects
        second = parse_annotation_file(serialize_annotations(first)).rects
        assert len(first) == len(second)
        for a, b in zip(first, second):
            assert np.allclose(a.vertices, b.vertices, atol=1e-9)


class TestCategoryMap:
    def test_fallback(self):
        cmap = CategoryMap(fallback="object", entries={1: "cup"})
        assert cmap.category_for(1) == "cup"
        assert cmap.category_for(999) == "object"

    def test_load_save_round_trip(self, tmp_path):
        cmap = CategoryMap(fallback="object", entries={3: "bowl", 7: "pen"})
        path = tmp_path / "cmap.json"
        cmap.save(path)
        loaded = CategoryMap.load(path)
        assert loaded == cmap

    def test_empty_names_rejected(self):
        with pytest.raises(ValueError):
            CategoryMap(fallback="")
        with pytest.raises(ValueError):
            CategoryMap(fallback="object", entries={1: ""})


class TestLoadDataset:
    def test_bundled_fixture(self):
        samples = load_dataset(fixture_root(), default_category_map())
        assert len(samples) == 6
        assert [s.image_id for s in samples] == sorted(s.image_id for s in samples)
        assert all(s.positive_rects for s in samples)
        assert all(s.width > 0 and s.height > 0 for s in samples)
        assert {s.object_id for s in samples} == {10, 11, 12, 13}
        assert {s.category for s in samples} == {"cup", "bottle", "screwdriver", "box"}

    def test_empty_directory(self, tmp_path, caplog):
        assert load_dataset(tmp_path, default_category_map()) == []

    def test_missing_annotation_skipped(self, tmp_path):
        src = fixture_root()
        (tmp_path / "pcd0100r.png").write_bytes((src / "pcd0100r.png").read_bytes())
        (tmp_path / "pcd0101r.png").write_bytes((src / "pcd0101r.png").read_bytes())
        (tmp_path / "pcd0101cpos.txt").write_text(SIMPLE_CPOS)
        (tmp_path / "object_index.txt").write_text("pcd0100 1\npcd0101 2\n")
        samples = load_dataset(tmp_path, default_category_map())
        assert [s.image_id for s in samples] == ["pcd0101"]

    def test_missing_index_raises(self, tmp_path):
        src = fixture_root()
        (tmp_path / "pcd0100r.png").write_bytes((src / "pcd0100r.png").read_bytes())
        (tmp_path / "pcd0100cpos.txt").write_text(SIMPLE_CPOS)
        with pytest.raises(IngestError):
            load_dataset(tmp_path, default_category_map())

    def test_unreadable_image_raises(self, tmp_path):
        (tmp_path / "pcd0100r.png").write_bytes(b"not a png")
        (tmp_path / "pcd0100cpos.txt").write_text(SIMPLE_CPOS)
        (tmp_path / "object_index.txt").write_text("pcd0100 1\n")
        with pytest.raises(IngestError):
            load_dataset(tmp_path, default_category_map())

    def test_index_without_pcd_prefix(self, tmp_path):
        src = fixture_root()
        (tmp_path / "pcd0100r.png").write_bytes((src / "pcd0100r.png").read_bytes())
        (tmp_path / "pcd0100cpos.txt").write_text(SIMPLE_CPOS)
        (tmp_path / "z.txt").write_text("0100 42\n")
        samples = load_dataset(tmp_path, default_category_map())
        assert samples[0].object_id == 42


class TestSplitFolds:
    def test_image_wise_balanced_885(self):
        samples = make_stub_samples(885, 240)
        fa = split_folds(samples, IMAGE_WISE, 5, seed=7)
        sizes = [len(fa.images_in_fold(f)) for f in range(5)]
        assert sizes == [177] * 5

    def test_object_wise_no_object_spans_folds(self):
        samples = make_stub_samples(885, 240)
        fa = split_folds(samples, OBJECT_WISE, 5, seed=7)
        by_object = {}
        for s in samples:
            by_object.setdefault(s.object_id, set()).add(fa.fold_of(s.image_id))
        assert all(len(folds) == 1 for folds in by_object.values())

    def test_partition(self):
        samples = make_stub_samples(100, 10)
        fa = split_folds(samples, IMAGE_WISE, 5, seed=3)
        all_ids = set()
        for f in range(5):
            ids = set(fa.images_in_fold(f))
            assert not (ids & all_ids)
            all_ids |= ids
        assert all_ids == {s.image_id for s in samples}

    def test_deterministic(self):
        samples = make_stub_samples(50, 10)
        a = split_folds(samples, OBJECT_WISE, 5, seed=11)
        b = split_folds(samples, OBJECT_WISE, 5, seed=11)
        assert a.to_json() == b.to_json()
        c = split_folds(samples, OBJECT_WISE, 5, seed=12)
        assert a.to_json() != c.to_json()

    def test_json_round_trip(self):
        samples = make_stub_samples(20, 5)
        fa = split_folds(samples, IMAGE_WISE, 4, seed=0)
        back = FoldAssignment.from_json(fa.to_json())
        assert back == fa

    def test_contract_errors(self):
        samples = make_stub_samples(4, 2)
        with pytest.raises(ValueError):
            split_folds(samples, IMAGE_WISE, 1, seed=0)
        with pytest.raises(ValueError):
            split_folds(samples, IMAGE_WISE, 5, seed=0)
        with pytest.raises(ValueError):
            split_folds(samples, OBJECT_WISE, 3, seed=0)
        with pytest.raises(ValueError):
            split_folds([], IMAGE_WISE, 2, seed=0)
        with pytest.raises(ValueError):
            split_folds(samples, "leave-one-out", 2, seed=0)
