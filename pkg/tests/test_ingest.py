"""Annotation loading and aspect-ratio/scale statistics."""

import json
import math

import numpy as np
import pytest

from featborrow import (
    AnnotationSet,
    FormatError,
    ObjectBox,
    ValidationError,
    ar_stats,
    load_annotations,
    nearest_rank_percentile,
)


def write_annotations(path, entries):
    path.write_text(json.dumps({"annotations": entries}))
    return str(path)


def bbox_entry(w, h, image_id=1, category_id=1):
    return {"image_id": image_id, "category_id": category_id, "bbox": [0, 0, w, h]}


class TestLoadAnnotations:
    def test_bundled_fixture(self, annotations_small):
        annots = load_annotations(annotations_small)
        assert len(annots) == 3
        assert annots.skipped == 2  # one zero-width box, one without bbox

    def test_three_boxes(self, tmp_path):
        path = write_annotations(
            tmp_path / "a.json", [bbox_entry(10, 10), bbox_entry(30, 10), bbox_entry(10, 30)]
        )
        annots = load_annotations(path)
        assert len(annots) == 3
        assert annots.skipped == 0

    def test_zero_width_box_skipped(self, tmp_path):
        path = write_annotations(
            tmp_path / "a.json", [bbox_entry(10, 10), bbox_entry(0, 10), bbox_entry(5, 5)]
        )
        annots = load_annotations(path)
        assert len(annots) == 2
        assert annots.skipped == 1

    def test_empty_annotations_array(self, tmp_path):
        annots = load_annotations(write_annotations(tmp_path / "a.json", []))
        assert len(annots) == 0
        assert annots.skipped == 0

    def test_missing_annotations_key(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"images": []}))
        with pytest.raises(FormatError, match="annotations"):
            load_annotations(str(p))

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        with pytest.raises(FormatError):
            load_annotations(str(p))

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(OSError):
            load_annotations(str(tmp_path / "missing.json"))

    def test_category_filter(self, tmp_path):
        path = write_annotations(
            tmp_path / "a.json",
            [bbox_entry(10, 10, category_id=1), bbox_entry(30, 10, category_id=2)],
        )
        annots = load_annotations(path, category=2)
        assert len(annots) == 1
        assert annots.objects[0].width == 30


class TestArStats:
    def test_hand_computed_fixture(self, annotations_small):
        stats = ar_stats(load_annotations(annotations_small), percentiles=(50, 100))
        # ARs {1, 3, 3}: p50 is the 2nd of 3 sorted values, p100 the max
        assert stats.percentiles[50.0] == 3.0
        assert stats.percentiles[100.0] == 3.0

    def test_all_squares(self, tmp_path):
        path = write_annotations(tmp_path / "a.json", [bbox_entry(s, s) for s in (3, 7, 9)])
        stats = ar_stats(load_annotations(path))
        assert all(v == 1.0 for v in stats.percentiles.values())

    def test_nearest_rank_against_sort_oracle(self):
        # 99 mild boxes plus one extreme outlier: p99 must not see the outlier
        ars = [1.0 + 0.02 * i for i in range(99)] + [8.0]
        objs = tuple(ObjectBox(1, 1, a, 1.0) for a in ars)
        stats = ar_stats(AnnotationSet(objs, 0), percentiles=(99, 100))
        sorted_ars = sorted(ars)
        assert stats.percentiles[99.0] == sorted_ars[math.ceil(0.99 * 100) - 1]
        assert stats.percentiles[99.0] == sorted_ars[98]
        assert stats.percentiles[100.0] == 8.0

    def test_percentile_function_matches_oracle_on_random_data(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(1, 40))
            vals = sorted(rng.uniform(1, 9, size=n).tolist())
            for p in (0, 10, 33, 50, 90, 99, 100):
                got = nearest_rank_percentile(vals, p)
                want = vals[max(1, math.ceil(p / 100 * n)) - 1]
                assert got == want

    def test_percentiles_monotone(self, tmp_path):
        path = write_annotations(
            tmp_path / "a.json", [bbox_entry(w, 10) for w in (10, 12, 15, 25, 40, 60)]
        )
        stats = ar_stats(load_annotations(path), percentiles=(10, 50, 90, 100))
        vals = [stats.percentiles[p] for p in (10.0, 50.0, 90.0, 100.0)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_order_independence(self, tmp_path):
        entries = [bbox_entry(10, 10), bbox_entry(30, 10), bbox_entry(10, 30), bbox_entry(7, 2)]
        p1 = write_annotations(tmp_path / "a.json", entries)
        p2 = write_annotations(tmp_path / "b.json", entries[::-1])
        s1 = ar_stats(load_annotations(p1))
        s2 = ar_stats(load_annotations(p2))
        assert s1.percentiles == s2.percentiles
        assert s1.scale_bins == s2.scale_bins

    def test_ars_are_orientation_free(self, tmp_path):
        path = write_annotations(tmp_path / "a.json", [bbox_entry(10, 30), bbox_entry(30, 10)])
        stats = ar_stats(load_annotations(path), percentiles=(0, 100))
        assert stats.percentiles[0.0] == 3.0
        assert stats.percentiles[100.0] == 3.0

    def test_scale_bins(self, tmp_path):
        # scales 10, sqrt(300), sqrt(300): two sqrt(2)-ratio bins from 10
        path = write_annotations(
            tmp_path / "a.json", [bbox_entry(10, 10), bbox_entry(30, 10), bbox_entry(10, 30)]
        )
        stats = ar_stats(load_annotations(path))
        assert len(stats.scale_bins) == 2
        assert stats.scale_bins[0].count == 1
        assert stats.scale_bins[1].count == 2
        assert stats.scale_bins[0].lo == pytest.approx(10.0)
        assert sum(b.count for b in stats.scale_bins) == stats.count

    def test_single_scale_single_bin(self, tmp_path):
        path = write_annotations(tmp_path / "a.json", [bbox_entry(4, 9), bbox_entry(6, 6)])
        stats = ar_stats(load_annotations(path))
        assert len(stats.scale_bins) == 1
        assert stats.scale_bins[0].count == 2

    def test_empty_set_rejected(self):
        with pytest.raises(ValidationError):
            ar_stats(AnnotationSet((), 0))

    def test_bad_percentile(self):
        with pytest.raises(ValidationError):
            nearest_rank_percentile([1.0], 101)
