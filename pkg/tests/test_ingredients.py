from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_table
from gram_mover.ingredients import (
    ANNOTATION_THRESHOLD,
    canonicalize_ingredient,
    canonicalize_list,
    ingredients_distance,
    passes_annotation_filter,
)

name_lists = st.lists(st.sampled_from(["ニンジン", "タマネギ", "塩", "水", "豆腐"]), max_size=6)


class TestCanonicalize:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("にんじん（中）", "ニンジン"),
            ("salt!", "salt"),
            ("じゃがいも", "ジャガイモ"),
            ("  tofu  ", "tofu"),
            ("carrot (large)", "carrot"),
        ],
    )
    def test_cases(self, raw, expected):
        assert canonicalize_ingredient(raw) == expected

    def test_decoration_only_name_empties_out(self):
        assert canonicalize_ingredient("（飾り用）") == ""

    def test_list_drops_empties(self, caplog):
        with caplog.at_level("INFO"):
            out = canonicalize_list(["にんじん", "（飾り用）", "塩"])
        assert out == ["ニンジン", "塩"]
        assert any("飾り用" in r.getMessage() for r in caplog.records)

    @given(name=st.text(max_size=30))
    def test_idempotent(self, name):
        once = canonicalize_ingredient(name)
        assert canonicalize_ingredient(once) == once


class TestExactCancellation:
    def test_identical_lists(self):
        assert ingredients_distance(["ニンジン", "塩"], ["ニンジン", "塩"]) == 0

    def test_one_survivor(self):
        assert ingredients_distance(["ニンジン", "塩"], ["ニンジン"]) == 1

    def test_survivor_on_candidate_side(self):
        assert ingredients_distance(["ニンジン"], ["ニンジン", "塩"]) == 1

    def test_multiset_semantics(self):
        # each occurrence consumes exactly one occurrence
        assert ingredients_distance(["ニンジン", "ニンジン"], ["ニンジン"]) == 1
        assert ingredients_distance(["ニンジン"], ["ニンジン", "ニンジン", "ニンジン"]) == 2

    def test_kana_variants_cancel(self):
        assert ingredients_distance(["にんじん"], ["ニンジン"]) == 0

    def test_empty_lists(self):
        assert ingredients_distance([], []) == 0
        assert ingredients_distance(["ニンジン", "塩"], []) == 2
        assert ingredients_distance([], ["ニンジン"]) == 1


# X's own neighborhood is crowded by decoys on the far side, while Y still
# sees X among its top 3; matching therefore works from b only.
ASYMMETRIC_TABLE = make_table(
    {
        "X": [1.0, 0.0],
        "Y": [0.9, 0.436],
        "D1": [0.999, -0.04],
        "D2": [0.998, -0.05],
        "D3": [0.997, -0.06],
    }
)


class TestEmbeddingCancellation:
    def test_similar_name_cancels(self):
        table = make_table(
            {"ジャガイモ": [1.0, 0.05], "馬鈴薯": [1.0, 0.0], "塩": [0.0, 1.0]}
        )
        assert ingredients_distance(["ジャガイモ"], ["馬鈴薯"], table) == 0

    def test_oov_names_never_match(self):
        table = make_table({"塩": [1.0, 0.0]})
        assert ingredients_distance(["ニンジン"], ["タマネギ"], table) == 2

    def test_asymmetry(self):
        assert ingredients_distance(["X"], ["Y"], ASYMMETRIC_TABLE) == 0
        assert ingredients_distance(["Y"], ["X"], ASYMMETRIC_TABLE) == 2

    def test_earliest_remaining_item_deleted_and_committed(self):
        # B1 sees both P and Q; the earliest remaining item of a (P) is
        # consumed immediately, which starves B2 (whose only match is P).
        table = make_table(
            {
                "P": [1.0, 0.0, 0.0],
                "Q": [0.95, 0.31, 0.0],
                "B1": [0.98, 0.2, 0.0],
                "B2": [0.9, -0.43, 0.0],
                "J": [0.93, -0.36, 0.0],
            }
        )
        assert ingredients_distance(["P", "Q"], ["B1", "B2"], table) == 2

    def test_without_table_step_three_skipped(self):
        assert ingredients_distance(["X"], ["Y"]) == 2


class TestProperties:
    @given(names=name_lists)
    def test_self_distance_zero(self, names):
        assert ingredients_distance(names, names) == 0

    @given(a=name_lists, b=name_lists)
    def test_bounded_by_total_length(self, a, b):
        assert 0 <= ingredients_distance(a, b) <= len(a) + len(b)

    @given(a=name_lists, b=name_lists)
    def test_deterministic(self, a, b):
        assert ingredients_distance(a, b) == ingredients_distance(a, b)

    @given(a=name_lists, b=name_lists, extra=st.sampled_from(["ニンジン", "塩"]))
    def test_shared_extra_never_increases(self, a, b, extra):
        base = ingredients_distance(a, b)
        assert ingredients_distance(a + [extra], b + [extra]) <= base


class TestAnnotationFilter:
    @pytest.mark.parametrize("distance,expected", [(0, True), (1, True), (2, True), (3, False)])
    def test_threshold(self, distance, expected):
        assert passes_annotation_filter(distance) is expected

    def test_default_threshold_value(self):
        assert ANNOTATION_THRESHOLD == 2

    def test_custom_threshold(self):
        assert passes_annotation_filter(5, threshold=5)
        assert not passes_annotation_filter(6, threshold=5)
