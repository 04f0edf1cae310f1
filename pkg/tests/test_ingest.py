import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skiprec.ingest import (
    H, L, N, DimMismatch, IdMaps, Interaction, InvalidField, LabeledPair, MissingFeature,
    UnknownId, classify, deduplicate_and_label, load_features, parse_interactions,
    split_per_user, split_sizes, user_profiles,
)

HEADER = "user_id,video_id,playing_time,duration,timestamp\n"


class TestParse:
    def test_rows_map_directly(self):
        rows = parse_interactions((HEADER + "u1,v3,30.0,30.0,0\nu2,v5,3.2,45.0,0\n").encode())
        assert rows == [Interaction("u1", "v3", 30.0, 30.0, 0), Interaction("u2", "v5", 3.2, 45.0, 0)]

    def test_negative_playing_time_reports_line(self):
        with pytest.raises(InvalidField) as exc:
            parse_interactions(HEADER + "u1,v3,30.0,30.0,0\nu2,v5,-1,45.0,0\n")
        assert exc.value.line == 3

    @pytest.mark.parametrize("row", ["u1,v1,1,0,0", "u1,v1,1,-3,0", "u1,v1,abc,3,0",
                                     "u1,v1,1,3", "u1,v1,1,3,x", "u1,v1,nan,3,0"])
    def test_bad_rows(self, row):
        with pytest.raises(InvalidField):
            parse_interactions(HEADER + row + "\n")

    def test_bad_header(self):
        with pytest.raises(InvalidField):
            parse_interactions("a,b,c,d,e\n")

    def test_file_order_kept(self):
        body = "".join(f"u{i % 3},v{i},{i}.5,60,{i}\n" for i in range(20))
        rows = parse_interactions(HEADER + body)
        assert [r.video_id for r in rows] == [f"v{i}" for i in range(20)]


class TestClassify:
    @pytest.mark.parametrize("playing,duration,expected", [
        (30, 30, H), (3, 30, N), (12, 30, L), (5.0, 30, N),
        (4.0, 4.0, H),  # short video watched fully beats the threshold rule
        (31, 30, H), (0, 30, N), (5.0001, 30, L),
    ])
    def test_cases(self, playing, duration, expected):
        assert classify(Interaction("u", "v", playing, duration), 5.0) is expected

    @given(st.floats(0, 100), st.floats(0.01, 100), st.floats(0.01, 20))
    def test_exactly_one_branch(self, playing, duration, thr):
        cls = classify(Interaction("u", "v", playing, duration), thr)
        branches = [playing >= duration,
                    playing < duration and playing > thr,
                    playing < duration and playing <= thr]
        assert sum(branches) == 1
        assert branches[int(cls)]


def _maps(interactions):
    return IdMaps.from_interactions(interactions)


class TestDeduplicate:
    def test_repeat_with_full_view(self):
        its = [Interaction("u1", "v1", 2, 30), Interaction("u1", "v1", 30, 30)]
        assert deduplicate_and_label(its, _maps(its)) == [LabeledPair(0, 0, H)]

    def test_repeat_of_quick_skips_is_positive(self):
        its = [Interaction("u1", "v1", 2, 30), Interaction("u1", "v1", 3, 30)]
        assert deduplicate_and_label(its, _maps(its))[0].cls is H

    def test_single_event_uses_classify(self):
        its = [Interaction("u1", "v1", 12, 30)]
        assert deduplicate_and_label(its, _maps(its)) == [LabeledPair(0, 0, L)]

    def test_unknown_id(self):
        its = [Interaction("u1", "v1", 12, 30)]
        with pytest.raises(UnknownId):
            deduplicate_and_label(its + [Interaction("u9", "v1", 1, 30)], _maps(its))

    def test_label_y(self):
        assert LabeledPair(0, 0, H).y == 1
        assert LabeledPair(0, 0, L).y == 0 and LabeledPair(0, 0, N).y == 0

    def test_ids_first_appearance(self):
        its = [Interaction("b", "y", 1, 2), Interaction("a", "x", 1, 2), Interaction("b", "x", 1, 2)]
        maps = _maps(its)
        assert maps.users == {"b": 0, "a": 1}
        assert maps.videos == {"y": 0, "x": 1}

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4), st.floats(0, 40)),
                    min_size=1, max_size=40), st.randoms())
    def test_order_independent(self, rows, rnd):
        its = [Interaction(f"u{u}", f"v{v}", p, 30.0) for u, v, p in rows]
        maps = _maps(its)
        shuffled = list(its)
        rnd.shuffle(shuffled)
        assert Counter(deduplicate_and_label(its, maps)) == Counter(deduplicate_and_label(shuffled, maps))

    def test_no_positive_without_full_view_or_repeat(self, rng):
        its = []
        for u in range(30):
            for v in rng.choice(50, size=10, replace=False):
                dur = rng.uniform(6, 60)
                its.append(Interaction(f"u{u}", f"v{v}", rng.uniform(0, dur * 0.999), dur))
        pairs = deduplicate_and_label(its, _maps(its))
        assert not any(p.cls is H for p in pairs)

    def test_profiles_match_counts(self):
        pairs = [LabeledPair(0, 0, H), LabeledPair(0, 1, L), LabeledPair(0, 2, N), LabeledPair(1, 0, N)]
        prof = user_profiles(pairs)
        assert (prof[0].n_highly, prof[0].n_less, prof[0].n_negative) == (1, 1, 1)
        assert (prof[1].n_highly, prof[1].n_less, prof[1].n_negative) == (0, 0, 1)


class TestSplit:
    def _pairs(self, sizes):
        return [LabeledPair(u, v, H) for u, n in enumerate(sizes) for v in range(n)]

    def test_ten_pairs(self):
        s = split_per_user(self._pairs([10]), seed=3)
        assert (len(s.train), len(s.validation), len(s.test)) == (6, 2, 2)

    def test_one_pair(self):
        s = split_per_user(self._pairs([1]), seed=3)
        assert (len(s.train), len(s.validation), len(s.test)) == (1, 0, 0)

    def test_deterministic(self):
        pairs = self._pairs([7, 13, 4])
        assert split_per_user(pairs, seed=5) == split_per_user(pairs, seed=5)
        assert split_per_user(pairs, seed=5) != split_per_user(pairs, seed=6)

    @given(st.lists(st.integers(1, 40), min_size=1, max_size=8), st.integers(0, 2**31))
    def test_partition_and_floor_rule(self, sizes, seed):
        pairs = self._pairs(sizes)
        s = split_per_user(pairs, seed=seed)
        for u, n in enumerate(sizes):
            parts = [[p for p in part if p.user_index == u] for part in (s.train, s.validation, s.test)]
            fifth = int(np.floor(0.2 * n + 1e-9))
            assert tuple(map(len, parts)) == (n - 2 * fifth, fifth, fifth)
            union = [p for part in parts for p in part]
            assert sorted(union) == [p for p in pairs if p.user_index == u]

    def test_floor_rule_values(self):
        assert split_sizes(10) == (6, 2, 2)
        assert split_sizes(5) == (3, 1, 1)
        assert split_sizes(1) == (1, 0, 0)
        assert split_sizes(2) == (2, 0, 0)
        assert split_sizes(4) == (4, 0, 0)
        assert split_sizes(15) == (9, 3, 3)


class TestFeatures:
    def _maps(self, n):
        return IdMaps(users={"u": 0}, videos={f"v{i}": i for i in range(n)})

    def test_shape_and_order(self):
        text = "video_id,f0,f1,f2,f3\nv2,3,3,3,3\nv0,1,1,1,1\nv1,2,2,2,2\n"
        table = load_features(text.encode(), self._maps(3), 4)
        assert table.shape == (3, 4)
        np.testing.assert_array_equal(table[:, 0], [1, 2, 3])

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            load_features("v0,1,2,3\n", self._maps(1), 4)

    def test_missing_video(self):
        with pytest.raises(MissingFeature):
            load_features("v0,1,2,3,4\n", self._maps(2), 4)
