import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etud.community import Partition
from etud.metrics import (
    ListeningHistory,
    cost_at_table,
    ndcg_at_k,
    quartile_grades,
    rank_communities,
    searching_cost,
    top_songs,
    user_searching_cost,
)

from oracles import brute_cost, brute_ndcg


class TestGrades:
    def test_four_distinct(self):
        assert quartile_grades({"a": 1, "b": 5, "c": 9, "d": 20}) == {"a": 1, "b": 2, "c": 3, "d": 4}

    def test_ties_share_grade(self):
        g = quartile_grades({"a": 2, "b": 2, "c": 7})
        assert g["a"] == g["b"] and g["c"] == 4

    def test_single_song(self):
        assert quartile_grades({"a": 3}) == {"a": 4}

    @settings(max_examples=100, deadline=None)
    @given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.integers(1, 50), min_size=1))
    def test_grade_range_and_monotone(self, plays):
        g = quartile_grades(plays)
        assert set(g) == set(plays)
        assert set(g.values()) <= {1, 2, 3, 4}
        for a in plays:
            for b in plays:
                if plays[a] < plays[b]:
                    assert g[a] <= g[b]

    def test_history_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            ListeningHistory({"u": {"s": 0}})

    def test_history_file_round_trip(self, tmp_path):
        h = ListeningHistory({"u1": {"s1": 3, "s2": 1}, "u2": {"s1": 7}})
        h.save(tmp_path / "h.tsv")
        h2 = ListeningHistory.load(tmp_path / "h.tsv")
        assert h2.plays == h.plays and h2.grades == h.grades
        assert h2.listened("u1", "s2") and not h2.listened("u2", "s2")


class TestNdcg:
    def test_ideal(self):
        grades = {"a": 4, "b": 2, "c": 1}
        assert ndcg_at_k(["a", "b", "c"], grades, 3) == pytest.approx(1.0, abs=1e-15)

    def test_no_grades(self):
        assert ndcg_at_k(["a", "b"], {}, 10) == 0.0

    def test_hand_value(self):
        # (1/log2 2 + 3/log2 3) / (3/log2 2 + 1/log2 3)
        assert ndcg_at_k(["b", "a"], {"a": 3, "b": 1}, 2) == pytest.approx(0.7967075809905066, abs=1e-15)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            ndcg_at_k([], {"a": 1}, 0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.dictionaries(st.sampled_from("abcdefghij"), st.integers(1, 4)),
        st.permutations(list("abcdefghijklmn")),
        st.integers(1, 15),
    )
    def test_matches_oracle_and_bounds(self, grades, ranked, k):
        v = ndcg_at_k(ranked, grades, k)
        assert abs(v - brute_ndcg(ranked, grades, k)) < 1e-12
        assert 0.0 <= v <= 1.0 + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=2, max_size=8), st.randoms(use_true_random=False))
    def test_equal_grade_permutation_invariance(self, gs, rnd):
        songs = [f"s{i}" for i in range(len(gs))]
        grades = dict(zip(songs, gs))
        ranked = sorted(songs, key=lambda s: -grades[s])
        shuffled = ranked[:]
        # permute within blocks of equal grade
        for g in set(gs):
            pos = [i for i, s in enumerate(ranked) if grades[s] == g]
            block = [ranked[i] for i in pos]
            rnd.shuffle(block)
            for i, s in zip(pos, block):
                shuffled[i] = s
        assert ndcg_at_k(shuffled, grades, 5) == pytest.approx(ndcg_at_k(ranked, grades, 5), abs=1e-15)
        assert ndcg_at_k(ranked, grades, 5) == pytest.approx(1.0, abs=1e-12)


def partition_of(groups):
    nodes = [n for g in groups for n in g]
    labels = [i for i, g in enumerate(groups) for _ in g]
    return Partition.from_labels(nodes, labels)


class TestRankCommunities:
    def test_single_community(self):
        p = partition_of([["s1", "s2", "x"], ["s3"]])
        h = ListeningHistory({"u": {"s1": 2, "s2": 1}})
        r = rank_communities(p, "u", h, 10)
        assert [(c.community, c.listened, c.size) for c in r] == [(0, 2, 3)]

    def test_order_by_count(self):
        p = partition_of([["s4"], ["s1", "s2", "s3"]])
        h = ListeningHistory({"u": {"s1": 1, "s2": 1, "s3": 1, "s4": 1}})
        assert [c.community for c in rank_communities(p, "u", h, 10)] == [1, 0]

    def test_ties_by_community_id(self):
        p = partition_of([["s1"], ["s2"]])
        h = ListeningHistory({"u": {"s2": 1, "s1": 1}})
        assert [c.community for c in rank_communities(p, "u", h, 10)] == [0, 1]

    def test_truncation_to_top_n(self):
        p = partition_of([["s1"], ["s2"], ["s3"]])
        h = ListeningHistory({"u": {"s1": 9, "s2": 1, "s3": 5}})
        assert [c.community for c in rank_communities(p, "u", h, 2)] == [0, 2]

    def test_unknown_user(self):
        with pytest.raises(KeyError):
            rank_communities(partition_of([["s1"]]), "nobody", ListeningHistory({}), 5)


class TestSearchingCost:
    def test_zero_log(self):
        p = partition_of([["s1"], ["x", "y"]])
        h = ListeningHistory({"u": {"s1": 4}})
        assert searching_cost(p, ["u"], h, 10) == 0.0

    def test_one_community_of_ten(self):
        p = partition_of([["s1", "s2"] + [f"x{i}" for i in range(8)]])
        h = ListeningHistory({"u": {"s1": 1, "s2": 1}})
        # per song (2 / (1 * 2)) * ln(1 * 10), two songs
        assert searching_cost(p, ["u"], h, 2) == pytest.approx(4.605170185988092, abs=1e-12)
        assert searching_cost(p, ["u"], h, 100) == pytest.approx(2 * math.log(10), abs=1e-12)

    def test_two_communities_hand_value(self):
        p = partition_of([["s1", "s2", "a"], ["s3", "b", "c", "d"]])
        h = ListeningHistory({"u": {"s1": 1, "s2": 2, "s3": 4}})
        # C1 = first (2 songs, size 3), C2 = second (1 song, size 4), total 3
        expected = 2 / (1 * 3) * math.log(3) + 2 / (2 * 3) * math.log(3) + 1 / (4 * 3) * math.log(12)
        assert searching_cost(p, ["u"], h, 10) == pytest.approx(expected, abs=1e-12)

    def test_user_without_songs(self):
        p = partition_of([["s1", "x"]])
        h = ListeningHistory({"u": {}, "v": {"s1": 1}})
        assert searching_cost(p, ["u"], h, 5) == 0.0

    def test_user_absent_from_history(self):
        assert searching_cost(partition_of([["s1", "x"]]), ["zz"], ListeningHistory({}), 5) == 0.0

    @pytest.mark.parametrize("trial", range(25))
    def test_random_against_oracle(self, trial):
        h, p, users = random_case(trial)
        sizes = p.sizes
        com = p.as_dict()
        for n in (1, 3, 5, 100):
            got = searching_cost(p, users, h, n)
            want = brute_cost(com, sizes, {u: h.plays[u] for u in users}, n)
            assert abs(got - want) < 1e-9
            # doubling play counts halves the cost
            h2 = ListeningHistory({u: {s: 2 * c for s, c in h.plays[u].items()} for u in h.plays})
            assert searching_cost(p, users, h2, n) == pytest.approx(got / 2, abs=1e-9)
            # additivity over users
            total = sum(searching_cost(p, [u], h, n) for u in users)
            assert total == pytest.approx(got, abs=1e-9)
            assert got >= 0


def random_case(seed):
    rng = np.random.default_rng(seed)
    n_songs = int(rng.integers(3, 30))
    songs = [f"s{i:02d}" for i in range(n_songs)]
    labels = rng.integers(0, int(rng.integers(1, 8)), size=n_songs)
    p = Partition.from_labels(songs, labels)
    users = [f"u{i}" for i in range(int(rng.integers(1, 6)))]
    plays = {}
    for u in users:
        k = int(rng.integers(0, n_songs + 1))
        chosen = rng.choice(songs, size=k, replace=False)
        plays[u] = {str(s): int(rng.integers(1, 20)) for s in chosen}
    return ListeningHistory(plays), p, users


class TestCostTable:
    def test_singletons_all_zero(self):
        p = partition_of([[f"s{i}"] for i in range(8)])
        h = ListeningHistory({"u": {f"s{i}": i + 1 for i in range(8)}})
        assert cost_at_table(p, ["u"], h) == {5: 0.0, 10: 0.0, 20: 0.0, 50: 0.0, 100: 0.0}

    def test_truncation_monotone(self):
        plays = {f"s{i}": (i * 7) % 11 + 1 for i in range(30)}
        prev: set = set()
        for n in (5, 10, 20, 50, 100):
            cur = set(top_songs(plays, n))
            assert prev <= cur
            prev = cur

    def test_user_cost_sums(self):
        h, p, users = random_case(3)
        table = cost_at_table(p, users, h)
        for n, v in table.items():
            assert v == pytest.approx(sum(user_searching_cost(p, u, h, n) for u in sorted(users)))
