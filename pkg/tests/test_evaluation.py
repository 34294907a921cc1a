import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaerec.data import HeldoutUser, UserSequence
from vaerec.evaluation import (
    PopularityRanker,
    evaluate,
    ndcg_at_n,
    ndcg_by_history_length,
    precision_at_n,
    recall_at_n,
)


def brute_force_metrics(ranked, relevant, n):
    """Independent re-derivation: build the binary relevance vector over the
    first n list positions and sum the definitions directly."""
    rel = [1 if (i < len(ranked) and ranked[i] in relevant) else 0 for i in range(n)]
    dcg = sum(r / math.log2(i + 2) for i, r in enumerate(rel))
    idcg = sum(1.0 / math.log2(i + 2) for i in range(len(relevant)))
    hits = sum(rel)
    return dcg / idcg, hits / n, hits / len(relevant)


class TestNDCG:
    def test_hand_case(self):
        # relevance pattern [1, 0, 1] with two relevant items
        ranked = [10, 11, 12]
        relevant = {10, 12}
        value = ndcg_at_n(ranked, relevant, 3)
        dcg = 1.0 + 1.0 / math.log2(4)
        idcg = 1.0 + 1.0 / math.log2(3)
        assert abs(value - dcg / idcg) < 1e-15
        assert abs(value - 0.91972) < 1e-5

    def test_perfect_ranking(self):
        assert ndcg_at_n([1, 2, 3], {1, 2, 3}, 10) == 1.0

    def test_no_hits(self):
        assert ndcg_at_n([4, 5, 6], {1}, 3) == 0.0

    def test_uncapped_idcg_penalizes_large_relevant_sets(self):
        # perfect top-2 of a 5-item relevant set scores below 1 by default
        ranked = [0, 1]
        relevant = set(range(5))
        assert ndcg_at_n(ranked, relevant, 2) < 1.0
        assert ndcg_at_n(ranked, relevant, 2, idcg_cap_at_n=True) == 1.0

    def test_empty_relevant_rejected(self):
        with pytest.raises(ValueError):
            ndcg_at_n([1], set(), 1)


class TestPrecisionRecall:
    def test_precision(self):
        ranked = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
        assert precision_at_n(ranked, {1, 5}, 10) == 0.2

    def test_precision_all_relevant(self):
        assert precision_at_n([1, 2], {1, 2}, 2) == 1.0

    def test_short_list_counts_misses(self):
        assert precision_at_n([1], {1}, 4) == 0.25

    def test_recall(self):
        assert recall_at_n([1, 2, 9, 9], {1, 2, 3, 4}, 4) == 0.5

    def test_recall_full_coverage(self):
        assert recall_at_n(list(range(20)), {3, 7}, 20) == 1.0

    def test_recall_empty_relevant_rejected(self):
        with pytest.raises(ValueError):
            recall_at_n([1], set(), 1)


class TestOracleEquivalence:
    def test_random_instances_match_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            catalog = int(rng.integers(20, 200))
            ranked = list(rng.permutation(catalog))
            n_rel = int(rng.integers(1, 15))
            relevant = set(int(x) for x in rng.choice(catalog, n_rel, replace=False))
            n = int(rng.integers(1, 30))
            expected = brute_force_metrics(ranked, relevant, n)
            got = (
                ndcg_at_n(ranked, relevant, n),
                precision_at_n(ranked, relevant, n),
                recall_at_n(ranked, relevant, n),
            )
            assert got == expected

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_swap_relevant_upward_never_hurts(self, data):
        catalog = data.draw(st.integers(6, 30))
        ranked = list(range(catalog))
        relevant = set(
            data.draw(
                st.lists(st.integers(0, catalog - 1), min_size=1, max_size=5, unique=True)
            )
        )
        n = data.draw(st.integers(1, catalog))
        pos = data.draw(st.integers(1, catalog - 1))
        if ranked[pos] not in relevant or ranked[pos - 1] in relevant:
            return
        swapped = list(ranked)
        swapped[pos - 1], swapped[pos] = swapped[pos], swapped[pos - 1]
        assert ndcg_at_n(swapped, relevant, n) >= ndcg_at_n(ranked, relevant, n)
        assert precision_at_n(swapped, relevant, n) >= precision_at_n(ranked, relevant, n)
        assert recall_at_n(swapped, relevant, n) >= recall_at_n(ranked, relevant, n)

    def test_invariant_below_cutoff(self):
        ranked = list(range(30))
        relevant = {2, 5}
        tail_permuted = ranked[:10] + ranked[10:][::-1]
        for n in (5, 10):
            assert ndcg_at_n(ranked, relevant, n) == ndcg_at_n(tail_permuted, relevant, n)


class TestPopularity:
    def test_count_order(self):
        train = [UserSequence(0, (0, 0, 0, 1)), UserSequence(1, (0, 2))]
        pop = PopularityRanker(train, 4)
        np.testing.assert_array_equal(pop.rank([], set()), [0, 1, 2, 3])

    def test_tie_breaks_by_index(self):
        train = [UserSequence(0, (3, 1))]
        pop = PopularityRanker(train, 5)
        np.testing.assert_array_equal(pop.rank([], set()), [1, 3, 0, 2, 4])

    def test_exclusion(self):
        train = [UserSequence(0, (0, 0, 1))]
        pop = PopularityRanker(train, 3)
        np.testing.assert_array_equal(pop.rank([0], {0}), [1, 2])


class OracleRanker:
    """Places a chosen item list on top, rest by index."""

    def __init__(self, n_items, top):
        self.n_items = n_items
        self.top = list(top)

    def rank(self, fold_in, exclude):
        rest = [i for i in range(self.n_items) if i not in exclude and i not in self.top]
        return np.array([i for i in self.top if i not in exclude] + rest)


class TestEvaluate:
    def test_oracle_model_maxes_metrics(self):
        user = HeldoutUser(0, fold_in=(0, 1), fold_out=(5, 6))
        ranker = OracleRanker(10, [5, 6])
        report = evaluate(ranker.rank, [user], n_values=(10,))
        assert report.metrics["NDCG@10"] == 1.0
        assert report.metrics["Recall@10"] == 1.0
        assert report.metrics["Precision@10"] == 0.2
        assert report.users == 1

    def test_random_ranking_recall_near_hypergeometric(self):
        rng = np.random.default_rng(4)
        users = []
        for u in range(200):
            fold_out = tuple(int(x) for x in rng.choice(np.arange(1, 1000), 10, replace=False))
            users.append(HeldoutUser(u, fold_in=(0,), fold_out=fold_out))

        def random_ranker(fold_in, exclude, _rng=np.random.default_rng(9)):
            order = _rng.permutation(1000)
            mask = np.ones(1000, dtype=bool)
            mask[list(exclude)] = False
            return order[mask[order]]

        report = evaluate(random_ranker, users, n_values=(100,))
        assert abs(report.metrics["Recall@100"] - 0.1) < 0.03

    def test_empty_fold_out_rejected(self):
        user = HeldoutUser(0, fold_in=(1,), fold_out=())
        with pytest.raises(ValueError, match="fold-out"):
            evaluate(OracleRanker(4, []).rank, [user])

    def test_order_independent_bitwise(self):
        rng = np.random.default_rng(8)
        users = [
            HeldoutUser(
                u,
                fold_in=tuple(int(x) for x in rng.choice(50, 3, replace=False)),
                fold_out=tuple(int(x) for x in rng.choice(50, 4, replace=False)),
            )
            for u in range(30)
        ]
        ranker = OracleRanker(50, [2, 4, 8])
        a = evaluate(ranker.rank, users)
        b = evaluate(ranker.rank, users[::-1])
        assert a.metrics == b.metrics

    def test_report_json_schema(self):
        user = HeldoutUser(0, fold_in=(0,), fold_out=(1,))
        report = evaluate(OracleRanker(4, [1]).rank, [user], n_values=(10, 100))
        report.model = "svae"
        report.config_digest = "abc123"
        import json

        payload = json.loads(report.to_json())
        assert set(payload) == {"model", "config_digest", "metrics", "users"}
        assert set(payload["metrics"]) == {
            "NDCG@10", "NDCG@100", "Precision@10", "Precision@100",
            "Recall@10", "Recall@100",
        }

    def test_history_length_buckets_shape(self):
        users = [
            HeldoutUser(0, fold_in=tuple(range(5)), fold_out=(40,)),
            HeldoutUser(1, fold_in=tuple(range(15)), fold_out=(41,)),
        ]
        rows = ndcg_by_history_length(OracleRanker(50, [40, 41]).rank, users)
        assert len(rows) == 5
        assert rows[0]["users"] == 1 and rows[1]["users"] == 1
        assert rows[2]["users"] == 0 and rows[2]["ndcg100"] is None
