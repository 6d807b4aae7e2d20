import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedmix.aggregation import (
    AggregationRule,
    StreamPlan,
    _kmeanspp_init,
    _lloyd,
    fedavg_aggregate,
    kmeans_streams,
    select_num_streams,
    silhouette_score,
    streamed_aggregate,
    user_centric_aggregate,
)
from fedmix.datagen import FederationSpec, generate_federation
from fedmix.models import ModelSpec, ParameterVector
from fedmix.similarity import MixingMatrix, similarity_round


def pv(values):
    arr = np.asarray(values, dtype=np.float64)
    return ParameterVector(arr, (("w", (arr.size,)),))


def const_pv(value, d=3):
    return pv(np.full(d, float(value)))


def block_mixing(m=8, blocks=2, noise=0.0, seed=0):
    """Row-stochastic matrix with duplicated row blocks."""
    rng = np.random.default_rng(seed)
    per = m // blocks
    rows = []
    for b in range(blocks):
        base = np.full(m, 0.01)
        base[b * per : (b + 1) * per] = 1.0
        base = base + noise * rng.random(m)
        rows.extend([base / base.sum()] * per)
    return MixingMatrix(np.array(rows))


class TestFedavgAggregate:
    def test_identical_models_fixed_point(self):
        model = pv([0.5, -1.0, 2.0])
        out = fedavg_aggregate([model, model, model], [5, 1, 3])
        assert np.array_equal(out.values, model.values)

    def test_hand_weighted_average(self):
        out = fedavg_aggregate([const_pv(0.0), const_pv(1.0)], [1, 3])
        assert np.allclose(out.values, 0.75, atol=1e-15)

    def test_equal_counts_plain_mean(self):
        out = fedavg_aggregate([const_pv(0.0), const_pv(1.0), const_pv(2.0)], [7, 7, 7])
        assert np.allclose(out.values, 1.0, atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fedavg_aggregate([pv([1.0]), pv([1.0, 2.0])], [1, 1])


class TestUserCentricAggregate:
    def test_identity_matrix_pure_local(self):
        models = [const_pv(v) for v in (0.0, 1.0, 2.0)]
        w = MixingMatrix(np.eye(3))
        outs = user_centric_aggregate(models, w)
        for out, model in zip(outs, models):
            assert np.array_equal(out.values, model.values)

    def test_fedavg_rows_degenerate(self):
        models = [const_pv(v) for v in (0.0, 1.0, 2.0)]
        ns = [2, 3, 5]
        fed = fedavg_aggregate(models, ns)
        rows = np.tile(np.array(ns, float) / sum(ns), (3, 1))
        outs = user_centric_aggregate(models, MixingMatrix(rows))
        for out in outs:
            assert np.max(np.abs(out.values - fed.values)) < 1e-12

    def test_hand_mix(self):
        w = MixingMatrix(np.array([[0.75, 0.25], [0.25, 0.75]]))
        outs = user_centric_aggregate([const_pv(0.0), const_pv(1.0)], w)
        assert np.allclose(outs[0].values, 0.25, atol=1e-15)
        assert np.allclose(outs[1].values, 0.75, atol=1e-15)

    def test_convexity_per_coordinate(self):
        rng = np.random.default_rng(1)
        models = [pv(rng.standard_normal(4)) for _ in range(5)]
        w = block_mixing(m=5, blocks=5, noise=0.3, seed=2)
        stacked = np.stack([m.values for m in models])
        for out in user_centric_aggregate(models, w):
            assert np.all(out.values <= stacked.max(axis=0) + 1e-12)
            assert np.all(out.values >= stacked.min(axis=0) - 1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        models = [pv(rng.standard_normal(3)) for _ in range(4)]
        w = MixingMatrix(rng.dirichlet(np.ones(4), size=4))
        outs = user_centric_aggregate(models, w)
        perm = np.array([2, 0, 3, 1])
        w_p = MixingMatrix(w.w[np.ix_(perm, perm)])
        outs_p = user_centric_aggregate([models[j] for j in perm], w_p)
        for i, pi in enumerate(perm):
            assert np.allclose(outs_p[i].values, outs[pi].values, atol=1e-12)


class TestKmeansStreams:
    def test_full_streams_identity_plan(self):
        w = block_mixing(m=6, blocks=3, noise=0.2, seed=1)
        plan = kmeans_streams(w, num_streams=6, seed=0)
        assert np.array_equal(plan.assignment, np.arange(6))
        assert np.array_equal(plan.centroids, w.w)

    def test_single_stream_column_mean(self):
        w = block_mixing(m=6, blocks=2, noise=0.1, seed=2)
        plan = kmeans_streams(w, num_streams=1, seed=0)
        assert np.array_equal(plan.assignment, np.zeros(6, dtype=int))
        expected = w.w.mean(axis=0)
        expected = expected / expected.sum()
        assert np.allclose(plan.centroids[0], expected, atol=1e-12)

    def test_duplicated_blocks_recovered_and_optimal(self):
        w = block_mixing(m=8, blocks=2, noise=0.0)
        plan = kmeans_streams(w, num_streams=2, seed=3)
        labels = plan.assignment
        assert len(set(labels[:4])) == 1 and len(set(labels[4:])) == 1
        assert labels[0] != labels[4]
        # brute force: no 2-labeling achieves lower within-cluster cost
        points = w.w
        final_cost = ((points - plan.centroids[labels]) ** 2).sum()
        best = np.inf
        for assign in itertools.product([0, 1], repeat=8):
            assign = np.array(assign)
            if len(set(assign)) < 2:
                continue
            cost = 0.0
            for c in (0, 1):
                sub = points[assign == c]
                cost += ((sub - sub.mean(axis=0)) ** 2).sum()
            best = min(best, cost)
        assert final_cost == pytest.approx(best, abs=1e-12)
        assert final_cost == pytest.approx(0.0, abs=1e-12)

    def test_objective_monotone_within_lloyd(self):
        rng = np.random.default_rng(4)
        points = rng.dirichlet(np.ones(6), size=12)
        init = _kmeanspp_init(points, 3, np.random.default_rng(0))
        _, _, history = _lloyd(points, init, max_iters=50)
        assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))

    def test_deterministic_in_seed(self):
        w = block_mixing(m=9, blocks=3, noise=0.4, seed=5)
        a = kmeans_streams(w, 3, seed=11)
        b = kmeans_streams(w, 3, seed=11)
        assert np.array_equal(a.assignment, b.assignment)
        assert np.array_equal(a.centroids, b.centroids)

    def test_centroids_row_stochastic(self):
        w = block_mixing(m=10, blocks=2, noise=0.5, seed=6)
        plan = kmeans_streams(w, 4, seed=2)
        assert np.allclose(plan.centroids.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(plan.centroids >= 0)

    def test_every_stream_used_even_with_duplicates(self):
        # more streams than distinct rows forces the empty-cluster repair
        rows = np.tile(np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]]), (2, 1))
        w = MixingMatrix(rows)
        plan = kmeans_streams(w, 3, seed=0)
        assert len(np.unique(plan.assignment)) == 3

    def test_too_many_streams_raises(self):
        w = block_mixing(m=4, blocks=2)
        with pytest.raises(ValueError):
            kmeans_streams(w, 5, seed=0)


class TestSilhouette:
    def test_separated_blocks_near_one(self):
        w = block_mixing(m=8, blocks=2, noise=0.0)
        plan = kmeans_streams(w, 2, seed=0)
        assert silhouette_score(w, plan) > 0.9

    def test_identical_rows_score_zero(self):
        rows = np.tile(np.full(4, 0.25), (4, 1))
        w = MixingMatrix(rows)
        plan = StreamPlan(2, np.array([0, 0, 1, 1]), np.tile(np.full(4, 0.25), (2, 1)))
        assert silhouette_score(w, plan) == 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        w = block_mixing(m=6, blocks=2, noise=0.3, seed=8)
        plan = kmeans_streams(w, 2, seed=1)
        score = silhouette_score(w, plan)
        perm = rng.permutation(6)
        w_p = MixingMatrix(w.w[np.ix_(perm, perm)])
        # permuting rows and columns together permutes points in feature space,
        # which changes nothing about the partition geometry
        plan_p = StreamPlan(2, plan.assignment[perm], plan.centroids[:, perm])
        assert silhouette_score(w_p, plan_p) == pytest.approx(score, abs=1e-12)

    def test_matches_sklearn_on_random_instances(self):
        from sklearn.metrics import silhouette_score as sk_silhouette

        rng = np.random.default_rng(9)
        for trial in range(10):
            m = int(rng.integers(4, 12))
            rows = rng.dirichlet(np.ones(m), size=m)
            w = MixingMatrix(rows)
            k = int(rng.integers(2, m))
            plan = kmeans_streams(w, k, seed=trial)
            ours = silhouette_score(w, plan)
            theirs = float(sk_silhouette(rows, plan.assignment, metric="euclidean"))
            assert ours == pytest.approx(theirs, abs=1e-9)

    def test_single_stream_raises(self):
        w = block_mixing(m=4, blocks=2)
        plan = kmeans_streams(w, 1, seed=0)
        with pytest.raises(ValueError):
            silhouette_score(w, plan)


class TestSelectNumStreams:
    def test_two_blocks_selects_two(self):
        w = block_mixing(m=8, blocks=2, noise=0.0)
        assert select_num_streams(w, [2, 3, 4], seed=0) == 2

    def test_single_candidate(self):
        w = block_mixing(m=6, blocks=3, noise=0.1, seed=1)
        assert select_num_streams(w, [3], seed=0) == 3

    def test_concept_shift_mixing_peaks_at_four(self):
        fed = FederationSpec(
            num_clients=16, scenario="concept_shift", input_dim=4, num_classes=6,
            samples_per_client=500, num_clusters=4, seed=3,
        )
        clients = generate_federation(fed)
        spec = ModelSpec(architecture="linear", input_dim=4, num_classes=6)
        res = similarity_round(clients, spec, num_batches=10, seed=2)
        assert select_num_streams(res.w, list(range(2, 9)), seed=5) == 4

    def test_empty_candidates_raises(self):
        w = block_mixing(m=4, blocks=2)
        with pytest.raises(ValueError):
            select_num_streams(w, [], seed=0)


class TestStreamedAggregate:
    def test_identity_plan_equals_user_centric(self):
        rng = np.random.default_rng(10)
        models = [pv(rng.standard_normal(4)) for _ in range(5)]
        w = block_mixing(m=5, blocks=5, noise=0.2, seed=11)
        plan = kmeans_streams(w, 5, seed=0)
        streams = streamed_aggregate(models, plan)
        ucs = user_centric_aggregate(models, w)
        for i in range(5):
            assert np.max(np.abs(streams[plan.assignment[i]].values - ucs[i].values)) < 1e-12

    def test_single_stream_with_fedavg_centroid(self):
        models = [const_pv(v) for v in (0.0, 1.0, 2.0)]
        ns = np.array([1.0, 1.0, 2.0])
        plan = StreamPlan(1, np.zeros(3, dtype=int), (ns / ns.sum())[None, :])
        stream = streamed_aggregate(models, plan)[0]
        fed = fedavg_aggregate(models, ns.tolist())
        assert np.max(np.abs(stream.values - fed.values)) < 1e-12

    def test_same_block_users_share_models(self):
        rng = np.random.default_rng(12)
        models = [pv(rng.standard_normal(3)) for _ in range(8)]
        w = block_mixing(m=8, blocks=2, noise=0.0)
        plan = kmeans_streams(w, 2, seed=1)
        streams = streamed_aggregate(models, plan)
        received = [streams[plan.assignment[i]] for i in range(8)]
        for i in range(4):
            assert np.array_equal(received[i].values, received[0].values)
            assert np.array_equal(received[4 + i].values, received[4].values)


class TestAggregationRule:
    def test_kind_consistency(self):
        w = block_mixing(m=4, blocks=2)
        plan = kmeans_streams(w, 2, seed=0)
        AggregationRule(kind="fedavg")
        AggregationRule(kind="user_centric", w=w)
        AggregationRule(kind="streamed", w=w, plan=plan)
        with pytest.raises(ValueError):
            AggregationRule(kind="fedavg", w=w)
        with pytest.raises(ValueError):
            AggregationRule(kind="user_centric")
        with pytest.raises(ValueError):
            AggregationRule(kind="streamed", w=w)

    def test_plan_json_dict(self):
        w = block_mixing(m=4, blocks=2)
        plan = kmeans_streams(w, 2, seed=0)
        doc = plan.to_json_dict()
        assert doc["m_t"] == 2
        assert len(doc["assignment"]) == 4
        assert len(doc["centroids"]) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 10))
def test_kmeans_partition_valid_property(seed, m):
    rng = np.random.default_rng(seed)
    w = MixingMatrix(rng.dirichlet(np.ones(m), size=m))
    k = int(rng.integers(1, m + 1))
    plan = kmeans_streams(w, k, seed=seed)
    assert plan.num_streams == k
    assert len(np.unique(plan.assignment)) == k
    assert np.allclose(plan.centroids.sum(axis=1), 1.0, atol=1e-9)
