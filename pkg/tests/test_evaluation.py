import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from conftest import random_graph
from siottrust.evaluation import (SWEEP_COLUMNS, MetricReport, ModelSettings, SplitSpec, TestSet,
                                  UndefinedMetricError, build_pattern, coverage, evaluate_predictions, f_measure,
                                  mae, precision, rmse, run_point, score_test, split, sweep,
                                  write_sweep_csv)
from siottrust.factorization import TrainConfig, predict_blended, sgd_train
from siottrust.graph import TrustBipartiteGraph
from siottrust.pattern import TrustPatternMatrix
from siottrust.synthetic import friend_correlated


def two_pass_rmse(pred, act):
    n = len(act)
    total = 0.0
    for p, a in zip(pred, act):
        total += (p - a) ** 2
    return math.sqrt(total / n)


def community_gamma(community):
    same = (community[:, None] == community[None, :]) & (community[:, None] >= 0)
    np.fill_diagonal(same, False)
    G = same / np.maximum(same.sum(axis=1, keepdims=True), 1)
    return TrustPatternMatrix(sparse.csr_matrix(G), 1.0, None, None)


def held_out(data, settings, seed):
    test = TestSet(*data.test)
    _, tp = build_pattern(data.train, settings)
    f = sgd_train(data.train, tp, TrainConfig(alpha=settings.alpha, latent_dim=settings.latent_dim, seed=seed))
    return evaluate_predictions(predict_blended(f.S, f.R, tp, settings.alpha), test)


class TestSplit:
    def test_ratio_and_partition(self, rng):
        g = TrustBipartiteGraph(10, 10)
        cells = rng.choice(100, size=100, replace=False)
        for c in cells:
            g.add_experience(int(c // 10), int(c % 10), 0.6)
        train, test = split(g, SplitSpec(0.75, seed=1))
        assert abs(train.n_edges - 75) <= 1 and abs(len(test) - 25) <= 1
        tr = {(u, v) for u, v, _ in train.edges()}
        te = set(zip(test.trustors.tolist(), test.trustees.tolist()))
        assert not tr & te
        assert tr | te == {(u, v) for u, v, _ in g.edges()}

    def test_deterministic(self, rng):
        g = random_graph(rng, 20, 20)
        a, b = split(g, SplitSpec(seed=4)), split(g, SplitSpec(seed=4))
        np.testing.assert_array_equal(a[1].trustors, b[1].trustors)
        np.testing.assert_array_equal(a[1].trustees, b[1].trustees)

    def test_near_one_fraction(self, rng):
        g = random_graph(rng, 5, 5, density=0.5)
        _, test = split(g, SplitSpec(1 - 1e-9))
        assert len(test) == 0

    def test_errors(self):
        with pytest.raises(ValueError):
            split(TrustBipartiteGraph(2, 2))
        with pytest.raises(ValueError):
            SplitSpec(1.0)


class TestMetrics:
    def test_rmse_examples(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0
        assert rmse([4.5], [5.0]) == pytest.approx(0.5)
        assert rmse(np.array([1.0, 2.0]) + 0.3, [1.0, 2.0]) == pytest.approx(0.3)
        with pytest.raises(UndefinedMetricError):
            rmse([], [])

    @given(st.lists(st.tuples(st.floats(1, 5), st.floats(1, 5)), min_size=1, max_size=50))
    def test_rmse_two_pass_oracle_and_mae_bound(self, pairs):
        p, a = zip(*pairs)
        assert abs(rmse(p, a) - two_pass_rmse(p, a)) <= 1e-12
        assert mae(p, a) <= rmse(p, a) + 1e-12

    def test_coverage(self):
        assert coverage(3, 4) == 0.75
        assert coverage(4, 4) == 1.0
        with pytest.raises(UndefinedMetricError):
            coverage(0, 0)

    def test_precision(self):
        assert precision(0.0) == 1.0
        assert precision(2.0, 4.0) == 0.5
        assert precision(4.0, 4.0) == 0.0
        assert precision(5.0, 4.0) == 0.0
        with pytest.raises(ValueError):
            precision(1.0, 0.0)

    def test_f_measure(self):
        assert f_measure(0.3, 0.3) == pytest.approx(0.3)
        assert f_measure(1.0, 0.5) == pytest.approx(2 / 3)
        assert f_measure(0.0, 1.0) == 0.0
        assert f_measure(0.0, 0.0) == 0.0

    @given(st.lists(st.tuples(st.floats(1, 5), st.floats(1, 5)), min_size=1, max_size=30), st.integers(0, 5))
    def test_report_self_consistency(self, pairs, abstain):
        p, a = zip(*pairs)
        rep = MetricReport.from_predictions(p, a, n_abstained=abstain)
        assert rep.precision == precision(rep.rmse, rep.rmse_max)
        assert rep.f_measure == f_measure(rep.precision, rep.coverage)
        assert rep.mae <= rep.rmse + 1e-12
        assert 0 <= rep.coverage <= 1 and 0 <= rep.precision <= 1 and 0 <= rep.f_measure <= 1


class TestEvaluatePipeline:
    def test_coverage_is_one(self, rng):
        g = random_graph(rng, 30, 20, density=0.3)
        for seed in range(3):
            rep = run_point(g, ModelSettings(), TrainConfig(epochs=20), split_seed=seed)
            assert rep.coverage == 1.0
            assert rep.rmse_max == 4.0

    def test_external_scale_bounds(self):
        test = TestSet(np.array([0]), np.array([0]), np.array([1.0]))
        rep = evaluate_predictions(np.array([[0.01]]), test)
        assert rep.rmse == pytest.approx(4.0)  # prediction clipped to 1 on the 1..5 scale
        rep = evaluate_predictions(np.array([[0.9]]), test, external=False)
        assert rep.rmse == pytest.approx(0.1) and rep.rmse_max == 0.8

    def test_cellwise_scoring_matches_dense(self, rng):
        g = random_graph(rng, 30, 20, density=0.3)
        train, test = split(g, SplitSpec(0.75, 1))
        _, tp = build_pattern(train, ModelSettings())
        f = sgd_train(train, tp, TrainConfig(epochs=20))
        dense = evaluate_predictions(predict_blended(f.S, f.R, tp, 0.4), test)
        cells = score_test(f, tp, 0.4, test)
        assert cells.rmse == pytest.approx(dense.rmse, rel=1e-12)
        assert cells.coverage == dense.coverage == 1.0

    def test_one_point_sweep_equals_direct_run(self, rng):
        g = random_graph(rng, 25, 20)
        cfg = TrainConfig(epochs=15)
        (point, rep), = sweep(g, {"beta": [1.0]}, train_cfg=cfg, split_seed=2)
        assert rep == run_point(g, point, cfg, split_seed=2)

    def test_unknown_sweep_key(self, rng):
        with pytest.raises(ValueError):
            sweep(random_graph(rng, 5, 5), {"gamma": [1]})

    def test_sweep_csv(self, tmp_path, rng):
        g = random_graph(rng, 20, 15)
        res = sweep(g, {"beta": [0.0, 1.0]}, base=ModelSettings(centrality="degree"), train_cfg=TrainConfig(epochs=5))
        path = tmp_path / "s.csv"
        write_sweep_csv(res, path, header_lines=["manifest"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# manifest"
        assert lines[1] == ",".join(SWEEP_COLUMNS)
        assert len(lines) == 4

    def test_beta_below_one_needs_centrality(self, rng):
        with pytest.raises(ValueError):
            build_pattern(random_graph(rng, 10, 10), ModelSettings(beta=0.5))


class TestSyntheticTrends:
    """Statistical trends on friend-correlated data, averaged over ten seeds."""

    SEEDS = range(10)

    def test_beta_trend_is_non_increasing(self):
        rm = {b: [] for b in (0.0, 0.5, 1.0)}
        for seed in self.SEEDS:
            d = friend_correlated(seed=seed)
            for b in rm:
                s = ModelSettings(beta=b, centrality="degree" if b < 1 else "none")
                rm[b].append(held_out(d, s, seed).rmse)
        means = [np.mean(rm[b]) for b in (0.0, 0.5, 1.0)]
        assert means[0] >= means[1] >= means[2]

    def test_alpha_elbow(self):
        prec = {a: [] for a in (0.0, 0.4, 0.8)}
        for seed in self.SEEDS:
            d = friend_correlated(seed=seed)
            for a in prec:
                prec[a].append(held_out(d, ModelSettings(alpha=a), seed).precision)
        p0, p4, p8 = (np.mean(prec[a]) for a in (0.0, 0.4, 0.8))
        assert p4 - p0 > p8 - p4

    def test_true_gamma_beats_self_only(self):
        wins, social, alone = 0, [], []
        for seed in self.SEEDS:
            d = friend_correlated(seed=seed)
            test = TestSet(*d.test)
            tp = community_gamma(d.community)
            scores = []
            for alpha in (0.4, 1.0):
                f = sgd_train(d.train, tp, TrainConfig(alpha=alpha, seed=seed))
                scores.append(evaluate_predictions(predict_blended(f.S, f.R, tp, alpha), test).rmse)
            social.append(scores[0])
            alone.append(scores[1])
            wins += scores[0] <= scores[1]
        assert np.mean(social) <= np.mean(alone)
        assert wins >= 8
