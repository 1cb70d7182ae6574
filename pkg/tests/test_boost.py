import math

import numpy as np
import pytest

import oracles
from fastabc import boost
from fastabc.boost import (
    REUSE,
    SEARCH,
    Algorithm,
    Ensemble,
    TrainConfig,
    TrainingError,
    abc_candidate_pass,
    gap_schedule,
    predict,
    select_base,
    train,
    training_scores,
    tree_fit_cost,
)
from fastabc.data import from_arrays
from fastabc.numerics import ScoreState, neg_log_likelihood, plain_derivatives
from fastabc.synthetic import make_clusters
from fastabc.tree import LeafMode, grow_tree, leaf_values

ALGOS = list(Algorithm)


class TestSchedule:
    def test_every_iteration(self):
        assert all(gap_schedule(m, 1) == SEARCH for m in range(1, 50))

    def test_gap_five(self):
        searches = [m for m in range(1, 13) if gap_schedule(m, 5) == SEARCH]
        assert searches == [1, 6, 11]

    def test_gap_at_least_m(self):
        assert [gap_schedule(m, 30) for m in range(1, 31)] == [SEARCH] + [REUSE] * 29

    def test_invalid(self):
        with pytest.raises(ValueError):
            gap_schedule(0, 1)


class TestSelectBase:
    @pytest.mark.parametrize("losses, expected", [
        ([5.0, 4.0, 6.0], 1),
        ([4.0, 4.0, 6.0], 0),
        ([2.0, 2.0, 2.0], 0),
    ])
    def test_examples(self, losses, expected):
        assert select_base(losses) == expected

    def test_non_finite(self):
        with pytest.raises(TrainingError):
            select_base([1.0, float("nan"), 2.0])


class TestCost:
    def test_examples(self):
        assert tree_fit_cost(10, 100, 1, "abc-mart") == 9000
        assert tree_fit_cost(10, 100, 10, "abc-logitboost") == 1710
        assert tree_fit_cost(10, 100, 7, "mart") == 1000

    def test_partial_last_window(self):
        # G=3, M=10 searches at 1, 4, 7, 10
        assert tree_fit_cost(4, 10, 3, Algorithm.ABC_MART) == 4 * 12 + 6 * 3


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(J=1), dict(nu=0.0), dict(nu=1.5), dict(M=-1),
                                    dict(G=0), dict(threads=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_parse_names(self):
        assert TrainConfig(algorithm="abc-logitboost").algorithm is Algorithm.ABC_LOGITBOOST
        assert Algorithm.ABC_MART.plain_counterpart is Algorithm.MART
        assert Algorithm.LOGITBOOST.cli_name == "logitboost"


class TestEnsemble:
    def test_empty_model(self, toy60):
        ens = train(TrainConfig(algorithm="abc-mart", M=0), toy60)
        F, p, cls = predict(ens, toy60.rows[0])
        np.testing.assert_array_equal(F, 0.0)
        np.testing.assert_allclose(p, 1 / 3)
        assert cls == 0
        assert ens.tree_fit_count == 0 and ens.base_history == []

    def test_short_vector(self, toy60):
        ens = train(TrainConfig(algorithm="mart", M=1, J=2), toy60)
        with pytest.raises(ValueError, match="feature vector"):
            ens.decision_function(np.zeros(2))

    @pytest.mark.parametrize("algo", ALGOS)
    def test_replay_matches_training_state(self, toy60, algo):
        seen = {}

        def record(m, ens, state):
            seen[m] = state.F.copy()

        ens = train(TrainConfig(algorithm=algo, J=4, M=8, G=3), toy60, callback=record)
        for m, F in seen.items():
            assert training_scores(ens, toy60, m).F.tobytes() == F.tobytes()

    @pytest.mark.parametrize("algo", ALGOS)
    def test_test_error_matches_prediction(self, toy60, algo):
        test = make_clusters(90, n_classes=3, n_features=4, spread=1.5, seed=11)
        ens = train(TrainConfig(algorithm=algo, J=4, M=10, G=2), toy60, test)
        for m in (1, 5, 10):
            err = int((ens.predict_classes(test.rows, m) != test.labels).sum())
            assert ens.metrics.test_error[m - 1] == err


class TestMart:
    def test_one_iteration_by_hand(self):
        # per class: split at the class boundary, leaf = (2/3) * sum(r-p) / sum(p(1-p))
        X = np.arange(6, dtype=float)[:, None]
        ds = from_arrays(X, [0, 0, 1, 1, 1, 2])
        ens = train(TrainConfig(algorithm="mart", J=2, nu=0.1, M=1), ds)
        F = training_scores(ens, ds).F
        expected = np.array([
            [0.2, -0.1, -0.1],
            [0.2, -0.1, -0.1],
            [-0.1, 0.125, -0.1],
            [-0.1, 0.125, -0.1],
            [-0.1, 0.125, -0.1],
            [-0.1, 0.125, 0.2],
        ])
        np.testing.assert_allclose(F, expected, rtol=1e-14, atol=1e-15)
        assert [t.threshold[0] for t in ens.stages[0].trees] == [1.5, 1.5, 4.5]

    def test_shared_topology_same_leaf_values(self, toy60):
        state = ScoreState.initial(toy60.n_samples, 3)
        g, h = plain_derivatives(state, toy60.labels, 1)
        tree, leaf_of = grow_tree(-g, np.ones_like(h), toy60, 6)
        a = leaf_values(tree, leaf_of, -g, h, LeafMode.PLAIN_MART, 3).value.copy()
        b = leaf_values(tree, leaf_of, -g, h, LeafMode.PLAIN_LOGIT, 3).value.copy()
        assert a.tobytes() == b.tobytes()

    def test_loss_decreases(self, toy60):
        ens = train(TrainConfig(algorithm="logitboost", J=4, M=20), toy60)
        loss = ens.metrics.train_loss
        assert loss[-1] < loss[0] < 60 * math.log(3)


class TestCandidatePass:
    def test_matches_straight_line_oracle(self, toy60):
        cfg = TrainConfig(algorithm="abc-mart", J=2, nu=0.1, M=1)
        rng = np.random.default_rng(5)
        F = oracles.sum_to_zero_scores(3, rng, toy60.n_samples, scale=0.5)
        state = ScoreState.from_scores(F)
        for b in range(3):
            cand = abc_candidate_pass(state, b, cfg, toy60)
            loss, scores = oracles.straight_line_candidate_loss(
                toy60.rows, toy60.labels, F, b, cfg.nu)
            assert cand.loss == pytest.approx(loss, rel=1e-12)
            np.testing.assert_allclose(cand.scores, scores, rtol=1e-12, atol=1e-14)

    def test_state_untouched(self, toy60):
        state = ScoreState.from_scores(oracles.sum_to_zero_scores(3, np.random.default_rng(1), 60))
        F, p = state.F.copy(), state.p.copy()
        for b in range(3):
            abc_candidate_pass(state, b, TrainConfig(J=4), toy60)
        assert state.F.tobytes() == F.tobytes() and state.p.tobytes() == p.tobytes()

    def test_zero_trees_keep_current_loss(self, toy60, monkeypatch):
        def zero_fit(state, dataset, k, b, config):
            tree, _ = grow_tree(np.zeros(dataset.n_samples), np.ones(dataset.n_samples),
                                dataset, config.J)
            return tree, np.zeros(dataset.n_samples)

        monkeypatch.setattr(boost, "_fit_abc_tree", zero_fit)
        state = ScoreState.initial(toy60.n_samples, 3)
        current = neg_log_likelihood(state, toy60.labels)
        for b in range(3):
            assert abc_candidate_pass(state, b, TrainConfig(J=4), toy60).loss == current


class TestAbcTraining:
    @pytest.mark.parametrize("algo", ["abc-mart", "abc-logitboost"])
    def test_base_constant_within_window(self, toy60, algo):
        ens = train(TrainConfig(algorithm=algo, J=4, M=23, G=5), toy60)
        hist = ens.base_history
        for m in range(1, 24):
            if gap_schedule(m, 5) == REUSE:
                assert hist[m - 1] == hist[m - 2]
        assert ens.tree_fit_count == tree_fit_cost(3, 23, 5, algo)
        assert ens.metrics.trees_fit_cum[-1] == ens.tree_fit_count

    def test_sum_to_zero_every_iteration(self, toy60):
        worst = []

        def record(m, ens, state):
            worst.append(np.abs(state.F.sum(axis=1)).max())

        train(TrainConfig(algorithm="abc-logitboost", J=6, M=40, G=4), toy60, callback=record)
        assert max(worst) <= 1e-8

    def test_early_stop(self, toy60):
        ens = train(TrainConfig(algorithm="abc-mart", J=4, M=50, early_stop_loss=1e9), toy60)
        assert ens.n_iterations == 1

    def test_missing_class(self):
        ds = from_arrays(np.arange(6.0)[:, None], [0, 0, 1, 1, 1, 1], n_classes=3)
        with pytest.raises(TrainingError, match="no training samples"):
            train(TrainConfig(M=1), ds)

    def test_rerun_identical(self, toy60):
        cfg = TrainConfig(algorithm="abc-logitboost", J=5, M=15, G=2)
        a, b = train(cfg, toy60), train(cfg, toy60)
        assert a.base_history == b.base_history
        assert all(x.same_as(y) for sa, sb in zip(a.stages, b.stages)
                   for x, y in zip(sa.trees, sb.trees))


def test_ensemble_dataclass_defaults():
    ens = Ensemble(config=TrainConfig(M=0), n_classes=3, n_features=2)
    np.testing.assert_array_equal(ens.predict_classes(np.zeros((4, 2))), 0)
