import numpy as np
import pytest

import pga
from pga.errors import TrainingDivergedError
from pga.nn import ModelParams, PseudoLabelState, Prediction, load_params, save_params
from conftest import QUICK_TRAIN, random_instance, small_bundle
from oracles import dense_probs


class TestForward:
    def test_isolated_node_zero_logits(self):
        adj = pga.Adjacency.from_edges(1, [])
        params = ModelParams(w0=np.array([[1.0]]), w1=np.array([[0.0, 0.0]]), arch="linear", hidden=1)
        pred = pga.forward(params, pga.normalize_adjacency(adj), np.array([[1.0]]))
        assert pred.probs[0] == pytest.approx([0.5, 0.5])

    def test_rows_sum_to_one(self):
        for seed in range(5):
            adj, x, params = random_instance(seed)
            pred = pga.forward(params, pga.normalize_adjacency(adj), x)
            assert pred.probs.sum(axis=1) == pytest.approx(np.ones(adj.n_nodes), abs=1e-6)
            assert ((pred.probs > 0) & (pred.probs < 1)).all()

    def test_linear_equals_relu_on_nonnegative_preactivations(self):
        rng = np.random.default_rng(7)
        adj = pga.Adjacency.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
        x = rng.uniform(0.1, 1.0, size=(6, 3))
        w0 = rng.uniform(0.0, 1.0, size=(3, 4))  # nonneg X and W0: hidden preacts >= 0
        w1 = rng.normal(size=(4, 2))
        na = pga.normalize_adjacency(adj)
        lin = pga.forward(ModelParams(w0, w1, "linear", 4), na, x)
        rel = pga.forward(ModelParams(w0, w1, "relu", 4), na, x)
        assert np.array_equal(lin.probs, rel.probs)

    def test_dense_oracle_equivalence_linear(self):
        # production sparse path vs explicit dense softmax(S^2 X W0 W1)
        for seed in range(8):
            adj, x, params = random_instance(seed, n=40, d=5, h=6, c=4, p=0.15)
            got = pga.forward(params, pga.normalize_adjacency(adj), x).probs
            want = dense_probs(params.w0, params.w1, "linear", adj.csr.toarray(), x)
            assert np.abs(got - want).max() < 1e-10

    def test_eval_mode_pure(self):
        adj, x, params = random_instance(3)
        na = pga.normalize_adjacency(adj)
        a = pga.forward(params, na, x).probs
        b = pga.forward(params, na, x).probs
        assert np.array_equal(a, b)

    def test_train_mode_dropout_seeded(self):
        adj, x, params = random_instance(4)
        na = pga.normalize_adjacency(adj)
        a = pga.forward(params, na, x, train_mode=True, dropout=0.5, seed=9).probs
        b = pga.forward(params, na, x, train_mode=True, dropout=0.5, seed=9).probs
        c = pga.forward(params, na, x, train_mode=True, dropout=0.5, seed=10).probs
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_shape_mismatch(self):
        adj, x, params = random_instance(0)
        with pytest.raises(ValueError, match="feature dim"):
            pga.forward(params, pga.normalize_adjacency(adj), x[:, :2])

    def test_nonfinite_signals_divergence(self):
        adj, x, _ = random_instance(0)
        huge = ModelParams(w0=np.full((4, 4), 1e200), w1=np.full((4, 3), 1e200), arch="linear", hidden=4)
        with pytest.raises(TrainingDivergedError):
            pga.forward(huge, pga.normalize_adjacency(adj), x * 1e200)


class TestAccuracy:
    def test_all_correct_and_all_wrong(self):
        pred = Prediction.from_probs(np.array([[0.9, 0.1], [0.2, 0.8]]))
        assert pga.accuracy(pred, np.array([0, 1]), np.array([0, 1])) == 1.0
        assert pga.accuracy(pred, np.array([1, 0]), np.array([0, 1])) == 0.0

    def test_empty_idx_rejected(self):
        pred = Prediction.from_probs(np.array([[1.0, 0.0]]))
        with pytest.raises(ValueError):
            pga.accuracy(pred, np.array([0]), np.array([], dtype=int))


class TestTrain:
    def test_determinism_bitwise(self):
        b = small_bundle(seed=1)
        p1 = pga.train(b, "relu", QUICK_TRAIN)
        p2 = pga.train(b, "relu", QUICK_TRAIN)
        assert np.array_equal(p1.w0, p2.w0) and np.array_equal(p1.w1, p2.w1)

    def test_loss_decreases(self):
        b = small_bundle(seed=1)
        _, hist = pga.train_with_history(b, "relu", QUICK_TRAIN)
        assert hist["train_loss"][10] < hist["train_loss"][0]

    def test_empty_split_rejected(self):
        b = small_bundle(seed=1)
        stripped = pga.GraphBundle(b.adj, b.features, b.labels, [], b.val_idx, b.test_idx, b.n_classes)
        with pytest.raises(ValueError, match="non-empty"):
            pga.train(stripped, "linear", QUICK_TRAIN)

    def test_sbm300_victim_regression(self, sbm300):
        victim, hist = pga.train_with_history(sbm300, "relu", pga.TrainConfig(seed=0))
        pred = pga.forward(victim, pga.normalize_adjacency(sbm300.adj), sbm300.features)
        acc = pga.accuracy(pred, sbm300.labels, sbm300.test_idx)
        assert acc >= 0.90  # documented bound
        assert acc >= 0.94  # frozen from the first observed run (0.9422)
        assert hist["train_loss"][10] < hist["train_loss"][0]

    def test_patience_stops_early(self):
        b = small_bundle(seed=2)
        cfg = pga.TrainConfig(epochs=200, patience=5, hidden=8, dropout=0.0, seed=0)
        _, hist = pga.train_with_history(b, "linear", cfg)
        assert hist["epochs_run"] < 200

    def test_config_validation(self):
        with pytest.raises(ValueError):
            pga.TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            pga.TrainConfig(dropout=1.0)
        with pytest.raises(ValueError):
            pga.TrainConfig(patience=300, epochs=200)


class TestAttackLoss:
    def test_confident_correct_target(self):
        eps = 1e-12
        pred = Prediction.from_probs(np.array([[1 - eps, eps]]))
        state = PseudoLabelState.initial(pred, [0])
        loss = pga.attack_loss(pred, state, np.array([0]))
        assert loss == pytest.approx(np.tanh(-1.0), abs=1e-9)

    def test_tie_goes_to_lowest_class(self):
        pred = Prediction.from_probs(np.array([[0.5, 0.5]]))
        state = PseudoLabelState.initial(pred, [0])
        assert state.pseudo[0] == 0 and 0 in state.still_correct
        loss = pga.attack_loss(pred, state, np.array([0]))
        assert loss == pytest.approx(-np.log(0.5))

    def test_flipped_target_drops_ce_term(self):
        pred0 = Prediction.from_probs(np.array([[0.9, 0.1]]))
        state = PseudoLabelState.initial(pred0, [0])
        pred1 = Prediction.from_probs(np.array([[0.3, 0.7]]))
        state = state.updated(pred1, np.array([0]))
        assert not state.still_correct
        assert pga.attack_loss(pred1, state, np.array([0])) == pytest.approx(np.tanh(0.4))

    def test_loss_increases_as_pseudo_prob_decreases(self):
        # single target, mass renormalized proportionally across other classes
        base = np.array([0.7, 0.2, 0.1])
        pred0 = Prediction.from_probs(base[None])
        state = PseudoLabelState.initial(pred0, [0])
        losses = []
        for p0 in (0.7, 0.5, 0.3, 0.1):
            rest = base[1:] / base[1:].sum() * (1 - p0)
            z = np.concatenate([[p0], rest])[None]
            losses.append(pga.attack_loss(Prediction.from_probs(z), state, np.array([0])))
        assert all(a < b for a, b in zip(losses, losses[1:]))

    def test_empty_targets_rejected(self):
        pred = Prediction.from_probs(np.array([[0.5, 0.5]]))
        state = PseudoLabelState.initial(pred, [])
        with pytest.raises(ValueError):
            pga.attack_loss(pred, state, np.array([], dtype=int))


class TestParamsIO:
    def test_roundtrip_exact(self, tmp_path):
        _, _, params = random_instance(6, arch="relu")
        save_params(params, tmp_path / "p.json")
        back = load_params(tmp_path / "p.json")
        assert back.arch == params.arch and back.hidden == params.hidden
        assert np.array_equal(back.w0, params.w0)
        assert np.array_equal(back.w1, params.w1)

    def test_trained_roundtrip_exact(self, tmp_path):
        b = small_bundle(seed=3)
        params = pga.train(b, "linear", QUICK_TRAIN)
        save_params(params, tmp_path / "p.json")
        back = load_params(tmp_path / "p.json")
        assert np.array_equal(back.w0, params.w0)
        assert np.array_equal(back.w1, params.w1)
