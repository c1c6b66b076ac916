import numpy as np
import pytest

import pga
from pga.errors import EmptyPoolError
from pga.nn import ModelParams, Prediction, PseudoLabelState
from pga.selection import TargetSet, SelectionConfig
from conftest import QUICK_TRAIN, random_instance, small_bundle
from oracles import dense_probs, fd_edge_score


def _target_set(nodes):
    nodes = np.asarray(sorted(nodes), dtype=np.int64)
    return TargetSet(nodes=nodes, provenance=(), config=SelectionConfig())


class TestSecondClassSet:
    def test_runner_up_members(self):
        probs = np.array([[0.6, 0.4], [0.3, 0.7], [0.2, 0.8]])
        pred = Prediction.from_probs(probs)
        s = pga.second_class_set(pred, 0)  # runner-up of node 0 is class 1
        assert list(s) == [1, 2]

    def test_empty_when_nobody_predicted(self):
        probs = np.array([[0.6, 0.3, 0.1], [0.7, 0.2, 0.1]])
        pred = Prediction.from_probs(probs)
        assert len(pga.second_class_set(pred, 0)) == 0

    def test_target_never_in_own_set(self):
        _, x, params = random_instance(2, n=10)
        adj, _, _ = random_instance(2, n=10)
        pred = pga.forward(params, pga.normalize_adjacency(adj), x)
        for v in range(10):
            assert v not in set(pga.second_class_set(pred, v).tolist())


def _pool_instance(seed=0):
    b = small_bundle(seed=seed)
    params = pga.train(b, "linear", QUICK_TRAIN)
    pred = pga.forward(params, pga.normalize_adjacency(b.adj), b.features)
    ts = pga.select_targets(pred, b, pga.SelectionConfig())
    state = PseudoLabelState.initial(pred, ts.nodes)
    return b, params, pred, ts, state


class TestAddPool:
    def test_no_pruning_when_topk_large(self):
        b, params, pred, ts, state = _pool_instance()
        _, edges, pruned_from = pga.build_add_pool(pred, ts, b, params, state, top_k=10**9)
        assert len(edges) == pruned_from

    def test_topk_one_is_argmax(self):
        b, params, pred, ts, state = _pool_instance()
        _, all_edges, _ = pga.build_add_pool(pred, ts, b, params, state, top_k=10**9)
        scores = pga.edge_gradients(params, b.adj, b.features, state, ts.nodes, all_edges)
        best = max(sorted(scores), key=lambda e: (scores[e], (-e[0], -e[1])))
        _, top1, _ = pga.build_add_pool(pred, ts, b, params, state, top_k=1)
        assert list(top1) == [best]

    def test_prefix_property(self):
        b, params, pred, ts, state = _pool_instance()
        prev = None
        for k in (40, 20, 10, 5, 1):
            _, edges, _ = pga.build_add_pool(pred, ts, b, params, state, top_k=k)
            assert len(edges) <= k
            if prev is not None:
                assert set(edges) <= set(prev)
            prev = edges

    def test_add_edges_absent_from_graph_and_touch_targets(self):
        b, params, pred, ts, state = _pool_instance()
        anchors, edges, _ = pga.build_add_pool(pred, ts, b, params, state, top_k=50)
        tset = set(ts.nodes.tolist())
        for u, v in edges:
            assert not b.adj.has_edge(u, v)
            assert u in tset or v in tset
        assert not set(anchors.tolist()) & tset

    def test_empty_fake_pool_raises(self):
        # every node predicted into one class: no runner-up nodes exist
        adj = pga.Adjacency.from_edges(4, [(0, 1), (2, 3)])
        x = np.ones((4, 2))
        params = ModelParams(w0=np.array([[1.0, 0.0], [0.0, 0.0]]),
                             w1=np.array([[2.0, 0.0], [0.0, 0.0]]), arch="linear", hidden=2)
        pred = pga.forward(params, pga.normalize_adjacency(adj), x)
        assert (pred.pred == 0).all()
        b = pga.GraphBundle(adj, x, np.array([0, 0, 1, 1]), [0], [1], [2, 3], 2)
        state = PseudoLabelState.initial(pred, [2, 3])
        with pytest.raises(EmptyPoolError):
            pga.build_add_pool(pred, _target_set([2, 3]), b, params, state, top_k=5)

    def test_topk_matches_finite_difference_ranking(self):
        # exhaustive FD scoring of the full fake pool agrees on the top-3 set
        rng = np.random.default_rng(9)
        adj, x, params = random_instance(9, n=12, p=0.25)
        a = adj.csr.toarray()
        pred = Prediction.from_probs(dense_probs(params.w0, params.w1, "linear", a, x))
        targets = np.array([1, 4, 6])
        state = PseudoLabelState.initial(pred, targets)
        b = pga.GraphBundle(adj, x, rng.integers(0, 3, 12), [0], [2], sorted(set(range(12)) - {0, 2}), 3)
        _, fake_all, _ = pga.build_add_pool(pred, _target_set(targets), b, params, state, top_k=10**9)
        fd = {
            e: fd_edge_score(params.w0, params.w1, "linear", a, x,
                             state.pseudo, sorted(state.still_correct), targets, e)
            for e in fake_all
        }
        fd_sorted = sorted(fd, key=lambda e: (-fd[e], e))
        _, top3, _ = pga.build_add_pool(pred, _target_set(targets), b, params, state, top_k=3)
        assert set(top3) == set(fd_sorted[:3])


class TestRemovePool:
    def test_path_example(self):
        # path t-a-b with target t and k=2
        adj = pga.Adjacency.from_edges(3, [(0, 1), (1, 2)])
        b = pga.GraphBundle(adj, np.zeros((3, 1)), np.array([0, 1, 0]), [], [], [0, 1, 2], 2)
        anchors, edges = pga.build_remove_pool(b, _target_set([0]), k=2)
        assert set(anchors.tolist()) == {1, 2}
        assert edges == ((0, 1),)

    def test_isolated_target_contributes_nothing(self):
        adj = pga.Adjacency.from_edges(3, [(1, 2)])
        b = pga.GraphBundle(adj, np.zeros((3, 1)), np.array([0, 1, 0]), [], [], [0, 1, 2], 2)
        _, edges = pga.build_remove_pool(b, _target_set([0]), k=3)
        assert edges == ()

    def test_adjacent_targets_edge_once(self):
        adj = pga.Adjacency.from_edges(3, [(0, 1), (1, 2)])
        b = pga.GraphBundle(adj, np.zeros((3, 1)), np.array([0, 1, 0]), [], [], [0, 1, 2], 2)
        _, edges = pga.build_remove_pool(b, _target_set([0, 1]), k=1)
        assert edges == ((0, 1), (1, 2))

    def test_rem_edges_exist_and_touch_targets(self):
        b, params, pred, ts, state = _pool_instance()
        _, edges = pga.build_remove_pool(b, ts, k=2)
        tset = set(ts.nodes.tolist())
        for u, v in edges:
            assert b.adj.has_edge(u, v)
            assert u in tset or v in tset


class TestPools:
    def test_add_rem_disjoint_and_deterministic(self):
        b, params, pred, ts, state = _pool_instance()
        p1 = pga.build_pools(pred, ts, b, params, state, top_k=30, removal_hops=2)
        p2 = pga.build_pools(pred, ts, b, params, state, top_k=30, removal_hops=2)
        assert not set(p1.add_edges) & set(p1.rem_edges)
        assert p1.add_edges == p2.add_edges and p1.rem_edges == p2.rem_edges

    def test_pools_json_shape(self):
        from pga.anchors import pools_to_dict
        b, params, pred, ts, state = _pool_instance()
        pools = pga.build_pools(pred, ts, b, params, state, top_k=10, removal_hops=2)
        d = pools_to_dict(pools)
        assert set(d) == {"add_edges", "rem_edges", "pruned_from"}
        assert len(d["add_edges"]) <= 10
