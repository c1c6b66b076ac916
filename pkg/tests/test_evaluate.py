import numpy as np
import pytest

import pga
from pga.evaluate import _FlipProbe, vulnerable_deletion_count, write_robustness_csv
from pga.nn import ModelParams
from conftest import QUICK_TRAIN, random_instance, small_bundle


def _trained(seed=0):
    b = small_bundle(seed=seed)
    victim = pga.train(b, "relu", QUICK_TRAIN)
    surrogate = pga.train(b, "linear", QUICK_TRAIN)
    return b, victim, surrogate


class TestEvasion:
    def test_empty_perturbation_identity(self):
        b, victim, _ = _trained()
        pert = pga.Perturbation((), b.adj.num_edges, 0)
        rep = pga.evaluate_evasion(victim, b, pert)
        assert rep.attacked_accuracy == rep.clean_accuracy
        assert rep.adds == rep.dels == 0

    def test_counts(self):
        b, victim, surrogate = _trained()
        run = pga.run_pga(b, surrogate, pga.AttackConfig(budget_rate=None, budget_abs=8))
        rep = pga.evaluate_evasion(victim, b, run.perturbation)
        assert rep.flips_applied == 8
        assert rep.adds + rep.dels == 8
        assert 0.0 <= rep.attacked_accuracy <= 1.0


class TestPoisoning:
    def test_empty_perturbation_exact_identity(self):
        b, _, _ = _trained()
        pert = pga.Perturbation((), b.adj.num_edges, 0)
        rep = pga.evaluate_poisoning(b, pert, "relu", QUICK_TRAIN)
        assert rep.attacked_accuracy == rep.clean_accuracy

    def test_sbm300_pga_beats_random(self, sbm300, sbm300_models, attack_battery):
        # frozen ordering: poisoned accuracy under PGA stays below Random's
        runs = attack_battery["byseed"][0]["runs"]
        cfg = pga.TrainConfig(seed=0)
        acc_pga = pga.evaluate_poisoning(sbm300, runs["pga"].perturbation, "relu", cfg).attacked_accuracy
        acc_rnd = pga.evaluate_poisoning(sbm300, runs["random"].perturbation, "relu", cfg).attacked_accuracy
        assert acc_pga <= acc_rnd
        assert acc_pga <= 0.88  # frozen from the first observed run (0.8711)


class TestFlipProbe:
    def test_matches_full_forward(self):
        rng = np.random.default_rng(31)
        for arch in ("linear", "relu"):
            adj, x, params = random_instance(13, n=14, p=0.25, arch=arch)
            probe = _FlipProbe(params, adj, x)
            for _ in range(40):
                v = int(rng.integers(14))
                u = int(rng.integers(14))
                if u == v:
                    continue
                op = "del" if adj.has_edge(v, u) else "add"
                got = probe.probs_after_flip(v, u, op)
                ref = pga.forward(params, pga.normalize_adjacency(adj.apply_flip((v, u), op)), x)
                assert np.abs(got - ref.probs[v]).max() < 1e-12

    def test_invalid_flip_rejected(self):
        adj, x, params = random_instance(0, n=8)
        probe = _FlipProbe(params, adj, x)
        u, v = adj.edges()[0]
        with pytest.raises(ValueError):
            probe.probs_after_flip(v, u, "add")


class TestVulnerableOracle:
    def test_b1_subset_of_b2(self):
        b, _, surrogate = _trained()
        v1 = set(pga.vulnerable_oracle(surrogate, b, 1).tolist())
        v2 = set(pga.vulnerable_oracle(surrogate, b, 2).tolist())
        assert v1 <= v2

    def test_stable_node_excluded(self):
        # two far-apart dense cliques with strongly separated features: the
        # central clique nodes survive any single incident flip
        m = 6
        edges = [(u, v) for u in range(m) for v in range(u + 1, m)]
        edges += [(m + u, m + v) for u, v in edges]
        adj = pga.Adjacency.from_edges(2 * m, edges)
        x = np.zeros((2 * m, 2))
        x[:m, 0] = 4.0
        x[m:, 1] = 4.0
        labels = np.array([0] * m + [1] * m)
        b = pga.GraphBundle(adj, x, labels, [0, m], [1, m + 1], list(range(2, m)) + list(range(m + 2, 2 * m)), 2)
        params = pga.train(b, "linear", pga.TrainConfig(epochs=120, patience=120, hidden=4, dropout=0.0, seed=0))
        vul = pga.vulnerable_oracle(params, b, 1)
        assert len(vul) == 0

    def test_nodes_argument_restricts_probe(self, sbm300, sbm300_models):
        _, surrogate = sbm300_models[0]
        subset = sbm300.test_idx[:10]
        out = pga.vulnerable_oracle(surrogate, sbm300, 1, nodes=subset)
        assert set(out.tolist()) <= set(int(v) for v in subset)

    def test_guard(self):
        adj = pga.Adjacency.from_edges(5001, [(0, 1)])
        b = pga.GraphBundle(adj, np.zeros((5001, 1)), np.zeros(5001, dtype=int), [0], [1], [2], 2)
        p = ModelParams(w0=np.zeros((1, 2)), w1=np.zeros((2, 2)), arch="linear", hidden=2)
        with pytest.raises(ValueError, match="guard"):
            pga.vulnerable_oracle(p, b, 1)
        with pytest.raises(ValueError, match="budget_b"):
            pga.vulnerable_oracle(p, b, 3)


class TestHitRate:
    def test_no_flips_zero(self):
        pert = pga.Perturbation((), 10, 5)
        assert pga.hit_rate(pert, [1, 2]) == 0.0

    def test_all_adds_touch(self):
        pert = pga.Perturbation((("add", 0, 5), ("add", 1, 6)), 10, 5)
        assert pga.hit_rate(pert, [5, 1]) == 1.0

    def test_deletions_never_count(self):
        pert = pga.Perturbation((("del", 0, 5), ("add", 1, 6)), 10, 5)
        assert pga.hit_rate(pert, [0, 5]) == 0.0
        assert vulnerable_deletion_count(pert, [0, 5]) == 1

    def test_range(self, sbm300, sbm300_models, attack_battery):
        _, surrogate = sbm300_models[0]
        vul = pga.vulnerable_oracle(surrogate, sbm300, 1)
        hr = pga.hit_rate(attack_battery["byseed"][0]["runs"]["pga"].perturbation, vul)
        assert 0.0 <= hr <= 1.0


class TestDegreeDistance:
    def test_identical_zero(self):
        adj = small_bundle().adj
        assert pga.degree_distance(adj, adj) == 0.0

    def test_two_node_total_move(self):
        a = pga.Adjacency.from_edges(2, [(0, 1)])
        b = pga.Adjacency.from_edges(2, [])
        assert pga.degree_distance(a, b) == pytest.approx(1.0)

    def test_symmetry_and_zero_iff_matching_histograms(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            edges1 = [(u, v) for u in range(9) for v in range(u + 1, 10) if rng.random() < 0.3]
            edges2 = [(u, v) for u in range(9) for v in range(u + 1, 10) if rng.random() < 0.3]
            a = pga.Adjacency.from_edges(10, edges1)
            b = pga.Adjacency.from_edges(10, edges2)
            assert pga.degree_distance(a, b) == pga.degree_distance(b, a)
            same = np.array_equal(np.bincount(a.degrees), np.bincount(b.degrees))
            assert (pga.degree_distance(a, b) == 0.0) == same


class TestRobustnessExport:
    def test_zero_attacked_all_stable(self):
        b, victim, _ = _trained()
        stats = pga.compute_node_stats(b)
        pred = pga.forward(victim, pga.normalize_adjacency(b.adj), b.features)
        rows = pga.export_robustness_dataset(b, stats, pred, [])
        assert rows and all(r[-1] == "stable" for r in rows)
        n_correct = int((pred.pred[b.test_idx] == b.labels[b.test_idx]).sum())
        assert len(rows) == n_correct

    def test_attacked_must_be_test_nodes(self):
        b, victim, _ = _trained()
        stats = pga.compute_node_stats(b)
        pred = pga.forward(victim, pga.normalize_adjacency(b.adj), b.features)
        with pytest.raises(ValueError):
            pga.export_robustness_dataset(b, stats, pred, [int(b.train_idx[0])])

    def test_csv_header(self, tmp_path):
        b, victim, _ = _trained()
        stats = pga.compute_node_stats(b)
        pred = pga.forward(victim, pga.normalize_adjacency(b.adj), b.features)
        rows = pga.export_robustness_dataset(b, stats, pred, [])
        write_robustness_csv(rows, tmp_path / "r.csv")
        head = (tmp_path / "r.csv").read_text().splitlines()[0]
        assert head == "node,degree,pagerank,clustering,eigencentrality,margin,label"

    def test_attacked_rows_have_lower_mean_degree(self, sbm300, sbm300_models, attack_battery):
        victim, _ = sbm300_models[0]
        pert = attack_battery["byseed"][0]["runs"]["pga"].perturbation
        na = pga.normalize_adjacency(sbm300.adj)
        pred_clean = pga.forward(victim, na, sbm300.features)
        pred_att = pga.forward(victim, pga.normalize_adjacency(pert.apply_to(sbm300.adj)), sbm300.features)
        attacked = [
            int(v) for v in sbm300.test_idx
            if pred_clean.pred[v] == sbm300.labels[v] and pred_att.pred[v] != sbm300.labels[v]
        ]
        stats = pga.compute_node_stats(sbm300)
        rows = pga.export_robustness_dataset(sbm300, stats, pred_clean, attacked)
        deg_att = [r[1] for r in rows if r[-1] == "attacked"]
        deg_stab = [r[1] for r in rows if r[-1] == "stable"]
        assert deg_att and deg_stab
        assert np.mean(deg_att) < np.mean(deg_stab)
