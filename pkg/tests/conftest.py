import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import pga
from pga.nn import ModelParams


def random_adjacency(rng, n, p=0.3):
    edges = [(u, v) for u in range(n - 1) for v in range(u + 1, n) if rng.random() < p]
    return pga.Adjacency.from_edges(n, edges)


def random_instance(seed, n=12, d=4, h=4, c=3, p=0.3, arch="linear"):
    """Small random graph + features + handcrafted weights for gradient checks."""
    rng = np.random.default_rng(seed)
    adj = random_adjacency(rng, n, p)
    x = rng.normal(size=(n, d))
    params = ModelParams(
        w0=rng.normal(size=(d, h)) * 0.6,
        w1=rng.normal(size=(h, c)) * 0.6,
        arch=arch,
        hidden=h,
    )
    return adj, x, params


def small_bundle(seed=0, blocks=3, block_size=12, p_in=0.35, p_out=0.04, feat_noise=1.0):
    """A quick-to-train bundle for engine and CLI tests."""
    return pga.generate_sbm(blocks, block_size, p_in, p_out, feat_dim=8,
                            feat_noise=feat_noise, seed=seed)


QUICK_TRAIN = pga.TrainConfig(epochs=60, patience=60, hidden=8, dropout=0.3, seed=0)

# --- acceptance instance, shared across the suite -------------------------

ACCEPT_SEEDS = (0, 1, 2, 3, 4)
SURROGATE_SEED_BASE = 1000
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def sbm300():
    return pga.generate_sbm(3, 100, 0.08, 0.005, seed=7)


@pytest.fixture(scope="session")
def sbm300_models(sbm300):
    """Per-seed (victim, surrogate) pairs trained at the default hyperparameters."""
    t0 = time.perf_counter()
    out = {}
    for s in ACCEPT_SEEDS:
        victim = pga.train(sbm300, "relu", pga.TrainConfig(seed=s))
        surrogate = pga.train(sbm300, "linear", pga.TrainConfig(seed=SURROGATE_SEED_BASE + s))
        out[s] = (victim, surrogate)
    TIMINGS["sbm300_models_s"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def attack_battery(sbm300, sbm300_models):
    """All four attackers over seeds 0-4: perturbations and accuracy drops."""
    na = pga.normalize_adjacency(sbm300.adj)
    t0 = time.perf_counter()
    byseed = {}
    for s in ACCEPT_SEEDS:
        victim, surrogate = sbm300_models[s]
        cfg = pga.AttackConfig(seed=s)
        spred = pga.forward(surrogate, na, sbm300.features)
        labels_visible = spred.pred.copy()
        labels_visible[sbm300.train_idx] = sbm300.labels[sbm300.train_idx]
        runs = {
            "pga": pga.run_pga(sbm300, surrogate, cfg),
            "random": pga.run_random(sbm300, cfg),
            "dice": pga.run_dice(sbm300, cfg, labels_visible),
            "full_greedy": pga.run_full_greedy(sbm300, surrogate, cfg),
        }
        drops = {}
        for name, run in runs.items():
            rep = pga.evaluate_evasion(victim, sbm300, run.perturbation)
            drops[name] = 100.0 * (rep.clean_accuracy - rep.attacked_accuracy)
        byseed[s] = {"runs": runs, "drops": drops}
    return {"byseed": byseed, "runtime_s": time.perf_counter() - t0}
