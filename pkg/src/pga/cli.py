"""Command-line pipeline: gen, train, attack, eval, profile.

A JSON config drives each run; ``--key value`` pairs override dotted config
paths. Outputs land under the configured out dir with fixed names, one
subdirectory per seed. PGA_THREADS caps how many seeds run concurrently.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .attack import (
    AttackConfig,
    resolve_budget,
    run_dice,
    run_full_greedy,
    run_pga,
    run_random,
    write_run_log,
)
from .errors import EmptyPoolError, EmptyTargetSetError, GraphFormatError, TrainingDivergedError
from .graph import compute_node_stats, normalize_adjacency
from .io import atomic_write_text, load_graph, load_perturbation, save_graph, save_perturbation
from .nn import TrainConfig, forward, load_params, save_params, train
from .sbm import generate_sbm
from .selection import SelectionConfig, margins_of

DEFAULT_CONFIG = {
    "graph_dir": None,
    "out_dir": None,
    "victim_params": None,
    "surrogate_params": None,
    "training": {
        "victim": {"arch": "relu", "lr": 0.01, "weight_decay": 0.0005, "epochs": 200,
                   "patience": 30, "hidden": 16, "dropout": 0.5, "seed": 0},
        "surrogate": {"arch": "linear", "lr": 0.01, "weight_decay": 0.0005, "epochs": 200,
                      "patience": 30, "hidden": 16, "dropout": 0.5, "seed": 1000},
    },
    "attack": {"attacker": "pga", "budget_rate": 0.05, "budget_abs": None, "greedy_step": 1,
               "top_k": None, "removal_hops": 2, "seed": 0,
               "selection": {"threshold_p": 0.05, "filter_ratio": 0.65}},
    "evaluation": {"evasion": True, "poisoning": False, "hit_rate": True,
                   "degree_distance": True, "robustness_export": False, "oracle_budget": 1},
    "seeds": [0],
}


def _deep_update(base: dict, overrides: dict) -> dict:
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        _deep_update(cfg, json.loads(Path(path).read_text(encoding="utf-8")))
    if len(overrides) % 2:
        raise SystemExit("overrides must come in --key value pairs")
    for key, raw in zip(overrides[::2], overrides[1::2]):
        if not key.startswith("--"):
            raise SystemExit(f"override key {key!r} must start with --")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key[2:].split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def _require_paths(cfg: dict):
    for key in ("graph_dir", "out_dir"):
        if not cfg.get(key):
            raise ValueError(f"config is missing '{key}' (set it in the file or pass --{key} PATH)")


def _train_cfg(section: dict, seed_shift: int = 0) -> tuple[str, TrainConfig]:
    return section["arch"], TrainConfig(
        lr=section["lr"], weight_decay=section["weight_decay"], epochs=section["epochs"],
        patience=section["patience"], hidden=section["hidden"], dropout=section["dropout"],
        seed=section["seed"] + seed_shift,
    )


def _attack_cfg(section: dict, seed_shift: int = 0) -> AttackConfig:
    sel = section.get("selection", {})
    return AttackConfig(
        budget_rate=section.get("budget_rate"),
        budget_abs=section.get("budget_abs"),
        greedy_step=section.get("greedy_step", 1),
        selection=SelectionConfig(
            threshold_p=sel.get("threshold_p", 0.05),
            filter_ratio=sel.get("filter_ratio", 0.65),
        ),
        top_k=section.get("top_k"),
        removal_hops=section.get("removal_hops", 2),
        seed=section.get("seed", 0) + seed_shift,
        attacker=section.get("attacker", "pga"),
    )


def _json_dump(obj, path: Path):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen(args) -> int:
    bundle = generate_sbm(
        blocks=args.blocks, block_size=args.block_size, p_in=args.p_in, p_out=args.p_out,
        feat_dim=args.feat_dim, feat_noise=args.feat_noise,
        split_fractions=tuple(float(x) for x in args.split_fractions.split(",")),
        seed=args.seed,
    )
    save_graph(bundle, args.out)
    print(f"wrote {bundle.n_nodes} nodes / {bundle.adj.num_edges} edges to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.overrides)
    _require_paths(cfg)
    bundle = load_graph(cfg["graph_dir"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for role in ("victim", "surrogate"):
        arch, tc = _train_cfg(cfg["training"][role])
        params = train(bundle, arch, tc)
        save_params(params, out / f"params_{role}.json")
        pred = forward(params, normalize_adjacency(bundle.adj), bundle.features)
        acc = float(np.mean(pred.pred[bundle.test_idx] == bundle.labels[bundle.test_idx]))
        print(f"{role}: arch={arch} test_acc={acc:.4f}")
    return 0


def _run_one_seed(bundle, cfg: dict, seed_shift: int, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    seed_dir = out_dir / f"seed_{seed_shift}"
    seed_dir.mkdir(parents=True, exist_ok=True)

    v_arch, v_cfg = _train_cfg(cfg["training"]["victim"], seed_shift)
    s_arch, s_cfg = _train_cfg(cfg["training"]["surrogate"], seed_shift)
    if cfg.get("victim_params"):
        victim = load_params(cfg["victim_params"])
    else:
        victim = train(bundle, v_arch, v_cfg)
    if cfg.get("surrogate_params"):
        surrogate = load_params(cfg["surrogate_params"])
    else:
        surrogate = train(bundle, s_arch, s_cfg)
    save_params(victim, seed_dir / "params_victim.json")
    save_params(surrogate, seed_dir / "params_surrogate.json")

    acfg = _attack_cfg(cfg["attack"], seed_shift)
    if acfg.attacker == "pga":
        run = run_pga(bundle, surrogate, acfg)
    elif acfg.attacker == "full_greedy":
        run = run_full_greedy(bundle, surrogate, acfg)
    elif acfg.attacker == "random":
        run = run_random(bundle, acfg)
    else:
        spred = forward(surrogate, normalize_adjacency(bundle.adj), bundle.features)
        labels_visible = spred.pred.copy()
        labels_visible[bundle.train_idx] = bundle.labels[bundle.train_idx]
        run = run_dice(bundle, acfg, labels_visible)
    pert = run.perturbation
    save_perturbation(pert, seed_dir / "perturbation.txt")
    write_run_log(run, seed_dir / "run_log.jsonl")

    report = _evaluate(bundle, victim, surrogate, pert, cfg, seed_shift, seed_dir)
    report["negative_score_flips"] = run.negative_score_flips
    report["runtime_ms"] = (time.perf_counter() - t0) * 1000.0
    _json_dump(report, seed_dir / "report.json")
    return report


def _evaluate(bundle, victim, surrogate, pert, cfg: dict, seed: int, seed_dir: Path) -> dict:
    evcfg = cfg["evaluation"]
    report = ev.AttackReport(
        budget=pert.budget, flips_applied=len(pert.flips),
        adds=pert.num_adds, dels=pert.num_dels, seed=seed, config=cfg,
    )
    adj_att = pert.apply_to(bundle.adj)
    if evcfg.get("evasion", True):
        evn = ev.evaluate_evasion(victim, bundle, pert)
        report.clean_accuracy = evn.clean_accuracy
        report.attacked_accuracy = evn.attacked_accuracy
    if evcfg.get("hit_rate", False):
        vulnerable = ev.vulnerable_oracle(surrogate, bundle, evcfg.get("oracle_budget", 1))
        report.hit_rate = ev.hit_rate(pert, vulnerable)
        report.hit_rate_vs_budget = (
            ev.hit_rate(pert, vulnerable) * len(pert.flips) / pert.budget if pert.budget else 0.0
        )
        report.vulnerable_deletions = ev.vulnerable_deletion_count(pert, vulnerable)
    if evcfg.get("degree_distance", False):
        report.degree_distance = ev.degree_distance(bundle.adj, adj_att)
    out = report.to_dict()
    if evcfg.get("poisoning", False):
        v_arch, v_cfg = _train_cfg(cfg["training"]["victim"], seed)
        pois = ev.evaluate_poisoning(bundle, pert, v_arch, v_cfg)
        out["poisoning"] = {
            "clean_accuracy": pois.clean_accuracy,
            "poisoned_accuracy": pois.attacked_accuracy,
        }
    if evcfg.get("robustness_export", False):
        stats = compute_node_stats(bundle)
        pred_clean = forward(victim, normalize_adjacency(bundle.adj), bundle.features)
        pred_att = forward(victim, normalize_adjacency(adj_att), bundle.features)
        stats.margin = margins_of(pred_clean)
        attacked = [
            int(v) for v in bundle.test_idx
            if pred_clean.pred[v] == bundle.labels[v] and pred_att.pred[v] != bundle.labels[v]
        ]
        rows = ev.export_robustness_dataset(bundle, stats, pred_clean, attacked)
        ev.write_robustness_csv(rows, seed_dir / "robustness.csv")
    return out


_SUMMARY_FIELDS = [
    "clean_accuracy", "attacked_accuracy", "hit_rate", "degree_distance",
    "flips_applied", "adds", "dels", "negative_score_flips", "runtime_ms",
]


def _summarize(reports: list[dict]) -> dict:
    out = {"n_seeds": len(reports)}
    for key in _SUMMARY_FIELDS:
        vals = [r[key] for r in reports if r.get(key) is not None]
        if vals:
            out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    pois = [r["poisoning"]["poisoned_accuracy"] for r in reports if "poisoning" in r]
    if pois:
        out["poisoned_accuracy"] = {"mean": float(np.mean(pois)), "std": float(np.std(pois))}
    return out


def cmd_attack(args) -> int:
    cfg = load_config(args.config, args.overrides)
    _require_paths(cfg)
    bundle = load_graph(cfg["graph_dir"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    seeds = cfg["seeds"]
    if not seeds:
        raise SystemExit("seed list must be non-empty")
    workers = max(1, int(os.environ.get("PGA_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda s: _run_one_seed(bundle, cfg, s, out), seeds))
    else:
        reports = [_run_one_seed(bundle, cfg, s, out) for s in seeds]
    summary = _summarize(reports)
    summary["attacker"] = cfg["attack"]["attacker"]
    summary["config"] = cfg
    _json_dump(summary, out / "summary.json")
    for r, s in zip(reports, seeds):
        line = f"seed {s}: flips={r['flips_applied']}"
        if r.get("clean_accuracy") is not None:
            line += f" acc {r['clean_accuracy']:.4f} -> {r['attacked_accuracy']:.4f}"
        print(line)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.overrides)
    _require_paths(cfg)
    bundle = load_graph(cfg["graph_dir"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    victim = load_params(args.victim_params or Path(cfg["out_dir"]) / "params_victim.json")
    surrogate = load_params(args.surrogate_params or Path(cfg["out_dir"]) / "params_surrogate.json")
    n_lines = sum(
        1 for ln in Path(args.perturbation).read_text(encoding="utf-8").splitlines() if ln.strip()
    )
    budget = max(resolve_budget(_attack_cfg(cfg["attack"]), bundle.adj.num_edges), n_lines)
    pert = load_perturbation(args.perturbation, bundle.adj.num_edges, budget)
    report = _evaluate(bundle, victim, surrogate, pert, cfg, cfg["attack"].get("seed", 0), out)
    _json_dump(report, out / "report.json")
    print(json.dumps({k: report[k] for k in ("clean_accuracy", "attacked_accuracy") if k in report}))
    return 0


def cmd_profile(args) -> int:
    cfg = load_config(args.config, args.overrides)
    _require_paths(cfg)
    bundle = load_graph(cfg["graph_dir"])
    if args.oracle_budget is not None and bundle.n_nodes > ev.ORACLE_MAX_NODES:
        raise ValueError(f"vulnerability oracle is guarded to N <= {ev.ORACLE_MAX_NODES}")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if args.victim_params or cfg.get("victim_params"):
        victim = load_params(args.victim_params or cfg["victim_params"])
    else:
        v_arch, v_cfg = _train_cfg(cfg["training"]["victim"])
        victim = train(bundle, v_arch, v_cfg)
    pred = forward(victim, normalize_adjacency(bundle.adj), bundle.features)
    stats = compute_node_stats(bundle)
    stats.margin = margins_of(pred)
    attacked: list[int] = []
    if args.oracle_budget is not None:
        s_arch, s_cfg = _train_cfg(cfg["training"]["surrogate"])
        surrogate = train(bundle, s_arch, s_cfg)
        vulnerable = ev.vulnerable_oracle(surrogate, bundle, args.oracle_budget)
        attacked = [int(v) for v in vulnerable]
    rows = ev.export_robustness_dataset(bundle, stats, pred, attacked)
    ev.write_robustness_csv(rows, out / "robustness.csv")
    print(f"wrote {len(rows)} rows to {out / 'robustness.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pga", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a block-model graph directory")
    g.add_argument("--out", required=True)
    g.add_argument("--blocks", type=int, default=3)
    g.add_argument("--block-size", type=int, default=100)
    g.add_argument("--p-in", type=float, default=0.08)
    g.add_argument("--p-out", type=float, default=0.005)
    g.add_argument("--feat-dim", type=int, default=16)
    g.add_argument("--feat-noise", type=float, default=2.2)
    g.add_argument("--split-fractions", default="0.15,0.1,0.75")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    for name, fn in (("train", cmd_train), ("attack", cmd_attack)):
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="evaluate an existing perturbation file")
    p.add_argument("--config")
    p.add_argument("--perturbation", required=True)
    p.add_argument("--victim-params")
    p.add_argument("--surrogate-params")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", help="node statistics and robustness CSV")
    p.add_argument("--config")
    p.add_argument("--victim-params")
    p.add_argument("--oracle-budget", type=int, choices=(1, 2))
    p.set_defaults(func=cmd_profile)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    args.overrides = extra   # trailing --dotted.key value pairs override config entries
    if getattr(args, "func", None) is cmd_gen and extra:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        return args.func(args)
    except (GraphFormatError, FileNotFoundError, ValueError, TrainingDivergedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except EmptyTargetSetError as e:
        print(f"error: {e} (try raising attack.selection.filter_ratio)", file=sys.stderr)
        return 1
    except EmptyPoolError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
