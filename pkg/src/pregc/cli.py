"""Command-line entry point: ``pregc <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .condense import condense
from .config import RunConfig, load_config, parse_config
from .diffusion import coverage_gap, evenly_spaced_intervals, stability_limit
from .errors import InvalidInputError, PreGCError
from .evaluation import TaskSpec, avg_nn_distance, propagated
from .graph import Graph, laplacian, sbm_generate, two_block_centers
from .harmonize import default_top_h, discretize_plan, node_significance, select_training_set
from .pipeline import finetune, run_arms
from .storage import fmt, load_graph, read_checkpoint, write_checkpoint, write_dataset, write_matrix

CLUSTERING_NOTE = "k-means on NC-trained head embeddings, NMI against class labels"


def block_centers(n_blocks: int, dim: int, separation: float) -> np.ndarray:
    """Block centers with pairwise distance ``separation``."""
    if n_blocks == 2:
        return two_block_centers(dim, separation)
    if dim < n_blocks:
        raise InvalidInputError(f"{n_blocks} blocks need at least {n_blocks} feature dimensions")
    c = np.zeros((n_blocks, dim))
    c[np.arange(n_blocks), np.arange(n_blocks)] = separation / np.sqrt(2.0)
    return c


def build_graph(cfg: RunConfig) -> Graph:
    cfg.validate_source()
    if cfg.data.present:
        d = cfg.data
        return load_graph(d.edges, d.features, d.labels or None, d.splits or None, d.self_loops)
    s = cfg.synthetic
    centers = block_centers(len(s.block_sizes), s.dim, s.separation)
    return sbm_generate(
        s.block_sizes, s.p_in, s.p_out, centers, s.noise_sigma, cfg.run.seed, s.train_frac, s.val_frac
    )


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return _apply_common(cfg, args)


def _apply_common(cfg: RunConfig, args) -> RunConfig:
    cfg = cfg.with_overrides("run", seed=args.seed, output=args.output, threads=args.threads)
    if getattr(args, "edges", None) or getattr(args, "features", None):
        cfg = cfg.with_overrides(
            "data", edges=args.edges, features=args.features, labels=args.labels, splits=args.splits
        )
        cfg = cfg.with_overrides("synthetic", block_sizes=())
    elif getattr(args, "blocks", None):
        sizes = tuple(int(b) for b in args.blocks.split(",") if b.strip())
        cfg = cfg.with_overrides("synthetic", block_sizes=sizes)
        cfg = cfg.with_overrides("data", edges="", features="", labels="", splits="")
    return cfg


def _checkpoint_config(args):
    ck = read_checkpoint(args.checkpoint)
    cfg = parse_config(ck.config_text, str(Path(args.checkpoint) / "config.ini"))
    if args.config:
        cfg = load_config(args.config)
    cfg = _apply_common(cfg, args)
    out = Path(args.output) if args.output else Path(args.checkpoint)
    return ck, cfg, out


def cmd_gen_synthetic(args) -> int:
    cfg = _resolve(args)
    for key in ("p_in", "p_out", "dim", "separation", "noise_sigma"):
        cfg = cfg.with_overrides("synthetic", **{key: getattr(args, key)})
    if not cfg.synthetic.present:
        raise InvalidInputError("gen-synthetic needs --blocks or a [synthetic] section")
    g = build_graph(cfg.with_overrides("data", edges="", features=""))
    out = Path(cfg.run.output)
    paths = write_dataset(out, g)
    echo = cfg.with_overrides("data", **paths).with_overrides("synthetic", block_sizes=())
    (out / "config.ini").write_text(echo.to_ini(), encoding="utf-8")
    print(json.dumps({"nodes": g.n, "files": paths}, sort_keys=True))
    return 0


def cmd_condense(args) -> int:
    cfg = _resolve(args).with_overrides(
        "condense", m=args.m, ratio=args.ratio, epochs=args.epochs, learning_rate=args.lr
    )
    g = build_graph(cfg)
    m = cfg.condensed_size(g.n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = condense(g, m, cfg.train_config())
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = write_checkpoint(cfg.run.output, result, cfg.to_ini())
    summary = {
        "checkpoint": str(out),
        "n": g.n,
        "m": m,
        "epochs": len(result.history),
        "initial_cost": result.history[0].cost_term if result.history else None,
        "final_cost": result.history[-1].cost_term if result.history else None,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    ck, cfg, out = _checkpoint_config(args)
    tasks = args.tasks.split(",") if args.tasks else list(cfg.eval.tasks)
    g = build_graph(cfg)
    gc = ck.graph
    assignment = discretize_plan(ck.plan)
    seed = cfg.run.seed
    digest = cfg.digest()
    records, extras = [], {}
    for name in tasks:
        task = TaskSpec(name.strip())
        arms = run_arms(g, gc, assignment, task, seed, cfg.eval.k, cfg.eval.head_epochs)
        for arm in ("condensed", "whole", "random-coreset"):
            records.append({
                "task": task.kind, "metric": task.metric, "arm": arm, "value": arms[arm],
                "seed": seed, "config_hash": digest,
            })
        if "lre" in arms:
            extras["lre"] = {"condensed": arms["lre"], "random-coreset": arms["lre_random_coreset"]}
        if task.kind == "node-clustering":
            extras["clustering_protocol"] = CLUSTERING_NOTE
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", {"config_hash": digest, "seed": seed, "records": records, **extras})
    for r in records:
        print(f"{r['task']}\t{r['arm']}\t{r['metric']}\t{fmt(r['value'])}")
    return 0


def cmd_significance(args) -> int:
    ck, cfg, out = _checkpoint_config(args)
    g = build_graph(cfg)
    n, m = ck.plan.shape
    h = args.h if args.h is not None else (cfg.significance.h or default_top_h(n, m))
    budget = args.budget if args.budget is not None else cfg.significance.budget
    if budget < 0:
        if g.splits is None:
            raise InvalidInputError("no train split to size the budget; pass --budget")
        budget = g.splits.train.size
    scores = node_significance(ck.plan, h)
    selected = select_training_set(scores, budget)
    ranks = np.empty(n, dtype=int)
    ranks[np.argsort(-scores.scores, kind="stable")] = np.arange(1, n + 1)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "significance.csv", "w", encoding="utf-8") as fh:
        fh.write("node,score,rank\n")
        for i in range(n):
            fh.write(f"{i},{fmt(scores.scores[i])},{ranks[i]}\n")
    with open(out / "selected.csv", "w", encoding="utf-8") as fh:
        fh.write("node\n" + "".join(f"{i}\n" for i in selected))
    z = propagated(g, cfg.eval.k)
    report = {"h": h, "budget": budget, "selected_blocks": None}
    if budget >= 2:
        report["dbar_selected"] = avg_nn_distance(z, selected)
    if g.splits is not None and g.splits.train.size >= 2:
        report["dbar_train_split"] = avg_nn_distance(z, g.splits.train)
    if g.labels is not None and g.label_kind == "class":
        report["selected_blocks"] = sorted({int(c) for c in np.argmax(g.labels[selected], axis=1)})
    _write_json(out / "significance.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_finetune(args) -> int:
    ck, cfg, out = _checkpoint_config(args)
    cfg = cfg.with_overrides("finetune", tau_up=args.tau_up, decay=args.decay, epochs=args.epochs)
    g = build_graph(cfg)
    task = TaskSpec(args.task or cfg.eval.tasks[0])
    f = cfg.finetune
    trace = finetune(
        g, ck.graph, discretize_plan(ck.plan), task, f.tau_up, f.decay, f.epochs,
        cfg.run.seed, cfg.eval.k, cfg.ot_config(),
    )
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "finetune_labels.csv", trace.labels)
    with open(out / "finetune_metrics.csv", "w", encoding="utf-8") as fh:
        fh.write(f"round,{task.metric}\n")
        for r, v in enumerate(trace.metrics):
            fh.write(f"{r},{fmt(v)}\n")
    report = {"task": task.kind, "metric": task.metric, "before": trace.metrics[0], "after": trace.metrics[-1],
              "seed": cfg.run.seed, "config_hash": cfg.digest()}
    _write_json(out / "finetune.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_spectral_report(args) -> int:
    cfg = _resolve(args)
    g = build_graph(cfg)
    if g.n == 0:
        raise InvalidInputError("graph has no nodes")
    eig = np.clip(np.linalg.eigvalsh(laplacian(g.operator)), 0.0, None)
    lam = float(eig.max())
    if lam <= 0:
        raise InvalidInputError("graph Laplacian has no positive eigenvalue")
    if args.sampling == "even":
        samples = evenly_spaced_intervals(lam, args.samples)
    else:
        hi = stability_limit(lam)
        samples = np.random.default_rng(cfg.run.seed).uniform(0.01 * hi, hi, args.samples)
    total, detail = coverage_gap(eig, samples, args.grid, args.steps, detail=True)
    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "spectral_report.csv", "w", encoding="utf-8") as fh:
        fh.write("eigen_index,eigenvalue,grid_delta_t,min_gap\n")
        for i, (lam_i, (dt, gap)) in enumerate(zip(eig, detail)):
            fh.write(f"{i},{fmt(lam_i)},{fmt(dt)},{fmt(gap)}\n")
    print(json.dumps({"coverage_gap": total, "samples": args.samples, "grid": args.grid}, sort_keys=True))
    return 0


def _common(p: argparse.ArgumentParser, dataset: bool = True) -> None:
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="output directory")
    p.add_argument("--threads", type=int, help="linear-algebra threads (default 1)")
    if dataset:
        p.add_argument("--edges")
        p.add_argument("--features")
        p.add_argument("--labels")
        p.add_argument("--splits")
        p.add_argument("--blocks", help="synthetic SBM block sizes, e.g. 30,30")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pregc", description="Task-free graph condensation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write an SBM dataset in the loader's file formats")
    _common(p)
    p.add_argument("--p-in", dest="p_in", type=float)
    p.add_argument("--p-out", dest="p_out", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--noise", dest="noise_sigma", type=float)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("condense", help="pre-train a condensed graph and write a checkpoint")
    _common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_condense)

    for name, func, help_text in (
        ("evaluate", cmd_evaluate, "train heads on condensed, whole and coreset graphs"),
        ("significance", cmd_significance, "score source nodes and select a training set"),
        ("finetune", cmd_finetune, "test-time fine-tuning of the assignment"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        p.add_argument("--checkpoint", required=True)
        if name == "evaluate":
            p.add_argument("--tasks", help="comma-separated: nc, nclu, lp, nr")
        elif name == "significance":
            p.add_argument("--h", type=int)
            p.add_argument("--budget", type=int)
        else:
            p.add_argument("--task")
            p.add_argument("--tau-up", dest="tau_up", type=int)
            p.add_argument("--decay", type=float)
            p.add_argument("--epochs", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("spectral-report", help="coverage gap of sampled diffusion intervals")
    _common(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--sampling", choices=("even", "random"), default="even")
    p.set_defaults(func=cmd_spectral_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = args.threads or 1
        with threadpool_limits(limits=threads):
            return args.func(args)
    except PreGCError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
