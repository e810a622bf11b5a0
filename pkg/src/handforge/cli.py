"""handforge command line: generate, evaluate, optimize and analyze hands."""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .grasp.search import EvalConfig, optimize_grasp
from .grasp.tools import load_tools
from .grasp.wrench import hand_score
from .hand import assemble_hand, directory_digest, export, read_urdf
from .palm import InfeasibleDesign
from .runs import ConfigError, HandObjective, RunConfig, export_designs, read_curve, top_trials, write_curve
from .space import DesignSpace, load_shipped_space
from .surface import DEFAULT_RESOLUTION
from .tpe import ResumeConflict, optimize, read_journal

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


class InvariantViolation(RuntimeError):
    pass


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _space_for(path_or_name) -> DesignSpace:
    if path_or_name and str(path_or_name).endswith(".json"):
        return DesignSpace.load(path_or_name)
    return load_shipped_space(path_or_name or "power_grasp_v1")


# ---------------------------------------------------------------- generate


def load_design(path, space: DesignSpace):
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read design file {path}: {e}") from e
    values = d.get("values", d) if isinstance(d, dict) else None
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected a JSON object of parameter values")
    try:
        return space.make_point(values)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def sample_feasible(space: DesignSpace, seed: int, resolution: int, tries: int = 100):
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        point = space.sample_uniform(rng)
        try:
            return point, assemble_hand(point, resolution)
        except InfeasibleDesign:
            continue
    raise InvariantViolation(f"no feasible design in {tries} draws from seed {seed}")


def cmd_generate(args) -> int:
    space = _space_for(args.space)
    res = args.resolution or DEFAULT_RESOLUTION
    if args.design:
        point = load_design(args.design, space)
        try:
            hand = assemble_hand(point, res)
        except InfeasibleDesign as e:
            raise ConfigError(f"infeasible design: {e}") from e
    else:
        point, hand = sample_feasible(space, args.seed, res)
    out = Path(args.out or f"hand_{args.seed}")
    export(hand, out)
    summary = read_urdf(out / "hand.urdf")
    if len(summary.links) != hand.n_links or len(summary.joints) != hand.n_joints:
        raise InvariantViolation("exported URDF does not match the model")
    print(f"exported {out}")
    print(f"links {hand.n_links}  joints {hand.n_joints}  collision meshes {len(summary.collision_files)}")
    for name in space.names:
        v = point.values.get(name)
        print(f"  {name:22s} {'inactive' if v is None else v}")
    print(f"digest {directory_digest(out)}")
    return EXIT_OK


# ---------------------------------------------------------------- grasp commands


def load_hand_dir(path, resolution):
    d = Path(path)
    if not (d / "hand.urdf").exists():
        raise ConfigError(f"{d}: no hand.urdf")
    if not (d / "design.json").exists():
        raise ConfigError(f"{d}: no design.json")
    with open(d / "design.json") as f:
        space_id = json.load(f).get("space") or "power_grasp_v1"
    point = load_design(d / "design.json", _space_for(space_id))
    return assemble_hand(point, resolution)


def _eval_config(args) -> EvalConfig:
    cfg = RunConfig.build(args.config, args.set or (), **{"eval.grasp_budget": args.budget, "eval.K": args.k_best}).eval_config
    if cfg.K > cfg.grasp_budget:
        _warn(f"K={cfg.K} exceeds the grasp budget; using K={cfg.grasp_budget}")
    return cfg


def _grasp_runs(args, tool_names):
    hand = load_hand_dir(args.hand_dir, args.resolution or DEFAULT_RESOLUTION)
    cfg = _eval_config(args)
    try:
        tools = load_tools(tool_names)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    results = {}
    lines = []
    for k, tool in enumerate(tools):
        seed = int(np.random.SeedSequence([args.seed, 7919, k]).generate_state(1)[0])
        res = optimize_grasp(hand, tool, cfg.grasp_budget, seed, cfg)
        results[tool.name] = res
        for t in res.history:
            lines.append(
                json.dumps(
                    {"tool": tool.name, "index": t.index, "point": dict(t.point.values), "score": t.score, "seed": t.seed, "tag": t.tag},
                    sort_keys=True,
                )
            )
    journal = Path(args.out) if args.out else Path(args.hand_dir) / "grasps.jsonl"
    journal.write_text("".join(l + "\n" for l in lines))
    return cfg, results, journal


def cmd_evaluate(args) -> int:
    cfg, results, journal = _grasp_runs(args, args.tools)
    K = min(cfg.K, cfg.grasp_budget)
    for name, res in results.items():
        print(f"{name:8s} best S_t {res.score:.4f}  ({len(res.scores)} grasps)")
    sh = hand_score({n: r.scores for n, r in results.items()}, K)
    # recompute from the journal as a bookkeeping cross-check
    per_tool = {}
    for line in journal.read_text().splitlines():
        d = json.loads(line)
        per_tool.setdefault(d["tool"], []).append(d["score"])
    if hand_score(per_tool, K) != sh:
        raise InvariantViolation("hand score differs from the journal recomputation")
    print(f"S_h (K={K}) {sh:.4f}")
    print(f"journal {journal}")
    return EXIT_OK


def cmd_optimize_grasp(args) -> int:
    cfg, results, journal = _grasp_runs(args, args.tools)
    for name, res in results.items():
        print(f"{name:8s} best S_t {res.score:.4f}  grasp {json.dumps(res.best.to_json(), sort_keys=True)}")
    print(f"journal {journal}")
    return EXIT_OK


# ---------------------------------------------------------------- optimize-hand


def _run_config(args) -> RunConfig:
    flags = {
        "seed": args.seed,
        "hand_budget": args.budget,
        "batch": args.batch,
        "resolution": args.resolution,
        "eval.K": args.k_best,
        "eval.grasp_budget": args.grasp_budget,
        "tools": args.tools.split(",") if args.tools else None,
    }
    return RunConfig.build(args.config, args.set or (), **flags)


def cmd_optimize_hand(args) -> int:
    rc = _run_config(args)
    run = Path(args.out or "runs/default")
    run.mkdir(parents=True, exist_ok=True)
    snap = run / "config.json"
    if snap.exists():
        if snap.read_text() != rc.dumps():
            raise ResumeConflict(f"{snap} differs from the requested configuration; use a new --out")
    else:
        snap.write_text(rc.dumps())
    c = rc.raw
    space = rc.space
    objective = HandObjective(rc.tools, rc.eval_config, int(c["resolution"]))
    batch = int(c["batch"])
    journal = run / "trials.jsonl"
    done = len(read_journal(journal, space))
    if done:
        print(f"resuming at trial {done}")
    history = []

    def on_trial(t):
        history.append(t)
        print(f"trial {t.index:4d}  score {t.score:.4f}  {t.tag}", flush=True)
        if len(history) % batch == 0:
            write_curve(run / "curve.csv", history, batch)

    pool = ProcessPoolExecutor(args.jobs) if args.jobs and args.jobs > 1 else None
    try:
        best, history = optimize(
            objective,
            space,
            int(c["hand_budget"]),
            rc.hand_tpe,
            seed=int(c["seed"]),
            journal=journal,
            map_fn=pool.map if pool else map,
            on_trial=on_trial,
        )
    finally:
        if pool:
            pool.shutdown()
    write_curve(run / "curve.csv", history, batch)
    if (run / "designs").exists():
        shutil.rmtree(run / "designs")
    export_designs(run, history, int(c["top_n"]), int(c["resolution"]))
    print(f"best trial {best.index} score {best.score:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- analysis


def _load_run(run: Path):
    if not (run / "config.json").exists() or not (run / "trials.jsonl").exists():
        raise ConfigError(f"{run} is not a run directory (config.json / trials.jsonl missing)")
    rc = RunConfig.build(run / "config.json")
    return rc, read_journal(run / "trials.jsonl", rc.space)


def cmd_analyze(args) -> int:
    from .surrogate.analysis import (
        Dataset,
        analyze,
        write_importance_csv,
        write_shap_csv,
        write_shap_long_csv,
    )
    from .space import GROUPS

    run = Path(args.run_dir)
    rc, history = _load_run(run)
    space = rc.space
    data = Dataset.from_history(history, space)
    try:
        result = analyze(data, seed=int(rc.raw["seed"]), known_groups=GROUPS)
    except AssertionError as e:
        raise InvariantViolation(str(e)) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = run / "report"
    out.mkdir(exist_ok=True)
    write_shap_csv(out / "shap.csv", data, result.explanations)
    write_importance_csv(out / "importance.csv", result)
    write_shap_long_csv(out / "shap_long.csv", data, result.explanations)
    worst = max(abs(e.residual) for e in result.explanations)
    print(f"{len(history)} trials, local accuracy max residual {worst:.2e}")
    for rank, (g, imp) in enumerate(result.groups, 1):
        print(f"  {rank}. {g:14s} {imp:.5f}")
    return EXIT_OK


def cmd_report(args) -> int:
    from . import plotting

    run = Path(args.run_dir)
    rc, history = _load_run(run)
    out = run / "report"
    if not (out / "importance.csv").exists() or not (out / "shap_long.csv").exists():
        rc_code = cmd_analyze(args)
        if rc_code:
            return rc_code
    write_curve(run / "curve.csv", history, int(rc.raw["batch"]))
    plotting.plot_curve(read_curve(run / "curve.csv"), out / "curve.png")
    with open(out / "importance.csv") as f:
        rows = list(csv.DictReader(f))
    groups = [(r["name"], float(r["importance"])) for r in rows if r["kind"] == "group"]
    feats = [r["name"] for r in rows if r["kind"] == "feature"]
    plotting.plot_group_importance(groups, out / "importance.png")
    with open(out / "shap_long.csv") as f:
        long_rows = [
            {"name": r["name"], "phi": float(r["phi"]), "value": float(r["value"]) if r["value"] else np.nan}
            for r in csv.DictReader(f)
        ]
    plotting.plot_shap_summary(long_rows, feats, out / "shap_summary.png")
    top = top_trials(history, max(1, len(history) // 10))
    with open(out / "top_designs.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        names = rc.space.names
        w.writerow(["trial", "score", *names])
        for t in top:
            w.writerow([t.index, repr(t.score), *[t.point.values.get(n, "") for n in names]])
    three = sum(1 for t in top if t.point.values.get("finger_number") == 3)
    print(f"report written to {out}")
    if top:
        print(f"top decile: {len(top)} designs, finger_number = 3 in {three} ({100 * three / len(top):.0f}%)")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="handforge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, budget_help="evaluation budget"):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--budget", type=int, help=budget_help)
        sp.add_argument("--resolution", type=int, help="pad grid cells across the palm")
        sp.add_argument("--out", help="output path")
        sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry (dotted key)")

    g = sub.add_parser("generate", help="build and export one hand")
    common(g)
    g.add_argument("--design", help="design JSON (values or {space, values})")
    g.add_argument("--space", help="space name or JSON file")
    g.set_defaults(func=cmd_generate)

    for name, fn, helptext in (
        ("evaluate", cmd_evaluate, "score an exported hand over a tool set"),
        ("optimize-grasp", cmd_optimize_grasp, "search grasps for an exported hand"),
    ):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("hand_dir")
        common(e, "grasp trials per tool")
        e.add_argument("--tools", default="hammer,spoon,knife")
        e.add_argument("--k-best", type=int)
        e.set_defaults(func=fn)

    o = sub.add_parser("optimize-hand", help="outer TPE over hand designs")
    common(o, "hand designs to evaluate")
    o.add_argument("--batch", type=int)
    o.add_argument("--jobs", type=int, default=1)
    o.add_argument("--tools")
    o.add_argument("--k-best", type=int)
    o.add_argument("--grasp-budget", type=int)
    o.set_defaults(func=cmd_optimize_hand)

    for name, fn, helptext in (
        ("analyze", cmd_analyze, "fit the surrogate and write SHAP tables"),
        ("report", cmd_report, "render figures and tables for a run"),
    ):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("run_dir")
        a.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ResumeConflict, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
