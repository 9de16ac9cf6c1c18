"""Command-line entry point: ``stkm <verb> ...``.

Exit codes: 0 success, 1 validation or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import datagen, io, metrics, phase2, solver
from .core import Partition, Phase2Config, SolverConfig, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _add_solver_flags(p, need_k=False):
    g = p.add_argument_group("solver")
    g.add_argument("--config", type=Path, help="JSON run configuration")
    g.add_argument("--k", type=int, required=False, help="cluster count" + (" (required without --config)" if need_k else ""))
    g.add_argument("--lambda", dest="lam", type=float, help="temporal penalty weight in [0, 1] (default 0.8)")
    g.add_argument("--d-k", dest="d_k", type=float, help="proximal step denominator > 1 (default 1.1)")
    g.add_argument("--max-iter", dest="max_iter", type=int, help="default 200")
    g.add_argument("--tol", type=float, help="relative objective-change tolerance (default 1e-6)")
    g.add_argument("--seed", type=int, help="default 0")
    g.add_argument("--distance", choices=["squared_euclidean", "robust_log"])
    g.add_argument("--c-const", dest="c_const", type=float, help="robust distance constant >= 1 (default 1.0)")
    g.add_argument("--interval", type=float, help="time bin width; enables binning and gap filling")


def _add_phase2_flags(p):
    g = p.add_argument_group("phase 2")
    g.add_argument("--k-target", dest="k_target", type=int, help="default: the solver k")
    g.add_argument("--theta-grid-step", dest="theta_grid_step", type=float, help="default 0.01")
    g.add_argument("--votes-first-round", dest="votes_first_round", type=int, help="default 5")
    g.add_argument("--votes-max", dest="votes_max", type=int, help="default 20")
    g.add_argument("--phase2-seed", dest="phase2_seed", type=int, help="default 0")


SOLVER_FLAGS = ("k", "lam", "d_k", "max_iter", "tol", "seed", "distance", "c_const")
PHASE2_FLAGS = ("k_target", "theta_grid_step", "votes_first_round", "votes_max")


def _configs(args):
    """Config file values overridden by any flags given on the command line."""
    if args.config is not None:
        scfg, pcfg, interval = io.load_config(args.config)
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        k_target_pinned = "k_target" in (doc.get("phase2") or {})
    else:
        if args.k is None:
            raise io.ConfigError("--k is required without --config")
        scfg, pcfg, interval = SolverConfig(k=args.k), None, None
        k_target_pinned = False
    over = {f: getattr(args, f) for f in SOLVER_FLAGS if getattr(args, f, None) is not None}
    scfg = replace(scfg, **over)
    p_over = {f: getattr(args, f) for f in PHASE2_FLAGS if getattr(args, f, None) is not None}
    if getattr(args, "phase2_seed", None) is not None:
        p_over["seed"] = args.phase2_seed
    if pcfg is None or (not k_target_pinned and "k_target" not in p_over):
        base = pcfg or Phase2Config(k_target=scfg.k)
        pcfg = replace(base, k_target=scfg.k)
    pcfg = replace(pcfg, **p_over)
    if args.interval is not None:
        interval = args.interval
    return scfg, pcfg, interval


def cmd_generate(args):
    box = None
    if args.outlier_box is not None:
        box = (_floats(args.outlier_box[0]), _floats(args.outlier_box[1]))
    ppc = _floats(args.points_per_cluster)
    ppc = int(ppc[0]) if len(ppc) == 1 else [int(v) for v in ppc]
    cfg = datagen.ScenarioConfig(
        n_clusters=args.n_clusters, points_per_cluster=ppc, T=args.T, m=args.m,
        center_motion=args.center_motion, step_sigma=args.step_sigma, meet_time=args.meet_time,
        part_time=args.part_time, spread_sigma=args.spread_sigma, outlier_fraction=args.outlier_fraction,
        outlier_box=box, separation=args.separation, speed=args.speed, seed=args.seed,
    )
    X, truth, centers = datagen.generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    base = out.with_suffix("") if out.suffix == ".csv" else out
    io.save_trajectories(X, base.with_name(base.name + ".csv"))
    io.save_partition(truth, X.point_ids, base.with_name(base.name + ".truth.csv"))
    with base.with_name(base.name + ".centers.csv").open("w", encoding="utf-8") as fh:
        fh.write("t,cluster," + ",".join(f"x{d + 1}" for d in range(X.m)) + "\n")
        for s, t in enumerate(X.timestamps):
            for j in range(centers.k):
                fh.write(f"{t!r},{j}," + ",".join(repr(float(v)) for v in centers.data[s, :, j]) + "\n")
    print(base.with_name(base.name + ".csv"))


def cmd_fit(args):
    scfg, _, interval = _configs(args)
    X = io.load_trajectories(args.data, interval)
    result = solver.fit(X, scfg)
    history = phase2.extract_assignments(result.weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_assignments(history, X.point_ids, X.timestamps, out / "assignments.csv", precision=None)
    rows = []
    for s, t in enumerate(X.timestamps):
        for j in range(result.centers.k):
            rows.append([repr(t), j] + [repr(float(v)) for v in result.centers.data[s, :, j]])
    io._write_table(out / "centers.csv", ["t", "cluster"] + [f"x{d + 1}" for d in range(X.m)], rows)
    io._write_table(out / "objective.csv", ["iteration", "objective"],
                    ([n + 1, repr(v)] for n, v in enumerate(result.objective_trace)))
    summary = {"iterations": result.iterations, "final_objective": result.objective_trace[-1],
               "converged": result.converged}
    (out / "fit.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))


def cmd_phase2(args):
    history, ids, _ = io.load_assignments(args.assignments)
    if args.k_target is None:
        raise io.ConfigError("--k-target is required")
    cfg = Phase2Config(k_target=args.k_target)
    over = {f: getattr(args, f) for f in PHASE2_FLAGS if getattr(args, f) is not None}
    if args.phase2_seed is not None:
        over["seed"] = args.phase2_seed
    cfg = replace(cfg, **over)
    res = phase2.run_phase2(history, cfg)
    io.save_partition(res.partition, ids, args.out)
    print(json.dumps({"theta": res.theta, "runs": res.runs, "votes": res.votes,
                      "clusters": res.partition.n_clusters}, sort_keys=True))


def cmd_evaluate(args):
    if args.assignments is None and args.partition is None:
        raise io.ConfigError("give --assignments and/or --partition")
    scores = {}
    if args.assignments is not None:
        history, ids, _ = io.load_assignments(args.assignments)
        truth = io.load_ground_truth(args.truth, ids)
        scores["total_ami"] = metrics.total_ami(history, truth)
    if args.partition is not None:
        labels = {}
        with Path(args.partition).open(encoding="utf-8") as fh:
            rows = [line.strip().split(",") for line in fh if line.strip()]
        if not rows or rows[0] != ["id", "label"]:
            raise io.ParseError(args.partition, 1, "header must be id,label")
        for pid, lab in rows[1:]:
            labels[pid] = int(lab)
        ids = list(labels)
        truth = io.load_ground_truth(args.truth, ids)
        scores["long_term_ami"] = metrics.long_term_ami(Partition([labels[i] for i in ids]), truth)
    print(json.dumps(scores, sort_keys=True))


def cmd_run(args):
    scfg, pcfg, interval = _configs(args)
    truth = args.truth if args.truth is not None else io.truth_path_for(args.data)
    rec = io.run_pipeline(args.data, scfg, pcfg, args.out, truth, interval)
    print(json.dumps(rec.metrics or {}, sort_keys=True))


def cmd_sweep(args):
    scfg, pcfg, interval = _configs(args)
    agg = io.sweep(args.data, args.lambdas, args.out, scfg, pcfg, interval, jobs=args.jobs)
    print(json.dumps(agg, sort_keys=True))


def build_parser():
    p = _Parser(prog="stkm", description="Spatiotemporal k-means for moving-object trajectories.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic scenario")
    g.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv, PREFIX.truth.csv, PREFIX.centers.csv")
    g.add_argument("--n-clusters", dest="n_clusters", type=int, default=3)
    g.add_argument("--points-per-cluster", dest="points_per_cluster", default="30", help="one size or a comma list")
    g.add_argument("--T", dest="T", type=int, default=20)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--center-motion", dest="center_motion", choices=datagen.MOTIONS, default="linear")
    g.add_argument("--step-sigma", dest="step_sigma", type=float, default=1.0)
    g.add_argument("--meet-time", dest="meet_time", type=int)
    g.add_argument("--part-time", dest="part_time", type=int)
    g.add_argument("--spread-sigma", dest="spread_sigma", type=float, default=1.0)
    g.add_argument("--outlier-fraction", dest="outlier_fraction", type=float, default=0.0)
    g.add_argument("--outlier-box", dest="outlier_box", nargs=2, metavar=("LO", "HI"),
                   help="comma-separated corners, e.g. 80,80 120,120")
    g.add_argument("--separation", type=float)
    g.add_argument("--speed", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="phase 1 only")
    f.add_argument("data", type=Path)
    f.add_argument("--out", required=True, type=Path)
    _add_solver_flags(f, need_k=True)
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("phase2", help="long-term clusters from an id,t,label file")
    q.add_argument("assignments", type=Path)
    q.add_argument("--out", required=True, type=Path)
    _add_phase2_flags(q)
    q.set_defaults(func=cmd_phase2)

    e = sub.add_parser("evaluate", help="AMI scores against an id,label ground truth")
    e.add_argument("--truth", required=True, type=Path)
    e.add_argument("--assignments", type=Path, help="id,t,label history (total AMI)")
    e.add_argument("--partition", type=Path, help="id,label partition (long-term AMI)")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("run", help="full pipeline with record and plot tables")
    r.add_argument("data", type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--truth", type=Path, help="default: DATA stem + .truth.csv when present")
    _add_solver_flags(r, need_k=True)
    _add_phase2_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="pipeline over datasets x lambda values")
    s.add_argument("data", type=Path, nargs="*")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--lambdas", type=float, nargs="+", default=[0.6, 0.8, 1.0])
    s.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(s, need_k=True)
    _add_phase2_flags(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except io.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc.cause, (ValidationError, FileNotFoundError)) else EXIT_RUNTIME
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
