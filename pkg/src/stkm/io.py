"""File formats, run configuration, and the end-to-end pipeline.

Trajectory files are UTF-8 CSV with header ``id,t,x1,...,xm`` and one
observation per line. Ground-truth files have header ``id,label`` with ``-1``
marking unassigned points. Run configuration is a JSON object::

    {
      "solver": {"k": 3, "lambda": 0.8, "d_k": 1.1, "max_iter": 200,
                 "tol": 1e-6, "seed": 0, "distance": "squared_euclidean",
                 "c_const": 1.0},
      "phase2": {"k_target": 3, "theta_grid_step": 0.01,
                 "votes_first_round": 5, "votes_max": 20, "seed": 0},
      "interval": null
    }

Unknown keys are rejected. ``phase2.k_target`` defaults to ``solver.k``.
"""
from __future__ import annotations

import csv
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics, phase2, solver
from .core import (
    UNASSIGNED,
    AssignmentHistory,
    ConfigError,
    Partition,
    Phase2Config,
    SolverConfig,
    STKMError,
    TrajectoryTensor,
    ValidationError,
    validate,
)

DEFAULT_PRECISION = 12
DEFAULT_BUCKETS = (0, 800, 3000, 6000, 10000, 20000, 35000, math.inf)


class ParseError(ValidationError):
    def __init__(self, path, line, message):
        self.path, self.line = str(path), line
        super().__init__(f"{path}:{line}: {message}")


class UnfillableGap(ValidationError):
    pass


class InconsistentDimension(ValidationError):
    pass


class PipelineError(STKMError):
    """A stage of :func:`run_pipeline` failed; ``cause`` is the original error."""

    def __init__(self, stage, cause):
        self.stage, self.cause = stage, cause
        super().__init__(f"{stage} failed: {cause}")


def _fmt(x, precision):
    return repr(float(x)) if precision is None else f"{float(x):.{precision}g}"


# --------------------------------------------------------------------------
# trajectories

def _read_rows(path):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "id" or header[1] != "t":
            raise ParseError(path, 1, "header must be id,t,x1[,x2,...]")
        m = len(header) - 2
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != m + 2:
                raise InconsistentDimension(f"{path}:{lineno}: expected {m + 2} fields, got {len(row)}")
            pid = row[0].strip()
            try:
                t = float(row[1])
            except ValueError:
                raise ParseError(path, lineno, f"bad time value {row[1]!r}") from None
            coords = []
            for cell in row[2:]:
                cell = cell.strip()
                if cell == "" or cell.lower() in ("nan", "na"):
                    coords = None
                    break
                try:
                    coords.append(float(cell))
                except ValueError:
                    raise ParseError(path, lineno, f"bad coordinate {cell!r}") from None
            if coords is not None and not all(map(math.isfinite, coords)):
                raise ParseError(path, lineno, "non-finite coordinate")
            if not math.isfinite(t):
                raise ParseError(path, lineno, "non-finite time")
            rows.append((pid, t, coords))
    if not rows:
        raise ParseError(path, 2, "no observations")
    return rows, m


def load_trajectories(path, interval: Optional[float] = None) -> TrajectoryTensor:
    """Read a trajectory file into a dense tensor.

    Without ``interval`` every (id, t) cell must be present exactly once.
    With ``interval`` time is cut into bins of that width starting at the
    earliest observation: several observations of an id in one bin are
    averaged, and an empty bin is linearly interpolated between the id's
    nearest observed bins (held at the nearest observed value before the
    first and after the last observation).
    """
    rows, m = _read_rows(path)
    if interval is None:
        records = [(pid, coords, t) for pid, t, coords in rows if coords is not None]
        ids = list(dict.fromkeys(pid for pid, _, _ in rows))
        if len(ids) != len(dict.fromkeys(pid for pid, _, _ in records)):
            raise UnfillableGap("some ids have no observations")
        return validate(records)
    if not interval > 0:
        raise ConfigError(f"interval must be positive, got {interval!r}")
    t0 = min(t for _, t, _ in rows)
    ids = list(dict.fromkeys(pid for pid, _, _ in rows))
    index = {pid: i for i, pid in enumerate(ids)}
    bins = [int(math.floor((t - t0) / interval + 1e-9)) for _, t, _ in rows]
    n_bins = max(bins) + 1
    sums = np.zeros((n_bins, m, len(ids)))
    counts = np.zeros((n_bins, len(ids)))
    for (pid, _, coords), b in zip(rows, bins):
        if coords is None:
            continue
        sums[b, :, index[pid]] += coords
        counts[b, index[pid]] += 1
    data = np.empty_like(sums)
    grid = np.arange(n_bins, dtype=float)
    for i, pid in enumerate(ids):
        seen = counts[:, i] > 0
        if not seen.any():
            raise UnfillableGap(f"id {pid!r} has no observations")
        mean = sums[seen, :, i] / counts[seen, i][:, None]
        for d in range(m):
            data[:, d, i] = np.interp(grid, grid[seen], mean[:, d])
    timestamps = tuple(t0 + b * interval for b in range(n_bins))
    return TrajectoryTensor(data, tuple(ids), timestamps)


def save_trajectories(X: TrajectoryTensor, path, precision=DEFAULT_PRECISION) -> None:
    """Write ``X`` in the trajectory format; ``precision`` significant digits
    (``None`` writes the shortest exact round-trip representation)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t"] + [f"x{d + 1}" for d in range(X.m)])
        for s, t in enumerate(X.timestamps):
            for i, pid in enumerate(X.point_ids):
                w.writerow([pid, _fmt(t, precision)] + [_fmt(v, precision) for v in X.data[s, :, i]])


def load_ground_truth(path, point_ids) -> Partition:
    path = Path(path)
    labels = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["id", "label"]:
            raise ParseError(path, 1, "header must be id,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, "expected 2 fields")
            try:
                labels[row[0].strip()] = int(row[1])
            except ValueError:
                raise ParseError(path, lineno, f"bad label {row[1]!r}") from None
    missing = [pid for pid in point_ids if str(pid) not in labels]
    if missing:
        raise ValidationError(f"ground truth lacks ids: {missing[:10]}")
    return Partition([labels[str(pid)] for pid in point_ids])


def save_partition(partition: Partition, point_ids, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for pid, lab in zip(point_ids, partition.labels.tolist()):
            w.writerow([pid, lab])


def save_assignments(history: AssignmentHistory, point_ids, timestamps, path, precision=DEFAULT_PRECISION) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t", "label"])
        for s, t in enumerate(timestamps):
            for i, pid in enumerate(point_ids):
                w.writerow([pid, _fmt(t, precision), int(history.labels[s, i])])


def load_assignments(path):
    """Read an ``id,t,label`` file; returns ``(history, point_ids, timestamps)``."""
    path = Path(path)
    cells = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["id", "t", "label"]:
            raise ParseError(path, 1, "header must be id,t,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                cells[(row[0].strip(), float(row[1]))] = int(row[2])
            except (ValueError, IndexError):
                raise ParseError(path, lineno, "expected id,t,label") from None
    ids = list(dict.fromkeys(pid for pid, _ in cells))
    times = sorted({t for _, t in cells})
    try:
        labels = np.array([[cells[(pid, t)] for pid in ids] for t in times], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"assignment file is missing cell {exc.args[0]}") from None
    return AssignmentHistory(labels), ids, times


# --------------------------------------------------------------------------
# configuration

SOLVER_KEYS = {"k": "k", "lambda": "lam", "d_k": "d_k", "max_iter": "max_iter", "tol": "tol",
               "seed": "seed", "distance": "distance", "c_const": "c_const"}
PHASE2_KEYS = {"k_target", "theta_grid_step", "votes_first_round", "votes_max", "seed"}
TOP_KEYS = {"solver", "phase2", "interval"}


def parse_config(doc: dict):
    """Build ``(SolverConfig, Phase2Config, interval)`` from a config mapping."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    sdoc = doc.get("solver") or {}
    bad = set(sdoc) - set(SOLVER_KEYS)
    if bad:
        raise ConfigError(f"unknown solver keys: {sorted(bad)}")
    if "k" not in sdoc:
        raise ConfigError("solver.k is required")
    try:
        scfg = SolverConfig(**{SOLVER_KEYS[k]: v for k, v in sdoc.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    pdoc = dict(doc.get("phase2") or {})
    bad = set(pdoc) - PHASE2_KEYS
    if bad:
        raise ConfigError(f"unknown phase2 keys: {sorted(bad)}")
    pdoc.setdefault("k_target", scfg.k)
    pcfg = Phase2Config(**pdoc)
    interval = doc.get("interval")
    if interval is not None and not (isinstance(interval, (int, float)) and interval > 0):
        raise ConfigError(f"interval must be a positive number, got {interval!r}")
    return scfg, pcfg, interval


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def config_dict(scfg: SolverConfig, pcfg: Phase2Config, interval=None) -> dict:
    s = asdict(scfg)
    s["lambda"] = s.pop("lam")
    return {"solver": s, "phase2": asdict(pcfg), "interval": interval}


# --------------------------------------------------------------------------
# pipeline

@dataclass
class RunRecord:
    config: dict
    dataset: dict
    fit: dict
    centers: list
    assignments: list
    phase2: dict
    metrics: Optional[dict] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings=True) -> dict:
        d = asdict(self)
        if not include_timings:
            d.pop("timings")
        if d["metrics"] is None:
            d.pop("metrics")
        return d

    def to_json(self, include_timings=True) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text) -> "RunRecord":
        return cls(**json.loads(text))


def _write_table(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _export_tables(out, X, result, history, partition, lt_paths):
    m = X.m
    coords = [f"x{d + 1}" for d in range(m)]
    lt = partition.labels.tolist()
    _write_table(
        out / "positions.csv",
        ["t", "id"] + coords + ["label", "long_term"],
        ([repr(t), pid] + [repr(float(v)) for v in X.data[s, :, i]] + [int(history.labels[s, i]), lt[i]]
         for s, t in enumerate(X.timestamps) for i, pid in enumerate(X.point_ids)),
    )
    C = result.centers.data
    _write_table(
        out / "centers.csv",
        ["t", "cluster"] + coords,
        ([repr(t), j] + [repr(float(v)) for v in C[s, :, j]]
         for s, t in enumerate(X.timestamps) for j in range(C.shape[2])),
    )
    P = lt_paths.data
    _write_table(
        out / "long_term_centers.csv",
        ["t", "cluster"] + coords,
        ([repr(t), j] + [repr(float(v)) for v in P[s, :, j]]
         for s, t in enumerate(X.timestamps) for j in range(P.shape[2])),
    )
    _write_table(out / "objective.csv", ["iteration", "objective"],
                 ([n + 1, repr(v)] for n, v in enumerate(result.objective_trace)))
    _write_table(
        out / "ribbons.csv",
        ["id", "long_term", "t", "label"],
        ([pid, lt[i], repr(t), int(history.labels[s, i])]
         for i, pid in enumerate(X.point_ids) for s, t in enumerate(X.timestamps)),
    )


class _Stage:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.start
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def run_pipeline(dataset, solver_config: SolverConfig, phase2_config: Phase2Config, output_dir,
                 ground_truth=None, interval=None) -> RunRecord:
    """load -> fit -> hard assignments -> long-term clusters -> metrics.

    Writes ``run_record.json`` plus flat CSV tables for plotting into
    ``output_dir``. ``ground_truth`` is an optional ``id,label`` file; without
    it the record has no metrics section.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    with _Stage("load", timings):
        X = load_trajectories(dataset, interval)
        truth = load_ground_truth(ground_truth, X.point_ids) if ground_truth is not None else None
    with _Stage("fit", timings):
        result = solver.fit(X, solver_config)
    with _Stage("assign", timings):
        history = phase2.extract_assignments(result.weights)
    with _Stage("phase2", timings):
        p2 = phase2.run_phase2(history, phase2_config)
        lt_paths = phase2.long_term_center_paths(X, p2.partition)
    scores = None
    if truth is not None:
        with _Stage("metrics", timings):
            scores = {
                "total_ami": metrics.total_ami(history, truth),
                "long_term_ami": metrics.long_term_ami(p2.partition, truth),
            }
    with _Stage("export", timings):
        record = RunRecord(
            config=config_dict(solver_config, phase2_config, interval),
            dataset={
                "path": Path(dataset).name,
                "T": X.T, "m": X.m, "N": X.N,
                "point_ids": list(X.point_ids),
                "timestamps": list(X.timestamps),
            },
            fit={
                "iterations": result.iterations,
                "final_objective": result.objective_trace[-1],
                "converged": result.converged,
                "objective_trace": list(result.objective_trace),
            },
            centers=result.centers.data.tolist(),
            assignments=history.labels.tolist(),
            phase2={
                "partition": p2.partition.labels.tolist(),
                "theta": p2.theta,
                "runs": p2.runs,
                "votes": p2.votes,
                "long_term_centers": lt_paths.data.tolist(),
            },
            metrics=scores,
            timings=timings,
        )
        _export_tables(out, X, result, history, p2.partition, lt_paths)
    (out / "run_record.json").write_text(record.to_json(), encoding="utf-8")
    return record


# --------------------------------------------------------------------------
# sweeps

def truth_path_for(dataset) -> Optional[Path]:
    """``foo.csv`` -> ``foo.truth.csv`` when that file exists."""
    p = Path(dataset)
    cand = p.with_name(p.stem + ".truth" + p.suffix)
    return cand if cand.exists() else None


def bucket_label(size, edges=DEFAULT_BUCKETS) -> str:
    for lo, hi in zip(edges, edges[1:]):
        if lo <= size < hi:
            return f"{lo}-{hi}" if math.isfinite(hi) else f"{lo}+"
    return f"{edges[-1]}+"


def _sweep_job(args):
    dataset, lam, out_dir, sdict, pdict, interval = args
    scfg = SolverConfig(**{**sdict, "lam": lam})
    pcfg = Phase2Config(**pdict)
    row = {"dataset": str(dataset), "lambda": lam, "size": None, "total_ami": None,
           "long_term_ami": None, "error": ""}
    try:
        rec = run_pipeline(dataset, scfg, pcfg, out_dir, truth_path_for(dataset), interval)
        row["size"] = rec.dataset["T"] * rec.dataset["N"]
        if rec.metrics:
            row.update(rec.metrics)
    except Exception as exc:  # recorded per run; the sweep carries on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep(datasets, lambdas, output_dir, solver_config: SolverConfig, phase2_config: Phase2Config,
          interval=None, buckets=DEFAULT_BUCKETS, jobs=1):
    """Run the pipeline for every (dataset, lambda) pair and aggregate.

    Writes ``runs.csv`` (one row per run) and ``aggregate.csv`` (median and
    mean total / long-term AMI per dataset-size bucket, size = T * N).
    Returns the aggregate rows.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sdict = asdict(solver_config)
    pdict = asdict(phase2_config)
    jobs_args = []
    for n, ds in enumerate(datasets):
        for lam in lambdas:
            run_dir = out / f"{n:03d}_{Path(ds).stem}_lam{lam:g}"
            jobs_args.append((ds, float(lam), run_dir, sdict, pdict, interval))
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs_args))
    else:
        rows = [_sweep_job(a) for a in jobs_args]

    run_cols = ["dataset", "lambda", "size", "total_ami", "long_term_ami", "error"]
    _write_table(out / "runs.csv", run_cols, ([r[c] if r[c] is not None else "" for c in run_cols] for r in rows))

    groups = {}
    for r in rows:
        if r["size"] is None:
            continue
        groups.setdefault(bucket_label(r["size"], buckets), []).append(r)
    order = [bucket_label(lo, buckets) for lo in buckets[:-1]]
    agg = []
    for label in order:
        if label not in groups:
            continue
        members = groups[label]
        row = {"bucket": label, "runs": len(members)}
        for key in ("total_ami", "long_term_ami"):
            vals = [r[key] for r in members if r[key] is not None]
            row[f"{key}_median"] = statistics.median(vals) if vals else None
            row[f"{key}_mean"] = statistics.fmean(vals) if vals else None
        agg.append(row)
    agg_cols = ["bucket", "runs", "total_ami_median", "total_ami_mean", "long_term_ami_median", "long_term_ami_mean"]
    _write_table(out / "aggregate.csv", agg_cols,
                 ([r[c] if r[c] is not None else "" for c in agg_cols] for r in agg))
    return agg
