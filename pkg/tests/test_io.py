import csv
import json

import numpy as np
import pytest

from stkm import datagen, io
from stkm.core import ConfigError, DuplicateObservation, IncompleteGrid, Phase2Config, SolverConfig, TrajectoryTensor


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def scenario(tmp_path, name="d", **kw):
    X, truth, _ = datagen.generate(datagen.ScenarioConfig(**kw))
    data = tmp_path / f"{name}.csv"
    io.save_trajectories(X, data)
    io.save_partition(truth, X.point_ids, tmp_path / f"{name}.truth.csv")
    return data, X, truth


# ---------------------------------------------------------------- loading

def test_load_complete_file(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1,x2\na,0,1,2\nb,0,3,4\na,1,5,6\nb,1,7,8\n")
    X = io.load_trajectories(p)
    assert X.point_ids == ("a", "b") and X.timestamps == (0.0, 1.0)
    np.testing.assert_array_equal(X.data[1], [[5, 7], [6, 8]])


def test_interval_interpolates_midpoint(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1\na,0,0\na,2,2\nb,0,5\nb,1,5\nb,2,5\n")
    X = io.load_trajectories(p, interval=1.0)
    np.testing.assert_allclose(X.data[:, 0, 0], [0.0, 1.0, 2.0])


def test_interval_averages_within_bin(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1\na,0.1,1\na,0.6,3\na,1.2,4\n")
    X = io.load_trajectories(p, interval=1.0)
    np.testing.assert_allclose(X.data[:, 0, 0], [2.0, 4.0])
    assert X.timestamps == (0.1, 1.1)


def test_interval_endpoint_extension_and_missing_cells(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1,x2\na,0,0,0\na,1,,\na,3,3,6\nb,1,1,1\nb,2,2,2\n")
    X = io.load_trajectories(p, interval=1.0)
    np.testing.assert_allclose(X.data[:, :, 0], [[0, 0], [1, 2], [2, 4], [3, 6]])
    np.testing.assert_allclose(X.data[:, 0, 1], [1, 1, 2, 2])


def test_unfillable_gap(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1\na,0,1\na,1,2\nb,0,\n")
    with pytest.raises(io.UnfillableGap):
        io.load_trajectories(p, interval=1.0)
    with pytest.raises(io.UnfillableGap):
        io.load_trajectories(p)


def test_without_interval_gaps_are_errors(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1\na,0,1\na,1,2\nb,0,3\n")
    with pytest.raises(IncompleteGrid):
        io.load_trajectories(p)
    p = write(tmp_path / "b.csv", "id,t,x1\na,0,1\na,0,2\na,1,2\n")
    with pytest.raises(DuplicateObservation):
        io.load_trajectories(p)


def test_parse_errors_carry_line(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1\na,0,1\na,zero,2\n")
    with pytest.raises(io.ParseError) as exc:
        io.load_trajectories(p)
    assert exc.value.line == 3
    p = write(tmp_path / "b.csv", "id,time,x1\n")
    with pytest.raises(io.ParseError):
        io.load_trajectories(p)
    p = write(tmp_path / "c.csv", "id,t,x1\na,0,inf\n")
    with pytest.raises(io.ParseError):
        io.load_trajectories(p)


def test_inconsistent_dimension(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1,x2\na,0,1,2\na,1,3\n")
    with pytest.raises(io.InconsistentDimension):
        io.load_trajectories(p)


def test_bad_interval(tmp_path):
    p = write(tmp_path / "a.csv", "id,t,x1\na,0,1\na,1,2\n")
    with pytest.raises(ConfigError):
        io.load_trajectories(p, interval=0.0)


# ---------------------------------------------------------------- saving

def test_round_trip_at_12_digits(tmp_path):
    X, _, _ = datagen.generate(datagen.ScenarioConfig(m=3, seed=1))
    p = tmp_path / "x.csv"
    io.save_trajectories(X, p)
    Y = io.load_trajectories(p)
    expected = np.vectorize(lambda v: float(f"{v:.12g}"))(X.data)
    np.testing.assert_array_equal(Y.data, expected)
    assert Y.point_ids == tuple(str(i) for i in X.point_ids)
    # data already at 12 significant digits survives bit-exactly
    q = tmp_path / "y.csv"
    io.save_trajectories(Y, q)
    np.testing.assert_array_equal(io.load_trajectories(q).data, Y.data)
    assert p.read_bytes() == q.read_bytes()


def test_exact_precision_round_trip(tmp_path):
    X = TrajectoryTensor(np.random.default_rng(2).normal(size=(3, 2, 4)))
    p = tmp_path / "x.csv"
    io.save_trajectories(X, p, precision=None)
    np.testing.assert_array_equal(io.load_trajectories(p).data, X.data)


def test_ground_truth_io(tmp_path):
    p = write(tmp_path / "g.csv", "id,label\na,1\nb,-1\nc,1\n")
    part = io.load_ground_truth(p, ["c", "a", "b"])
    np.testing.assert_array_equal(part.labels, [1, 1, -1])
    with pytest.raises(io.ValidationError):
        io.load_ground_truth(p, ["a", "z"])


def test_assignments_round_trip(tmp_path):
    hist = np.random.default_rng(3).integers(0, 3, size=(4, 5))
    from stkm.core import AssignmentHistory
    p = tmp_path / "h.csv"
    io.save_assignments(AssignmentHistory(hist), list("abcde"), [0.0, 1.5, 2.0, 9.0], p)
    got, ids, times = io.load_assignments(p)
    np.testing.assert_array_equal(got.labels, hist)
    assert ids == list("abcde") and times == [0.0, 1.5, 2.0, 9.0]


# ---------------------------------------------------------------- config

def test_config_parse(tmp_path):
    p = write(tmp_path / "c.json", json.dumps({"solver": {"k": 4, "lambda": 0.6, "distance": "robust_log", "c_const": 2.0},
                                               "phase2": {"votes_max": 10}, "interval": 0.5}))
    s, q, interval = io.load_config(p)
    assert (s.k, s.lam, s.robust, s.c_const) == (4, 0.6, True, 2.0)
    assert (q.k_target, q.votes_max) == (4, 10)
    assert interval == 0.5


@pytest.mark.parametrize("doc", [
    {"solver": {"k": 3, "lamda": 0.5}},
    {"solver": {"k": 3}, "extra": 1},
    {"solver": {"k": 3}, "phase2": {"theta": 0.2}},
    {"solver": {"lambda": 0.5}},
    {"solver": {"k": 3, "lambda": 1.5}},
    {"solver": {"k": 3}, "interval": -1},
    [1, 2],
])
def test_config_errors(tmp_path, doc):
    p = write(tmp_path / "c.json", json.dumps(doc))
    with pytest.raises(ConfigError):
        io.load_config(p)


def test_config_invalid_json(tmp_path):
    with pytest.raises(ConfigError):
        io.load_config(write(tmp_path / "c.json", "{nope"))


# ---------------------------------------------------------------- pipeline

def test_pipeline_end_to_end(tmp_path):
    data, X, _ = scenario(tmp_path, seed=0)
    rec = io.run_pipeline(data, SolverConfig(k=3, lam=0.8), Phase2Config(k_target=3), tmp_path / "out",
                          ground_truth=tmp_path / "d.truth.csv")
    assert rec.metrics["long_term_ami"] == 1.0
    assert np.array(rec.centers).shape == (X.T, X.m, 3)
    assert np.array(rec.assignments).shape == (X.T, X.N)
    assert len(rec.phase2["partition"]) == X.N
    assert set(rec.timings) >= {"load", "fit", "assign", "phase2", "metrics", "export"}
    for name in ("run_record.json", "positions.csv", "centers.csv", "objective.csv", "ribbons.csv", "long_term_centers.csv"):
        assert (tmp_path / "out" / name).exists()
    with (tmp_path / "out" / "positions.csv").open() as fh:
        assert sum(1 for _ in fh) == 1 + X.T * X.N
    loaded = io.RunRecord.from_json((tmp_path / "out" / "run_record.json").read_text())
    assert loaded.to_json(False) == rec.to_json(False)


def test_pipeline_without_truth(tmp_path):
    data, _, _ = scenario(tmp_path, seed=1)
    rec = io.run_pipeline(data, SolverConfig(k=3), Phase2Config(k_target=3), tmp_path / "o")
    assert rec.metrics is None
    assert "metrics" not in json.loads(rec.to_json())
    assert rec.fit["iterations"] >= 1 and rec.phase2["partition"]


def test_pipeline_deterministic_modulo_timings(tmp_path):
    data, _, _ = scenario(tmp_path, seed=2)
    a = io.run_pipeline(data, SolverConfig(k=3), Phase2Config(k_target=3), tmp_path / "a")
    b = io.run_pipeline(data, SolverConfig(k=3), Phase2Config(k_target=3), tmp_path / "a")
    assert a.to_json(include_timings=False) == b.to_json(include_timings=False)


def test_pipeline_stage_attribution(tmp_path):
    data, _, _ = scenario(tmp_path, points_per_cluster=2, n_clusters=2, seed=3)
    with pytest.raises(io.PipelineError) as exc:
        io.run_pipeline(data, SolverConfig(k=10), Phase2Config(k_target=3), tmp_path / "o")
    assert exc.value.stage == "fit"
    with pytest.raises(io.PipelineError) as exc:
        io.run_pipeline(tmp_path / "missing.csv", SolverConfig(k=2), Phase2Config(k_target=2), tmp_path / "o")
    assert exc.value.stage == "load"


def test_invalid_lambda_before_computation():
    with pytest.raises(ConfigError):
        SolverConfig(k=3, lam=1.5)


# ---------------------------------------------------------------- sweep

def test_sweep_cardinality(tmp_path):
    data, _, _ = scenario(tmp_path, seed=4)
    agg = io.sweep([data], [0.6, 0.8, 1.0], tmp_path / "s", SolverConfig(k=3), Phase2Config(k_target=3))
    assert len(agg) == 1 and agg[0]["runs"] == 3
    records = list((tmp_path / "s").glob("*/run_record.json"))
    assert len(records) == 3
    with (tmp_path / "s" / "runs.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_sweep_empty(tmp_path):
    assert io.sweep([], [0.6], tmp_path / "s", SolverConfig(k=2), Phase2Config(k_target=2)) == []
    assert (tmp_path / "s" / "aggregate.csv").read_text().count("\n") == 1


def test_sweep_two_buckets(tmp_path):
    sets = []
    for i in range(6):
        sets.append(scenario(tmp_path, f"small{i}", points_per_cluster=10, T=20, seed=i)[0])   # 600
        sets.append(scenario(tmp_path, f"large{i}", points_per_cluster=20, T=20, seed=i)[0])   # 1200
    agg = io.sweep(sets, [0.8], tmp_path / "s", SolverConfig(k=3), Phase2Config(k_target=3), jobs=2)
    assert [r["bucket"] for r in agg] == ["0-800", "800-3000"]
    assert [r["runs"] for r in agg] == [6, 6]


def test_sweep_records_failures(tmp_path):
    good, _, _ = scenario(tmp_path, seed=5)
    bad = write(tmp_path / "bad.csv", "id,t,x1\na,0,1\n")
    io.sweep([bad, good], [0.8], tmp_path / "s", SolverConfig(k=3), Phase2Config(k_target=3))
    with (tmp_path / "s" / "runs.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["error"] and not rows[1]["error"]
    assert float(rows[1]["long_term_ami"]) == 1.0


def test_bucket_label():
    assert io.bucket_label(0) == "0-800"
    assert io.bucket_label(800) == "800-3000"
    assert io.bucket_label(10 ** 6) == "35000+"
