"""Synthetic moving-cluster scenarios with exact ground truth.

Cluster membership is static while the centers move. Members are their
center plus isotropic Gaussian noise drawn independently at every step.
Outliers keep their ids across time but are redrawn uniformly inside
``outlier_box`` at each step; they carry the UNASSIGNED label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import UNASSIGNED, CenterTensor, ConfigError, Partition, TrajectoryTensor

MOTIONS = ("linear", "random_walk", "merge_split")
MAX_ATTEMPTS = 1000


class InvalidConfig(ConfigError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Generator settings.

    ``separation`` is the minimum distance kept between every pair of center
    tracks at every step (the merging pair is exempt); it defaults to
    ``10 * spread_sigma``. ``speed`` is the per-step displacement of linear
    tracks; by default a track travels one separation over the whole run.
    """

    n_clusters: int = 3
    points_per_cluster: Union[int, Sequence[int]] = 30
    T: int = 20
    m: int = 2
    center_motion: str = "linear"
    step_sigma: float = 1.0
    meet_time: Optional[int] = None
    part_time: Optional[int] = None
    spread_sigma: float = 1.0
    outlier_fraction: float = 0.0
    outlier_box: Optional[tuple] = None
    separation: Optional[float] = None
    speed: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise InvalidConfig("n_clusters must be >= 1")
        sizes = self.sizes
        if len(sizes) != self.n_clusters or min(sizes) < 1:
            raise InvalidConfig("points_per_cluster must give a positive size per cluster")
        if self.T < 2:
            raise InvalidConfig("T must be >= 2")
        if self.m < 1:
            raise InvalidConfig("m must be >= 1")
        if self.center_motion not in MOTIONS:
            raise InvalidConfig(f"center_motion must be one of {MOTIONS}")
        if not self.spread_sigma > 0:
            raise InvalidConfig("spread_sigma must be > 0")
        if not (0.0 <= self.outlier_fraction < 1.0):
            raise InvalidConfig("outlier_fraction must lie in [0, 1)")
        if self.center_motion == "merge_split":
            if self.n_clusters < 2:
                raise InvalidConfig("merge_split needs at least two clusters")
            if self.meet_time is None or self.part_time is None:
                raise InvalidConfig("merge_split needs meet_time and part_time")
            if not (0 < self.meet_time < self.part_time < self.T):
                raise InvalidConfig("need 0 < meet_time < part_time < T")
        if self.center_motion == "random_walk" and not self.step_sigma >= 0:
            raise InvalidConfig("step_sigma must be >= 0")
        if self.outlier_box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.outlier_box)
            if lo.shape != (self.m,) or hi.shape != (self.m,) or np.any(hi <= lo):
                raise InvalidConfig("outlier_box must be (lo, hi) with m coordinates each and hi > lo")

    @property
    def sizes(self) -> list:
        if isinstance(self.points_per_cluster, (int, np.integer)):
            return [int(self.points_per_cluster)] * self.n_clusters
        return [int(s) for s in self.points_per_cluster]

    @property
    def min_separation(self) -> float:
        return 10.0 * self.spread_sigma if self.separation is None else float(self.separation)

    @property
    def step(self) -> float:
        return self.min_separation / (self.T - 1) if self.speed is None else float(self.speed)

    @property
    def n_outliers(self) -> int:
        """Smallest count ``n`` with ``round(fraction * (inliers + n)) == n``."""
        f = self.outlier_fraction
        if f == 0.0:
            return 0
        n_in = sum(self.sizes)
        guess = int(round(f * n_in / (1.0 - f)))
        for n in range(max(0, guess - 2), guess + 3):
            if int(round(f * (n_in + n))) == n:
                return n
        return guess


def _random_directions(rng, n, m):
    v = rng.normal(size=(n, m))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0)


def _min_pair_distance(tracks, exempt=()):
    # tracks: (T, m, k)
    k = tracks.shape[2]
    best = np.inf
    for a in range(k):
        for b in range(a + 1, k):
            if (a, b) in exempt:
                continue
            d = np.linalg.norm(tracks[:, :, a] - tracks[:, :, b], axis=1).min()
            best = min(best, d)
    return best


def _center_tracks(cfg: ScenarioConfig, rng) -> np.ndarray:
    k, T, m = cfg.n_clusters, cfg.T, cfg.m
    sep = cfg.min_separation
    arena = 2.0 * sep * max(2.0, np.ceil(k ** (1.0 / m)))
    t = np.arange(T, dtype=float)
    for _ in range(MAX_ATTEMPTS):
        start = rng.uniform(0.0, arena, size=(k, m))
        if cfg.center_motion == "random_walk":
            steps = rng.normal(scale=cfg.step_sigma, size=(T, m, k))
            steps[0] = 0.0
            tracks = start.T[None, :, :] + np.cumsum(steps, axis=0)
        else:
            vel = _random_directions(rng, k, m) * cfg.step
            tracks = start.T[None, :, :] + t[:, None, None] * vel.T[None, :, :]
        exempt = ()
        if cfg.center_motion == "merge_split":
            meet, part = cfg.meet_time, cfg.part_time
            offset0 = start[1] - start[0]
            if np.linalg.norm(offset0) < sep:
                continue
            rate = offset0 / meet
            leave = _random_directions(rng, 1, m)[0] * np.linalg.norm(rate)
            for s in range(T):
                if s < meet:
                    off = offset0 - rate * s
                elif s < part:
                    off = np.zeros(m)
                else:
                    off = leave * (s - part + 1)
                tracks[s, :, 1] = tracks[s, :, 0] + off
            tracks[meet:part, :, 1] = tracks[meet:part, :, 0]
            exempt = ((0, 1),)
        if k == 1 or _min_pair_distance(tracks, exempt) >= sep:
            return tracks
    raise InvalidConfig(f"could not place {k} tracks with separation {sep} after {MAX_ATTEMPTS} attempts")


def generate(config: ScenarioConfig):
    """Draw a scenario.

    Returns
    -------
    X : TrajectoryTensor
        Members of cluster 0 first, then cluster 1, ..., outliers last.
    truth : Partition
        Static cluster label per object, UNASSIGNED for outliers.
    centers : CenterTensor
        The true center track of each cluster, shape (T, m, n_clusters).
    """
    rng = np.random.default_rng(config.seed)
    tracks = _center_tracks(config, rng)
    T, m = config.T, config.m
    sizes = config.sizes
    labels = np.repeat(np.arange(config.n_clusters), sizes)
    n_in = labels.size
    noise = rng.normal(scale=config.spread_sigma, size=(T, m, n_in))
    inliers = tracks[:, :, labels] + noise
    n_out = config.n_outliers
    if n_out:
        if config.outlier_box is None:
            pad = config.min_separation
            lo = tracks.min(axis=(0, 2)) - pad
            hi = tracks.max(axis=(0, 2)) + pad
        else:
            lo, hi = (np.asarray(b, dtype=float) for b in config.outlier_box)
        u = rng.uniform(size=(T, m, n_out))
        outliers = lo[None, :, None] + u * (hi - lo)[None, :, None]
        data = np.concatenate([inliers, outliers], axis=2)
        labels = np.concatenate([labels, np.full(n_out, UNASSIGNED)])
    else:
        data = inliers
    X = TrajectoryTensor(data)
    return X, Partition(labels), CenterTensor(tracks)
