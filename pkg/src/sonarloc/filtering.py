"""Monte Carlo localization: Gaussian init, constant-velocity prediction, gated
observation updates, roulette-wheel resampling with bad-particle recovery.

All randomness flows through the Generator carried by the Belief, so a run is
bit-reproducible given (seed, log, config).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geomap import (
    STRUCTURE,
    CropImage,
    Pose2D,
    SemanticMap,
    SonarFootprint,
    crop_classes_batch,
    wrap_angle,
    wrap_angles,
)
from .matcher import DimensionMismatch, normalize_scores
from .sonar import AcousticImage, is_informative


@dataclass(frozen=True)
class ControlInput:
    """One prediction step: body-frame forward speed, compass heading, elapsed time."""

    v_x: float
    heading: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.v_x) and math.isfinite(self.heading)):
            raise ValueError("control fields must be finite")


@dataclass(frozen=True)
class FilterConfig:
    """Particle filter tuning knobs.

    sigma_init, sigma_resample and sigma_bad apply the same scalar to x, y
    (meters) and theta (radians). sigma_bad is the escalated jitter for
    children that failed a validity test; after max_redraws failures a child
    is assigned a uniform random pose over the map's non-Structure cells.
    """

    k: int = 120
    sigma_init: float = 0.5
    sigma_resample: float = 0.15
    sigma_bad: float = 15.0
    max_redraws: int = 10
    info_threshold: float = 0.02
    sigma_v: float = 0.1
    sigma_heading: float = 0.05
    footprint: SonarFootprint = field(default_factory=SonarFootprint)
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        for name in ("sigma_init", "sigma_resample", "sigma_bad", "sigma_v", "sigma_heading"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_redraws < 0:
            raise ValueError("max_redraws must be >= 0")
        if not 0.0 <= self.info_threshold <= 1.0:
            raise ValueError("info_threshold must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "sigma_init": self.sigma_init,
            "sigma_resample": self.sigma_resample,
            "sigma_bad": self.sigma_bad,
            "max_redraws": self.max_redraws,
            "info_threshold": self.info_threshold,
            "sigma_v": self.sigma_v,
            "sigma_heading": self.sigma_heading,
            "footprint": self.footprint.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        d = dict(d)
        known = {
            "k", "sigma_init", "sigma_resample", "sigma_bad", "max_redraws",
            "info_threshold", "sigma_v", "sigma_heading", "footprint", "seed",
        }
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "footprint" in d:
            d["footprint"] = SonarFootprint.from_dict(d["footprint"])
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "FilterConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"config is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ValueError("config JSON must be an object")
        return cls.from_dict(data)


@dataclass
class Belief:
    """Particle set: poses (K, 3) as [x, y, theta] rows, weights summing to 1.

    The Generator is shared (not copied) across the beliefs of a run; every
    filter operation draws from it in a fixed order.
    """

    poses: np.ndarray
    weights: np.ndarray
    timestamp: float
    rng: np.random.Generator

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(self.poses) != len(self.weights) or len(self.poses) < 1:
            raise ValueError("poses and weights must be non-empty and equally long")

    @property
    def k(self) -> int:
        return len(self.poses)


def init(mean: Pose2D, cfg: FilterConfig, timestamp: float = 0.0) -> Belief:
    """Gaussian-initialize K particles around the last known surface pose."""
    rng = np.random.default_rng(cfg.seed)
    xs = rng.normal(mean.x, cfg.sigma_init, cfg.k)
    ys = rng.normal(mean.y, cfg.sigma_init, cfg.k)
    ths = wrap_angles(rng.normal(mean.theta, cfg.sigma_init, cfg.k))
    poses = np.column_stack((xs, ys, ths))
    weights = np.full(cfg.k, 1.0 / cfg.k)
    return Belief(poses=poses, weights=weights, timestamp=timestamp, rng=rng)


def predict(belief: Belief, u: ControlInput, cfg: FilterConfig) -> Belief:
    """Constant-velocity transition: each particle moves along a noisy compass heading.

    The compass heading replaces the particle orientation rather than
    incrementing it; per-particle heading noise keeps the cloud diverse.
    Weights are unchanged.
    """
    k = belief.k
    v = belief.rng.normal(u.v_x, cfg.sigma_v, k)
    th = wrap_angles(belief.rng.normal(u.heading, cfg.sigma_heading, k))
    poses = np.empty_like(belief.poses)
    poses[:, 0] = belief.poses[:, 0] + v * u.dt * np.cos(th)
    poses[:, 1] = belief.poses[:, 1] + v * u.dt * np.sin(th)
    poses[:, 2] = th
    return Belief(poses=poses, weights=belief.weights.copy(),
                  timestamp=belief.timestamp + u.dt, rng=belief.rng)


def update(belief: Belief, acoustic: AcousticImage, world_map: SemanticMap,
           scorer, cfg: FilterConfig) -> tuple[Belief, bool]:
    """Gated observation update: score every particle's crop, replace weights.

    A frame failing the information gate leaves the belief untouched
    (applied=False); the run then relies on odometry alone. Otherwise each
    particle's pose-conditioned crop is scored against the frame, distances
    are inverted and normalized, and weights are replaced by the scores.
    """
    if acoustic.footprint.shape != cfg.footprint.shape:
        raise DimensionMismatch(
            f"frame {acoustic.footprint.shape} vs config footprint {cfg.footprint.shape}"
        )
    if not is_informative(acoustic, cfg.info_threshold):
        return belief, False
    crops = crop_classes_batch(world_map, belief.poses, cfg.footprint)
    distances = np.empty(belief.k)
    for i in range(belief.k):
        crop = CropImage(cells=crops[i], footprint=cfg.footprint,
                         pose=Pose2D(*belief.poses[i]))
        distances[i] = scorer(acoustic, crop)
    weights = normalize_scores(distances)
    return Belief(poses=belief.poses.copy(), weights=weights,
                  timestamp=belief.timestamp, rng=belief.rng), True


def _roulette(rng: np.random.Generator, cumulative: np.ndarray, n: int) -> np.ndarray:
    """Inverse-CDF parent selection by binary search over cumulative weights."""
    u = rng.random(n)
    return np.minimum(np.searchsorted(cumulative, u, side="right"), len(cumulative) - 1)


def _validity_masks(world_map: SemanticMap, poses: np.ndarray,
                    fp: SonarFootprint) -> np.ndarray:
    """Boolean bad-mask for the three validity tests, vectorized over poses."""
    out_of_map = ~world_map.contains_batch(poses[:, 0], poses[:, 1])
    on_structure = world_map.classes_at(poses[:, 0], poses[:, 1]) == STRUCTURE
    crops = crop_classes_batch(world_map, poses, fp)
    open_water = ~(crops == STRUCTURE).any(axis=(1, 2))
    return out_of_map | on_structure | open_water


def _uniform_fallback(rng: np.random.Generator, world_map: SemanticMap,
                      n: int) -> np.ndarray:
    """Uniform random poses over the map's non-Structure cells."""
    free = np.flatnonzero(world_map.cells != STRUCTURE)
    if free.size == 0:
        raise ValueError("map has no non-Structure cell to place fallback particles on")
    picks = rng.choice(free, size=n)
    iy, ix = np.unravel_index(picks, world_map.cells.shape)
    res = world_map.resolution
    poses = np.empty((n, 3))
    poses[:, 0] = world_map.origin_x + (ix + rng.random(n)) * res
    poses[:, 1] = world_map.origin_y + (iy + rng.random(n)) * res
    poses[:, 2] = rng.uniform(-np.pi, np.pi, n)
    return poses


def resample(belief: Belief, world_map: SemanticMap, cfg: FilterConfig) -> Belief:
    """Roulette-wheel resampling with validity-checked children.

    Children are parent poses plus sigma_resample Gaussian jitter. A child
    failing any validity test (on a Structure pixel, outside the map, or
    seeing open water only) is redrawn from a fresh roulette parent with the
    escalated sigma_bad jitter; after max_redraws failures it gets a uniform
    random pose over non-Structure cells. Weights reset to 1/K.
    """
    rng = belief.rng
    k = belief.k
    cumulative = np.cumsum(belief.weights)
    parents = _roulette(rng, cumulative, k)
    children = belief.poses[parents].copy()
    children += rng.normal(0.0, cfg.sigma_resample, (k, 3))
    children[:, 2] = wrap_angles(children[:, 2])

    bad = _validity_masks(world_map, children, cfg.footprint)
    for _ in range(cfg.max_redraws):
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        redraw_parents = _roulette(rng, cumulative, n_bad)
        redrawn = belief.poses[redraw_parents] + rng.normal(0.0, cfg.sigma_bad, (n_bad, 3))
        redrawn[:, 2] = wrap_angles(redrawn[:, 2])
        children[bad] = redrawn
        still_bad = _validity_masks(world_map, redrawn, cfg.footprint)
        next_bad = np.zeros(k, dtype=bool)
        next_bad[np.flatnonzero(bad)] = still_bad
        bad = next_bad
    n_bad = int(bad.sum())
    if n_bad:
        children[bad] = _uniform_fallback(rng, world_map, n_bad)

    weights = np.full(k, 1.0 / k)
    return Belief(poses=children, weights=weights,
                  timestamp=belief.timestamp, rng=rng)


def estimate(belief: Belief) -> tuple[Pose2D, float]:
    """Weighted-mean point estimate and RMS position spread.

    Heading is the weighted circular mean, so antipodal headings average to
    the correct wrapped value instead of cancelling.
    """
    w = belief.weights
    x = float(np.sum(w * belief.poses[:, 0]))
    y = float(np.sum(w * belief.poses[:, 1]))
    theta = math.atan2(
        float(np.sum(w * np.sin(belief.poses[:, 2]))),
        float(np.sum(w * np.cos(belief.poses[:, 2]))),
    )
    spread = math.sqrt(float(np.sum(
        w * ((belief.poses[:, 0] - x) ** 2 + (belief.poses[:, 1] - y) ** 2)
    )))
    return Pose2D(x, y, wrap_angle(theta)), spread
