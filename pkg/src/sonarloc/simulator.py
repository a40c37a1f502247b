"""Synthetic marina worlds, fan-beam sonar rendering, and trajectory simulation.

Everything here is a pure function of its specs and seed. The simulator logs
ground truth with the same discrete integrator that dead reckoning replays, so
a noiseless log reconstructs the truth to float precision.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .geomap import (
    MOVABLE,
    STRUCTURE,
    WATER,
    Pose2D,
    SemanticMap,
    SonarFootprint,
    bin_ranges,
    crop_classes_batch,
    wrap_angle,
)
from .logs import MessageLog
from .sonar import AcousticImage


class InvalidSpec(ValueError):
    """World geometry cannot fit the requested map."""


class InvalidTrajectory(ValueError):
    """A waypoint or speed violates the trajectory preconditions."""


class EmptyLog(ValueError):
    """The log lacks the records needed for this operation."""


@dataclass(frozen=True)
class WorldSpec:
    """Parameters of a synthetic marina: shoreline band, piers, movable boats."""

    width_m: float = 160.0
    height_m: float = 160.0
    resolution: float = 0.5
    shoreline_width_m: float = 6.0
    pier_count: int = 4
    pier_length_range: tuple[float, float] = (20.0, 40.0)
    pier_width_range: tuple[float, float] = (2.0, 4.0)
    movable_count: int = 4
    boat_length_m: float = 5.0
    boat_width_m: float = 2.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "width_m": self.width_m,
            "height_m": self.height_m,
            "resolution": self.resolution,
            "shoreline_width_m": self.shoreline_width_m,
            "pier_count": self.pier_count,
            "pier_length_range": list(self.pier_length_range),
            "pier_width_range": list(self.pier_width_range),
            "movable_count": self.movable_count,
            "boat_length_m": self.boat_length_m,
            "boat_width_m": self.boat_width_m,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSpec":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidSpec(f"unknown world spec keys: {sorted(extra)}")
        for key in ("pier_length_range", "pier_width_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor corruption model: odometry bias/noise, compass noise, sonar noise."""

    odom_bias: float = 0.0
    odom_std: float = 0.0
    compass_std: float = 0.0
    sonar_std: float = 0.0
    dropout: float = 0.0

    def __post_init__(self):
        for name in ("odom_std", "compass_std", "sonar_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError(f"dropout must be in [0, 1], got {self.dropout}")

    def to_dict(self) -> dict:
        return {
            "odom_bias": self.odom_bias,
            "odom_std": self.odom_std,
            "compass_std": self.compass_std,
            "sonar_std": self.sonar_std,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        known = {"odom_bias", "odom_std", "compass_std", "sonar_std", "dropout"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown noise spec keys: {sorted(extra)}")
        return cls(**d)


def _fill_rect(cells: np.ndarray, res: float, x0: float, y0: float,
               x1: float, y1: float, label: int) -> None:
    """Rasterize an axis-aligned world rectangle, clipped to the map."""
    ix0 = max(int(math.floor(x0 / res)), 0)
    iy0 = max(int(math.floor(y0 / res)), 0)
    ix1 = min(int(math.ceil(x1 / res)), cells.shape[1])
    iy1 = min(int(math.ceil(y1 / res)), cells.shape[0])
    if ix1 > ix0 and iy1 > iy0:
        cells[iy0:iy1, ix0:ix1] = label


def generate_world(spec: WorldSpec) -> SemanticMap:
    """Build a marina map: a west shoreline band, piers reaching east, boats.

    Structure cells form the shoreline plus piers; Movable cells are
    boat-sized blobs moored beside piers; everything else is Water.
    Deterministic in spec.seed.
    """
    if spec.width_m <= 0 or spec.height_m <= 0 or spec.resolution <= 0:
        raise InvalidSpec("map dimensions and resolution must be positive")
    if spec.shoreline_width_m < 0 or spec.pier_count < 0 or spec.movable_count < 0:
        raise InvalidSpec("counts and widths must be non-negative")
    if spec.shoreline_width_m >= spec.width_m:
        raise InvalidSpec("shoreline band covers the whole map")
    lo_len, hi_len = spec.pier_length_range
    lo_w, hi_w = spec.pier_width_range
    if spec.pier_count > 0:
        if not (0 < lo_len <= hi_len and 0 < lo_w <= hi_w):
            raise InvalidSpec("pier ranges must be positive and ordered")
        if spec.shoreline_width_m + hi_len > spec.width_m:
            raise InvalidSpec("piers cannot fit east of the shoreline")
        slot_h = spec.height_m / spec.pier_count
        if hi_w > 0.5 * slot_h:
            raise InvalidSpec("piers too wide for their slots")

    rng = np.random.default_rng(spec.seed)
    w_px = int(round(spec.width_m / spec.resolution))
    h_px = int(round(spec.height_m / spec.resolution))
    cells = np.full((h_px, w_px), WATER, dtype=np.uint8)

    if spec.shoreline_width_m > 0:
        _fill_rect(cells, spec.resolution, 0.0, 0.0,
                   spec.shoreline_width_m, spec.height_m, STRUCTURE)

    piers = []
    for i in range(spec.pier_count):
        slot_h = spec.height_m / spec.pier_count
        y_center = (i + 0.5) * slot_h + rng.uniform(-0.15, 0.15) * slot_h
        length = rng.uniform(lo_len, hi_len)
        width = rng.uniform(lo_w, hi_w)
        x0 = spec.shoreline_width_m
        x1 = x0 + length
        y0 = y_center - width / 2.0
        y1 = y_center + width / 2.0
        _fill_rect(cells, spec.resolution, x0, y0, x1, y1, STRUCTURE)
        piers.append((x0, y0, x1, y1))

    placed = 0
    attempts = 0
    while piers and placed < spec.movable_count and attempts < 20 * spec.movable_count:
        attempts += 1
        x0, y0, x1, y1 = piers[rng.integers(len(piers))]
        side = 1.0 if rng.random() < 0.5 else -1.0
        bx0 = x0 + rng.uniform(0.1, 0.9) * (x1 - x0 - spec.boat_length_m)
        bx1 = bx0 + spec.boat_length_m
        gap = 1.0
        if side > 0:
            by0 = y1 + gap
        else:
            by0 = y0 - gap - spec.boat_width_m
        by1 = by0 + spec.boat_width_m
        ix0 = int(math.floor(bx0 / spec.resolution))
        iy0 = int(math.floor(by0 / spec.resolution))
        ix1 = int(math.ceil(bx1 / spec.resolution))
        iy1 = int(math.ceil(by1 / spec.resolution))
        if ix0 < 0 or iy0 < 0 or ix1 > w_px or iy1 > h_px:
            continue
        if (cells[iy0:iy1, ix0:ix1] != WATER).any():
            continue
        cells[iy0:iy1, ix0:ix1] = MOVABLE
        placed += 1

    return SemanticMap(cells=cells, resolution=spec.resolution)


DEFAULT_ATTENUATION = 0.015
DEFAULT_SMEAR = (0.5, 0.25, 0.12)
DEFAULT_PENETRATION_M = 2.0
DEFAULT_PENETRATION_DECAY = 0.8


def render_sonar(world_map: SemanticMap, true_pose: Pose2D, fp: SonarFootprint,
                 noise: NoiseSpec | None = None,
                 rng: np.random.Generator | None = None,
                 attenuation: float = DEFAULT_ATTENUATION,
                 penetration_m: float = DEFAULT_PENETRATION_M,
                 penetration_decay: float = DEFAULT_PENETRATION_DECAY,
                 smear: tuple[float, ...] = DEFAULT_SMEAR) -> AcousticImage:
    """Single-bounce ray-cast sonar frame at a pose.

    Per bearing column the first Structure or Movable cell returns a bright
    echo (peak 1 - attenuation * range). The return extends along the ray
    through consecutive reflective cells up to penetration_m meters, decaying
    per bin: a ray grazing a surface obliquely lights up the whole chord it
    crosses, the way a real fan beam smears oblique returns across range
    bins. A short trailing smear follows the return and everything beyond is
    shadowed to zero; columns with no hit stay zero. Gaussian intensity noise
    and dropout apply to echo pixels only, so noise never turns an empty
    frame informative.
    """
    classes = crop_classes_batch(world_map, true_pose.as_array()[None, :], fp)[0]
    reflective = (classes == STRUCTURE) | (classes == MOVABLE)
    pixels = np.zeros(fp.shape, dtype=np.float64)
    has_hit = reflective.any(axis=0)
    if has_hit.any():
        cols = np.flatnonzero(has_hit)
        hits = reflective[:, cols].argmax(axis=0)
        peaks = np.maximum(1.0 - attenuation * bin_ranges(fp)[hits], 0.0)
        bin_m = fp.max_range / fp.range_bins
        pen_bins = max(int(round(penetration_m / bin_m)), 1)
        # Walk the ray through the reflective run, bin by bin.
        alive = np.ones(cols.size, dtype=bool)
        last_value = peaks.copy()
        run_end = hits.copy()
        for j in range(pen_bins):
            rows = hits + j
            ok = alive & (rows < fp.range_bins)
            ok[ok] &= reflective[rows[ok], cols[ok]]
            value = peaks * penetration_decay ** j
            pixels[rows[ok], cols[ok]] = value[ok]
            last_value[ok] = value[ok]
            run_end[ok] = rows[ok]
            alive = ok
            if not alive.any():
                break
        for k, decay in enumerate(smear):
            rows = run_end + 1 + k
            ok = rows < fp.range_bins
            pixels[rows[ok], cols[ok]] = last_value[ok] * decay
    if noise is not None and (noise.sonar_std > 0 or noise.dropout > 0):
        if rng is None:
            rng = np.random.default_rng(0)
        echo = pixels > 0.0
        n_echo = int(echo.sum())
        if n_echo:
            if noise.sonar_std > 0:
                pixels[echo] += rng.normal(0.0, noise.sonar_std, n_echo)
            if noise.dropout > 0:
                drop = rng.random(n_echo) < noise.dropout
                vals = pixels[echo]
                vals[drop] = 0.0
                pixels[echo] = vals
        np.clip(pixels, 0.0, 1.0, out=pixels)
    return AcousticImage(pixels=pixels, footprint=fp, true_pose=true_pose)


MAX_SPEED = 0.6


def simulate_run(world_map: SemanticMap, waypoints, speed: float,
                 noise: NoiseSpec | None = None,
                 fp: SonarFootprint | None = None, seed: int = 0,
                 control_rate: float = 10.0,
                 sonar_period: float = 4.0) -> MessageLog:
    """Drive the vehicle through waypoints and record the full sensor log.

    The truth pose advances one control tick at a time along the current
    waypoint segment (clamping at corners), and every tick logs ground truth,
    compass, and odometry describing exactly that step, so integrating the
    noiseless log reproduces the truth. Sonar frames are rendered at the true
    pose every sonar_period seconds. Record order within a tick is ground
    truth, compass, odometry, then sonar.
    """
    waypoints = [(float(x), float(y)) for x, y in waypoints]
    if len(waypoints) < 2:
        raise InvalidTrajectory("need at least two waypoints")
    if not (0.0 < speed <= MAX_SPEED):
        raise InvalidTrajectory(f"speed must be in (0, {MAX_SPEED}] m/s, got {speed}")
    for wx, wy in waypoints:
        if not world_map.contains(wx, wy):
            raise InvalidTrajectory(f"waypoint ({wx}, {wy}) lies outside the map")
        if world_map.class_at(wx, wy) == STRUCTURE:
            raise InvalidTrajectory(f"waypoint ({wx}, {wy}) lies on Structure")
    if control_rate <= 0 or sonar_period <= 0:
        raise ValueError("control_rate and sonar_period must be positive")
    if fp is None:
        fp = SonarFootprint()
    if noise is None:
        noise = NoiseSpec()

    rng = np.random.default_rng(seed)
    sonar_every = max(int(round(sonar_period * control_rate)), 1)
    log = MessageLog(footprint=fp)

    x, y = waypoints[0]
    wp_idx = 1
    heading = math.atan2(waypoints[1][1] - y, waypoints[1][0] - x)
    frame_idx = 0

    def emit(t: float, v_eff: float) -> None:
        log.records.append({"t": t, "type": "gps", "x": x, "y": y, "theta": heading})
        compass = wrap_angle(heading + (rng.normal(0.0, noise.compass_std)
                                        if noise.compass_std > 0 else 0.0))
        log.records.append({"t": t, "type": "compass", "heading": compass})
        v_meas = v_eff + noise.odom_bias
        if noise.odom_std > 0:
            v_meas += rng.normal(0.0, noise.odom_std)
        log.records.append({"t": t, "type": "odom", "v_x": v_meas})

    emit(0.0, 0.0)
    t_prev = 0.0
    k = 0
    max_ticks = int(4 * sum(
        math.hypot(waypoints[i + 1][0] - waypoints[i][0],
                   waypoints[i + 1][1] - waypoints[i][1])
        for i in range(len(waypoints) - 1)
    ) / speed * control_rate) + 10 * int(control_rate)
    while wp_idx < len(waypoints) and k < max_ticks:
        k += 1
        t = k / control_rate
        dt = t - t_prev
        t_prev = t
        tx, ty = waypoints[wp_idx]
        remaining = math.hypot(tx - x, ty - y)
        if remaining > 0:
            heading = math.atan2(ty - y, tx - x)
        step = speed * dt
        if remaining <= step:
            v_eff = remaining / dt
            wp_idx += 1
        else:
            v_eff = speed
        # Integrate exactly as dead reckoning will: v * dt along the heading.
        x += v_eff * dt * math.cos(heading)
        y += v_eff * dt * math.sin(heading)
        emit(t, v_eff)
        if k % sonar_every == 0:
            ref = f"frames/{frame_idx:06d}.pgm"
            frame = render_sonar(world_map, Pose2D(x, y, heading), fp,
                                 noise=noise, rng=rng)
            frame.timestamp = t
            log.records.append({"t": t, "type": "sonar", "frame": ref})
            log.frames[ref] = frame
            frame_idx += 1
    return log


def dead_reckoning(log: MessageLog | list) -> np.ndarray:
    """Integrate odometry and compass from the first ground-truth fix.

    Returns rows [t, x, y, theta]: the initial fix followed by the pose after
    every odometry record. Same constant-velocity model as the filter's
    prediction, with zero noise; the first odometry record anchors the clock
    and produces no motion.
    """
    records = log.records if isinstance(log, MessageLog) else log
    pose = None
    heading = None
    t_prev = None
    rows = []
    for rec in records:
        kind = rec["type"]
        if kind == "gps" and pose is None:
            pose = [rec["x"], rec["y"], rec["theta"]]
            heading = rec["theta"]
            rows.append([rec["t"], pose[0], pose[1], pose[2]])
        elif kind == "compass":
            heading = rec["heading"]
        elif kind == "odom" and pose is not None:
            if heading is None:
                heading = pose[2]
            if t_prev is None:
                t_prev = rec["t"]
                continue
            dt = rec["t"] - t_prev
            t_prev = rec["t"]
            if dt <= 0:
                continue
            pose[0] += rec["v_x"] * dt * math.cos(heading)
            pose[1] += rec["v_x"] * dt * math.sin(heading)
            pose[2] = heading
            rows.append([rec["t"], pose[0], pose[1], pose[2]])
    if pose is None or len(rows) < 1:
        raise EmptyLog("dead reckoning needs a ground-truth fix and odometry")
    if not any(r["type"] == "odom" for r in records):
        raise EmptyLog("dead reckoning needs odometry records")
    return np.asarray(rows, dtype=np.float64)
