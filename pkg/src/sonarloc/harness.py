"""Replay and evaluation: run the filter over a sensor log, compare against
dead reckoning, and persist results as delimited text.

Result rows are emitted at every ground-truth record so the error series of
the filter and of dead reckoning line up timestamp for timestamp.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from . import filtering
from .filtering import Belief, ControlInput, FilterConfig
from .geomap import Pose2D, SemanticMap
from .logs import MessageLog
from .matcher import MissingGroundTruth
from .sonar import enhance


@dataclass
class RunRow:
    """One evaluation timestamp: filter estimate, ground truth, dead reckoning."""

    t: float
    est_x: float
    est_y: float
    est_theta: float
    spread: float
    gt_x: float | None
    gt_y: float | None
    gt_theta: float | None
    dr_x: float
    dr_y: float
    dr_theta: float
    applied_update: bool


CSV_COLUMNS = (
    "t", "est_x", "est_y", "est_theta", "spread",
    "gt_x", "gt_y", "gt_theta", "dr_x", "dr_y", "dr_theta", "applied_update",
)


@dataclass
class RunResult:
    """Per-timestamp localization rows for one replay."""

    rows: list

    def to_csv(self, path: str | Path) -> Path:
        """Write rows with full-precision, locale-independent float text."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([
                    repr(float(row.t)),
                    repr(float(row.est_x)), repr(float(row.est_y)),
                    repr(float(row.est_theta)), repr(float(row.spread)),
                    "" if row.gt_x is None else repr(float(row.gt_x)),
                    "" if row.gt_y is None else repr(float(row.gt_y)),
                    "" if row.gt_theta is None else repr(float(row.gt_theta)),
                    repr(float(row.dr_x)), repr(float(row.dr_y)),
                    repr(float(row.dr_theta)),
                    int(row.applied_update),
                ])
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "RunResult":
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
                raise ValueError(f"unexpected result columns in {path}: {reader.fieldnames}")
            for rec in reader:
                rows.append(RunRow(
                    t=float(rec["t"]),
                    est_x=float(rec["est_x"]), est_y=float(rec["est_y"]),
                    est_theta=float(rec["est_theta"]), spread=float(rec["spread"]),
                    gt_x=float(rec["gt_x"]) if rec["gt_x"] else None,
                    gt_y=float(rec["gt_y"]) if rec["gt_y"] else None,
                    gt_theta=float(rec["gt_theta"]) if rec["gt_theta"] else None,
                    dr_x=float(rec["dr_x"]), dr_y=float(rec["dr_y"]),
                    dr_theta=float(rec["dr_theta"]),
                    applied_update=bool(int(rec["applied_update"])),
                ))
        return cls(rows=rows)


def _batches(records):
    """Group consecutive records sharing a timestamp."""
    batch = []
    for rec in records:
        if batch and rec["t"] != batch[0]["t"]:
            yield batch
            batch = []
        batch.append(rec)
    if batch:
        yield batch


def run_localization(log: MessageLog, world_map: SemanticMap, cfg: FilterConfig,
                     scorer, init_pose: Pose2D | None = None,
                     init_delay: float = 0.0, enhance_window: int = 5,
                     enhance_max_residual: float = 1.0) -> RunResult:
    """Replay a log through the particle filter and dead reckoning together.

    Records are processed in timestamp batches: compass updates the current
    heading, each odometry record triggers one prediction over the time since
    the previous one, and each sonar record is enhanced over a rolling window
    of the last `enhance_window` frames, then applied through the gated
    observation update with resampling after applied updates. One row is
    emitted per ground-truth record once the filter is initialized.

    By default the filter initializes on the first ground-truth fix; with
    init_delay > 0 it waits until the first fix at least that many seconds
    later (losing the controls in between, like a vehicle that submerges
    before the filter starts). An explicit init_pose initializes at the first
    record instead. Deterministic in cfg.seed.
    """
    if enhance_window < 1:
        raise ValueError("enhance_window must be >= 1")
    records = log.records
    for i in range(1, len(records)):
        if records[i]["t"] < records[i - 1]["t"]:
            raise ValueError(f"record {i}: timestamps decrease")

    first_gps_t = next((r["t"] for r in records if r["type"] == "gps"), None)
    if init_pose is None and first_gps_t is None:
        raise ValueError("log has no ground-truth fix and no init pose was given")

    belief: Belief | None = None
    last_heading: float | None = None
    prev_odom_t: float | None = None
    dr_pose: list | None = None
    dr_heading: float | None = None
    dr_prev_odom_t: float | None = None
    window: list = []
    last_gt: Pose2D | None = None
    rows: list = []

    for batch in _batches(records):
        t = batch[0]["t"]
        applied_any = False
        gt_in_batch = None
        if init_pose is not None and belief is None:
            belief = filtering.init(init_pose, cfg, timestamp=t)
            last_heading = init_pose.theta if last_heading is None else last_heading
        for rec in batch:
            kind = rec["type"]
            if kind == "gps":
                gt_in_batch = Pose2D(rec["x"], rec["y"], rec["theta"])
                last_gt = gt_in_batch
                if dr_pose is None:
                    dr_pose = [rec["x"], rec["y"], rec["theta"]]
                    dr_heading = rec["theta"]
                if belief is None and rec["t"] >= first_gps_t + init_delay:
                    belief = filtering.init(gt_in_batch, cfg, timestamp=t)
                    if last_heading is None:
                        last_heading = rec["theta"]
            elif kind == "compass":
                last_heading = rec["heading"]
                dr_heading = rec["heading"]
            elif kind == "odom":
                if dr_pose is not None:
                    if dr_prev_odom_t is None:
                        dr_prev_odom_t = rec["t"]
                    else:
                        dt = rec["t"] - dr_prev_odom_t
                        dr_prev_odom_t = rec["t"]
                        if dt > 0:
                            dr_pose[0] += rec["v_x"] * dt * math.cos(dr_heading)
                            dr_pose[1] += rec["v_x"] * dt * math.sin(dr_heading)
                            dr_pose[2] = dr_heading
                if belief is not None:
                    if prev_odom_t is None:
                        prev_odom_t = rec["t"]
                    else:
                        dt = rec["t"] - prev_odom_t
                        prev_odom_t = rec["t"]
                        if dt > 0:
                            heading = last_heading if last_heading is not None else 0.0
                            belief = filtering.predict(
                                belief, ControlInput(rec["v_x"], heading, dt), cfg)
            elif kind == "sonar":
                if belief is None:
                    continue
                try:
                    frame = log.frames[rec["frame"]]
                except KeyError:
                    raise ValueError(f"sonar record at t={t} references missing "
                                     f"frame {rec['frame']!r}") from None
                if frame.true_pose is None and last_gt is not None:
                    frame.true_pose = last_gt
                window.append(frame)
                del window[:-enhance_window]
                enhanced = window[-1] if len(window) == 1 else enhance(
                    window, max_residual=enhance_max_residual)
                belief, applied = filtering.update(belief, enhanced, world_map,
                                                   scorer, cfg)
                if applied:
                    belief = filtering.resample(belief, world_map, cfg)
                    applied_any = True
        if gt_in_batch is not None and belief is not None and dr_pose is not None:
            est, spread = filtering.estimate(belief)
            rows.append(RunRow(
                t=t, est_x=est.x, est_y=est.y, est_theta=est.theta, spread=spread,
                gt_x=gt_in_batch.x, gt_y=gt_in_batch.y, gt_theta=gt_in_batch.theta,
                dr_x=dr_pose[0], dr_y=dr_pose[1], dr_theta=dr_pose[2],
                applied_update=applied_any,
            ))
    return RunResult(rows=rows)


def evaluate(result: RunResult) -> tuple[list, dict]:
    """Per-step position errors of filter and dead reckoning, plus a summary.

    Returns (steps, summary): steps are dicts {t, pf_error, dr_error}; the
    summary holds mean, RMSE and max for both series and the fraction of
    steps where the filter beats dead reckoning.
    """
    if not result.rows:
        raise ValueError("result has no rows to evaluate")
    steps = []
    for row in result.rows:
        if row.gt_x is None or row.gt_y is None:
            raise MissingGroundTruth(f"row at t={row.t} has no ground truth")
        pf = math.hypot(row.est_x - row.gt_x, row.est_y - row.gt_y)
        dr = math.hypot(row.dr_x - row.gt_x, row.dr_y - row.gt_y)
        steps.append({"t": row.t, "pf_error": pf, "dr_error": dr})
    n = len(steps)
    pf = [s["pf_error"] for s in steps]
    dr = [s["dr_error"] for s in steps]
    summary = {
        "pf_mean": sum(pf) / n,
        "pf_rmse": math.sqrt(sum(e * e for e in pf) / n),
        "pf_max": max(pf),
        "dr_mean": sum(dr) / n,
        "dr_rmse": math.sqrt(sum(e * e for e in dr) / n),
        "dr_max": max(dr),
        "frac_pf_better": sum(p < d for p, d in zip(pf, dr)) / n,
    }
    return steps, summary


METRICS_COLUMNS = (
    "row_type", "t", "pf_error", "dr_error",
    "pf_mean", "pf_rmse", "pf_max", "dr_mean", "dr_rmse", "dr_max",
    "frac_pf_better",
)


def write_metrics_csv(path: str | Path, steps: list, summary: dict) -> Path:
    """Write per-step error rows followed by one summary row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for s in steps:
            writer.writerow(["step", repr(float(s["t"])), repr(float(s["pf_error"])),
                             repr(float(s["dr_error"])), "", "", "", "", "", "", ""])
        writer.writerow(["summary", "", "", "",
                         repr(float(summary["pf_mean"])), repr(float(summary["pf_rmse"])),
                         repr(float(summary["pf_max"])), repr(float(summary["dr_mean"])),
                         repr(float(summary["dr_rmse"])), repr(float(summary["dr_max"])),
                         repr(float(summary["frac_pf_better"]))])
    return path
