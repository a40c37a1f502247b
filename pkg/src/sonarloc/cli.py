"""Command-line interface: world generation, simulation, localization, evaluation.

Exit codes: 0 on success, 2 on configuration errors (bad values, malformed
specs), 3 on I/O errors (missing or unreadable files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .filtering import FilterConfig
from .geomap import Pose2D, load_semantic_map, save_semantic_map
from .harness import RunResult, evaluate, run_localization, write_metrics_csv
from .logs import MessageLog, load_message_log, save_message_log
from .matcher import baseline_scorer, oracle_scorer
from .simulator import NoiseSpec, WorldSpec, generate_world, simulate_run
from .sonar import enhance

SCORERS = {"baseline": baseline_scorer, "oracle": oracle_scorer}


def _load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return data


def _cmd_gen_world(args) -> int:
    spec = WorldSpec.from_dict(_load_json(args.spec))
    world = generate_world(spec)
    img_path = save_semantic_map(world, args.out)
    print(f"wrote {img_path} ({world.width_px}x{world.height_px} px, "
          f"{world.resolution} m/px)")
    return 0


def _cmd_simulate(args) -> int:
    world = load_semantic_map(args.world)
    traj = _load_json(args.traj)
    if "waypoints" not in traj:
        raise ValueError(f"{args.traj}: missing 'waypoints'")
    noise = NoiseSpec.from_dict(_load_json(args.noise)) if args.noise else NoiseSpec()
    fp = None
    if "footprint" in traj:
        from .geomap import SonarFootprint
        fp = SonarFootprint.from_dict(traj["footprint"])
    log = simulate_run(
        world, traj["waypoints"], speed=float(traj.get("speed", 0.5)),
        noise=noise, fp=fp, seed=args.seed,
        control_rate=float(traj.get("control_rate", 10.0)),
        sonar_period=float(traj.get("sonar_period", 4.0)),
    )
    log_path = save_message_log(log, args.out)
    n_frames = sum(1 for r in log.records if r["type"] == "sonar")
    print(f"wrote {log_path} ({len(log.records)} records, {n_frames} sonar frames)")
    return 0


def _parse_init(text: str) -> Pose2D:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"--init expects 'x,y,theta', got {text!r}")
    return Pose2D(float(parts[0]), float(parts[1]), float(parts[2]))


def _cmd_localize(args) -> int:
    cfg = FilterConfig.from_json_file(args.config) if args.config else FilterConfig()
    world = load_semantic_map(args.map)
    log = load_message_log(args.log, footprint=cfg.footprint)
    init_pose = _parse_init(args.init) if args.init else None
    result = run_localization(
        log, world, cfg, SCORERS[args.scorer],
        init_pose=init_pose, init_delay=args.init_delay,
        enhance_window=args.enhance_window,
    )
    out = result.to_csv(args.out)
    print(f"wrote {out} ({len(result.rows)} rows)")
    return 0


def _cmd_evaluate(args) -> int:
    result = RunResult.from_csv(args.result)
    steps, summary = evaluate(result)
    out = write_metrics_csv(args.out, steps, summary)
    from . import plots
    stem = Path(args.out)
    error_png = stem.with_name(stem.stem + "_error.png")
    traj_png = stem.with_name(stem.stem + "_trajectories.png")
    world = load_semantic_map(args.map) if args.map else None
    plots.plot_error_series(steps, error_png, spreads=[r.spread for r in result.rows])
    plots.plot_trajectories(result, traj_png, world_map=world)
    print(f"wrote {out}, {error_png}, {traj_png}")
    print(
        f"pf_mean={summary['pf_mean']:.3f} m pf_rmse={summary['pf_rmse']:.3f} m "
        f"dr_mean={summary['dr_mean']:.3f} m dr_rmse={summary['dr_rmse']:.3f} m "
        f"frac_pf_better={summary['frac_pf_better']:.3f}"
    )
    return 0


def _cmd_preprocess_sonar(args) -> int:
    log = load_message_log(args.log)
    window: list = []
    enhanced_frames = {}
    for rec in log.records:
        if rec["type"] != "sonar":
            continue
        window.append(log.frames[rec["frame"]])
        del window[:-args.window]
        enhanced_frames[rec["frame"]] = (
            window[-1] if len(window) == 1 else enhance(window)
        )
    out_log = MessageLog(records=log.records, frames=enhanced_frames,
                         footprint=log.footprint)
    log_path = save_message_log(out_log, args.out)
    print(f"wrote {log_path} ({len(enhanced_frames)} enhanced frames)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonarloc",
        description="Underwater localization: match sonar frames against an "
                    "aerial semantic map inside a particle filter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a synthetic marina map")
    p.add_argument("--spec", required=True, help="world spec JSON")
    p.add_argument("--out", required=True, help="output map directory")
    p.set_defaults(func=_cmd_gen_world)

    p = sub.add_parser("simulate", help="simulate a trajectory and sensor log")
    p.add_argument("--world", required=True, help="map directory or image path")
    p.add_argument("--traj", required=True, help="trajectory JSON (waypoints, speed)")
    p.add_argument("--noise", default=None, help="noise spec JSON (default: noiseless)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output log directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("localize", help="run the particle filter over a log")
    p.add_argument("--log", required=True, help="log directory")
    p.add_argument("--map", required=True, help="map directory or image path")
    p.add_argument("--config", default=None, help="filter config JSON (default config if omitted)")
    p.add_argument("--scorer", choices=sorted(SCORERS), default="baseline")
    p.add_argument("--out", required=True, help="output result CSV")
    p.add_argument("--init", default=None, metavar="X,Y,THETA",
                   help="explicit init pose (default: first ground-truth fix)")
    p.add_argument("--init-delay", type=float, default=0.0,
                   help="seconds after the first fix before initializing")
    p.add_argument("--enhance-window", type=int, default=5,
                   help="rolling sonar frames fused per observation")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("evaluate", help="compute error metrics and figures from a result CSV")
    p.add_argument("--result", required=True, help="result CSV from localize")
    p.add_argument("--out", required=True, help="output metrics CSV")
    p.add_argument("--map", default=None, help="map directory for the trajectory figure background")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("preprocess-sonar", help="write enhanced sonar frames for a log")
    p.add_argument("--log", required=True, help="input log directory")
    p.add_argument("--out", required=True, help="output log directory")
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=_cmd_preprocess_sonar)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
