"""``footnav`` command line: track, simulate, map, plan and navigate.

Exit codes:
  0  success
  1  invalid configuration or arguments
  2  malformed input file (message carries file and line) or usage error
  3  no stance detected in the IMU stream
  4  goal unreachable
  5  unknown object label
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats, planner, simharness
from .config import CONFIG_ENV, load_config
from .deadreckon import Trajectory, run_offline, run_online
from .errors import FormatError, NoPathError, NoStanceError, NotFoundError, ValidationError
from .navigation import build_map, run_navigation

EXIT_OK, EXIT_INVALID, EXIT_FORMAT, EXIT_NO_STANCE, EXIT_NO_PATH, EXIT_NOT_FOUND = range(6)
DEFAULT_SEED = 7

PRESETS = {
    "corridor": {"kind": "corridor", "length": 10.0},
    "staircase": {"kind": "spiral_staircase", "n_steps": 60},
}


def _emit(lines):
    for key, value in lines:
        print(f"{key}: {value}")


def _write_all(outdir: Path, files: dict):
    """Write every payload only after all of them were produced."""
    for name, payload in files.items():
        formats.atomic_write(outdir / name, payload)


def _plot_to_bytes(fn, *args, **kwargs) -> bytes:
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "figure.png"
        fn(path, *args, **kwargs)
        return path.read_bytes()


# --- track -------------------------------------------------------------------


def cmd_track(args, cfg):
    samples = formats.read_imu_csv(args.imu_csv)
    tracker_cfg = cfg.tracker()
    if args.online:
        if args.no_zupt:
            raise ValidationError("--no-zupt applies to offline tracking only")
        traj = run_online(samples, tracker_cfg)
    else:
        traj = run_offline(samples, tracker_cfg, zupt=not args.no_zupt)
    mode = "online" if args.online else ("offline-no-zupt" if args.no_zupt else "offline")
    summary = [("mode", mode), ("samples", len(traj)), ("steps", len(traj.step_boundaries)),
               ("path_length_m", f"{traj.path_length():.4f}"),
               ("endpoint_m", " ".join(f"{v:.4f}" for v in traj.positions[-1]))]
    ref = None
    if args.compare:
        ref = formats.read_trajectory_csv(args.compare)
        metrics = simharness.evaluate(traj, ref)
        summary += [(k, f"{v:.6g}") for k, v in metrics.items()]
    files = {
        "trajectory.csv": formats.trajectory_csv(traj),
        # the JSON is mode independent so online and offline runs can be compared byte for byte
        "trajectory.json": formats.trajectory_json(traj),
    }
    if args.plot:
        from .plotting import plot_trajectory

        files["trajectory.png"] = _plot_to_bytes(plot_trajectory, traj, ref, title=f"tracked ({mode})")
    _write_all(Path(args.out), files)
    _emit(summary)
    return EXIT_OK


# --- simulate ----------------------------------------------------------------


def _load_scenario(spec: str):
    if spec == "static":
        return None
    if spec in PRESETS:
        return simharness.Scenario.from_dict(PRESETS[spec])
    try:
        doc = json.loads(Path(spec).read_text())
    except OSError as exc:
        raise FormatError(spec, None, f"cannot read scenario ({exc.strerror}); presets: static, "
                                      f"{', '.join(sorted(PRESETS))}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(spec, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError(spec, None, "scenario must be a JSON object")
    return simharness.Scenario.from_dict(doc)


def cmd_simulate(args, cfg):
    scenario = _load_scenario(args.scenario)
    rate = cfg.sample_rate
    if scenario is None:
        truth = simharness.static_trajectory(args.duration, rate)
    else:
        truth = simharness.gen_trajectory(scenario, rate)
    base = simharness.FIXTURE_NOISE
    noise = simharness.NoiseModel(
        accel_sigma=base.accel_sigma if args.noise_accel is None else args.noise_accel,
        gyro_sigma=base.gyro_sigma if args.noise_gyro is None else args.noise_gyro,
        accel_bias=(0.0, 0.0, 0.0) if args.no_bias else base.accel_bias,
        gyro_bias=(0.0, 0.0, 0.0) if args.no_bias else base.gyro_bias,
        seed=args.seed,
    )
    samples = simharness.synth_imu(truth, noise, g=cfg.g)
    fixes = simharness.fixes_from_truth(truth, rate=args.fix_rate, position_sigma=args.fix_sigma,
                                        seed=args.seed + 1)
    files = {
        "imu.csv": formats.imu_csv(samples),
        "truth.csv": formats.trajectory_csv(truth),
        "truth.json": formats.trajectory_json(truth),
        "fixes.csv": formats.fixes_csv(fixes),
        "scenario.json": json.dumps({"scenario": None if scenario is None else scenario.to_dict(),
                                     "noise": {"accel_sigma": noise.accel_sigma, "gyro_sigma": noise.gyro_sigma,
                                               "accel_bias": list(noise.accel_bias),
                                               "gyro_bias": list(noise.gyro_bias),
                                               "generator": "numpy PCG64", "seed": noise.seed},
                                     "rate": rate}, indent=1) + "\n",
    }
    if args.plot:
        from .plotting import plot_trajectory

        files["truth.png"] = _plot_to_bytes(plot_trajectory, truth, title=f"ground truth ({Path(args.scenario).name})")
    _write_all(Path(args.out), files)
    _emit([("scenario", args.scenario), ("seed", args.seed), ("samples", len(samples)),
           ("steps", len(truth.step_boundaries)), ("path_length_m", f"{truth.path_length():.4f}"),
           ("fixes", len(fixes))])
    return EXIT_OK


# --- map / plan --------------------------------------------------------------


def _bundle(args, cfg):
    points, labels = formats.read_point_cloud(args.cloud)
    kernel = formats.load_kernel(args.kernel) if getattr(args, "kernel", None) else None
    bounds = tuple(args.bounds) if args.bounds else None
    return build_map(points, labels, cfg, kernel, bounds)


def cmd_map(args, cfg):
    bundle = _bundle(args, cfg)
    classes = {c: sum(b.height_class == c for b in bundle.obstacles) for c in ("ground", "body", "head")}
    files = {
        "obstacles.json": formats.obstacles_json(bundle.obstacles, voxel_size=cfg.voxel_size,
                                                 connectivity=cfg.connectivity,
                                                 thresholds=list(cfg.thresholds)),
        "costmap.pgm": formats.costmap_pgm(bundle.costmap),
        "costmap.json": formats.costmap_json(bundle.costmap),
    }
    if args.plot:
        from .plotting import plot_costmap

        files["costmap.png"] = _plot_to_bytes(plot_costmap, bundle.costmap, bundle.obstacles, title="map")
    _write_all(Path(args.out), files)
    _emit([("voxels", len(bundle.grid)), ("obstacles", len(bundle.obstacles)),
           *((f"{c}_obstacles", n) for c, n in classes.items()),
           ("costmap_cells", f"{bundle.costmap.width}x{bundle.costmap.height}"),
           ("blocked_cells", int(bundle.costmap.blocked.sum()))])
    return EXIT_OK


def cmd_plan(args, cfg):
    bundle = _bundle(args, cfg)
    target = None
    if args.find:
        target = planner.find_object(bundle.obstacles, args.find, args.start)
        goal = planner.approach_point(bundle.costmap, target)
    else:
        goal = args.goal
    try:
        plan = planner.plan_path(bundle.costmap, args.start, goal, np.radians(args.heading), bundle.obstacles)
    except ValidationError as exc:
        raise NoPathError(str(exc)) from None
    header = {"target": target.to_dict() if target else None}
    files = {"plan.json": formats.plan_json(plan, **header)}
    if args.plot:
        from .plotting import plot_costmap

        files["plan.png"] = _plot_to_bytes(plot_costmap, bundle.costmap, bundle.obstacles, plan, title="plan")
    _write_all(Path(args.out), files)
    _emit([("waypoints", len(plan.waypoints)), ("length_m", f"{plan.total_length:.3f}")])
    for line in plan.instructions:
        print(f"  {line}")
    return EXIT_OK


# --- navigate ----------------------------------------------------------------


def cmd_navigate(args, cfg):
    bundle = _bundle(args, cfg)
    samples = formats.read_imu_csv(args.imu)
    fixes = formats.read_fixes_csv(args.fixes)
    result = run_navigation(samples, fixes, bundle, cfg, goal=args.goal, find=args.find)
    last_t, last_plan = result.plans[-1]
    files = {
        "transcript.txt": result.transcript_text(),
        "fused.csv": formats.trajectory_csv(result.trajectory),
        "fused.json": formats.trajectory_json(result.trajectory),
        "plan.json": formats.plan_json(last_plan, planned_at=last_t,
                                       target=result.target.to_dict() if result.target else None),
    }
    if args.plot:
        from .plotting import plot_costmap

        files["navigate.png"] = _plot_to_bytes(plot_costmap, bundle.costmap, bundle.obstacles, last_plan,
                                               result.trajectory, title="navigation")
    _write_all(Path(args.out), files)
    _emit([("goal", " ".join(f"{v:.3f}" for v in result.goal)), ("plans", len(result.plans)),
           ("fixes_used", result.fixes_used), ("fixes_ignored", result.fixes_ignored),
           ("arrived", "yes" if result.arrived else "no")])
    sys.stdout.write(result.transcript_text())
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV} if set)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field; repeatable")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--plot", action="store_true", help="also render PNG figures")

    parser = argparse.ArgumentParser(prog="footnav", description=__doc__.split("\n")[0],
                                     epilog=__doc__.split("\n", 1)[1],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", parents=[common], help="reconstruct a trajectory from an IMU CSV")
    p.add_argument("imu_csv")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--online", action="store_true", help="streaming tracker")
    mode.add_argument("--offline", action="store_true", help="whole-stream tracker (default)")
    p.add_argument("--no-zupt", action="store_true", help="integrate without zero-velocity correction")
    p.add_argument("--compare", metavar="REF_CSV", help="ground-truth trajectory CSV to score against")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic walk and IMU stream")
    p.add_argument("scenario", help="scenario JSON file or preset: static, " + ", ".join(sorted(PRESETS)))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--noise-accel", type=float, help="accelerometer sigma, m/s^2")
    p.add_argument("--noise-gyro", type=float, help="gyro sigma, rad/s")
    p.add_argument("--no-bias", action="store_true", help="drop the constant sensor biases")
    p.add_argument("--duration", type=float, default=10.0, help="length of the static preset, s")
    p.add_argument("--fix-rate", type=float, default=1.0, help="pose fixes per second")
    p.add_argument("--fix-sigma", type=float, default=0.05, help="pose fix position sigma, m")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("map", parents=[common], help="voxelize a point cloud into obstacles and a costmap")
    p.add_argument("cloud")
    p.add_argument("--kernel", help="convolution weights JSON; keeps sites with positive first channel")
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("plan", parents=[common], help="plan a path on a point-cloud map")
    p.add_argument("cloud")
    p.add_argument("--start", type=float, nargs=2, required=True, metavar=("X", "Y"))
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--goal", type=float, nargs=2, metavar=("X", "Y"))
    target.add_argument("--find", metavar="LABEL")
    p.add_argument("--heading", type=float, default=0.0, help="initial facing, degrees from +x")
    p.add_argument("--kernel")
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("navigate", parents=[common], help="track, fuse fixes, plan and narrate")
    p.add_argument("--cloud", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--fixes", required=True)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--goal", type=float, nargs=2, metavar=("X", "Y"))
    target.add_argument("--find", metavar="LABEL")
    p.add_argument("--kernel")
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.set_defaults(func=cmd_navigate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NoStanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_STANCE
    except NoPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except NotFoundError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
