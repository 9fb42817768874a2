"""Command-line front end.

Subcommands mirror the pipeline stages:

  simulate   rigid-body scenario -> trajectory.csv + truth.csv
  ingest     SfM output files -> trajectory.csv + cloud.ply + features.csv
  pcl        condition a cloud, detect planes, define the body frame
  estimate   trajectory (+frame, +scale) -> motion.csv/json + figures
  evaluate   motion vs ground truth -> eval.json
  pipeline   run every configured stage from one TOML file

--seed and --output-dir are accepted by every subcommand and take
precedence over the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, cloud as pcl, ingest, report
from .errors import ConfigError, DegenerateGeometryError, SfmotionError
from .evaluate import evaluate_motion, read_truth_csv, truth_from_config
from .geometry import Rotation
from .motion import (ScaleReference, estimate_motion, motion_csv_text,
                     motion_summary_text, read_motion_csv,
                     scale_from_known_length)
from .pipeline import (PipelineConfig, SimulateSpec, apply_overrides,
                       build_pipeline_config, load_config_file, run_pipeline,
                       _build_spec)


def _vec3_arg(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(float(v) for v in parts)


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--output-dir", type=Path, default=None,
                     help="directory for artifacts (default: out or config)")
    sub.add_argument("--seed", type=int, default=None,
                     help="master seed for noise/RANSAC (default 0 or config)")


def _out_dir(args) -> Path:
    out = args.output_dir if args.output_dir is not None else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_params(out: Path, args) -> None:
    """Every run records its effective parameters next to its outputs."""
    doc = {}
    for key, value in sorted(vars(args).items()):
        if key == "output_dir":
            continue  # self-evident from the file location
        doc[key] = str(value) if isinstance(value, Path) else value
    (out / "params.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfmotion",
        description="Motion estimation of tumbling targets from SfM output, "
                    "with a rigid-body simulator for ground truth.")
    parser.add_argument("--version", action="version",
                        version=f"sfmotion {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="generate a ground-truth scenario")
    p.add_argument("--config", type=Path, default=None,
                   help="TOML file with a [simulate] table")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. simulate.duration_s=600")
    p.add_argument("--frames", type=int, default=None,
                   help="emit exactly N frames ((N-1)*interval duration)")
    _common_flags(p)

    p = subs.add_parser("ingest", help="parse SfM output files")
    p.add_argument("--format", choices=("json", "colmap"), required=True)
    p.add_argument("--path", type=Path, help="reconstruction JSON file")
    p.add_argument("--images", type=Path, help="images text file (colmap)")
    p.add_argument("--points3d", type=Path, help="points3D text file (colmap)")
    p.add_argument("--frame-rate", type=float, default=0.0,
                   help="restamp frames at this rate in Hz")
    _common_flags(p)

    p = subs.add_parser("pcl", help="condition a cloud and define the frame")
    p.add_argument("--ply", type=Path, required=True)
    p.add_argument("--radius", type=float, default=0.0,
                   help="outlier-removal radius (0 = 3x median NN distance)")
    p.add_argument("--min-neighbors", type=int, default=4)
    p.add_argument("--voxel-size", type=float, default=0.0,
                   help="voxel edge (0 = 2x median NN distance)")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="RANSAC inlier distance (0 = median NN distance)")
    p.add_argument("--max-planes", type=int, default=6)
    p.add_argument("--min-inlier-fraction", type=float, default=0.15)
    p.add_argument("--max-iterations", type=int, default=1000)
    p.add_argument("--complete", choices=("cube", "cylinder"), default=None,
                   help="fill missing primitive faces before the centroid")
    _common_flags(p)

    p = subs.add_parser("estimate", help="estimate motion from a trajectory")
    p.add_argument("--trajectory", type=Path, required=True,
                   help="trajectory CSV (time_s,qw,qx,qy,qz,cx,cy,cz)")
    p.add_argument("--frame", type=Path, default=None,
                   help="planes.json from the pcl step (default: identity)")
    p.add_argument("--scale-c", type=float, default=1.0,
                   help="meters per SfM unit")
    p.add_argument("--scale-length", type=float, default=0.0,
                   help="known physical length in meters")
    p.add_argument("--scale-point-a", type=_vec3_arg, default=None)
    p.add_argument("--scale-point-b", type=_vec3_arg, default=None)
    p.add_argument("--frame-rate", type=float, default=0.0,
                   help="restamp trajectory at this rate in Hz")
    p.add_argument("--no-figures", action="store_true")
    _common_flags(p)

    p = subs.add_parser("evaluate", help="compare motion against ground truth")
    p.add_argument("--motion", type=Path, required=True, help="motion CSV")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--truth-csv", type=Path,
                       help="ground-truth CSV (interpolated to estimates)")
    group.add_argument("--truth-config", type=Path,
                       help="simulate TOML; truth re-integrated exactly")
    _common_flags(p)

    p = subs.add_parser("pipeline", help="run all stages from one config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    _common_flags(p)
    return parser


# ---------------------------------------------------------------------------
# handlers

def _cmd_simulate(args) -> int:
    doc = load_config_file(args.config) if args.config else {"simulate": {}}
    apply_overrides(doc, args.set)
    if "simulate" not in doc:
        raise ConfigError("config must contain a [simulate] table")
    if args.frames is not None:
        doc["simulate"]["frames"] = args.frames
    doc.pop("reconstruction", None)
    config = build_pipeline_config(doc, output_dir=args.output_dir,
                                   seed=args.seed)
    config = PipelineConfig(
        output_dir=config.output_dir, seed=config.seed,
        simulate=config.simulate, conditioning=config.conditioning,
        ransac=config.ransac, frame_identity=True, scale=config.scale,
        figures=False)
    result = run_pipeline(config)
    for name in ("params", "trajectory", "truth"):
        print(f"wrote {result.artifacts[name]}")
    return 0


def _cmd_ingest(args) -> int:
    out = _out_dir(args)
    _log_params(out, args)
    if args.format == "json":
        if not args.path:
            raise ConfigError("--path is required with --format json")
        traj, cloud, features = ingest.parse_reconstruction_json(
            args.path.read_bytes())
    else:
        if not args.images or not args.points3d:
            raise ConfigError("--images and --points3d are required with "
                              "--format colmap")
        traj, cloud, features = ingest.parse_colmap_text(
            args.images.read_bytes(), args.points3d.read_bytes())
    if args.frame_rate > 0.0:
        traj = ingest.assign_timestamps(traj, args.frame_rate)
    (out / "trajectory.csv").write_text(ingest.trajectory_csv_text(traj))
    (out / "cloud.ply").write_bytes(ingest.write_ply(cloud))
    print(f"wrote {out / 'trajectory.csv'} ({len(traj)} poses)")
    print(f"wrote {out / 'cloud.ply'} ({len(cloud)} points)")
    if features:
        (out / "features.csv").write_text(ingest.features_csv_text(features))
        print(f"wrote {out / 'features.csv'} ({len(features)} frames)")
    return 0


def _cmd_pcl(args) -> int:
    out = _out_dir(args)
    _log_params(out, args)
    seed = args.seed if args.seed is not None else 0
    cloud = ingest.read_ply(args.ply.read_bytes())
    mnn = pcl.median_nn_distance(cloud)
    radius = args.radius if args.radius > 0.0 else 3.0 * mnn
    voxel = args.voxel_size if args.voxel_size > 0.0 else 2.0 * mnn
    threshold = args.threshold if args.threshold > 0.0 else mnn
    conditioned = pcl.voxel_downsample(
        pcl.radius_outlier_removal(cloud, radius, args.min_neighbors), voxel)
    planes = pcl.detect_planes(conditioned, max_planes=args.max_planes,
                               threshold=threshold,
                               min_inlier_fraction=args.min_inlier_fraction,
                               max_iterations=args.max_iterations, seed=seed)
    if args.complete:
        conditioned = pcl.complete_shape(conditioned, args.complete, planes)
    origin = pcl.centroid(conditioned)
    try:
        frame = pcl.define_target_frame(planes, origin)
    except DegenerateGeometryError:
        # centroid-anchored identity axes when the planes cannot fix a frame
        frame = pcl.TargetFrame(origin, Rotation.identity())
    (out / "conditioned.ply").write_bytes(ingest.write_ply(conditioned))
    doc = {
        "conditioning": {"median_nn_distance": mnn, "radius": radius,
                         "min_neighbors": args.min_neighbors,
                         "voxel_size": voxel},
        "ransac": {"threshold": threshold, "seed": seed},
        "planes": [p.as_dict() for p in planes],
        "centroid": [float(v) for v in origin],
        "frame": frame.as_dict(),
    }
    (out / "planes.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'conditioned.ply'} ({len(conditioned)} points)")
    print(f"wrote {out / 'planes.json'} ({len(planes)} planes)")
    return 0


def _load_frame(path: Path) -> pcl.TargetFrame:
    doc = json.loads(path.read_text())
    frame = doc.get("frame", doc)
    cols = np.array(frame["axes_columns_xyz"], dtype=float).T
    return pcl.TargetFrame(origin=np.array(frame["origin"], dtype=float),
                           axes=Rotation.from_matrix(cols))


def _cmd_estimate(args) -> int:
    out = _out_dir(args)
    _log_params(out, args)
    traj = ingest.read_trajectory_csv(args.trajectory.read_text())
    if args.frame_rate > 0.0:
        traj = ingest.assign_timestamps(traj, args.frame_rate)
    frame = _load_frame(args.frame) if args.frame else pcl.TargetFrame.identity()
    if args.scale_length > 0.0:
        if args.scale_point_a is None or args.scale_point_b is None:
            raise ConfigError("--scale-length needs --scale-point-a and "
                              "--scale-point-b")
        scale = scale_from_known_length(args.scale_point_a,
                                        args.scale_point_b, args.scale_length)
    else:
        scale = ScaleReference(args.scale_c, "CLI scale coefficient")
    est = estimate_motion(traj, frame, scale)
    (out / "motion.csv").write_text(motion_csv_text(est))
    (out / "motion_summary.json").write_text(motion_summary_text(est))
    print(f"wrote {out / 'motion.csv'} ({len(est)} intervals)")
    print(f"wrote {out / 'motion_summary.json'}")
    if not args.no_figures:
        for p in report.render_all(est, out):
            print(f"wrote {p}")
    return 0


def _cmd_evaluate(args) -> int:
    out = _out_dir(args)
    _log_params(out, args)
    series = read_motion_csv(args.motion.read_text())
    t_mid = series["t_mid"]
    # the motion CSV stores midpoints only; recover the interval bounds
    # assuming the (usual) uniform sampling
    dt = np.full(len(t_mid), float(np.median(np.diff(t_mid)))) \
        if len(t_mid) > 1 else np.array([1.0])
    bounds = np.append(t_mid - 0.5 * dt, t_mid[-1] + 0.5 * dt[-1])
    if args.truth_csv:
        truth = read_truth_csv(args.truth_csv.read_text()).at(bounds)
    else:
        doc = load_config_file(args.truth_config)
        if "simulate" not in doc:
            raise ConfigError("--truth-config must contain a [simulate] table")
        spec = _build_spec(SimulateSpec, doc["simulate"], "simulate")
        truth = truth_from_config(spec.sim_config(), bounds)

    # rebuild a minimal estimate for the shared metric path
    from .motion import MotionEstimate, fit_sine
    fits = {}
    for i, axis in enumerate("xyz"):
        try:
            fits[f"omega_{axis}"] = fit_sine(t_mid, series["omega"][:, i])
        except (SfmotionError, ValueError):
            fits[f"omega_{axis}"] = None
    est = MotionEstimate(
        t_mid=t_mid, dt=dt, norm_change=series["norm_change"],
        radial_speed=series["radial_speed"], velocity=series["velocity"],
        phi=series["omega"] * 0.0, omega=series["omega"],
        frame=pcl.TargetFrame.identity(), sine_fits=fits)
    rep = evaluate_motion(est, truth)
    (out / "eval.json").write_text(rep.json_text())
    print(f"wrote {out / 'eval.json'}")
    print(rep.json_text(), end="")
    return 0


def _cmd_pipeline(args) -> int:
    doc = apply_overrides(load_config_file(args.config), args.set)
    config = build_pipeline_config(doc, output_dir=args.output_dir,
                                   seed=args.seed)
    result = run_pipeline(config)
    for name, path in sorted(result.artifacts.items()):
        print(f"wrote {path}")
    if result.report is not None:
        print(f"runtime: {result.report.runtime_seconds:.2f} s")
        print(result.report.json_text(), end="")
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "pcl": _cmd_pcl,
    "estimate": _cmd_estimate,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except SfmotionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
