"""Config-driven pipeline: input -> condition -> frame -> estimate -> evaluate.

The configuration is a TOML file with one input-source table, either
[simulate] or [reconstruction], plus optional [conditioning], [ransac],
[frame], [scale] and [output] tables; see docs/formats.md for every key.
Precedence is CLI overrides > config file > defaults. Each run writes the
resolved parameter set into the output directory, and identical
configuration + seed produces byte-identical artifacts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cloud as pcl
from . import ingest, report
from .errors import ConfigError, PipelineError, SfmotionError
from .evaluate import EvalReport, TruthSeries, evaluate_motion
from .geometry import Rotation
from .model import FeatureFrame, FeatureReport, PointCloud
from .motion import (MotionEstimate, ScaleReference, estimate_motion,
                     motion_csv_text, motion_summary_text, radius_vectors,
                     scale_from_known_length)
from .rigidbody import (InertiaModel, RigidBodyState, SimConfig,
                        inject_pose_noise, simulate, states_at,
                        to_camera_trajectory, truth_csv_text)

try:
    import tomllib  # py311+
except ModuleNotFoundError:
    import tomli as tomllib


@dataclass(frozen=True)
class SimulateSpec:
    duration_s: float = 2990.0
    frames: int | None = None  # overrides duration_s as (frames-1)*interval
    sample_interval_s: float = 10.0
    integrator_dt_s: float = 0.1
    inertia_kg_m2: tuple[float, float, float] = (0.47, 0.47, 0.02)
    torque_n_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    omega0_deg_s: tuple[float, float, float] = (0.0, 0.1, 1.0)
    v0_m_s: tuple[float, float, float] = (0.0045, 0.0, 0.0)
    position0_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    camera_position_m: tuple[float, float, float] = (30.0, 0.0, 0.0)
    noise_sigma_rot_deg: float = 0.0
    noise_sigma_trans: float = 0.0

    def sim_config(self) -> SimConfig:
        duration = self.duration_s
        if self.frames is not None:
            if self.frames < 2:
                raise ConfigError("simulate.frames must be >= 2")
            duration = (self.frames - 1) * self.sample_interval_s
        initial = RigidBodyState(
            attitude=Rotation.identity(),
            omega=np.radians(self.omega0_deg_s),
            position=np.array(self.position0_m, dtype=float),
            velocity=np.array(self.v0_m_s, dtype=float),
            time=0.0)
        return SimConfig(
            initial=initial,
            inertia=InertiaModel(*self.inertia_kg_m2,
                                 torque=np.array(self.torque_n_m, dtype=float)),
            duration=duration,
            sample_interval=self.sample_interval_s,
            integrator_dt=self.integrator_dt_s,
            camera_position_inertial=np.array(self.camera_position_m,
                                              dtype=float))


@dataclass(frozen=True)
class ReconstructionSpec:
    format: str = "json"  # "json" | "colmap"
    path: str = ""        # json dialect
    images: str = ""      # colmap dialect
    points3d: str = ""
    ply: str = ""         # optional extra cloud overriding the parsed one
    frame_rate_hz: float = 0.0  # 0 keeps parser frame-index timestamps


@dataclass(frozen=True)
class ConditioningSpec:
    radius: float = 0.0        # 0 = auto (3 x median NN distance)
    min_neighbors: int = 4
    voxel_size: float = 0.0    # 0 = auto (2 x median NN distance)
    complete: str = ""         # "", "cube", "cylinder"


@dataclass(frozen=True)
class RansacSpec:
    threshold: float = 0.0     # 0 = auto (1 x median NN distance)
    max_iterations: int = 1000
    min_inlier_fraction: float = 0.15
    max_planes: int = 6


@dataclass(frozen=True)
class ScaleSpec:
    c: float = 1.0
    length_m: float = 0.0
    point_a: tuple[float, float, float] | None = None
    point_b: tuple[float, float, float] | None = None

    def resolve(self) -> ScaleReference:
        if self.length_m > 0.0:
            if self.point_a is None or self.point_b is None:
                raise ConfigError(
                    "scale.length_m needs scale.point_a and scale.point_b")
            return scale_from_known_length(self.point_a, self.point_b,
                                           self.length_m)
        return ScaleReference(self.c, "configured scale coefficient")


@dataclass(frozen=True)
class PipelineConfig:
    output_dir: Path
    seed: int = 0
    simulate: SimulateSpec | None = None
    reconstruction: ReconstructionSpec | None = None
    conditioning: ConditioningSpec = field(default_factory=ConditioningSpec)
    ransac: RansacSpec = field(default_factory=RansacSpec)
    frame_identity: bool | None = None  # None = identity iff simulate source
    scale: ScaleSpec = field(default_factory=ScaleSpec)
    figures: bool = True

    def __post_init__(self):
        if (self.simulate is None) == (self.reconstruction is None):
            raise ConfigError("exactly one input source required: "
                              "[simulate] or [reconstruction]")


@dataclass
class PipelineResult:
    report: EvalReport | None
    artifacts: dict[str, Path]
    estimate: MotionEstimate


# ---------------------------------------------------------------------------
# config loading

_KNOWN_TABLES = {"simulate", "reconstruction", "conditioning", "ransac",
                 "frame", "scale", "output"}


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {p}: {e}")


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply dotted key=value strings (values parsed as TOML) onto the doc."""
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through scalar key {part!r}")
        node[parts[-1]] = value
    return doc


def _build_spec(cls, table: dict, where: str):
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(table) - fields
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    kwargs = {}
    for key, value in table.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{where}]: {e}")


def build_pipeline_config(doc: dict, output_dir=None, seed=None
                          ) -> PipelineConfig:
    unknown = {k for k in doc if isinstance(doc[k], dict)} - _KNOWN_TABLES
    if unknown:
        raise ConfigError(f"unknown config table(s): {sorted(unknown)}")
    out_table = doc.get("output", {})
    resolved_out = Path(output_dir if output_dir is not None
                        else out_table.get("directory", "out"))
    frame_table = doc.get("frame", {})
    return PipelineConfig(
        output_dir=resolved_out,
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        simulate=(_build_spec(SimulateSpec, doc["simulate"], "simulate")
                  if "simulate" in doc else None),
        reconstruction=(_build_spec(ReconstructionSpec, doc["reconstruction"],
                                    "reconstruction")
                        if "reconstruction" in doc else None),
        conditioning=_build_spec(ConditioningSpec,
                                 doc.get("conditioning", {}), "conditioning"),
        ransac=_build_spec(RansacSpec, doc.get("ransac", {}), "ransac"),
        frame_identity=frame_table.get("identity"),
        scale=_build_spec(ScaleSpec, doc.get("scale", {}), "scale"),
        figures=bool(out_table.get("figures", True)),
    )


def effective_params(config: PipelineConfig) -> dict:
    """Fully-resolved parameter set for the run log (defaults filled in)."""
    def spec_dict(spec):
        if spec is None:
            return None
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in spec.__dict__.items()}

    # output_dir is deliberately not logged: it is where this file lives,
    # and embedding it would make otherwise-identical runs differ bytewise.
    return {
        "seed": config.seed,
        "figures": config.figures,
        "simulate": spec_dict(config.simulate),
        "reconstruction": spec_dict(config.reconstruction),
        "conditioning": spec_dict(config.conditioning),
        "ransac": spec_dict(config.ransac),
        "frame_identity": config.frame_identity,
        "scale": spec_dict(config.scale),
    }


# ---------------------------------------------------------------------------
# stages

def _read_file(path: str, what: str) -> bytes:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p.read_bytes()


def _stage_input(config: PipelineConfig):
    """Returns (trajectory, cloud|None, features|None, truth|None, sim_config|None)."""
    if config.simulate is not None:
        spec = config.simulate
        sim_config = spec.sim_config()
        states = simulate(sim_config)
        traj = to_camera_trajectory(states, sim_config.camera_position_inertial)
        if spec.noise_sigma_rot_deg > 0.0 or spec.noise_sigma_trans > 0.0:
            traj = inject_pose_noise(traj, spec.noise_sigma_rot_deg,
                                     spec.noise_sigma_trans, seed=config.seed)
        return traj, None, None, TruthSeries.from_states(states), sim_config

    spec = config.reconstruction
    if spec.format == "json":
        if not spec.path:
            raise ConfigError("reconstruction.path required for json format")
        traj, cloud, features = ingest.parse_reconstruction_json(
            _read_file(spec.path, "reconstruction"))
    elif spec.format == "colmap":
        if not spec.images or not spec.points3d:
            raise ConfigError("reconstruction.images and reconstruction."
                              "points3d required for colmap format")
        traj, cloud, features = ingest.parse_colmap_text(
            _read_file(spec.images, "images"),
            _read_file(spec.points3d, "points3D"))
    else:
        raise ConfigError(f"unknown reconstruction.format {spec.format!r}")
    if spec.frame_rate_hz > 0.0:
        traj = ingest.assign_timestamps(traj, spec.frame_rate_hz)
        if features:
            features = FeatureReport(tuple(
                FeatureFrame(f.frame_id, i / spec.frame_rate_hz, f.count)
                for i, f in enumerate(features.frames)))
    if spec.ply:
        cloud = ingest.read_ply(_read_file(spec.ply, "PLY"))
    return traj, cloud, features, None, None


def _stage_condition(cloud: PointCloud, spec: ConditioningSpec
                     ) -> tuple[PointCloud, dict]:
    mnn = pcl.median_nn_distance(cloud)
    radius = spec.radius if spec.radius > 0.0 else 3.0 * mnn
    voxel = spec.voxel_size if spec.voxel_size > 0.0 else 2.0 * mnn
    out = pcl.radius_outlier_removal(cloud, radius, spec.min_neighbors)
    if len(out) == 0:
        raise SfmotionError("conditioning removed every point; relax "
                            "radius/min_neighbors")
    out = pcl.voxel_downsample(out, voxel)
    resolved = {"median_nn_distance": mnn, "radius": radius,
                "min_neighbors": spec.min_neighbors, "voxel_size": voxel}
    return out, resolved


def _stage_planes(cloud: PointCloud, spec: RansacSpec, seed: int
                  ) -> tuple[list, dict]:
    mnn = pcl.median_nn_distance(cloud)
    threshold = spec.threshold if spec.threshold > 0.0 else mnn
    planes = pcl.detect_planes(cloud, max_planes=spec.max_planes,
                               threshold=threshold,
                               min_inlier_fraction=spec.min_inlier_fraction,
                               max_iterations=spec.max_iterations, seed=seed)
    resolved = {"threshold": threshold, "max_planes": spec.max_planes,
                "min_inlier_fraction": spec.min_inlier_fraction,
                "max_iterations": spec.max_iterations, "seed": seed}
    return planes, resolved


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Execute all configured stages; writes artifacts into output_dir."""
    t_start = time.perf_counter()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    artifacts["params"] = _write_text(
        out / "params.json",
        json.dumps(effective_params(config), indent=2, sort_keys=True) + "\n")

    def run_stage(name, fn, *args):
        try:
            return fn(*args)
        except PipelineError:
            raise
        except Exception as e:
            raise PipelineError(name, e)

    traj, cloud, features, truth, sim_config = run_stage(
        "input", _stage_input, config)
    artifacts["trajectory"] = _write_text(out / "trajectory.csv",
                                          ingest.trajectory_csv_text(traj))
    if truth is not None:
        artifacts["truth"] = _write_text(
            out / "truth.csv",
            truth_csv_text(states_at(sim_config, truth.time)))
    if features:
        artifacts["features"] = _write_text(out / "features.csv",
                                            ingest.features_csv_text(features))

    planes: list = []
    plane_log: dict = {}
    frame = pcl.TargetFrame.identity()
    if cloud is not None and len(cloud) > 0:
        conditioned, cond_log = run_stage("condition", _stage_condition,
                                          cloud, config.conditioning)
        planes, ransac_log = run_stage("planes", _stage_planes, conditioned,
                                       config.ransac, config.seed + 1)
        if config.conditioning.complete:
            conditioned = run_stage(
                "complete", pcl.complete_shape, conditioned,
                config.conditioning.complete, planes)
        artifacts["cloud"] = out / "conditioned.ply"
        artifacts["cloud"].write_bytes(ingest.write_ply(conditioned))
        origin = run_stage("frame", pcl.centroid, conditioned)
        if config.frame_identity is True:
            # identity axes, but still anchored at the cloud centroid
            frame = pcl.TargetFrame(origin, Rotation.identity())
        else:
            frame = run_stage("frame", pcl.define_target_frame, planes, origin)
        plane_log = {"conditioning": cond_log, "ransac": ransac_log,
                     "planes": [p.as_dict() for p in planes],
                     "centroid": [float(v) for v in origin]}
    else:
        if config.frame_identity is False:
            raise PipelineError("frame", ConfigError(
                "frame.identity = false requires a point cloud input"))
    plane_log["frame"] = frame.as_dict()
    artifacts["planes"] = _write_text(
        out / "planes.json", json.dumps(plane_log, indent=2, sort_keys=True) + "\n")

    scale = run_stage("estimate", config.scale.resolve)
    est = run_stage("estimate", estimate_motion, traj, frame, scale)
    artifacts["motion"] = _write_text(out / "motion.csv",
                                      motion_csv_text(est))
    artifacts["summary"] = _write_text(out / "motion_summary.json",
                                       motion_summary_text(est))

    eval_report = None
    if truth is not None:
        truth_bounds = run_stage(
            "evaluate",
            lambda: TruthSeries.from_states(
                states_at(sim_config, est.interval_bounds())))
        eval_report = run_stage("evaluate", evaluate_motion, est,
                                truth_bounds)
        eval_report = EvalReport(
            omega_rmse_deg_s=eval_report.omega_rmse_deg_s,
            linear_speed_rmse_m_s=eval_report.linear_speed_rmse_m_s,
            period_relative_error_pct=eval_report.period_relative_error_pct,
            n_estimates=eval_report.n_estimates,
            n_truth=eval_report.n_truth,
            runtime_seconds=time.perf_counter() - t_start)
        artifacts["eval"] = _write_text(out / "eval.json",
                                        eval_report.json_text())

    if config.figures:
        r = radius_vectors(traj, frame.origin)
        paths = run_stage(
            "figures", report.render_all, est, out,
            truth, features,
            (traj.timestamps, np.linalg.norm(r, axis=1)))
        for p in paths:
            artifacts[p.stem] = p

    return PipelineResult(report=eval_report, artifacts=artifacts,
                          estimate=est)
