"""Readers/writers for SfM outputs and the internal exchange formats.

Two SfM dialects are accepted and normalized into the internal model:

1. Reconstruction JSON (docs/formats.md): a top-level array of
   reconstructions, each with "cameras", "shots" (axis-angle "rotation",
   "translation" per shot, world-to-camera) and "points"
   (id -> {"coordinates", "color"}). When several partial reconstructions
   are present the one with the most shots wins.
2. Images/points3D text files: per-image line
   IMAGE_ID qw qx qy qz tx ty tz CAMERA_ID NAME followed by an observations
   line of (x, y, point3d_id) triples; per-point line
   ID X Y Z R G B ERROR (image_id, point2d_idx)*.

Both store the world-to-camera rotation with translation t; camera centers
are recovered as c = -R^T t. Shots are ordered by image name (or an explicit
name->seconds timing map) and timestamped 0, 1, 2, ... frames until
assign_timestamps() rescales them.

The internal trajectory format is a CSV with header
time_s,qw,qx,qy,qz,cx,cy,cz (world-to-camera quaternion, camera center),
9 significant digits. Clouds travel as ASCII PLY.
"""

from __future__ import annotations

import io
import json
import logging
import math

import numpy as np

from .errors import (EmptyInputError, ParseError, SchemaError,
                     UnsupportedFormatError)
from .geometry import Pose, Rotation, pose_from_rt, so3_exp
from .model import FeatureFrame, FeatureReport, PointCloud, PoseTrajectory

log = logging.getLogger(__name__)

TRAJECTORY_CSV_HEADER = "time_s,qw,qx,qy,qz,cx,cy,cz"


# ---------------------------------------------------------------------------
# reconstruction JSON

def parse_reconstruction_json(data: bytes, timings: dict[str, float] | None = None
                              ) -> tuple[PoseTrajectory, PointCloud, FeatureReport]:
    """Parse the reconstruction-JSON dialect into (trajectory, cloud, features).

    timings optionally maps shot name -> capture time in seconds; without it
    shots are ordered lexicographically by name and timestamped by index.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"input is not valid UTF-8: {e.reason}", offset=e.start)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", offset=e.pos)

    if isinstance(doc, dict):
        doc = [doc]  # single-reconstruction files omit the array
    if not isinstance(doc, list) or not all(isinstance(r, dict) for r in doc):
        raise SchemaError("top level must be a reconstruction object or array")
    recs = [r for r in doc if isinstance(r.get("shots"), dict)]
    if not recs:
        raise SchemaError("no reconstruction with a 'shots' field")
    rec = max(recs, key=lambda r: len(r["shots"]))
    shots = rec["shots"]
    if not shots:
        raise EmptyInputError("reconstruction has zero shots")

    names = sorted(shots)
    if timings is not None:
        missing = [n for n in names if n not in timings]
        if missing:
            raise SchemaError(f"timing entry missing for shot {missing[0]!r}")
        names.sort(key=lambda n: (timings[n], n))

    poses = []
    for idx, name in enumerate(names):
        shot = shots[name]
        if not isinstance(shot, dict):
            raise SchemaError(f"shot {name!r} is not an object")
        rvec = _require_triple(shot, "rotation", f"shot {name!r}")
        tvec = _require_triple(shot, "translation", f"shot {name!r}")
        ts = float(timings[name]) if timings is not None else float(idx)
        try:
            poses.append(pose_from_rt(so3_exp(rvec), tvec, ts))
        except ValueError as e:
            raise SchemaError(f"shot {name!r}: {e}")

    points_map = rec.get("points", {})
    if not isinstance(points_map, dict):
        raise SchemaError("'points' must be an object")
    coords, colors, tracks = [], [], []
    obs_counts: dict[str, int] = {}
    have_color = True
    have_tracks = True
    for pid, rec_pt in points_map.items():
        if not isinstance(rec_pt, dict):
            raise SchemaError(f"point {pid!r} is not an object")
        coords.append(_require_triple(rec_pt, "coordinates", f"point {pid!r}"))
        col = rec_pt.get("color")
        if col is None:
            have_color = False
        elif have_color:
            colors.append(_as_floats(col, 3, f"point {pid!r} color"))
        obs = rec_pt.get("observations")
        if not isinstance(obs, dict):
            obs = rec_pt.get("reprojection_errors")
        if isinstance(obs, dict):
            tracks.append(len(obs))
            for shot_name in obs:
                obs_counts[shot_name] = obs_counts.get(shot_name, 0) + 1
        else:
            have_tracks = False

    cloud, dropped = PointCloud.sanitized(
        np.array(coords, dtype=np.float64).reshape(-1, 3),
        np.clip(np.array(colors, dtype=np.float64).reshape(-1, 3), 0, 255)
        if have_color and coords else None,
        np.array(tracks, dtype=np.int64) if have_tracks and coords else None,
    )
    if dropped:
        log.warning("dropped %d non-finite points from reconstruction JSON", dropped)

    frames = tuple(
        FeatureFrame(frame_id=n, timestamp=p.timestamp,
                     count=obs_counts.get(n, 0))
        for n, p in zip(names, poses)
    ) if obs_counts else ()
    traj = PoseTrajectory(tuple(poses), source="reconstruction-json")
    return traj, cloud, FeatureReport(frames)


def _require_triple(obj: dict, key: str, where: str) -> list[float]:
    if key not in obj:
        raise SchemaError(f"{where}: missing required field '{key}'")
    return _as_floats(obj[key], 3, f"{where} field '{key}'")


def _as_floats(value, n: int, where: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SchemaError(f"{where} must be a list of {n} numbers")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise SchemaError(f"{where} must contain numbers")
    return out


# ---------------------------------------------------------------------------
# images / points3D text dialect

def parse_colmap_text(images_text: bytes, points3d_text: bytes
                      ) -> tuple[PoseTrajectory, PointCloud, FeatureReport]:
    """Parse the images/points3D text dialect (see module docstring)."""
    records = _parse_images_text(images_text)
    if not records:
        raise EmptyInputError("images file contains no image records")
    records.sort(key=lambda r: r[0])

    poses = []
    frames = []
    for idx, (name, rot, tvec, n_obs) in enumerate(records):
        pose = pose_from_rt(rot, tvec, float(idx))
        poses.append(pose)
        frames.append(FeatureFrame(frame_id=name, timestamp=float(idx),
                                   count=n_obs))

    pts, colors, tracks = _parse_points3d_text(points3d_text)
    cloud, dropped = PointCloud.sanitized(pts, colors, tracks)
    if dropped:
        log.warning("dropped %d non-finite points from points3D file", dropped)
    traj = PoseTrajectory(tuple(poses), source="images/points3D text")
    return traj, cloud, FeatureReport(tuple(frames))


def _decode_lines(data: bytes, what: str) -> list[str]:
    try:
        return data.decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise ParseError(f"{what} is not valid UTF-8: {e.reason}", offset=e.start)


def _parse_images_text(data: bytes) -> list[tuple[str, Rotation, list[float], int]]:
    records = []
    pending = None  # (lineno, name, rot, tvec) awaiting its observations line
    for lineno, raw in enumerate(_decode_lines(data, "images file"), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if pending is None:
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 10:
                raise ParseError(
                    f"image line needs >= 10 tokens, got {len(tokens)}",
                    line=lineno)
            try:
                qw, qx, qy, qz, tx, ty, tz = map(float, tokens[1:8])
            except ValueError:
                raise ParseError("non-numeric pose value on image line",
                                 line=lineno)
            if not all(map(math.isfinite, (qw, qx, qy, qz, tx, ty, tz))):
                raise ParseError("non-finite pose value on image line",
                                 line=lineno)
            if qw * qw + qx * qx + qy * qy + qz * qz < 1e-24:
                raise ParseError("zero quaternion on image line", line=lineno)
            name = " ".join(tokens[9:])
            pending = (name, Rotation((qw, qx, qy, qz)), [tx, ty, tz])
        else:
            tokens = line.split()
            if len(tokens) % 3 != 0:
                raise ParseError(
                    "observations line must hold (x, y, point3d_id) triples, "
                    f"got {len(tokens)} tokens", line=lineno)
            ids = tokens[2::3]
            n_obs = sum(1 for i in ids if i != "-1")
            records.append((*pending, n_obs))
            pending = None
    if pending is not None:
        records.append((*pending, 0))  # trailing image without observations line
    return records


def _parse_points3d_text(data: bytes):
    pts, colors, tracks = [], [], []
    for lineno, raw in enumerate(_decode_lines(data, "points3D file"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 8 or (len(tokens) - 8) % 2 != 0:
            raise ParseError(
                f"point line needs 8 + 2k tokens, got {len(tokens)}",
                line=lineno)
        try:
            x, y, z = map(float, tokens[1:4])
            r, g, b = (int(float(v)) for v in tokens[4:7])
        except ValueError:
            raise ParseError("non-numeric value on point line", line=lineno)
        pts.append((x, y, z))
        colors.append((min(max(r, 0), 255), min(max(g, 0), 255),
                       min(max(b, 0), 255)))
        tracks.append((len(tokens) - 8) // 2)
    if not pts:
        return np.zeros((0, 3)), None, None
    return (np.array(pts, dtype=np.float64), np.array(colors, dtype=np.uint8),
            np.array(tracks, dtype=np.int64))


# ---------------------------------------------------------------------------
# ASCII PLY

_PLY_FLOAT_TYPES = {"float", "float32", "float64", "double"}


def read_ply(data: bytes) -> PointCloud:
    """Read an ASCII PLY vertex cloud (x y z [red green blue])."""
    lines = _decode_lines(data, "PLY file")
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic line", line=1)

    elements: list[tuple[str, int, list[str]]] = []  # (name, count, props)
    fmt = None
    i = 1
    while i < len(lines):
        tokens = lines[i].strip().split()
        i += 1
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) < 2:
                raise ParseError("bad format line", line=i)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError("bad element line", line=i)
            try:
                count = int(tokens[2])
            except ValueError:
                raise ParseError("non-integer element count", line=i)
            if count < 0:
                raise ParseError("negative element count", line=i)
            elements.append((tokens[1], count, []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element", line=i)
            if len(tokens) < 2:
                raise ParseError("bad property line", line=i)
            if tokens[1] == "list":
                elements[-1][2].append("list")
            else:
                if len(tokens) != 3:
                    raise ParseError("bad property line", line=i)
                elements[-1][2].append(tokens[2])
        elif tokens[0] == "end_header":
            break
        else:
            raise ParseError(f"unexpected header keyword {tokens[0]!r}", line=i)
    else:
        raise ParseError("missing end_header", line=len(lines))

    if fmt != "ascii":
        raise UnsupportedFormatError(
            f"only ASCII PLY is supported, got format {fmt!r}")
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise SchemaError("PLY file has no 'vertex' element")
    props = vertex[2]
    for axis in ("x", "y", "z"):
        if axis not in props:
            raise SchemaError(f"vertex element missing property '{axis}'")
    col_idx = {p: j for j, p in enumerate(props)}
    has_color = all(c in col_idx for c in ("red", "green", "blue"))

    body = [ln for ln in lines[i:] if ln.strip()]
    pts, colors = [], []
    row = 0
    for name, count, elem_props in elements:
        if row + count > len(body):
            raise ParseError(
                f"element '{name}' declares {count} rows but data ran out",
                line=i + row + 1)
        if name == "vertex":
            if "list" in elem_props:
                raise UnsupportedFormatError("list properties on vertex "
                                             "element are not supported")
            for k in range(count):
                tokens = body[row + k].split()
                if len(tokens) != len(elem_props):
                    raise ParseError(
                        f"vertex row has {len(tokens)} values, expected "
                        f"{len(elem_props)}", line=i + row + k + 1)
                try:
                    vals = [float(v) for v in tokens]
                except ValueError:
                    raise ParseError("non-numeric vertex value",
                                     line=i + row + k + 1)
                pts.append([vals[col_idx["x"]], vals[col_idx["y"]],
                            vals[col_idx["z"]]])
                if has_color:
                    colors.append([vals[col_idx["red"]],
                                   vals[col_idx["green"]],
                                   vals[col_idx["blue"]]])
        row += count

    if not pts:
        return PointCloud.empty()
    colors_arr = None
    if has_color:
        colors_arr = np.clip(np.array(colors, dtype=np.float64), 0, 255)
    cloud, dropped = PointCloud.sanitized(
        np.array(pts, dtype=np.float64), colors_arr)
    if dropped:
        log.warning("dropped %d non-finite points from PLY", dropped)
    return cloud


def write_ply(cloud: PointCloud) -> bytes:
    """Serialize a cloud as ASCII PLY with 9-significant-digit coordinates."""
    out = io.StringIO()
    out.write("ply\nformat ascii 1.0\n")
    out.write(f"element vertex {len(cloud)}\n")
    out.write("property float x\nproperty float y\nproperty float z\n")
    if cloud.colors is not None:
        out.write("property uchar red\nproperty uchar green\n"
                  "property uchar blue\n")
    out.write("end_header\n")
    for j in range(len(cloud)):
        x, y, z = cloud.points[j]
        line = f"{x:.9g} {y:.9g} {z:.9g}"
        if cloud.colors is not None:
            r, g, b = cloud.colors[j]
            line += f" {r} {g} {b}"
        out.write(line + "\n")
    return out.getvalue().encode("ascii")


# ---------------------------------------------------------------------------
# internal trajectory CSV

def assign_timestamps(traj: PoseTrajectory, frame_rate_hz: float
                      ) -> PoseTrajectory:
    """Restamp poses to index / frame_rate_hz, preserving order."""
    if frame_rate_hz <= 0.0:
        raise ValueError("frame_rate_hz must be positive")
    poses = [p.with_timestamp(i / frame_rate_hz)
             for i, p in enumerate(traj.poses)]
    return traj.with_poses(poses)


def write_trajectory_csv(traj: PoseTrajectory, stream) -> None:
    stream.write(TRAJECTORY_CSV_HEADER + "\n")
    for p in traj.poses:
        qw, qx, qy, qz = p.rotation.quat
        row = [p.timestamp, qw, qx, qy, qz, *p.center]
        stream.write(",".join(f"{v:.9g}" for v in row) + "\n")


def trajectory_csv_text(traj: PoseTrajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


def read_trajectory_csv(text: str, frame_tag: str = "sfm_gauge",
                        source: str = "trajectory-csv") -> PoseTrajectory:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyInputError("trajectory CSV is empty")
    if lines[0] != TRAJECTORY_CSV_HEADER:
        raise SchemaError(
            f"expected header '{TRAJECTORY_CSV_HEADER}', got {lines[0]!r}")
    poses = []
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split(",")
        if len(tokens) != 8:
            raise ParseError(f"trajectory row needs 8 values, got "
                             f"{len(tokens)}", line=lineno)
        try:
            t, qw, qx, qy, qz, cx, cy, cz = map(float, tokens)
        except ValueError:
            raise ParseError("non-numeric trajectory value", line=lineno)
        try:
            poses.append(Pose(Rotation((qw, qx, qy, qz)), (cx, cy, cz), t))
        except ValueError as e:
            raise ParseError(str(e), line=lineno)
    if not poses:
        raise EmptyInputError("trajectory CSV has a header but no rows")
    return PoseTrajectory(tuple(poses), frame_tag=frame_tag, source=source)


def write_features_csv(report: FeatureReport, stream) -> None:
    stream.write("frame_id,time_s,feature_count\n")
    for f in report.frames:
        stream.write(f"{f.frame_id},{f.timestamp:.9g},{f.count}\n")


def features_csv_text(report: FeatureReport) -> str:
    buf = io.StringIO()
    write_features_csv(report, buf)
    return buf.getvalue()
