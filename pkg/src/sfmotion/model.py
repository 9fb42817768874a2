"""Shared data model: pose trajectories, point clouds, feature statistics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .geometry import Pose

FRAME_SFM = "sfm_gauge"
FRAME_METRIC = "metric"


@dataclass(frozen=True)
class PoseTrajectory:
    """Time-ordered camera poses around a static reconstruction.

    frame_tag records whether centers live in the arbitrary SfM gauge
    ("sfm_gauge") or in meters ("metric", e.g. simulator output).
    """

    poses: tuple[Pose, ...]
    frame_tag: str = FRAME_SFM
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if self.frame_tag not in (FRAME_SFM, FRAME_METRIC):
            raise ValueError(f"unknown frame_tag {self.frame_tag!r}")
        ts = [p.timestamp for p in self.poses]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("pose timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self) -> Iterator[Pose]:
        return iter(self.poses)

    def __getitem__(self, i: int) -> Pose:
        return self.poses[i]

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self.poses])

    @property
    def centers(self) -> np.ndarray:
        """(N, 3) camera centers in the world frame."""
        if not self.poses:
            return np.zeros((0, 3))
        return np.stack([p.center for p in self.poses])

    def with_poses(self, poses: Sequence[Pose]) -> "PoseTrajectory":
        return replace(self, poses=tuple(poses))


class PointCloud:
    """Sparse reconstruction points with optional color and track length."""

    __slots__ = ("points", "colors", "track_lengths")

    def __init__(self, points, colors=None, track_lengths=None):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts
        if colors is not None:
            colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
            if len(colors) != len(pts):
                raise ValueError("colors must match point count")
        self.colors = colors
        if track_lengths is not None:
            track_lengths = np.asarray(track_lengths, dtype=np.int64).reshape(-1)
            if len(track_lengths) != len(pts):
                raise ValueError("track_lengths must match point count")
        self.track_lengths = track_lengths

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    @classmethod
    def sanitized(cls, points, colors=None, track_lengths=None
                  ) -> tuple["PointCloud", int]:
        """Build a cloud dropping non-finite rows; returns (cloud, n_dropped)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        keep = np.all(np.isfinite(pts), axis=1)
        dropped = int(len(pts) - keep.sum())
        if colors is not None:
            colors = np.asarray(colors)[keep]
        if track_lengths is not None:
            track_lengths = np.asarray(track_lengths)[keep]
        return cls(pts[keep], colors, track_lengths), dropped

    def __len__(self) -> int:
        return len(self.points)

    def select(self, index) -> "PointCloud":
        """Sub-cloud at the given indices/boolean mask, metadata included."""
        return PointCloud(
            self.points[index],
            None if self.colors is None else self.colors[index],
            None if self.track_lengths is None else self.track_lengths[index],
        )

    def __repr__(self) -> str:
        extras = []
        if self.colors is not None:
            extras.append("colors")
        if self.track_lengths is not None:
            extras.append("tracks")
        tag = (" with " + ", ".join(extras)) if extras else ""
        return f"PointCloud({len(self)} points{tag})"


@dataclass(frozen=True)
class FeatureFrame:
    """Per-frame observed feature/track count."""

    frame_id: str
    timestamp: float
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("feature count must be >= 0")


@dataclass(frozen=True)
class FeatureReport:
    """Time history of detected features used by the reconstruction."""

    frames: tuple[FeatureFrame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)

    def __bool__(self) -> bool:
        return bool(self.frames)
