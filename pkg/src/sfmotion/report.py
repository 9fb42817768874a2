"""Figure rendering for the report path.

Renders the estimated time histories (and ground truth when available) to
PNG files next to the delimited outputs. Uses the Agg backend; figures are
deterministic for identical inputs so pipeline runs stay byte-reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import TruthSeries
from .model import FeatureReport
from .motion import MotionEstimate, period_of

_PNG_META = {"Software": None}  # drop the version string from the PNG header
_DPI = 130


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_angular_velocity(est: MotionEstimate, out_dir: Path,
                            truth: TruthSeries | None = None) -> Path:
    """Three stacked panels: estimated omega components (deg/s) vs time,
    the fitted sine curves, and the true values when known."""
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7.0, 7.5))
    est_deg = np.degrees(est.omega)
    t_dense = np.linspace(est.t_mid[0], est.t_mid[-1], 600)
    for i, (ax, axis) in enumerate(zip(axes, "xyz")):
        if truth is not None:
            ax.plot(truth.time, np.degrees(truth.omega[:, i]), "-",
                    color="tab:red", lw=1.2, label="truth")
        fit = est.sine_fits.get(f"omega_{axis}")
        if fit is not None:
            ax.plot(t_dense, np.degrees(fit.evaluate(t_dense)), "--",
                    color="tab:blue", lw=1.0,
                    label=f"sine fit (T={period_of(fit):.4g} s)")
        ax.plot(est.t_mid, est_deg[:, i], ".", color="tab:blue", ms=3.5,
                label="estimate")
        ax.set_ylabel(f"$\\omega_{axis}$ [deg/s]")
        ax.grid(alpha=0.3)
        ax.legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("time [s]")
    fig.suptitle("Angular velocity in the body frame")
    fig.tight_layout()
    return _save(fig, out_dir / "angular_velocity.png")


def render_linear_velocity(est: MotionEstimate, out_dir: Path,
                           truth: TruthSeries | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    if truth is not None:
        ax.plot(truth.time, np.linalg.norm(truth.velocity, axis=1), "-",
                color="tab:red", lw=1.2, label="truth")
    ax.plot(est.t_mid, est.speed, ".", color="tab:blue", ms=3.5,
            label="estimate")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("linear speed [m/s]")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, out_dir / "linear_velocity.png")


def render_radius_norm(est: MotionEstimate, radius_norms: np.ndarray,
                       times: np.ndarray, out_dir: Path) -> Path:
    """Norm of the moving radius vector over time (range history)."""
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.plot(times, radius_norms, "-", color="tab:blue", lw=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("|radius vector| [SfM units]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_dir / "radius_norm.png")


def render_feature_counts(report: FeatureReport, out_dir: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    t = [f.timestamp for f in report.frames]
    c = [f.count for f in report.frames]
    ax.plot(t, c, "-", color="tab:blue", lw=1.0)
    ax.plot(t, c, ".", color="tab:blue", ms=3)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("detected feature points")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_dir / "feature_counts.png")


def render_all(est: MotionEstimate, out_dir: Path,
               truth: TruthSeries | None = None,
               features: FeatureReport | None = None,
               radius: tuple[np.ndarray, np.ndarray] | None = None
               ) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [
        render_angular_velocity(est, out_dir, truth),
        render_linear_velocity(est, out_dir, truth),
    ]
    if radius is not None:
        times, norms = radius
        paths.append(render_radius_norm(est, norms, times, out_dir))
    if features:
        paths.append(render_feature_counts(features, out_dir))
    return paths
