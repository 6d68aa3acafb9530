"""RMSE scoring per time horizon, kinematic baselines, and report rendering.

Point predictions are the per-step Gaussian means. The error at horizon s
seconds is measured at future step k(s) = round(25 s / 4) (half up, clamped to
[1, 31]), i.e. steps 6/13/19/25/31 for 1..5 s, and averaged over test windows:

    rmse(s) = sqrt( (1/N) sum_windows [ (mu_x,k - x_k)^2 + (mu_y,k - y_k)^2 ] )

Everything is in meters in the anchor-relative frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .decoder import GaussianSequence
from .errors import EvaluationError
from .raster import rasterize_rectangles
from .tracks import RecordingMeta, meters_to_pixels
from .windows import FRAME_STEP, FUTURE_STEPS, Window

HORIZON_SECONDS = (1.0, 2.0, 3.0, 4.0, 5.0)

# Published RMSE (meters) on the same freeway benchmark, for report context.
REFERENCE_RMSE: dict[str, tuple[float, ...]] = {
    "S-LSTM": (0.22, 0.62, 1.27, 2.15, 3.41),
    "CS-LSTM": (0.22, 0.61, 1.24, 2.10, 3.27),
    "CS-LSTM(M)": (0.23, 0.615, 1.29, 2.18, 3.31),
    "NLS-LSTM": (0.20, 0.57, 1.14, 1.90, 2.91),
    "BEV-LSTM (reported)": (0.42, 0.88, 1.26, 1.57, 1.91),
}

_STEP_SECONDS = FRAME_STEP / 25.0  # 0.16 s between future steps


def horizon_step(seconds: float, frame_rate: float = 25.0) -> int:
    """Future step index (1-based) scored for a horizon; half-up rounding."""
    k = math.floor(seconds * frame_rate / FRAME_STEP + 0.5)
    return max(1, min(FUTURE_STEPS, k))


@dataclass(frozen=True)
class HorizonReport:
    """Per-horizon RMSE of one predictor plus the published rows for display."""

    horizons: tuple[float, ...]
    steps: tuple[int, ...]
    rmse: tuple[float, ...]
    sample_count: int
    reference: Mapping[str, tuple[float, ...]] = field(
        default_factory=lambda: dict(REFERENCE_RMSE)
    )

    def __post_init__(self):
        if self.sample_count <= 0:
            raise EvaluationError("a horizon report needs at least one window")
        if any(r < 0 or not math.isfinite(r) for r in self.rmse):
            raise EvaluationError(f"rmse values must be finite and nonnegative: {self.rmse}")


def _as_means(predictions) -> np.ndarray:
    """(N, 31, 2) float64 means from GaussianSequences or coordinate arrays."""
    rows = []
    for p in predictions:
        if isinstance(p, GaussianSequence):
            rows.append(p.values[:, 0:2])
        else:
            arr = np.asarray(p, dtype=np.float64)
            if arr.shape != (FUTURE_STEPS, 2):
                raise EvaluationError(f"prediction has shape {arr.shape}, expected (31, 2)")
            rows.append(arr)
    return np.asarray(rows, dtype=np.float64)


def rmse_per_horizon(
    predictions: Sequence,
    truths: Sequence,
    horizons: Sequence[float] = HORIZON_SECONDS,
) -> HorizonReport:
    """Score matched prediction/truth window sets at each horizon."""
    if len(predictions) == 0 or len(truths) == 0:
        raise EvaluationError("cannot evaluate an empty window set")
    if len(predictions) != len(truths):
        raise EvaluationError(
            f"{len(predictions)} predictions vs {len(truths)} truths; the sets must match"
        )
    mu = _as_means(predictions)
    xy = _as_means(truths)
    steps = tuple(horizon_step(s) for s in horizons)
    rmse = []
    for k in steps:
        total = 0.0
        for i in range(len(mu)):  # fixed summation order; the oracle mirrors it
            dx = mu[i, k - 1, 0] - xy[i, k - 1, 0]
            dy = mu[i, k - 1, 1] - xy[i, k - 1, 1]
            total += dx * dx + dy * dy
        rmse.append(math.sqrt(total / len(mu)))
    return HorizonReport(
        horizons=tuple(float(s) for s in horizons),
        steps=steps,
        rmse=tuple(rmse),
        sample_count=len(mu),
    )


def constant_velocity_baseline(window: Window) -> np.ndarray:
    """(31, 2): step k predicts the anchor velocity held for 0.16 k seconds."""
    k = np.arange(1, FUTURE_STEPS + 1, dtype=np.float64)
    dt = k * _STEP_SECONDS
    return np.stack([window.vx * dt, window.vy * dt], axis=1)


def constant_position_baseline(window: Window) -> np.ndarray:
    """(31, 2) zeros: the TV is pinned to its anchor position."""
    return np.zeros((FUTURE_STEPS, 2), dtype=np.float64)


_BASELINES = {
    "cv": ("constant velocity", constant_velocity_baseline),
    "cp": ("constant position", constant_position_baseline),
}


def baseline_reports(
    windows: Sequence[Window], names: Sequence[str] = ("cv", "cp")
) -> dict[str, HorizonReport]:
    """HorizonReports of the requested kinematic baselines on the windows."""
    if not windows:
        raise EvaluationError("cannot evaluate an empty window set")
    truths = [w.future for w in windows]
    out = {}
    for name in names:
        if name not in _BASELINES:
            raise EvaluationError(f"unknown baseline {name!r}; choose from {sorted(_BASELINES)}")
        label, fn = _BASELINES[name]
        out[label] = rmse_per_horizon([fn(w) for w in windows], truths)
    return out


def _table_lines(reports: Mapping[str, HorizonReport], include_reference: bool) -> list[str]:
    horizons = next(iter(reports.values())).horizons
    header = "predictor," + ",".join(f"rmse_{s:g}s" for s in horizons)
    lines = [header]
    for name, rep in reports.items():
        lines.append(name + "," + ",".join(f"{r:.6f}" for r in rep.rmse))
    if include_reference:
        for name, row in REFERENCE_RMSE.items():
            lines.append(name + "," + ",".join(f"{r:.6f}" for r in row))
    return lines


def write_rmse_table(
    reports: Mapping[str, HorizonReport], path, include_reference: bool = True
) -> None:
    if not reports:
        raise EvaluationError("nothing to tabulate: no reports were produced")
    Path(path).write_text("\n".join(_table_lines(reports, include_reference)) + "\n")


def _save_deterministic(fig, path) -> None:
    # strip the embedded timestamp so identical inputs give identical bytes
    fig.savefig(path, format="png", metadata={"Software": None, "Creation Time": None})
    plt.close(fig)


def plot_rmse_vs_horizon(
    reports: Mapping[str, HorizonReport], path, include_reference: bool = True
) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    for name, rep in reports.items():
        ax.plot(rep.horizons, rep.rmse, marker="o", label=name)
    if include_reference:
        for name, row in REFERENCE_RMSE.items():
            ax.plot(HORIZON_SECONDS, row, linestyle="--", linewidth=1.0, label=name)
    ax.set_xlabel("prediction horizon (s)")
    ax.set_ylabel("RMSE (m)")
    ax.set_xticks(HORIZON_SECONDS)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_deterministic(fig, path)


def _tv_mask(window: Window) -> np.ndarray:
    """Canonical-raster coverage of the TV footprint at the anchor frame."""
    meta = RecordingMeta(meters_per_pixel=window.meters_per_pixel)
    px = lambda v: meters_to_pixels(v, meta)
    x0, y0 = px(window.anchor_x), px(window.anchor_y)
    rect = (x0, x0 + px(window.tv_w), y0, y0 + px(window.tv_h))
    return rasterize_rectangles([rect], window.anchor_roi).astype(np.float64)


def plot_overlay(window: Window, prediction: GaussianSequence | np.ndarray | None, path) -> None:
    """Anchor-frame scene with trajectories: history white, truth green,
    predicted means red; the TV itself is tinted yellow."""
    occ = window.history[-1].occupancy.astype(np.float64)
    rgb = np.repeat(occ[:, :, None], 3, axis=2)
    tv = _tv_mask(window)
    rgb = rgb * (1.0 - tv[:, :, None]) + tv[:, :, None] * np.array([1.0, 1.0, 0.0])

    roi = window.anchor_roi
    mpp = window.meters_per_pixel
    left = roi.back * mpp - window.anchor_x
    right = roi.front * mpp - window.anchor_x
    top = roi.top * mpp - window.anchor_y
    bottom = roi.bottom * mpp - window.anchor_y

    fig, ax = plt.subplots(figsize=(8.0, 2.2), dpi=120)
    ax.imshow(rgb, extent=(left, right, bottom, top), origin="upper", aspect="equal")
    ax.plot(window.history_xy[:, 0], window.history_xy[:, 1], ".-", color="white",
            markersize=3, linewidth=1.0, label="history")
    ax.plot(window.future[:, 0], window.future[:, 1], ".", color="lime",
            markersize=3, label="ground truth")
    if prediction is not None:
        mu = _as_means([prediction])[0]
        ax.plot(mu[:, 0], mu[:, 1], ".", color="red", markersize=3, label="predicted")
    ax.set_xlabel("longitudinal offset (m)")
    ax.set_ylabel("lateral (m)")
    ax.legend(fontsize=6, loc="upper left")
    fig.tight_layout()
    _save_deterministic(fig, path)


def render_report(
    reports: Mapping[str, HorizonReport],
    out_dir,
    qualitative: Sequence[tuple[Window, GaussianSequence | np.ndarray | None]] = (),
    include_reference: bool = True,
) -> list[Path]:
    """Write the delimited RMSE table, the RMSE-vs-horizon figure, and one
    overlay figure per qualitative window. Returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created = []

    table = out / "rmse_table.csv"
    write_rmse_table(reports, table, include_reference)
    created.append(table)

    curve = out / "rmse_vs_horizon.png"
    plot_rmse_vs_horizon(reports, curve, include_reference)
    created.append(curve)

    for window, prediction in qualitative:
        overlay = out / f"overlay_{window.tv_id}_{window.t}.png"
        plot_overlay(window, prediction, overlay)
        created.append(overlay)
    return created
