"""Seeded synthetic highway scenes with analytic ground-truth futures.

Vehicles move at constant longitudinal speed; a vehicle may perform one
smooth lane change (logistic lateral profile). Because every trajectory has
a closed form, the exact future of any vehicle is available independently of
the windowing code path, which makes the full pipeline verifiable without
license-gated recordings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GenerationError, RangeError
from .tracks import (
    POSITIVE_X,
    RecordingMeta,
    Track,
    VehicleState,
    write_recording_meta,
    write_tracks,
)

# Future slice: 31 steps of 4 frames each (0.16 s per step at 25 Hz).
FUTURE_STEPS = 31
FRAME_STEP = 4

_PACKING_REGION_M = 400.0  # initial placement span per lane
_MIN_GAP_M = 12.0
_MAX_GAP_M = 35.0
_LENGTH_RANGE = (4.0, 5.5)
_WIDTH_RANGE = (1.8, 2.2)


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    n_vehicles: int
    n_lanes: int = 3
    lane_width: float = 3.6
    duration: float = 30.0
    speed_range: tuple[float, float] = (8.0, 12.0)
    lane_change_probability: float = 0.0
    lane_change_duration: float = 4.0

    def __post_init__(self):
        if self.n_lanes < 1:
            raise GenerationError("n_lanes must be >= 1")
        if self.n_vehicles < 1:
            raise GenerationError("n_vehicles must be >= 1")
        if self.duration < 8.0:
            raise GenerationError("duration must be >= 8 s (one full history+future slice)")
        lo, hi = self.speed_range
        if not (0.0 <= lo <= hi):
            raise GenerationError(f"invalid speed_range {self.speed_range}")
        if not (0.0 <= self.lane_change_probability <= 1.0):
            raise GenerationError("lane_change_probability must lie in [0, 1]")


@dataclass(frozen=True)
class MotionPlan:
    """Closed-form trajectory of one synthetic vehicle (upper-left corner)."""

    vehicle_id: int
    x0: float
    vx: float
    y0: float
    length: float
    width: float
    y1: float | None = None          # lateral target when lane-changing
    change_start: float | None = None
    change_duration: float = 4.0

    @property
    def changes_lane(self) -> bool:
        return self.y1 is not None

    def x_at(self, t: float) -> float:
        return self.x0 + self.vx * t

    def _logistic(self, t: float) -> float:
        # Steepness 8/duration puts ~98% of the transition inside the window.
        k = 8.0 / self.change_duration
        mid = self.change_start + self.change_duration / 2.0
        return 1.0 / (1.0 + math.exp(-k * (t - mid)))

    def y_at(self, t: float) -> float:
        if not self.changes_lane:
            return self.y0
        return self.y0 + (self.y1 - self.y0) * self._logistic(t)

    def vy_at(self, t: float) -> float:
        if not self.changes_lane:
            return 0.0
        k = 8.0 / self.change_duration
        s = self._logistic(t)
        return (self.y1 - self.y0) * k * s * (1.0 - s)


@dataclass(frozen=True)
class SyntheticScene:
    spec: SceneSpec
    tracks: list[Track]
    meta: RecordingMeta
    plans: dict[int, MotionPlan]


def _rects_disjoint(pa: MotionPlan, pb: MotionPlan, times: np.ndarray) -> bool:
    for t in times:
        ax, bx = pa.x_at(t), pb.x_at(t)
        if ax < bx + pb.length and bx < ax + pa.length:
            ay, by = pa.y_at(t), pb.y_at(t)
            if ay < by + pb.width and by < ay + pa.width:
                return False
    return True


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Deterministically generate a scene; no two vehicle rectangles ever overlap."""
    rng = np.random.default_rng(spec.seed)
    fps = 25.0
    n_frames = int(round(spec.duration * fps)) + 1
    times = np.arange(n_frames) / fps

    lanes: dict[int, list[int]] = {lane: [] for lane in range(spec.n_lanes)}
    for vid in range(1, spec.n_vehicles + 1):
        lanes[(vid - 1) % spec.n_lanes].append(vid)

    plans: dict[int, MotionPlan] = {}
    for lane, vids in lanes.items():
        if not vids:
            continue
        lengths = rng.uniform(*_LENGTH_RANGE, size=len(vids))
        widths = rng.uniform(*_WIDTH_RANGE, size=len(vids))
        # Rear-to-front speeds sorted ascending: same-lane gaps never shrink.
        speeds = np.sort(rng.uniform(spec.speed_range[0], spec.speed_range[1], size=len(vids)))
        cursor = rng.uniform(0.0, 15.0)
        lane_center = (lane + 0.5) * spec.lane_width
        for i, vid in enumerate(vids):
            if cursor + lengths[i] > _PACKING_REGION_M:
                raise GenerationError(
                    f"cannot pack {len(vids)} vehicles into lane {lane}: "
                    f"placement exceeds {_PACKING_REGION_M} m"
                )
            plans[vid] = MotionPlan(
                vehicle_id=vid,
                x0=float(cursor),
                vx=float(speeds[i]),
                y0=float(lane_center - widths[i] / 2.0),
                length=float(lengths[i]),
                width=float(widths[i]),
                change_duration=spec.lane_change_duration,
            )
            cursor += lengths[i] + rng.uniform(_MIN_GAP_M, _MAX_GAP_M)

    # Lane changes are vetted frame-by-frame against every committed plan.
    if spec.lane_change_probability > 0.0 and spec.n_lanes > 1:
        for vid in sorted(plans):
            if rng.random() >= spec.lane_change_probability:
                continue
            dur = spec.lane_change_duration
            if spec.duration < dur + 1.0:
                continue
            plan = plans[vid]
            lane = int((plan.y0 + plan.width / 2.0) // spec.lane_width)
            options = [l for l in (lane - 1, lane + 1) if 0 <= l < spec.n_lanes]
            target = int(rng.choice(options))
            start = float(rng.uniform(0.5, spec.duration - dur - 0.5))
            candidate = MotionPlan(
                vehicle_id=vid,
                x0=plan.x0,
                vx=plan.vx,
                y0=plan.y0,
                length=plan.length,
                width=plan.width,
                y1=float((target + 0.5) * spec.lane_width - plan.width / 2.0),
                change_start=start,
                change_duration=dur,
            )
            others = [p for other, p in plans.items() if other != vid]
            if all(_rects_disjoint(candidate, p, times) for p in others):
                plans[vid] = candidate

    tracks = []
    for vid in sorted(plans):
        plan = plans[vid]
        states = []
        for f in range(n_frames):
            t = f / fps
            y = plan.y_at(t)
            lane_id = int((y + plan.width / 2.0) // spec.lane_width) + 1
            states.append(
                VehicleState(
                    frame=f,
                    x=plan.x_at(t),
                    y=y,
                    w=plan.length,
                    h=plan.width,
                    vx=plan.vx,
                    vy=plan.vy_at(t),
                    lane_id=lane_id,
                )
            )
        tracks.append(Track(id=vid, states=tuple(states), direction=POSITIVE_X))

    max_front = max(p.x_at(spec.duration) + p.length for p in plans.values())
    meta = RecordingMeta(
        frame_rate=fps,
        lane_boundaries=tuple(j * spec.lane_width for j in range(spec.n_lanes + 1)),
        road_length=float(math.ceil(max_front + 10.0)),
    )
    return SyntheticScene(spec=spec, tracks=tracks, meta=meta, plans=plans)


def oracle_future(scene: SyntheticScene, tv_id: int, t: int) -> np.ndarray:
    """Exact relative future of vehicle ``tv_id`` from its closed-form plan.

    Returns a (31, 2) array of displacements at frames t+4k, k = 1..31,
    relative to the position at frame t. Independent of the windowing code.
    """
    plan = scene.plans.get(tv_id)
    if plan is None:
        raise RangeError(f"no synthetic plan for vehicle {tv_id}")
    track = next(tr for tr in scene.tracks if tr.id == tv_id)
    if t + FRAME_STEP * FUTURE_STEPS > track.last_frame or t < track.first_frame:
        raise RangeError(
            f"vehicle {tv_id}: frame {t} does not admit {FUTURE_STEPS} future steps"
        )
    fps = scene.meta.frame_rate
    x_ref, y_ref = plan.x_at(t / fps), plan.y_at(t / fps)
    out = np.empty((FUTURE_STEPS, 2), dtype=np.float64)
    for k in range(1, FUTURE_STEPS + 1):
        tf = (t + FRAME_STEP * k) / fps
        out[k - 1, 0] = plan.x_at(tf) - x_ref
        out[k - 1, 1] = plan.y_at(tf) - y_ref
    return out


def write_scene(scene: SyntheticScene, out_dir) -> tuple[Path, Path]:
    """Persist the scene in the same file formats the ingester consumes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tracks_path = out / "tracks.csv"
    meta_path = out / "recordingMeta.csv"
    write_tracks(scene.tracks, tracks_path)
    write_recording_meta(scene.meta, meta_path)
    return tracks_path, meta_path
