"""Parse highway track recordings (HighD-style CSV) into validated tracks.

The tracks file is comma-separated with a header row naming at least
``frame,id,x,y,width,height,xVelocity,yVelocity,laneId``; extra columns are
ignored. Positions are meters, the (x, y) reference point is the upper-left
corner of the vehicle's bounding box, and frames tick at the recording rate
(25 Hz for HighD).
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, IntegrityError

REQUIRED_COLUMNS = (
    "frame", "id", "x", "y", "width", "height", "xVelocity", "yVelocity", "laneId",
)

POSITIVE_X = "positive_x"
NEGATIVE_X = "negative_x"

# Scale of the aerial imagery the pipeline was calibrated on.
DEFAULT_METERS_PER_PIXEL = 0.10106
DEFAULT_FRAME_RATE = 25.0

# A target vehicle must be visible for a full 8 s trajectory slice.
MIN_TARGET_SECONDS = 8.0


@dataclass(frozen=True)
class VehicleState:
    """One vehicle at one frame; (x, y) is the bounding box's upper-left corner."""

    frame: int
    x: float
    y: float
    w: float
    h: float
    vx: float
    vy: float
    lane_id: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise IntegrityError(f"non-positive box size at frame {self.frame}: w={self.w}, h={self.h}")
        if self.frame < 0:
            raise IntegrityError(f"negative frame index {self.frame}")


@dataclass(frozen=True)
class Track:
    id: int
    states: tuple[VehicleState, ...]
    direction: str

    def __post_init__(self):
        if not self.states:
            raise IntegrityError(f"track {self.id} has no states")

    @property
    def first_frame(self) -> int:
        return self.states[0].frame

    @property
    def last_frame(self) -> int:
        return self.states[-1].frame

    def state_at(self, frame: int) -> VehicleState:
        """States are contiguous, so lookup is an index offset."""
        idx = frame - self.first_frame
        if idx < 0 or idx >= len(self.states):
            raise IntegrityError(f"track {self.id} has no state at frame {frame}")
        return self.states[idx]

    def covers(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame


@dataclass(frozen=True)
class RecordingMeta:
    frame_rate: float = DEFAULT_FRAME_RATE
    meters_per_pixel: float = DEFAULT_METERS_PER_PIXEL
    lane_boundaries: tuple[float, ...] = field(default=())
    road_length: float = 420.0

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise FormatError(f"frame_rate must be positive, got {self.frame_rate}")
        if self.meters_per_pixel <= 0:
            raise FormatError(f"meters_per_pixel must be positive, got {self.meters_per_pixel}")


def _open_text(source) -> io.TextIOBase:
    if hasattr(source, "read"):
        return source
    return open(Path(source), "r", newline="")


def parse_tracks(source) -> list[Track]:
    """Parse a tracks CSV (path or open text stream) into per-vehicle tracks.

    Raises FormatError for a missing required column and IntegrityError when
    a vehicle's frames are not strictly consecutive.
    """
    stream = _open_text(source)
    close = stream is not source
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames or []
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise FormatError(f"tracks file is missing required column '{col}'")
        by_id: dict[int, list[VehicleState]] = {}
        for row in reader:
            vid = int(float(row["id"]))
            state = VehicleState(
                frame=int(float(row["frame"])),
                x=float(row["x"]),
                y=float(row["y"]),
                w=float(row["width"]),
                h=float(row["height"]),
                vx=float(row["xVelocity"]),
                vy=float(row["yVelocity"]),
                lane_id=int(float(row["laneId"])),
            )
            by_id.setdefault(vid, []).append(state)
    finally:
        if close:
            stream.close()

    tracks = []
    for vid in sorted(by_id):
        states = sorted(by_id[vid], key=lambda s: s.frame)
        for prev, cur in zip(states, states[1:]):
            if cur.frame != prev.frame + 1:
                raise IntegrityError(
                    f"track id={vid} has non-contiguous frames ({prev.frame} -> {cur.frame})"
                )
        median_vx = statistics.median(s.vx for s in states)
        direction = POSITIVE_X if median_vx >= 0 else NEGATIVE_X
        tracks.append(Track(id=vid, states=tuple(states), direction=direction))
    return tracks


def serialize_tracks(tracks: Iterable[Track]) -> str:
    """Inverse of parse_tracks; floats use repr so a round trip is lossless."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(REQUIRED_COLUMNS)
    for track in tracks:
        for s in track.states:
            writer.writerow(
                [s.frame, track.id, repr(s.x), repr(s.y), repr(s.w), repr(s.h),
                 repr(s.vx), repr(s.vy), s.lane_id]
            )
    return out.getvalue()


def write_tracks(tracks: Iterable[Track], path) -> None:
    Path(path).write_text(serialize_tracks(tracks))


def filter_direction(tracks: Sequence[Track]) -> list[Track]:
    """Keep only the carriageway moving in the positive x direction."""
    return [t for t in tracks if t.direction == POSITIVE_X]


def meters_to_pixels(v: float, meta: RecordingMeta) -> int:
    """floor(v / meters_per_pixel), snapped to the nearest integer first.

    The snap (relative tolerance 1e-9) keeps exact integer multiples of the
    scale stable: k * mpp / mpp can land a few ulp below k, and plain floor
    would then lose a pixel.
    """
    q = v / meta.meters_per_pixel
    nearest = round(q)
    if abs(q - nearest) <= 1e-9 * max(1.0, abs(nearest)):
        return int(nearest)
    return math.floor(q)


def select_target_vehicles(tracks: Sequence[Track], meta: RecordingMeta) -> list[int]:
    """Ids usable as target vehicles: moving (median vx > 0) and visible long
    enough for at least one 8 s history+future slice."""
    min_frames = int(round(MIN_TARGET_SECONDS * meta.frame_rate))
    selected = []
    for t in tracks:
        if len(t.states) < min_frames:
            continue
        if statistics.median(s.vx for s in t.states) <= 0:
            continue
        selected.append(t.id)
    return selected


def parse_recording_meta(source) -> RecordingMeta:
    """Parse a recording-metadata CSV (single data row).

    ``frameRate`` is required. ``meterPerPixel`` falls back to the calibrated
    default, lane markings (``upperLaneMarkings``/``lowerLaneMarkings`` or
    ``laneMarkings``, semicolon-separated) and ``roadLength`` are optional.
    """
    stream = _open_text(source)
    close = stream is not source
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames or []
        if "frameRate" not in header:
            raise FormatError("recording meta file is missing required column 'frameRate'")
        try:
            row = next(reader)
        except StopIteration:
            raise FormatError("recording meta file has no data row") from None
    finally:
        if close:
            stream.close()

    def lane_values(*cols):
        vals = []
        for col in cols:
            raw = (row.get(col) or "").strip()
            if raw:
                vals.extend(float(v) for v in raw.split(";"))
        return tuple(vals)

    mpp = float(row["meterPerPixel"]) if row.get("meterPerPixel") else DEFAULT_METERS_PER_PIXEL
    road_length = float(row["roadLength"]) if row.get("roadLength") else 420.0
    return RecordingMeta(
        frame_rate=float(row["frameRate"]),
        meters_per_pixel=mpp,
        lane_boundaries=lane_values("laneMarkings", "upperLaneMarkings", "lowerLaneMarkings"),
        road_length=road_length,
    )


def write_recording_meta(meta: RecordingMeta, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frameRate", "meterPerPixel", "laneMarkings", "roadLength"])
        writer.writerow(
            [repr(meta.frame_rate), repr(meta.meters_per_pixel),
             ";".join(repr(b) for b in meta.lane_boundaries), repr(meta.road_length)]
        )
