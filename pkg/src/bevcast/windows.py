"""Slice tracks into training samples and persist them.

A window is one sample for one target vehicle at anchor frame t: 19 history
rasters at frames t-72..t (step 4, ~3 s) and 31 future positions at frames
t+4..t+124 (~5 s), expressed in meters relative to the TV's position at the
anchor frame, so the TV sits at (0, 0).

On disk each window is a directory ``<root>/<split>/<tv_id>/<t>/`` holding a
``meta.txt`` key-value file (coordinates as full-precision decimal text) and
one raw raster file per history frame: an 8-byte little-endian header (rows,
cols as uint32) followed by float32 row-major payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError, IntegrityError, RangeError, SplitError
from .raster import RASTER_HEIGHT, RASTER_WIDTH, RoiBox, SceneRaster, compute_roi, rasterize_frame
from .tracks import RecordingMeta, Track

HISTORY_STEPS = 19
FUTURE_STEPS = 31
FRAME_STEP = 4
HISTORY_SPAN = FRAME_STEP * (HISTORY_STEPS - 1)   # 72 frames, 2.88 s
FUTURE_SPAN = FRAME_STEP * FUTURE_STEPS           # 124 frames, 4.96 s

SPLITS = ("train", "test", "eval")
TRAIN_FRACTION = 0.6
TEST_FRACTION = 0.2

DEFAULT_STRIDE = 25  # 1 s between consecutive anchor frames of one TV

_RASTER_HEADER = struct.Struct("<II")


@dataclass
class Window:
    """One sample; invariants (19 history rasters, 31 future pairs, TV at the
    origin at frame t) are enforced by extract_window and the disk round trip."""

    tv_id: int
    t: int
    history: list[SceneRaster]
    future: np.ndarray            # (31, 2) float64, meters relative to anchor
    split_tag: str | None = None
    vx: float = 0.0               # TV velocity at the anchor frame
    vy: float = 0.0
    anchor_x: float = 0.0         # absolute TV position at the anchor frame
    anchor_y: float = 0.0
    tv_w: float = 4.5             # TV footprint, for report overlays
    tv_h: float = 2.0
    history_xy: np.ndarray = field(default_factory=lambda: np.zeros((HISTORY_STEPS, 2)))
    meters_per_pixel: float = 0.10106

    @property
    def anchor_roi(self) -> RoiBox:
        return self.history[-1].roi

    def history_array(self) -> np.ndarray:
        """(19, 48, 416) float32 stack, oldest frame first."""
        return np.stack([r.occupancy for r in self.history])


def iter_anchor_frames(track: Track, stride: int = DEFAULT_STRIDE):
    """Anchor frames admitting a full history and future within the track."""
    t = track.first_frame + HISTORY_SPAN
    last = track.last_frame - FUTURE_SPAN
    while t <= last:
        yield t
        t += stride


def extract_window(
    track: Track,
    all_tracks: Sequence[Track],
    t: int,
    meta: RecordingMeta,
    split_tag: str | None = None,
) -> Window:
    """Build the sample anchored at frame t, re-centering the ROI on the TV at
    every history frame."""
    if t - HISTORY_SPAN < track.first_frame or t + FUTURE_SPAN > track.last_frame:
        raise RangeError(
            f"track {track.id}: frame {t} needs [{t - HISTORY_SPAN}, {t + FUTURE_SPAN}] "
            f"but track covers [{track.first_frame}, {track.last_frame}]"
        )
    anchor = track.state_at(t)

    history = []
    history_xy = np.empty((HISTORY_STEPS, 2), dtype=np.float64)
    for j in range(HISTORY_STEPS):
        f = t - HISTORY_SPAN + FRAME_STEP * j
        states = {tr.id: tr.state_at(f) for tr in all_tracks if tr.covers(f)}
        if track.id not in states:
            raise IntegrityError(f"target vehicle {track.id} absent at frame {f}")
        tv_state = states[track.id]
        roi = compute_roi(tv_state, meta)
        history.append(rasterize_frame(states, roi, track.id, f, meta))
        history_xy[j] = (tv_state.x - anchor.x, tv_state.y - anchor.y)

    future = np.empty((FUTURE_STEPS, 2), dtype=np.float64)
    for k in range(1, FUTURE_STEPS + 1):
        s = track.state_at(t + FRAME_STEP * k)
        future[k - 1] = (s.x - anchor.x, s.y - anchor.y)

    return Window(
        tv_id=track.id,
        t=t,
        history=history,
        future=future,
        split_tag=split_tag,
        vx=anchor.vx,
        vy=anchor.vy,
        anchor_x=anchor.x,
        anchor_y=anchor.y,
        tv_w=anchor.w,
        tv_h=anchor.h,
        history_xy=history_xy,
        meters_per_pixel=meta.meters_per_pixel,
    )


def extract_corpus(
    tracks: Sequence[Track],
    meta: RecordingMeta,
    target_ids: Sequence[int],
    stride: int = DEFAULT_STRIDE,
) -> list[Window]:
    by_id = {tr.id: tr for tr in tracks}
    windows = []
    for tv_id in target_ids:
        track = by_id[tv_id]
        for t in iter_anchor_frames(track, stride):
            windows.append(extract_window(track, tracks, t, meta))
    return windows


def split_dataset(windows: Sequence[Window], seed: int) -> list[Window]:
    """Assign 60/20/20 train/test/eval tags at the TV level (all windows of a
    TV share one tag); deterministic for a fixed seed."""
    tv_ids = sorted({w.tv_id for w in windows})
    if len(tv_ids) < 5:
        raise SplitError(f"need at least 5 target vehicles to split 60/20/20, got {len(tv_ids)}")
    rng = np.random.default_rng(seed)
    order = [tv_ids[i] for i in rng.permutation(len(tv_ids))]
    n = len(order)
    n_train = int(n * TRAIN_FRACTION)
    n_test = int(n * TEST_FRACTION)
    tag_of = {}
    for i, tv in enumerate(order):
        tag_of[tv] = "train" if i < n_train else "test" if i < n_train + n_test else "eval"
    out = list(windows)
    for w in out:
        w.split_tag = tag_of[w.tv_id]
    return out


def _format_pair(xy) -> str:
    return f"{float(xy[0])!r} {float(xy[1])!r}"


def save_window(window: Window, root) -> Path:
    if window.split_tag not in SPLITS:
        raise ConfigError(f"window {window.tv_id}/{window.t} has no split tag; split before saving")
    if len(window.history) != HISTORY_STEPS or len(window.future) != FUTURE_STEPS:
        raise FormatError(
            f"window {window.tv_id}/{window.t} violates invariants: "
            f"{len(window.history)} history rasters, {len(window.future)} future steps"
        )
    out = Path(root) / window.split_tag / str(window.tv_id) / str(window.t)
    out.mkdir(parents=True, exist_ok=True)

    lines = [
        f"tv_id = {window.tv_id}",
        f"t = {window.t}",
        f"split = {window.split_tag}",
        f"vx = {float(window.vx)!r}",
        f"vy = {float(window.vy)!r}",
        f"anchor_x = {float(window.anchor_x)!r}",
        f"anchor_y = {float(window.anchor_y)!r}",
        f"tv_w = {float(window.tv_w)!r}",
        f"tv_h = {float(window.tv_h)!r}",
        f"meters_per_pixel = {float(window.meters_per_pixel)!r}",
    ]
    for k in range(FUTURE_STEPS):
        lines.append(f"future.{k + 1:02d} = {_format_pair(window.future[k])}")
    for j in range(HISTORY_STEPS):
        lines.append(f"history_xy.{j:02d} = {_format_pair(window.history_xy[j])}")
    for j, r in enumerate(window.history):
        lines.append(f"raster.{j:02d} = {r.frame} {r.roi.back} {r.roi.front} {r.roi.top} {r.roi.bottom}")
    (out / "meta.txt").write_text("\n".join(lines) + "\n")

    for j, r in enumerate(window.history):
        arr = np.ascontiguousarray(r.occupancy, dtype=np.float32)
        payload = _RASTER_HEADER.pack(arr.shape[0], arr.shape[1]) + arr.astype("<f4").tobytes()
        (out / f"raster_{j:02d}.bin").write_bytes(payload)
    return out


def _read_raster_file(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < _RASTER_HEADER.size:
        raise FormatError(f"truncated raster file {path}")
    rows, cols = _RASTER_HEADER.unpack_from(data)
    expected = _RASTER_HEADER.size + rows * cols * 4
    if len(data) != expected:
        raise FormatError(f"raster file {path} has {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f4", offset=_RASTER_HEADER.size).reshape(rows, cols)


def load_window(path) -> Window:
    path = Path(path)
    meta_path = path / "meta.txt"
    if not meta_path.is_file():
        raise FormatError(f"window record {path} has no meta.txt")
    fields: dict[str, str] = {}
    for line in meta_path.read_text().splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise FormatError(f"malformed line in {meta_path}: {line!r}")
        fields[key] = value

    def pair(value: str) -> tuple[float, float]:
        a, b = value.split()
        return float(a), float(b)

    try:
        tv_id = int(fields["tv_id"])
        t = int(fields["t"])
        split = fields["split"]
        scalars = {
            key: float(fields[key])
            for key in ("vx", "vy", "anchor_x", "anchor_y", "tv_w", "tv_h", "meters_per_pixel")
        }
        future = np.array([pair(fields[f"future.{k + 1:02d}"]) for k in range(FUTURE_STEPS)])
        history_xy = np.array([pair(fields[f"history_xy.{j:02d}"]) for j in range(HISTORY_STEPS)])
        rasters = []
        for j in range(HISTORY_STEPS):
            frame_s, back, front, top, bottom = fields[f"raster.{j:02d}"].split()
            occupancy = _read_raster_file(path / f"raster_{j:02d}.bin")
            rasters.append(
                SceneRaster(
                    occupancy=occupancy,
                    roi=RoiBox(int(back), int(front), int(top), int(bottom)),
                    tv_id=tv_id,
                    frame=int(frame_s),
                )
            )
    except KeyError as exc:
        raise FormatError(f"window record {path} is missing field {exc}") from None
    except (ValueError, FileNotFoundError) as exc:
        raise FormatError(f"window record {path} is corrupt: {exc}") from None

    if split not in SPLITS:
        raise FormatError(f"window record {path} has unknown split {split!r}")
    for j, r in enumerate(rasters):
        expected_frame = t - HISTORY_SPAN + FRAME_STEP * j
        if r.frame != expected_frame:
            raise FormatError(
                f"window record {path}: raster {j} is at frame {r.frame}, expected {expected_frame}"
            )
    return Window(
        tv_id=tv_id,
        t=t,
        history=rasters,
        future=future,
        split_tag=split,
        history_xy=history_xy,
        **scalars,
    )


def _numeric_key(p: Path):
    return (0, int(p.name)) if p.name.isdigit() else (1, p.name)


def window_dirs(root, split: str | None = None) -> list[Path]:
    root = Path(root)
    splits = [split] if split else list(SPLITS)
    found = []
    for s in splits:
        base = root / s
        if not base.is_dir():
            continue
        for tv_dir in sorted(base.iterdir(), key=_numeric_key):
            if tv_dir.is_dir():
                found.extend(sorted((d for d in tv_dir.iterdir() if d.is_dir()), key=_numeric_key))
    return found


def save_corpus(windows: Sequence[Window], root) -> int:
    for w in windows:
        save_window(w, root)
    return len(windows)


def load_split(root, split: str) -> list[Window]:
    return [load_window(d) for d in window_dirs(root, split)]
