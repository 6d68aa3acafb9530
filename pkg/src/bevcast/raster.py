"""Top-view occupancy rasterization around a target vehicle.

The region of interest extends 27 m ahead of and behind the TV's bounding box
and 6 m to each side. All quantities are converted from meters to pixels
once, with floor semantics, before any box arithmetic; the ROI is rasterized
at native resolution and then resized to the canonical 48x416 grid by exact
area averaging, so occupancy values stay in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import IntegrityError, ShapeError
from .tracks import RecordingMeta, VehicleState, meters_to_pixels

LONGITUDINAL_MARGIN_M = 27.0  # 90 ft * 0.3 m/ft each way
LATERAL_MARGIN_M = 6.0

RASTER_HEIGHT = 48
RASTER_WIDTH = 416

TV_COLOR = (255, 255, 0)  # previews draw the target vehicle in yellow


@dataclass(frozen=True)
class GridSpec:
    rows: int = 3            # lateral
    cols: int = 13           # longitudinal
    patch_height: int = 16
    patch_width: int = 32

    def __post_init__(self):
        if self.rows * self.patch_height != RASTER_HEIGHT:
            raise ShapeError("grid rows * patch_height must equal the raster height")
        if self.cols * self.patch_width != RASTER_WIDTH:
            raise ShapeError("grid cols * patch_width must equal the raster width")


GRID = GridSpec()


@dataclass(frozen=True)
class RoiBox:
    """Half-open pixel intervals [back, front) x [top, bottom) in the road frame."""

    back: int
    front: int
    top: int
    bottom: int

    def __post_init__(self):
        if self.front <= self.back or self.bottom <= self.top:
            raise ShapeError(f"degenerate ROI {self}")

    @property
    def width(self) -> int:
        return self.front - self.back

    @property
    def height(self) -> int:
        return self.bottom - self.top


@dataclass(frozen=True)
class SceneRaster:
    occupancy: np.ndarray  # (48, 416) float32 in [0, 1]
    roi: RoiBox
    tv_id: int
    frame: int

    def __post_init__(self):
        if self.occupancy.shape != (RASTER_HEIGHT, RASTER_WIDTH):
            raise ShapeError(f"raster must be {RASTER_HEIGHT}x{RASTER_WIDTH}, got {self.occupancy.shape}")


def compute_roi(tv: VehicleState, meta: RecordingMeta) -> RoiBox:
    """TV-centered ROI; every meter quantity is floored to pixels independently,
    so the longitudinal span is always px(w) + 2*px(27) regardless of position."""
    px = lambda v: meters_to_pixels(v, meta)
    lon, lat = px(LONGITUDINAL_MARGIN_M), px(LATERAL_MARGIN_M)
    return RoiBox(
        back=px(tv.x) - lon,
        front=px(tv.x) + px(tv.w) + lon,
        top=px(tv.y) - lat,
        bottom=px(tv.y) + px(tv.h) + lat,
    )


def _pixel_rect(state: VehicleState, meta: RecordingMeta) -> tuple[int, int, int, int]:
    px = lambda v: meters_to_pixels(v, meta)
    x0, y0 = px(state.x), px(state.y)
    return x0, x0 + px(state.w), y0, y0 + px(state.h)


@lru_cache(maxsize=256)
def _resize_weights(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) box-overlap weights; each row averages one output cell."""
    w = np.zeros((n_dst, n_src), dtype=np.float64)
    scale = n_src / n_dst
    for i in range(n_dst):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_src)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= scale
    return w


def area_resize(img: np.ndarray, out_h: int = RASTER_HEIGHT, out_w: int = RASTER_WIDTH) -> np.ndarray:
    """Exact area-average resize; preserves the mean, identity when shapes match."""
    if img.shape == (out_h, out_w):
        return img.astype(np.float64, copy=True)
    wr = _resize_weights(img.shape[0], out_h)
    wc = _resize_weights(img.shape[1], out_w)
    return wr @ img.astype(np.float64) @ wc.T


def rasterize_rectangles(
    rects_px: Sequence[tuple[int, int, int, int]], roi: RoiBox
) -> np.ndarray:
    """Fill (x0, x1, y0, y1) pixel rectangles clipped to the ROI; resize to canon.

    Returns a (48, 416) float32 array in [0, 1]. ROI pixels not covered by any
    rectangle (including anything beyond the road extent) stay background 0.
    """
    img = np.zeros((roi.height, roi.width), dtype=np.float64)
    for x0, x1, y0, y1 in rects_px:
        cx0, cx1 = max(x0, roi.back), min(x1, roi.front)
        cy0, cy1 = max(y0, roi.top), min(y1, roi.bottom)
        if cx0 < cx1 and cy0 < cy1:
            img[cy0 - roi.top : cy1 - roi.top, cx0 - roi.back : cx1 - roi.back] = 1.0
    resized = area_resize(img)
    return np.clip(resized, 0.0, 1.0).astype(np.float32)


def rasterize_frame(
    states: dict[int, VehicleState],
    roi: RoiBox,
    tv_id: int,
    frame: int,
    meta: RecordingMeta,
) -> SceneRaster:
    """Occupancy raster of one frame: every vehicle rectangle intersecting the
    ROI is drawn as 1.0 on a zero background. ``states`` maps vehicle id to its
    state at this frame; the TV must be present."""
    if tv_id not in states:
        raise IntegrityError(f"target vehicle {tv_id} absent at frame {frame}")
    rects = [_pixel_rect(s, meta) for s in states.values()]
    return SceneRaster(
        occupancy=rasterize_rectangles(rects, roi),
        roi=roi,
        tv_id=tv_id,
        frame=frame,
    )


def neighbor_color(vehicle_id: int, seed: int) -> tuple[int, int, int]:
    """Deterministic per-id pseudo-random RGB; injective in id for a fixed seed
    (odd multiplier is a bijection mod 2^24)."""
    c = (vehicle_id * 2654435761 + seed * 40503) & 0xFFFFFF
    return (c >> 16) & 0xFF, (c >> 8) & 0xFF, c & 0xFF


def render_preview(
    states: dict[int, VehicleState],
    roi: RoiBox,
    tv_id: int,
    meta: RecordingMeta,
    seed: int = 0,
    path=None,
) -> Image.Image:
    """Human-inspection image at native ROI resolution: neighbors in seeded
    per-id colors, the TV in yellow (drawn last). Not a model input."""
    rgb = np.zeros((roi.height, roi.width, 3), dtype=np.uint8)

    def fill(state, color):
        x0, x1, y0, y1 = _pixel_rect(state, meta)
        cx0, cx1 = max(x0, roi.back), min(x1, roi.front)
        cy0, cy1 = max(y0, roi.top), min(y1, roi.bottom)
        if cx0 < cx1 and cy0 < cy1:
            rgb[cy0 - roi.top : cy1 - roi.top, cx0 - roi.back : cx1 - roi.back] = color

    for vid, state in states.items():
        if vid != tv_id:
            fill(state, neighbor_color(vid, seed))
    if tv_id in states:
        fill(states[tv_id], TV_COLOR)

    image = Image.fromarray(rgb, mode="RGB")
    if path is not None:
        image.save(Path(path), format="PNG")
    return image


def partition_grid(raster, grid: GridSpec = GRID) -> np.ndarray:
    """Split a canonical raster into a (rows, cols, 16, 32) patch array."""
    arr = raster.occupancy if isinstance(raster, SceneRaster) else np.asarray(raster)
    if arr.shape != (RASTER_HEIGHT, RASTER_WIDTH):
        raise ShapeError(f"cannot partition raster of shape {arr.shape}")
    patches = arr.reshape(grid.rows, grid.patch_height, grid.cols, grid.patch_width)
    return patches.swapaxes(1, 2)


def assemble_grid(patches: np.ndarray, grid: GridSpec = GRID) -> np.ndarray:
    """Inverse of partition_grid."""
    expected = (grid.rows, grid.cols, grid.patch_height, grid.patch_width)
    if patches.shape != expected:
        raise ShapeError(f"expected patches of shape {expected}, got {patches.shape}")
    return patches.swapaxes(1, 2).reshape(RASTER_HEIGHT, RASTER_WIDTH)
