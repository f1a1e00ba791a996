"""Multi-region, multi-scale crop grid around a target and the inverse placement.

Coordinates are continuous pixel coordinates: pixel ``i`` spans ``[i, i + 1)``.
Rectangles are integer ``(x, y, w, h)`` tuples.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_image, check_map
from .exceptions import ConfigurationError, DegenerateRegionError
from .imaging import clip_rect, resize_bilinear

PARTS = ("whole", "quad_tl", "quad_tr", "quad_bl", "quad_br", "inside", "outside")
SCALE_FACTOR = 0.75
MAX_CROP_EDGE = 256


@dataclass(frozen=True)
class RegionSpec:
    """One (part, scale) rectangle of the grid.

    ``rect`` and ``interior`` are already clipped to the canvas. ``interior``
    is set only for the ``outside`` part, whose central area is suppressed.
    ``raw_rect`` keeps the unclipped geometry.
    """

    part_id: str
    scale_index: int
    rect: tuple
    raw_rect: tuple
    mask_interior: bool = False
    interior: tuple = None

    @property
    def empty(self):
        return self.rect[2] == 0 or self.rect[3] == 0


@dataclass(frozen=True)
class RegionGrid:
    specs: tuple
    canvas: tuple
    center: tuple
    base_size: tuple

    @property
    def n_scales(self):
        return len(self.specs) // len(PARTS)

    def by_scale(self, n):
        return [s for s in self.specs if s.scale_index == n]


def _centered(cx, cy, w, h):
    return (int(math.floor(cx - w / 2 + 0.5)), int(math.floor(cy - h / 2 + 0.5)), w, h)


def make_region_grid(center, base_size, n_scales, canvas):
    """Seven parts at each of ``n_scales`` sizes ``n * 3/4 * base_size``.

    A part that falls completely outside the canvas is kept with zero area
    (see :attr:`RegionSpec.empty`) so the grid always has ``7 * n_scales``
    entries.

    Raises
    ------
    DegenerateRegionError
        If the base size is so small that some part has zero width or
        height before clipping.
    """
    cx, cy = center
    w0, h0 = base_size
    cw, ch = canvas
    if w0 <= 0 or h0 <= 0:
        raise ConfigurationError(f"base size must be positive, got {base_size}")
    if n_scales < 1:
        raise ConfigurationError("n_scales must be >= 1")
    if not (0 <= cx <= cw and 0 <= cy <= ch):
        raise ConfigurationError(f"center {center} lies outside canvas {canvas}")
    specs, bad = [], []
    for n in range(1, n_scales + 1):
        ww = int(round(n * SCALE_FACTOR * w0))
        hh = int(round(n * SCALE_FACTOR * h0))
        x, y, _, _ = whole = _centered(cx, cy, ww, hh)
        hw, hh2 = ww // 2, hh // 2
        inside = _centered(x + ww / 2, y + hh / 2, int(round(ww / 2)), int(round(hh / 2)))
        raws = {
            "whole": whole,
            "quad_tl": (x, y, hw, hh2),
            "quad_tr": (x + hw, y, ww - hw, hh2),
            "quad_bl": (x, y + hh2, hw, hh - hh2),
            "quad_br": (x + hw, y + hh2, ww - hw, hh - hh2),
            "inside": inside,
            "outside": whole,
        }
        for part in PARTS:
            raw = raws[part]
            outside = part == "outside"
            spec = RegionSpec(
                part, n, clip_rect(raw, canvas), raw, outside,
                clip_rect(inside, canvas) if outside else None,
            )
            if raw[2] <= 0 or raw[3] <= 0:
                bad.append(spec)
            specs.append(spec)
    if bad:
        listing = ", ".join(f"{s.part_id}@{s.scale_index}{s.raw_rect}" for s in bad)
        raise DegenerateRegionError(f"degenerate regions for base size {base_size}: {listing}", bad)
    return RegionGrid(tuple(specs), (cw, ch), (cx, cy), (w0, h0))


def crop_region(image, spec, max_edge=MAX_CROP_EDGE):
    """Copy the spec's rectangle out of ``image``.

    For ``outside`` parts the interior is overwritten with the crop's
    per-channel mean. Crops whose longest edge exceeds ``max_edge`` are
    downscaled with their aspect ratio preserved.
    """
    img = check_image(image)
    if spec.empty:
        raise DegenerateRegionError(f"cannot crop empty region {spec.part_id}@{spec.scale_index}", [spec])
    x, y, w, h = spec.rect
    if x + w > img.shape[1] or y + h > img.shape[0]:
        raise ConfigurationError(f"region {spec.rect} exceeds image {img.shape[1]}x{img.shape[0]}")
    crop = img[y:y + h, x:x + w].copy()
    if spec.mask_interior and spec.interior and spec.interior[2] and spec.interior[3]:
        ix, iy, iw, ih = spec.interior
        crop[iy - y:iy - y + ih, ix - x:ix - x + iw] = crop.mean(axis=(0, 1))
    longest = max(w, h)
    if longest > max_edge:
        scale = max_edge / longest
        crop = resize_bilinear(crop, max(1, round(h * scale)), max(1, round(w * scale)))
    return crop


def pad_back(saliency, spec, canvas):
    """Place a region map onto a zero canvas at the spec's rectangle.

    The map is bilinearly resized to the rectangle size first. For
    ``outside`` parts the interior stays zero.
    """
    sal = check_map(saliency)
    cw, ch = canvas
    out = np.zeros((ch, cw))
    if spec.empty:
        return out
    x, y, w, h = spec.rect
    out[y:y + h, x:x + w] = resize_bilinear(sal, h, w)
    if spec.mask_interior and spec.interior:
        ix, iy, iw, ih = spec.interior
        out[iy:iy + ih, ix:ix + iw] = 0.0
    return out
