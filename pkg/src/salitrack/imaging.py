"""Resampling and box helpers shared by the pipeline stages."""

import numpy as np


def _axis_weights(n_in, n_out):
    # half-pixel centre alignment, edge-clamped
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(arr, height, width):
    """Bilinearly resample the first two axes of ``arr`` to ``(height, width)``."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    if (h, w) == (height, width):
        return arr.copy()
    r0, r1, fr = _axis_weights(h, height)
    c0, c1, fc = _axis_weights(w, width)
    extra = (1,) * (arr.ndim - 2)
    fr = fr.reshape((-1, 1) + extra)
    fc = fc.reshape((1, -1) + extra)
    top = arr[r0][:, c0] * (1 - fc) + arr[r0][:, c1] * fc
    bottom = arr[r1][:, c0] * (1 - fc) + arr[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def resize_nearest(arr, height, width):
    """Nearest-neighbour resample of the first two axes (used for masks)."""
    arr = np.asarray(arr)
    h, w = arr.shape[:2]
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.intp), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.intp), w - 1)
    return arr[rows][:, cols]


def clip_rect(rect, canvas):
    """Intersect ``(x, y, w, h)`` with a ``(W, H)`` canvas; may return zero size."""
    x, y, w, h = rect
    cw, ch = canvas
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, cw), min(y + h, ch)
    return (x0, y0, max(x1 - x0, 0), max(y1 - y0, 0))


def mask_bbox(mask):
    """Tightest ``(x, y, w, h)`` box around the nonzero pixels, or None."""
    rows = np.flatnonzero(np.any(mask, axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(np.any(mask, axis=0))
    return (int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def box_center(box):
    x, y, w, h = box
    return (x + w / 2.0, y + h / 2.0)
