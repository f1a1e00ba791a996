"""Synthetic bright-blob images and sequences with exact ground truth."""

import numpy as np
from scipy.ndimage import gaussian_filter

from ._validation import check_random_state

BLOB_COLOR = np.array([0.95, 0.85, 0.35])


def textured_noise(height, width, rng, low=0.05, high=0.55, sigma=1.5):
    """Smoothed, per-channel independent noise rescaled into ``[low, high]``."""
    noise = rng.normal(size=(height, width, 3))
    noise = gaussian_filter(noise, sigma=(sigma, sigma, 0))
    lo, hi = noise.min(), noise.max()
    return low + (high - low) * (noise - lo) / (hi - lo)


def disk_mask(height, width, center, radius):
    yy, xx = np.mgrid[:height, :width]
    cx, cy = center
    return ((xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= radius ** 2).astype(np.uint8)


def paint_blob(background, center, radius, rng, color=BLOB_COLOR):
    h, w = background.shape[:2]
    mask = disk_mask(h, w, center, radius)
    img = background.copy()
    jitter = rng.uniform(-0.03, 0.03, size=(h, w, 3))
    img[mask.astype(bool)] = np.clip(color + jitter, 0, 1)[mask.astype(bool)]
    return img, mask


def blob_dataset(n_images=10, size=64, radius_range=(6, 14), seed=0):
    """``n_images`` pairs of (image, mask), one blob per image."""
    rng = check_random_state(seed)
    pairs = []
    for _ in range(n_images):
        r = rng.uniform(*radius_range)
        margin = r + 2
        center = (rng.uniform(margin, size - margin), rng.uniform(margin, size - margin))
        img, mask = paint_blob(textured_noise(size, size, rng), center, r, rng)
        pairs.append((img, mask))
    return pairs


def drifting_blob_sequence(n_frames=50, size=(128, 96), radius=8, start=(16.0, 48.0),
                           velocity=(2.0, 0.0), seed=0):
    """A blob drifting at constant velocity over fresh textured noise.

    Returns
    -------
    frames : list of ndarray, shape (H, W, 3)
    masks : list of ndarray, shape (H, W)
    init_box : tuple
        Tight ``(x, y, w, h)`` box of the first ground-truth mask.
    """
    rng = check_random_state(seed)
    width, height = size
    frames, masks = [], []
    for t in range(n_frames):
        center = (start[0] + velocity[0] * t, start[1] + velocity[1] * t)
        img, mask = paint_blob(textured_noise(height, width, rng), center, radius, rng)
        frames.append(img)
        masks.append(mask)
    from .imaging import mask_bbox

    return frames, masks, mask_bbox(masks[0])
