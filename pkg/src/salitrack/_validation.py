"""Input validation helpers used at public API boundaries."""

import numpy as np

from .exceptions import ConfigurationError, NumericError


def check_image(image, *, min_size=1, name="image"):
    """Return ``image`` as a float64 ``(H, W, 3)`` array.

    Grayscale ``(H, W)`` or ``(H, W, 1)`` inputs are replicated to three
    channels. Values must be finite; they are not rescaled.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ConfigurationError(f"{name} must be 2-D or 3-D, got shape {arr.shape}")
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    if arr.shape[2] != 3:
        raise ConfigurationError(f"{name} must have 1 or 3 channels, got {arr.shape[2]}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise ConfigurationError(
            f"{name} must be at least {min_size}x{min_size}, got {arr.shape[0]}x{arr.shape[1]}"
        )
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def check_mask(mask, shape=None, *, name="mask"):
    """Return ``mask`` as a 2-D uint8 array holding only 0 and 1."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    elif not np.all((arr == 0) | (arr == 1)):
        raise ConfigurationError(f"{name} must be strictly binary")
    else:
        arr = arr.astype(np.uint8)
    if shape is not None and arr.shape != tuple(shape):
        raise ConfigurationError(f"{name} shape {arr.shape} does not match {tuple(shape)}")
    return arr


def check_map(saliency, shape=None, *, name="saliency map"):
    """Return a finite 2-D float64 saliency array."""
    arr = np.asarray(saliency, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ConfigurationError(f"{name} shape {arr.shape} does not match {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
