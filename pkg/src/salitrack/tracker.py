"""Online non-rigid tracking on top of the fused saliency pipeline.

Per frame: crop around the previous target at ``crop_scale`` times its
size, compute the fused saliency of the crop, blend it with the recent
accumulated maps, threshold the result into a mask and a tight box, then
fine-tune the decoder on the new (crop, mask) pair.
"""

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import binary_fill_holes, label
from sklearn.base import BaseEstimator

from ._validation import check_image, check_map, check_mask
from .exceptions import (
    ConfigurationError,
    EmptyMaskError,
    InitializationError,
    NumericError,
    TargetLostError,
    TrainingError,
)
from .fusion import fuse_pipeline
from .imaging import box_center, clip_rect, mask_bbox, resize_bilinear
from .regions import SCALE_FACTOR, make_region_grid
from .saliency_net.model import loss_and_grad, prepare_pair, sgd_step

BUFFER_SIZE = 20


@dataclass(frozen=True)
class TrackerConfig:
    tau: int = 2
    c: float = 1.1
    crop_scale: float = 1.5
    n_scales: int = 6
    threshold_low: float = 0.1
    threshold_high: float = 0.9
    finetune_iterations: int = 10
    finetune_lr: float = 5e-9
    momentum: float = 0.9
    weight_decay: float = 5e-4
    sigma_s: float = 10.0
    sigma_r: float = 0.1
    dt_iterations: int = 3
    fusion_iterations: int = 200
    fusion_step: float = 0.05
    min_region: int = 4
    seed: int = 0

    def __post_init__(self):
        if not self.c > 1:
            raise ConfigurationError(f"decay factor c must be > 1, got {self.c}")
        if self.tau < 0:
            raise ConfigurationError(f"tau must be >= 0, got {self.tau}")
        if self.crop_scale < 1:
            raise ConfigurationError(f"crop_scale must be >= 1, got {self.crop_scale}")
        if not 0 <= self.threshold_low <= self.threshold_high <= 1:
            raise ConfigurationError("threshold clamp must satisfy 0 <= low <= high <= 1")
        if self.finetune_iterations < 0 or self.n_scales < 1:
            raise ConfigurationError("iteration and scale counts must be nonnegative/positive")

    def fusion_kwargs(self):
        return {
            "sigma_s": self.sigma_s,
            "sigma_r": self.sigma_r,
            "dt_iterations": self.dt_iterations,
            "fusion_iterations": self.fusion_iterations,
            "fusion_step": self.fusion_step,
        }


@dataclass
class TrackerState:
    t: int
    center: tuple
    region: tuple
    params: object
    config: TrackerConfig
    # (map, anchor) pairs, most recent first; anchor = search centre in crop pixels
    stcsm_history: deque = field(default_factory=deque)
    sample_buffer: deque = field(default_factory=lambda: deque(maxlen=BUFFER_SIZE))
    finetune_cursor: int = 0

    def copy(self):
        return replace(
            self,
            stcsm_history=deque(self.stcsm_history, maxlen=self.stcsm_history.maxlen),
            sample_buffer=deque(self.sample_buffer, maxlen=self.sample_buffer.maxlen),
        )


@dataclass(frozen=True)
class TrackOutput:
    mask: np.ndarray
    bbox: tuple
    center: tuple
    saliency: np.ndarray = None


def crop_window(center, region, scale=1.5):
    """Unclipped ``(x, y, w, h)`` window of ``scale`` times the region, centred."""
    w = max(1, int(round(scale * region[0])))
    h = max(1, int(round(scale * region[1])))
    return (int(math.floor(center[0] - w / 2 + 0.5)), int(math.floor(center[1] - h / 2 + 0.5)), w, h)


def clamped_threshold(saliency, low=0.1, high=0.9):
    """Twice the mean, clamped into ``[low * max, high * max]``."""
    peak = float(saliency.max())
    return float(np.clip(2.0 * saliency.mean(), low * peak, high * peak))


def refine_mask(saliency, image=None, low=0.1, high=0.9):
    """Threshold, keep the largest 4-connected component, fill its holes.

    ``image`` is accepted for interface symmetry with colour-model
    segmenters and is not used.
    """
    sal = check_map(saliency)
    if image is not None and np.shape(image)[:2] != sal.shape:
        raise ConfigurationError("saliency and image sizes differ")
    if sal.max() <= 0:
        raise EmptyMaskError("saliency map is all zero")
    binary = sal >= clamped_threshold(sal, low, high)
    labels, n = label(binary)
    if n == 0:
        raise EmptyMaskError("no pixel passed the threshold")
    sizes = np.bincount(labels.ravel())[1:]
    keep = labels == (int(np.argmax(sizes)) + 1)
    return binary_fill_holes(keep).astype(np.uint8)


def stcsm_weights(n_terms, c):
    """Lookback coefficients ``c**-j`` for ``j = 1..n_terms``."""
    return np.array([float(c) ** -j for j in range(1, n_terms + 1)])


def align_map(prev, prev_anchor, shape, anchor):
    """Translate ``prev`` so ``prev_anchor`` lands on ``anchor`` in a zero canvas of ``shape``.

    Pixel scale is kept; only whole-pixel shifts are applied.
    """
    out = np.zeros(shape)
    # half-pixel offsets round to even so they do not bias one direction
    dx = round(anchor[0] - prev_anchor[0])
    dy = round(anchor[1] - prev_anchor[1])
    ph, pw = prev.shape
    x0, y0 = max(0, dx), max(0, dy)
    x1, y1 = min(shape[1], pw + dx), min(shape[0], ph + dy)
    if x1 > x0 and y1 > y0:
        out[y0:y1, x0:x1] = prev[y0 - dy:y1 - dy, x0 - dx:x1 - dx]
    return out


def stcsm_update(current, history, c=1.1, tau=2):
    """Blend the current map with up to ``tau + 1`` previous accumulated maps.

    ``history`` is ordered most recent first and should already be aligned
    with ``current`` (see :func:`align_map`); maps of another shape are
    bilinearly resized. Each is weighted by ``c**-j`` and the sum is divided
    by the total weight so the result stays in ``[0, 1]``.
    """
    cur = check_map(current)
    past = list(history)[: tau + 1]
    coef = stcsm_weights(len(past), c)
    acc = cur.copy()
    for w, prev in zip(coef, past):
        if prev.shape != cur.shape:
            prev = resize_bilinear(prev, *cur.shape)
        acc += w * prev
    return acc / (1.0 + coef.sum())


def localize(stcsm, crop_rect, frame_shape, low=0.1, high=0.9):
    """Mask and tight box of the accumulated map, in full-frame coordinates.

    Raises
    ------
    TargetLostError
        When thresholding leaves no foreground.
    """
    try:
        crop_mask = refine_mask(stcsm, low=low, high=high)
    except EmptyMaskError as exc:
        raise TargetLostError(f"target lost: {exc}") from exc
    x, y, w, h = crop_rect
    full = np.zeros(frame_shape[:2], dtype=np.uint8)
    full[y:y + h, x:x + w] = crop_mask
    box = mask_bbox(full)
    sal = np.zeros(frame_shape[:2])
    sal[y:y + h, x:x + w] = stcsm
    return TrackOutput(full, box, box_center(box), sal), crop_mask


def augment(image, mask):
    """Eight (image, mask) pairs: optional mirror times rotations by 0/90/180/270."""
    mask = check_mask(mask, np.shape(image)[:2])
    out = []
    for mirrored in (False, True):
        img = np.flip(image, axis=1) if mirrored else image
        msk = np.flip(mask, axis=1) if mirrored else mask
        for k in range(4):
            out.append((np.rot90(img, k).copy(), np.rot90(msk, k).copy()))
    return out


def fine_tune(state, pair):
    """Push ``pair`` into the sample buffer and run decoder-only SGD.

    Buffered pairs are visited round-robin from a cursor kept in the state;
    for each visit one of its eight augmentations is drawn from a generator
    seeded by ``(config.seed, state.t)``. Mutates ``state.sample_buffer``
    and ``state.finetune_cursor``; returns updated parameters without touching
    ``state.params``.
    """
    cfg = state.config
    size = state.params.topology.input_size
    x, m = prepare_pair(pair[0], pair[1], size)
    state.sample_buffer.append([(xa.transpose(2, 0, 1).copy(), ma) for xa, ma in
                                augment(x.transpose(1, 2, 0), m)])
    params = state.params.copy()
    names = params.topology.decoder_names()
    n_buf = len(state.sample_buffer)
    rng = np.random.default_rng([cfg.seed, state.t])
    for it in range(cfg.finetune_iterations):
        # buffered frames in turn, a seeded choice among each frame's augmentations
        xa, ma = state.sample_buffer[state.finetune_cursor % n_buf][int(rng.integers(8))]
        state.finetune_cursor += 1
        try:
            loss, grads = loss_and_grad(xa, ma, params)
        except NumericError as exc:
            raise TrainingError(f"fine-tuning diverged at iteration {it}: {exc}", it) from exc
        if not np.isfinite(loss):
            raise TrainingError(f"fine-tuning loss became non-finite at iteration {it}", it)
        sgd_step(params, grads, cfg.finetune_lr, cfg.momentum, cfg.weight_decay, names=names)
    return params


def _crop(frame, center, region, cfg):
    h, w = frame.shape[:2]
    rect = clip_rect(crop_window(center, region, cfg.crop_scale), (w, h))
    if rect[2] == 0 or rect[3] == 0:
        raise TargetLostError(f"search window {rect} left the frame")
    x, y, cw, ch = rect
    return frame[y:y + ch, x:x + cw], rect


def _anchor(center, rect):
    return (min(max(center[0] - rect[0], 0.0), rect[2]), min(max(center[1] - rect[1], 0.0), rect[3]))


def _saliency(crop, rect, center, region, params, cfg):
    # smallest scale spans the whole search window
    base = (cfg.crop_scale * region[0] / SCALE_FACTOR, cfg.crop_scale * region[1] / SCALE_FACTOR)
    local = _anchor(center, rect)
    grid = make_region_grid(local, base, cfg.n_scales, (rect[2], rect[3]))
    return fuse_pipeline(crop, grid, params, **cfg.fusion_kwargs())


def _bounded_region(box, cfg):
    return (max(box[2], cfg.min_region), max(box[3], cfg.min_region))


def initialize(frame, center, region, params, config=None):
    """First-frame state: saliency of the search window, refined mask, fine-tune.

    Raises
    ------
    InitializationError
        If the refined mask or its overlap with the thresholded saliency
        is empty.
    """
    cfg = config or TrackerConfig()
    img = check_image(frame)
    if region[0] <= 0 or region[1] <= 0:
        raise ConfigurationError(f"target region must be positive, got {region}")
    crop, rect = _crop(img, center, region, cfg)
    sal = _saliency(crop, rect, center, region, params, cfg)
    try:
        refined = refine_mask(sal, crop, cfg.threshold_low, cfg.threshold_high)
    except EmptyMaskError as exc:
        raise InitializationError(f"could not build the first-frame mask: {exc}") from exc
    seed_mask = (sal >= clamped_threshold(sal, cfg.threshold_low, cfg.threshold_high)) & refined.astype(bool)
    if not seed_mask.any():
        raise InitializationError("thresholded saliency and refined mask do not overlap")
    state = TrackerState(
        t=1, center=tuple(center), region=tuple(region), params=params, config=cfg,
        stcsm_history=deque([(sal, _anchor(center, rect))], maxlen=cfg.tau + 1),
        sample_buffer=deque(maxlen=BUFFER_SIZE),
    )
    state.params = fine_tune(state, (crop, seed_mask.astype(np.uint8)))
    return state


def track_frame(state, frame):
    """Track one frame; returns ``(TrackOutput, new_state)``.

    The input state is not modified.

    Raises
    ------
    TargetLostError
        The exception's ``state`` keeps the previous centre and region, has
        the frame counter advanced and skips fine-tuning.
    """
    cfg = state.config
    img = check_image(frame)
    new = state.copy()
    new.t = state.t + 1
    crop, rect = _crop(img, state.center, state.region, cfg)
    sal = _saliency(crop, rect, state.center, state.region, state.params, cfg)
    anchor = _anchor(state.center, rect)
    past = [align_map(m, a, sal.shape, anchor) for m, a in state.stcsm_history]
    stc = stcsm_update(sal, past, cfg.c, cfg.tau)
    new.stcsm_history.appendleft((stc, anchor))
    try:
        out, crop_mask = localize(stc, rect, img.shape, cfg.threshold_low, cfg.threshold_high)
    except TargetLostError as exc:
        raise TargetLostError(str(exc), new) from exc
    new.center = out.center
    new.region = _bounded_region(out.bbox, cfg)
    try:
        new.params = fine_tune(new, (crop, crop_mask))
    except TrainingError:
        new.params = state.params
    return out, new


class NonRigidTracker(BaseEstimator):
    """Single-target mask tracker with an sklearn-style parameter interface.

    ``fit(frame, box)`` initializes on the first frame; ``track(frame)``
    processes each later frame in order.

    Parameters
    ----------
    network : SaliencyNetwork
        A fitted network; its parameters are copied, never modified.
    tau, c, crop_scale, n_scales, finetune_iterations, finetune_lr, seed
        See :class:`TrackerConfig`.

    Attributes
    ----------
    state_ : TrackerState
    lost_frames_ : list of int
        Frame indices at which the target was lost.
    """

    def __init__(self, network=None, tau=2, c=1.1, crop_scale=1.5, n_scales=6,
                 finetune_iterations=10, finetune_lr=5e-9, sigma_s=10.0, sigma_r=0.1,
                 dt_iterations=3, seed=0):
        self.network = network
        self.tau = tau
        self.c = c
        self.crop_scale = crop_scale
        self.n_scales = n_scales
        self.finetune_iterations = finetune_iterations
        self.finetune_lr = finetune_lr
        self.sigma_s = sigma_s
        self.sigma_r = sigma_r
        self.dt_iterations = dt_iterations
        self.seed = seed

    def _config(self):
        return TrackerConfig(
            tau=self.tau, c=self.c, crop_scale=self.crop_scale, n_scales=self.n_scales,
            finetune_iterations=self.finetune_iterations, finetune_lr=self.finetune_lr,
            sigma_s=self.sigma_s, sigma_r=self.sigma_r, dt_iterations=self.dt_iterations,
            seed=self.seed,
        )

    def fit(self, frame, box, config=None):
        """Initialize on ``frame`` with the target's ``(x, y, w, h)`` box."""
        if self.network is None or not hasattr(self.network, "params_"):
            raise ConfigurationError("NonRigidTracker needs a fitted SaliencyNetwork")
        params = self.network.params_.copy()
        x, y, w, h = box
        self.state_ = initialize(frame, (x + w / 2.0, y + h / 2.0), (w, h), params,
                                 config or self._config())
        self.lost_frames_ = []
        return self

    def track(self, frame):
        """Process the next frame; on target loss the previous box is reported."""
        try:
            out, self.state_ = track_frame(self.state_, frame)
        except TargetLostError as exc:
            self.state_ = exc.state
            self.lost_frames_.append(self.state_.t)
            h, w = np.shape(frame)[:2]
            cx, cy = self.state_.center
            rw, rh = self.state_.region
            box = clip_rect(crop_window((cx, cy), (rw, rh), 1.0), (w, h))
            mask = np.zeros((h, w), dtype=np.uint8)
            mask[box[1]:box[1] + box[3], box[0]:box[0] + box[2]] = 1
            out = TrackOutput(mask, box, (cx, cy), np.zeros((h, w)))
        return out

    def track_sequence(self, frames, box):
        """Outputs for frames ``2..T`` after initializing on the first frame."""
        frames = list(frames)
        self.fit(frames[0], box)
        return [self.track(f) for f in frames[1:]]
