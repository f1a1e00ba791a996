"""Toy tailored FCN: encoder blocks, 1x1 scoring, one skip fusion, two upsamplers.

Topology for ``widths = (8, 16, 32)`` and a 64x64 input::

    conv1 3x3 (3->8)   relu  pool  -> 32x32
    conv2 3x3 (8->16)  relu  pool  -> 16x16 ---- score_skip 1x1 (16->2) --+
    conv3 3x3 (16->32) relu  pool  -> 8x8                                 |
    score 1x1 (32->2) -> up1 x2 (k=4) -> 16x16 ----------------------- (+)
                                                         up_final x4 (k=8) -> 64x64

With a single block there is no skip branch and ``up_final`` restores the
full resolution directly.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .._validation import check_image, check_mask, check_random_state
from ..exceptions import ConfigurationError, NumericError, TrainingError, UsageError
from ..imaging import resize_bilinear, resize_nearest
from . import layers

# ImageNet channel means on the [0, 1] scale.
IMAGE_MEAN = np.array([0.485, 0.456, 0.406])
PROB_EPS = 1e-6


class ScorePair(NamedTuple):
    """Per-pixel foreground (exaction) and background (inhibition) probabilities."""

    exaction: np.ndarray
    inhibition: np.ndarray


@dataclass(frozen=True)
class Topology:
    widths: tuple = (8, 16, 32)
    in_channels: int = 3
    skip: bool = True
    input_size: int = 64

    def __post_init__(self):
        if not self.widths or any(int(w) < 1 for w in self.widths):
            raise ConfigurationError(f"invalid encoder widths {self.widths!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.in_channels < 1:
            raise ConfigurationError("in_channels must be positive")
        if self.input_size < 8 or self.input_size % self.downsample:
            raise ConfigurationError(
                f"input_size {self.input_size} must be >= 8 and divisible by {self.downsample}"
            )

    @property
    def n_blocks(self):
        return len(self.widths)

    @property
    def downsample(self):
        return 2 ** len(self.widths)

    @property
    def has_skip(self):
        return self.skip and self.n_blocks >= 2

    @property
    def final_stride(self):
        return self.downsample // 2 if self.has_skip else self.downsample

    def shapes(self):
        """Parameter shapes in declaration (and checkpoint) order."""
        out = {}
        cin = self.in_channels
        for i, w in enumerate(self.widths, start=1):
            out[f"conv{i}.weight"] = (w, cin, 3, 3)
            out[f"conv{i}.bias"] = (w,)
            cin = w
        out["score.weight"] = (2, cin, 1, 1)
        out["score.bias"] = (2,)
        if self.has_skip:
            out["up1.weight"] = (2, 2, 4, 4)
            out["score_skip.weight"] = (2, self.widths[-2], 1, 1)
            out["score_skip.bias"] = (2,)
        s = self.final_stride
        out["up_final.weight"] = (2, 2, 2 * s, 2 * s)
        return out

    def encoder_names(self):
        return [n for n in self.shapes() if n.startswith("conv")]

    def decoder_names(self):
        """Parameters updated online: the skip-fusion branch and the final upsampler."""
        return [n for n in self.shapes() if n.startswith(("score_skip", "up_final"))]


@dataclass
class NetworkParams:
    """Weights of one network plus SGD momentum buffers of identical shape."""

    topology: Topology
    weights: dict
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.topology.shapes()
        if list(self.weights) != list(shapes):
            raise ConfigurationError("parameter names do not match the topology")
        for name, shape in shapes.items():
            if self.weights[name].shape != shape:
                raise ConfigurationError(
                    f"layer {name!r}: shape {self.weights[name].shape} != {shape}"
                )
        if not self.velocity:
            self.velocity = {k: np.zeros_like(v) for k, v in self.weights.items()}

    def copy(self):
        return NetworkParams(
            self.topology,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.velocity.items()},
        )


def init_params(topology=None, seed=0):
    """Seeded uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, zero biases."""
    topology = topology or Topology()
    rng = check_random_state(seed)
    weights = {}
    for name, shape in topology.shapes().items():
        if name.endswith(".bias"):
            weights[name] = np.zeros(shape)
            continue
        fan_in = shape[1] * shape[2] * shape[3]
        if name.startswith("up"):
            fan_in = shape[0] * shape[2] * shape[3]
        bound = 1.0 / np.sqrt(fan_in)
        weights[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(topology, weights)


def preprocess(image, size):
    """Resize an ``(H, W, 3)`` image to ``size x size`` and mean-subtract.

    Returns a channel-planar ``(3, size, size)`` tensor.
    """
    img = check_image(image)
    if img.shape[:2] != (size, size):
        img = resize_bilinear(img, size, size)
    return (img - IMAGE_MEAN).transpose(2, 0, 1).copy()


def _finite(x, index, name):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite activations at layer {index} ({name})")
    return x


def forward(x, params, cache=None):
    """Run the network on a preprocessed ``(C, H, W)`` tensor.

    Parameters
    ----------
    x : ndarray
        Output of :func:`preprocess`, or any tensor whose spatial size is a
        multiple of the topology's downsampling factor.
    params : NetworkParams
    cache : dict, optional
        Filled with the intermediates :func:`backward` needs.

    Returns
    -------
    ScorePair
        Softmax probabilities at input resolution.
    """
    topo = params.topology
    w = params.weights
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != topo.in_channels:
        raise ConfigurationError(f"network input must be ({topo.in_channels}, H, W), got {x.shape}")
    h, wd = x.shape[1:]
    if h < 8 or wd < 8 or h % topo.downsample or wd % topo.downsample:
        raise ConfigurationError(
            f"network input {h}x{wd} must be >= 8 and divisible by {topo.downsample}"
        )
    store = cache if cache is not None else {}
    store.clear()
    pooled = []
    feat = x
    for i in range(1, topo.n_blocks + 1):
        act, store[f"conv{i}"] = layers.conv_forward(
            feat, w[f"conv{i}.weight"], w[f"conv{i}.bias"], pad=1, relu=True, layer=f"conv{i}"
        )
        _finite(act, i, f"conv{i}")
        feat, store[f"pool{i}"] = layers.max_pool(act, 2, layer=f"pool{i}")
        store[f"pool{i}.shape"] = act.shape
        pooled.append(feat)
    score, store["score"] = layers.conv_forward(feat, w["score.weight"], w["score.bias"], layer="score")
    if topo.has_skip:
        up = layers.transposed_conv(score, w["up1.weight"], 2, layer="up1")
        store["up1.input"] = score
        side, store["score_skip"] = layers.conv_forward(
            pooled[-2], w["score_skip.weight"], w["score_skip.bias"], layer="score_skip"
        )
        fused = up + side
    else:
        fused = score
    _finite(fused, topo.n_blocks + 1, "fuse")
    logits = layers.transposed_conv(fused, w["up_final.weight"], topo.final_stride, layer="up_final")
    store["up_final.input"] = fused
    _finite(logits, topo.n_blocks + 2, "up_final")
    probs = layers.softmax2(logits)
    store["probs"] = probs
    return ScorePair(exaction=probs[1], inhibition=probs[0])


def class_balance(gt):
    """Foreground fraction of a binary mask."""
    return float(gt.sum()) / gt.size


def weighted_bce_loss(pred, gt, eps=PROB_EPS):
    """Class-weighted cross entropy of a :class:`ScorePair` against a binary mask.

    The foreground weight is the foreground pixel fraction ``beta``; the
    background weight is ``1 - beta``. Probabilities are clamped to
    ``[eps, 1 - eps]`` before the log.

    Returns
    -------
    loss : float
    beta : float
    """
    gt = check_mask(gt, pred.exaction.shape, name="ground truth")
    beta = class_balance(gt)
    fg = gt.astype(bool)
    p_fg = np.clip(pred.exaction[fg], eps, 1 - eps)
    p_bg = np.clip(pred.inhibition[~fg], eps, 1 - eps)
    loss = -beta * np.log(p_fg).sum() - (1 - beta) * np.log(p_bg).sum()
    return float(loss), beta


def backward(gt, params, cache, eps=PROB_EPS):
    """Exact gradient of :func:`weighted_bce_loss` for the cached forward pass.

    Returns a dict keyed like ``params.weights``.
    """
    if not cache or "probs" not in cache:
        raise UsageError("backward called without a cached forward pass")
    topo = params.topology
    w = params.weights
    probs = cache["probs"]
    gt = check_mask(gt, probs.shape[1:], name="ground truth")
    beta = class_balance(gt)
    fg = gt.astype(bool)
    p_true = np.where(fg, probs[1], probs[0])
    pix_w = np.where(fg, beta, 1 - beta)
    # clamped probabilities have zero derivative
    pix_w = pix_w * ((p_true > eps) & (p_true < 1 - eps))
    onehot = np.stack([~fg, fg]).astype(np.float64)
    dlogits = pix_w * (probs - onehot)

    grads = {}
    dfused, grads["up_final.weight"] = layers.transposed_conv_backward(
        dlogits, cache["up_final.input"], w["up_final.weight"], topo.final_stride
    )
    d_pooled = {}
    if topo.has_skip:
        dscore, grads["up1.weight"] = layers.transposed_conv_backward(
            dfused, cache["up1.input"], w["up1.weight"], 2
        )
        dside, grads["score_skip.weight"], grads["score_skip.bias"] = layers.conv_backward(
            dfused, w["score_skip.weight"], cache["score_skip"]
        )
        d_pooled[topo.n_blocks - 1] = dside
    else:
        dscore = dfused
    dfeat, grads["score.weight"], grads["score.bias"] = layers.conv_backward(
        dscore, w["score.weight"], cache["score"]
    )
    for i in range(topo.n_blocks, 0, -1):
        if i in d_pooled:
            dfeat = dfeat + d_pooled[i]
        dact = layers.max_pool_backward(dfeat, cache[f"pool{i}"], cache[f"pool{i}.shape"])
        dfeat, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = layers.conv_backward(
            dact, w[f"conv{i}.weight"], cache[f"conv{i}"]
        )
    return {name: grads[name] for name in w}


def loss_and_grad(x, gt, params):
    """Forward plus backward on one preprocessed tensor."""
    cache = {}
    pred = forward(x, params, cache)
    loss, _ = weighted_bce_loss(pred, gt)
    return loss, backward(gt, params, cache)


def sgd_step(params, grads, lr, momentum=0.9, weight_decay=5e-4, names=None):
    """Momentum SGD with L2 weight decay, in place.

    ``v <- momentum * v + (g + weight_decay * w)``; ``w <- w - lr * v``.
    Only the parameters in ``names`` are touched when it is given.
    """
    if lr <= 0:
        raise ConfigurationError("learning rate must be positive")
    for name in names if names is not None else params.weights:
        wt = params.weights[name]
        v = params.velocity[name]
        v *= momentum
        v += grads[name] + weight_decay * wt
        wt -= lr * v
    return params


def prepare_pair(image, mask, size):
    """Network-ready ``(tensor, mask)`` for one training pair."""
    x = preprocess(image, size)
    m = check_mask(mask, name="training mask")
    if m.shape != (size, size):
        m = resize_nearest(m, size, size)
    return x, m


def train(pairs, params=None, *, iterations=500, lr=5e-5, momentum=0.9,
          weight_decay=5e-4, lr_decay_step=0, lr_decay=0.1, seed=0, names=None):
    """Batch-1 SGD over ``(image, mask)`` pairs.

    Samples are visited in a fresh seeded permutation each epoch. When
    ``lr_decay_step`` is positive the learning rate is multiplied by
    ``lr_decay`` every ``lr_decay_step`` iterations.

    Returns
    -------
    params : NetworkParams
        A new object; the input ``params`` are not modified.
    losses : list of float
        Loss of each iteration, evaluated before its update.
    """
    if not pairs:
        raise ConfigurationError("train needs at least one (image, mask) pair")
    rng = check_random_state(seed)
    params = init_params(seed=rng) if params is None else params.copy()
    size = params.topology.input_size
    data = [prepare_pair(img, m, size) for img, m in pairs]
    losses = []
    order = []
    for it in range(iterations):
        if not order:
            order = list(rng.permutation(len(data)))
        x, m = data[order.pop(0)]
        try:
            loss, grads = loss_and_grad(x, m, params)
        except NumericError as exc:
            raise TrainingError(f"training diverged at iteration {it}: {exc}", it) from exc
        if not np.isfinite(loss):
            raise TrainingError(f"training loss became non-finite at iteration {it}", it)
        losses.append(loss)
        step_lr = lr * lr_decay ** (it // lr_decay_step) if lr_decay_step > 0 else lr
        sgd_step(params, grads, step_lr, momentum, weight_decay, names=names)
    return params, losses
