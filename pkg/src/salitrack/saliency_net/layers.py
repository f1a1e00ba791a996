"""Dense layer primitives on channel-planar ``(C, H, W)`` float64 tensors.

Every forward function returns the output together with whatever the
matching backward function needs, so the network can cache it.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ConfigurationError


def _check_tensor(x, layer):
    if x.ndim != 3:
        raise ConfigurationError(f"layer {layer!r}: expected (C, H, W) input, got shape {x.shape}")


def _im2col(x, k, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    c, ho, wo = win.shape[:3]
    # rows ordered (c, ki, kj) to match weight.reshape(O, -1)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    return cols, ho, wo


def conv_forward(x, weight, bias, stride=1, pad=0, relu=False, layer="conv"):
    """Cross-correlate ``x`` with ``weight`` of shape ``(O, C, k, k)``.

    Computes ``f(sum_i x_i * w_ij + b_j)`` with ``f`` the ReLU when
    ``relu`` is set and the identity otherwise.

    Returns
    -------
    y : ndarray, shape (O, Ho, Wo)
    cache : tuple
        Input columns and pre-activation, consumed by :func:`conv_backward`.
    """
    _check_tensor(x, layer)
    o, c, k, k2 = weight.shape
    if k != k2:
        raise ConfigurationError(f"layer {layer!r}: kernels must be square, got {k}x{k2}")
    if c != x.shape[0]:
        raise ConfigurationError(
            f"layer {layer!r}: filters expect {c} input channels, input has {x.shape[0]}"
        )
    if bias is not None and bias.shape != (o,):
        raise ConfigurationError(f"layer {layer!r}: bias shape {bias.shape} != ({o},)")
    ho = (x.shape[1] + 2 * pad - k) // stride + 1
    wo = (x.shape[2] + 2 * pad - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ConfigurationError(f"layer {layer!r}: input {x.shape[1:]} too small for kernel {k}")
    cols, ho, wo = _im2col(x, k, stride, pad)
    z = weight.reshape(o, -1) @ cols
    if bias is not None:
        z += bias[:, None]
    z = z.reshape(o, ho, wo)
    y = np.maximum(z, 0.0) if relu else z
    return y, (cols, z, x.shape, stride, pad, relu)


def conv_backward(dy, weight, cache):
    """Gradients of :func:`conv_forward` w.r.t. input, weight and bias."""
    cols, z, x_shape, stride, pad, relu = cache
    if relu:
        dy = dy * (z > 0)
    o, c, k, _ = weight.shape
    dz = dy.reshape(o, -1)
    dw = (dz @ cols.T).reshape(weight.shape)
    db = dz.sum(axis=1)
    dcols = (weight.reshape(o, -1).T @ dz).reshape(c, k, k, z.shape[1], z.shape[2])
    hp, wp = x_shape[1] + 2 * pad, x_shape[2] + 2 * pad
    dxp = np.zeros((c, hp, wp))
    ho, wo = z.shape[1], z.shape[2]
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
    dx = dxp[:, pad:hp - pad, pad:wp - pad] if pad else dxp
    return dx, dw, db


def max_pool(x, window=2, stride=None, layer="pool"):
    """Max over ``window x window`` blocks; returns output and flat argmax indices.

    The indices address the flattened spatial plane of each input channel.
    """
    _check_tensor(x, layer)
    stride = window if stride is None else stride
    c, h, w = x.shape
    if window > h or window > w:
        raise ConfigurationError(f"layer {layer!r}: window {window} exceeds input {h}x{w}")
    win = sliding_window_view(x, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1:3]
    flat = win.reshape(c, ho, wo, window * window)
    local = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(local, window)
    rows = np.arange(ho)[None, :, None] * stride + di
    cols = np.arange(wo)[None, None, :] * stride + dj
    return y, rows * w + cols


def max_pool_backward(dy, argmax, input_shape):
    c, h, w = input_shape
    dx = np.zeros((c, h * w))
    idx = argmax.reshape(c, -1)
    np.add.at(dx, (np.arange(c)[:, None], idx), dy.reshape(c, -1))
    return dx.reshape(input_shape)


def _transposed_crop(k, stride):
    total = k - stride
    if total < 0:
        raise ConfigurationError(f"transposed conv kernel {k} smaller than stride {stride}")
    return total // 2, total - total // 2


def transposed_conv(x, weight, stride, layer="upsample"):
    """Transposed convolution with ``weight`` of shape ``(C_in, C_out, k, k)``.

    The full output of size ``(H - 1) * stride + k`` is cropped by a total of
    ``k - stride`` pixels per axis (floor half on the leading side), so the
    result is exactly ``stride`` times the input size. With the default
    ``k = 2 * stride`` the crop is symmetric.
    """
    _check_tensor(x, layer)
    if stride < 1:
        raise ConfigurationError(f"layer {layer!r}: stride must be >= 1")
    cin, cout, k, _ = weight.shape
    if cin != x.shape[0]:
        raise ConfigurationError(
            f"layer {layer!r}: filters expect {cin} input channels, input has {x.shape[0]}"
        )
    lo, hi = _transposed_crop(k, stride)
    _, h, w = x.shape
    # (cout, k, k, h, w) contributions scattered onto the full canvas
    contrib = np.tensordot(weight, x, axes=([0], [0]))
    full = np.zeros((cout, (h - 1) * stride + k, (w - 1) * stride + k))
    for i in range(k):
        for j in range(k):
            full[:, i:i + stride * h:stride, j:j + stride * w:stride] += contrib[:, i, j]
    return full[:, lo:full.shape[1] - hi, lo:full.shape[2] - hi]


def transposed_conv_backward(dy, x, weight, stride):
    """Gradients of :func:`transposed_conv` w.r.t. input and weight."""
    cin, cout, k, _ = weight.shape
    lo, hi = _transposed_crop(k, stride)
    _, h, w = x.shape
    full = np.zeros((cout, (h - 1) * stride + k, (w - 1) * stride + k))
    full[:, lo:full.shape[1] - hi, lo:full.shape[2] - hi] = dy
    # gather the (k, k) taps each input pixel scattered to
    taps = np.empty((cout, k, k, h, w))
    for i in range(k):
        for j in range(k):
            taps[:, i, j] = full[:, i:i + stride * h:stride, j:j + stride * w:stride]
    dx = np.tensordot(weight, taps, axes=([1, 2, 3], [0, 1, 2]))
    dw = np.tensordot(x, taps, axes=([1, 2], [3, 4]))
    return dx, dw


def softmax2(logits):
    """Pixel-wise softmax over the channel axis of a ``(2, H, W)`` tensor."""
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)
