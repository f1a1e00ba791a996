"""From per-region network scores to one discriminative saliency map.

Stages: signed region maps (foreground minus background probability, padded
to the canvas), additive per-scale fusion clamped at zero, max-normalization,
a convex combination of scales whose weights minimize the weighted entropy
of the fused map, and guided recursive edge-preserving smoothing.
"""

import numpy as np
from scipy.ndimage import sobel
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image, check_map
from .exceptions import ConfigurationError, NumericError, UsageError
from .regions import crop_region, make_region_grid, pad_back
from .saliency_net.model import forward, preprocess

ENTROPY_EPS = 1e-6
NORMALIZE_DELTA = 1e-12
# entropy gains below this (relative) are rounding noise, not progress
IMPROVE_RTOL = 1e-12
LUMA = np.array([0.299, 0.587, 0.114])


def region_saliency(scores, spec, canvas):
    """Signed map ``exaction - inhibition`` placed on the canvas, in ``[-1, 1]``."""
    return pad_back(scores.exaction - scores.inhibition, spec, canvas)


def scale_fuse(maps):
    """Pixel-wise ``max(sum(maps), 0)`` over the part maps of one scale."""
    stack = np.asarray(maps, dtype=np.float64)
    return np.maximum(stack.sum(axis=0), 0.0)


def normalize(saliency, delta=NORMALIZE_DELTA):
    """Divide a nonnegative map by its maximum; near-zero maps become zero."""
    sal = check_map(saliency)
    peak = sal.max() if sal.size else 0.0
    if peak <= delta:
        return np.zeros_like(sal)
    return sal / peak


def weighted_fuse(maps, weights):
    """Convex combination ``sum_n w_n * S_n``."""
    stack = np.asarray(maps, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if stack.shape[0] != w.shape[0]:
        raise UsageError(f"{stack.shape[0]} maps but {w.shape[0]} weights")
    return np.tensordot(w, stack, axes=1)


def weighted_entropy(weights, maps, eps=ENTROPY_EPS):
    """``-sum_i s_i^2 ln s_i`` of the fused map, each ``s_i`` clamped to ``[eps, 1]``."""
    s = np.clip(weighted_fuse(maps, weights), eps, 1.0)
    return float(-(s * s * np.log(s)).sum())


def entropy_gradient(weights, maps, eps=ENTROPY_EPS):
    stack = np.asarray(maps, dtype=np.float64)
    s = weighted_fuse(stack, weights)
    active = (s > eps) & (s < 1.0)
    sc = np.clip(s, eps, 1.0)
    ds = -(2.0 * sc * np.log(sc) + sc) * active
    return np.tensordot(stack, ds, axes=(tuple(range(1, stack.ndim)), tuple(range(ds.ndim))))


def project_simplex(v):
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` by sorted thresholding."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


def _better(h_new, h):
    return h_new < h - IMPROVE_RTOL * max(1.0, abs(h))


def _descend(w, stack, iterations, step, tol, eps):
    """Projected gradient descent; the step halves whenever it fails to descend."""
    h = weighted_entropy(w, stack, eps)
    lr = step
    for _ in range(iterations):
        grad = entropy_gradient(w, stack, eps)
        while True:
            w_new = project_simplex(w - lr * grad)
            h_new = weighted_entropy(w_new, stack, eps)
            if not np.isfinite(h_new):
                raise NumericError("weighted entropy is not finite")
            if h_new <= h or lr < 1e-12:
                break
            lr *= 0.5
        moved = np.max(np.abs(w_new - w))
        if _better(h_new, h):
            w, h = w_new, h_new
        if moved < tol:
            break
    return w, h


def optimize_weights(maps, iterations=200, step=0.05, tol=1e-6, eps=ENTROPY_EPS):
    """Scale weights minimizing the weighted entropy of the fused map.

    The objective is concave wherever the fused saliency exceeds
    ``exp(-1.5)``, so projected gradient descent is started from the uniform
    vector and from every vertex of the simplex; the lowest-entropy result
    wins. Ties keep the earlier candidate, so a constant objective returns
    the uniform start.
    """
    stack = np.asarray(maps, dtype=np.float64)
    n = stack.shape[0]
    if n < 1:
        raise ConfigurationError("need at least one map to fuse")
    if n == 1:
        return np.ones(1)
    starts = [np.full(n, 1.0 / n)] + list(np.eye(n))
    best_w, best_h = None, np.inf
    for start in starts:
        if not np.isfinite(weighted_entropy(start, stack, eps)):
            raise NumericError("weighted entropy is not finite")
        w, h = _descend(start, stack, iterations, step, tol, eps)
        if best_w is None or _better(h, best_h):
            best_w, best_h = w, h
    return best_w


def texture_map(image):
    """Sobel gradient magnitude of the luminance, scaled to ``[0, 1]``."""
    img = check_image(image)
    lum = img @ LUMA
    mag = np.hypot(sobel(lum, axis=0, mode="nearest"), sobel(lum, axis=1, mode="nearest"))
    peak = mag.max()
    return mag / peak if peak > 0 else np.zeros_like(mag)


def _recursive_rows(sig, coef):
    # coef[:, j] couples pixel j with j-1
    out = sig.copy()
    for j in range(1, out.shape[1]):
        out[:, j] += coef[:, j] * (out[:, j - 1] - out[:, j])
    for j in range(out.shape[1] - 2, -1, -1):
        out[:, j] += coef[:, j + 1] * (out[:, j + 1] - out[:, j])
    return out


def domain_transform(saliency, guide, sigma_s=10.0, sigma_r=0.1, iterations=3):
    """Recursive-filter domain transform of ``saliency`` steered by ``guide``.

    Each iteration runs a horizontal then a vertical two-way recursive pass.
    Neighbour distance is ``1 + sigma_s / sigma_r * |guide difference|``.
    """
    sal = check_map(saliency)
    g = check_map(guide, sal.shape, name="guide")
    if sigma_s <= 0 or sigma_r <= 0:
        raise ConfigurationError("sigma_s and sigma_r must be positive")
    dh = np.ones_like(g)
    dv = np.ones_like(g)
    dh[:, 1:] += sigma_s / sigma_r * np.abs(np.diff(g, axis=1))
    dv[1:, :] += sigma_s / sigma_r * np.abs(np.diff(g, axis=0))
    out = sal.copy()
    k_total = iterations
    for k in range(1, k_total + 1):
        sigma_h = sigma_s * np.sqrt(3.0) * 2.0 ** (k_total - k) / np.sqrt(4.0 ** k_total - 1.0)
        a = np.exp(-np.sqrt(2.0) / sigma_h)
        out = _recursive_rows(out, a ** dh)
        out = _recursive_rows(out.T, (a ** dv).T).T
    return out


def score_regions(image, grid, params):
    """Signed canvas maps for every spec of the grid, grouped by scale."""
    size = params.topology.input_size
    per_scale = {}
    for spec in grid.specs:
        if spec.empty:
            per_scale.setdefault(spec.scale_index, []).append(np.zeros(grid.canvas[::-1]))
            continue
        crop = crop_region(image, spec)
        scores = forward(preprocess(crop, size), params)
        per_scale.setdefault(spec.scale_index, []).append(region_saliency(scores, spec, grid.canvas))
    return [per_scale[n] for n in sorted(per_scale)]


def fuse_pipeline(image, grid, params, *, sigma_s=10.0, sigma_r=0.1, dt_iterations=3,
                  fusion_iterations=200, fusion_step=0.05, details=False):
    """Full single-frame saliency: regions, scale fusion, entropy weights, smoothing.

    Returns the normalized canvas-sized map, or ``(map, info)`` when
    ``details`` is set, with ``info`` holding the per-scale maps and weights.
    """
    img = check_image(image)
    if img.shape[:2] != (grid.canvas[1], grid.canvas[0]):
        raise ConfigurationError(f"image {img.shape[:2]} does not match grid canvas {grid.canvas}")
    scale_maps = [normalize(scale_fuse(maps)) for maps in score_regions(img, grid, params)]
    weights = optimize_weights(scale_maps, fusion_iterations, fusion_step)
    fused = weighted_fuse(scale_maps, weights)
    smooth = domain_transform(fused, texture_map(img), sigma_s, sigma_r, dt_iterations)
    smooth = np.clip(smooth, 0.0, 1.0)
    if details:
        return smooth, {"scale_maps": scale_maps, "weights": weights, "fused": fused}
    return smooth


def default_grid(image, n_scales=6):
    """Grid centred on the image with the whole image as base region."""
    h, w = np.shape(image)[:2]
    return make_region_grid((w / 2.0, h / 2.0), (w, h), n_scales, (w, h))


class DiscriminativeSaliency(TransformerMixin, BaseEstimator):
    """Image to saliency-map transformer around a :class:`SaliencyNetwork`.

    Parameters
    ----------
    network : SaliencyNetwork
        Fitted in place by :meth:`fit` unless it is already fitted and
        ``refit`` is false.
    n_scales : int, default=6
    sigma_s, sigma_r : float, default=10.0, 0.1
    dt_iterations : int, default=3
    fusion_iterations : int, default=200
    fusion_step : float, default=0.05
    refit : bool, default=True
    """

    def __init__(self, network=None, n_scales=6, sigma_s=10.0, sigma_r=0.1, dt_iterations=3,
                 fusion_iterations=200, fusion_step=0.05, refit=True):
        self.network = network
        self.n_scales = n_scales
        self.sigma_s = sigma_s
        self.sigma_r = sigma_r
        self.dt_iterations = dt_iterations
        self.fusion_iterations = fusion_iterations
        self.fusion_step = fusion_step
        self.refit = refit

    def fit(self, X, y=None):
        from sklearn.base import clone

        from .saliency_net.estimator import SaliencyNetwork

        net = self.network if self.network is not None else SaliencyNetwork()
        if y is not None and (self.refit or not hasattr(net, "params_")):
            net = clone(net).fit(X, y)
        check_is_fitted(net, "params_")
        self.network_ = net
        return self

    def transform(self, X, boxes=None):
        """Saliency maps for one image or a list of images.

        ``boxes`` optionally gives an ``(x, y, w, h)`` target per image; the
        grid is then centred on the box with the box as base region.
        """
        check_is_fitted(self, "network_")
        single = isinstance(X, np.ndarray) and X.ndim in (2, 3) and (X.ndim == 2 or X.shape[-1] in (1, 3))
        images = [X] if single else list(X)
        if boxes is not None and single:
            boxes = [boxes]
        out = []
        for i, img in enumerate(images):
            if boxes is None:
                grid = default_grid(img, self.n_scales)
            else:
                x, y, w, h = boxes[i]
                ih, iw = np.shape(img)[:2]
                grid = make_region_grid((x + w / 2.0, y + h / 2.0), (w, h), self.n_scales, (iw, ih))
            out.append(fuse_pipeline(
                img, grid, self.network_.params_, sigma_s=self.sigma_s, sigma_r=self.sigma_r,
                dt_iterations=self.dt_iterations, fusion_iterations=self.fusion_iterations,
                fusion_step=self.fusion_step,
            ))
        return out[0] if single else out
