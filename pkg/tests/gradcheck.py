"""Random toy-network instances for finite-difference gradient checks."""

import numpy as np

import oracles
from salitrack.saliency_net.model import (
    Topology,
    backward,
    forward,
    init_params,
    weighted_bce_loss,
)

KINK_MARGIN = 1e-3


def _kink_free(cache, topo):
    """True when no ReLU input or pooling tie sits within the margin of a kink."""
    for i in range(1, topo.n_blocks + 1):
        z = cache[f"conv{i}"][1]
        if np.any(np.abs(z) < KINK_MARGIN):
            return False
        act = np.maximum(z, 0)
        c, h, w = act.shape
        win = act[:, : h // 2 * 2, : w // 2 * 2].reshape(c, h // 2, 2, w // 2, 2)
        top = np.sort(win.transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4), axis=-1)
        live = top[..., -1] > 0
        if np.any(live & (top[..., -1] - top[..., -2] < KINK_MARGIN)):
            return False
    probs = cache["probs"]
    return bool(np.all((probs > 1e-4) & (probs < 1 - 1e-4)))


def random_instance(rng, max_tries=200):
    """A (params, x, gt) triple whose loss is smooth around the sampled point."""
    for _ in range(max_tries):
        n_blocks = int(rng.integers(1, 4))
        widths = tuple(int(v) for v in rng.integers(1, 4, size=n_blocks))
        down = 2 ** n_blocks
        size = int(rng.choice([s for s in (8, 16) if s % down == 0]))
        topo = Topology(widths=widths, input_size=size, skip=bool(rng.integers(0, 2)))
        params = init_params(topo, seed=rng)
        for k, v in params.weights.items():
            if k.endswith(".bias"):
                v[...] = rng.normal(scale=0.1, size=v.shape)
        x = rng.normal(size=(3, size, size))
        gt = (rng.random((size, size)) < rng.uniform(0.2, 0.8)).astype(np.uint8)
        if gt.all() or not gt.any():
            continue
        cache = {}
        forward(x, params, cache)
        if _kink_free(cache, topo):
            return params, x, gt
    raise RuntimeError("could not sample a kink-free instance")


def compare(params, x, gt, h=1e-4, rtol=1e-4, atol=1e-7):
    """Worst relative error and whether every entry is within tolerance."""
    cache = {}
    forward(x, params, cache)
    analytic = backward(gt, params, cache)

    def loss():
        return weighted_bce_loss(forward(x, params), gt)[0]

    numeric = oracles.central_difference(loss, params.weights, h)
    ok, worst = True, 0.0
    for name in params.weights:
        a, n = analytic[name], numeric[name]
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        tol = np.maximum(atol, rtol * scale)
        ok &= bool(np.all(diff <= tol))
        big = scale > atol
        if big.any():
            worst = max(worst, float(np.max(diff[big] / scale[big])))
    return ok, worst
