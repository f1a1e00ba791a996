"""scikit-learn compatible wrapper around the toy FCN."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..imaging import resize_bilinear
from . import checkpoint
from .model import ScorePair, Topology, forward, init_params, preprocess, train


def _as_image_list(X):
    """Accept one image or a sequence of images; report which it was."""
    if isinstance(X, np.ndarray) and (X.ndim == 2 or (X.ndim == 3 and X.shape[-1] in (1, 3))):
        return [X], True
    return list(X), False


class SaliencyNetwork(BaseEstimator):
    """Per-pixel foreground classifier backed by the toy FCN.

    Parameters
    ----------
    widths : tuple of int, default=(8, 16, 32)
        Channel count of each encoder block.
    input_size : int, default=64
        Side of the square network input; images are resized to it.
    n_iterations : int, default=500
        SGD iterations (batch size 1).
    learning_rate : float, default=5e-5
        The loss is summed over pixels, so this is small.
    momentum : float, default=0.9
    weight_decay : float, default=5e-4
    random_state : int or None, default=0

    Attributes
    ----------
    params_ : NetworkParams
    loss_curve_ : list of float
    """

    def __init__(self, widths=(8, 16, 32), input_size=64, n_iterations=500,
                 learning_rate=5e-5, momentum=0.9, weight_decay=5e-4, random_state=0):
        self.widths = widths
        self.input_size = input_size
        self.n_iterations = n_iterations
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _topology(self):
        return Topology(widths=tuple(self.widths), input_size=self.input_size)

    def fit(self, X, y):
        """Train from scratch on images ``X`` and binary masks ``y``."""
        images, _ = _as_image_list(X)
        masks = [y] if len(images) == 1 and np.ndim(y) == 2 else list(y)
        if len(images) != len(masks):
            raise ValueError(f"{len(images)} images but {len(masks)} masks")
        rng = np.random.default_rng(self.random_state)
        params = init_params(self._topology(), seed=rng)
        self.params_, self.loss_curve_ = train(
            list(zip(images, masks)), params,
            iterations=self.n_iterations, lr=self.learning_rate, momentum=self.momentum,
            weight_decay=self.weight_decay, seed=rng,
        )
        return self

    @classmethod
    def from_params(cls, params):
        est = cls(widths=params.topology.widths, input_size=params.topology.input_size)
        est.params_ = params
        est.loss_curve_ = []
        return est

    @classmethod
    def load(cls, path):
        return cls.from_params(checkpoint.load(path))

    def save(self, path):
        check_is_fitted(self, "params_")
        checkpoint.save(self.params_, path)

    def scores(self, image):
        """:class:`ScorePair` for one image at the original resolution."""
        check_is_fitted(self, "params_")
        pair = forward(preprocess(image, self.params_.topology.input_size), self.params_)
        h, w = np.shape(image)[:2]
        fg = np.clip(resize_bilinear(pair.exaction, h, w), 0.0, 1.0)
        return ScorePair(fg, 1.0 - fg)

    def predict_proba(self, X):
        """Foreground probability maps, one per image."""
        images, single = _as_image_list(X)
        out = [self.scores(img).exaction for img in images]
        return out[0] if single else out

    def predict(self, X):
        images, single = _as_image_list(X)
        out = [(self.scores(img).exaction >= 0.5).astype(np.uint8) for img in images]
        return out[0] if single else out

    def score(self, X, y):
        """Mean adaptive-threshold F-measure over the images."""
        from ..metrics import adaptive_f_measure

        images, single = _as_image_list(X)
        masks = [y] if single else list(y)
        return float(np.mean([
            adaptive_f_measure(self.scores(img).exaction, m) for img, m in zip(images, masks)
        ]))
