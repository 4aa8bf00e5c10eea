"""Trainable predictors that produce a per-pixel logit field.

Two parameterizations:

* ``FreeField`` -- the logits themselves are the parameters, posing the
  reconstruction as a pure inverse problem over pixels.
* ``CoordNet`` -- a small parameter-shared perceptron from per-pixel
  features (x/H, y/W, intensity) to class logits, standing in for a
  segmentation network at desk scale.

Both expose the same flat-parameter interface the training loop drives:
``init_params(rng) -> params``, ``forward(params) -> (logits, cache)``,
``backward(params, cache, dloss_dlogits) -> flat gradient``; the cache
carries whatever activations the backward pass needs so nothing is computed
twice. ``logits`` and ``param_grad`` are stand-alone conveniences.
"""

from __future__ import annotations

import numpy as np

from .grid import GridShape, pixel_coords


class FreeField:
    """Per-pixel logits optimized directly."""

    def __init__(self, shape: GridShape, num_classes: int):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        self.shape = shape
        self.num_classes = num_classes

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        # Zero logits = uniform softmax: every class starts with |omega|/K
        # pixels of mass, so no constraint starts suspended.
        return np.zeros(self.shape.npixels * self.num_classes)

    def forward(self, params: np.ndarray):
        return params.reshape(self.shape.npixels, self.num_classes), None

    def backward(self, params, cache, glogits: np.ndarray) -> np.ndarray:
        return glogits.reshape(-1)

    def logits(self, params: np.ndarray) -> np.ndarray:
        return self.forward(params)[0]

    def param_grad(self, params: np.ndarray, glogits: np.ndarray) -> np.ndarray:
        return self.backward(params, None, glogits)


class CoordNet:
    """Two-hidden-layer tanh perceptron over (x/H, y/W, intensity) features."""

    def __init__(
        self,
        shape: GridShape,
        num_classes: int,
        image: np.ndarray | None = None,
        hidden: int = 64,
    ):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        self.shape = shape
        self.num_classes = num_classes
        self.hidden = hidden
        xs, ys = pixel_coords(shape)
        intensity = (
            np.zeros(shape.npixels)
            if image is None
            else np.asarray(image, dtype=np.float64).reshape(shape.npixels)
        )
        self.features = np.column_stack(
            [xs / shape.height, ys / shape.width, intensity]
        )
        self._layout = [
            (3, hidden), (hidden,),
            (hidden, hidden), (hidden,),
            (hidden, num_classes), (num_classes,),
        ]

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self._layout)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        # Weights and biases uniform in +-1/sqrt(fan_in) of their layer.
        parts = []
        fan_ins = (3, self.hidden, self.hidden)
        for layer, fan_in in enumerate(fan_ins):
            bound = 1.0 / np.sqrt(fan_in)
            for shape in self._layout[2 * layer : 2 * layer + 2]:
                parts.append(rng.uniform(-bound, bound, size=shape).reshape(-1))
        return np.concatenate(parts)

    def _unpack(self, params: np.ndarray):
        out, pos = [], 0
        for shape in self._layout:
            n = int(np.prod(shape))
            out.append(params[pos : pos + n].reshape(shape))
            pos += n
        return out

    def forward(self, params: np.ndarray):
        w1, b1, w2, b2, w3, b3 = self._unpack(params)
        h1 = np.tanh(self.features @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        return h2 @ w3 + b3, (h1, h2)

    def backward(self, params, cache, glogits: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2, w3, b3 = self._unpack(params)
        h1, h2 = cache
        g3 = glogits
        dw3 = h2.T @ g3
        db3 = g3.sum(axis=0)
        g2 = g3 @ w3.T
        g2 *= 1.0 - h2 * h2  # tanh'(z) through the cached activation
        dw2 = h1.T @ g2
        db2 = g2.sum(axis=0)
        g1 = g2 @ w2.T
        g1 *= 1.0 - h1 * h1
        dw1 = self.features.T @ g1
        db1 = g1.sum(axis=0)
        return np.concatenate(
            [dw1.reshape(-1), db1, dw2.reshape(-1), db2, dw3.reshape(-1), db3]
        )

    def logits(self, params: np.ndarray) -> np.ndarray:
        return self.forward(params)[0]

    def param_grad(self, params: np.ndarray, glogits: np.ndarray) -> np.ndarray:
        logits, cache = self.forward(params)
        return self.backward(params, cache, glogits)


def make_predictor(
    name: str,
    shape: GridShape,
    num_classes: int,
    image: np.ndarray | None = None,
):
    if name == "freefield":
        return FreeField(shape, num_classes)
    if name == "coordnet":
        return CoordNet(shape, num_classes, image)
    raise ValueError(f"unknown predictor {name!r}")
