"""Image spatial domain: grids, probability maps, label masks.

Coordinate convention (used everywhere in this package): ``x`` is the row
index and ``y`` is the column index, both zero-based. Pixel tensors are
flattened row-major, so pixel ``i`` sits at ``x = i // width``,
``y = i % width``. Descriptor targets and predictions share the convention,
so nothing downstream depends on which axis is called "x".
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NumericalError

# Per-pixel probability rows must sum to 1 within this tolerance.
SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class GridShape:
    """2D image domain of height rows by width columns."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")

    @property
    def npixels(self) -> int:
        return self.height * self.width


@lru_cache(maxsize=None)
def pixel_coords(shape: GridShape) -> tuple[np.ndarray, np.ndarray]:
    """Flat per-pixel (x, y) coordinate arrays in row-major pixel order."""
    xs, ys = np.meshgrid(
        np.arange(shape.height, dtype=np.float64),
        np.arange(shape.width, dtype=np.float64),
        indexing="ij",
    )
    xs = np.ascontiguousarray(xs.reshape(-1))
    ys = np.ascontiguousarray(ys.reshape(-1))
    xs.flags.writeable = False
    ys.flags.writeable = False
    return xs, ys


def _freeze(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype)  # always copies
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel, per-class probabilities: one point on the K-simplex per pixel.

    ``values`` has shape (npixels, K), row-major over the grid.
    """

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values, np.float64)
        if vals.ndim != 2 or vals.shape[0] != self.shape.npixels:
            raise ValueError(
                f"expected ({self.shape.npixels}, K) values, got {vals.shape}"
            )
        if vals.shape[1] < 2:
            raise ValueError("need at least 2 classes")
        if not np.all(np.isfinite(vals)):
            raise NumericalError("probabilities must be finite")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        row_err = np.abs(vals.sum(axis=1) - 1.0).max()
        if row_err > SIMPLEX_TOL:
            raise ValueError(f"pixel rows must sum to 1 (max deviation {row_err:.3g})")
        object.__setattr__(self, "values", vals)

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LogitField:
    """Unconstrained pre-softmax scores, shape (npixels, K)."""

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values, np.float64)
        if vals.ndim != 2 or vals.shape[0] != self.shape.npixels:
            raise ValueError(
                f"expected ({self.shape.npixels}, K) values, got {vals.shape}"
            )
        if vals.shape[1] < 2:
            raise ValueError("need at least 2 classes")
        if not np.all(np.isfinite(vals)):
            raise NumericalError("logits must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelMask:
    """Hard per-pixel class assignment, labels in {0..num_classes-1}."""

    shape: GridShape
    num_classes: int
    labels: np.ndarray

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        labels = _freeze(self.labels, np.int64)
        if labels.ndim != 1 or labels.shape[0] != self.shape.npixels:
            raise ValueError(
                f"expected ({self.shape.npixels},) labels, got {labels.shape}"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes - 1}]"
            )
        object.__setattr__(self, "labels", labels)


def softmax(logits: LogitField) -> ProbMap:
    """Per-pixel softmax with max-subtraction for numerical stability.

    Invariant to adding a per-pixel constant to all K logits.
    """
    z = logits.values
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return ProbMap(logits.shape, p)


def one_hot(mask: LabelMask) -> ProbMap:
    """Binary ProbMap with exactly one 1 per pixel row."""
    p = np.zeros((mask.shape.npixels, mask.num_classes), dtype=np.float64)
    p[np.arange(mask.shape.npixels), mask.labels] = 1.0
    return ProbMap(mask.shape, p)


def argmax_labels(probs: ProbMap) -> LabelMask:
    """Hard prediction: per-pixel argmax, ties broken by lowest class index."""
    return LabelMask(probs.shape, probs.num_classes, np.argmax(probs.values, axis=1))
