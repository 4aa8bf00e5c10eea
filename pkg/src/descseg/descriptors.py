"""Shape moments, the grid Laplacian, and per-class shape descriptors.

Descriptors computed over a soft probability map (or a hard mask through its
one-hot view):

* ``volume``   -- total class probability mass (order-(0,0) moment), in pixels
* ``centroid`` -- probability-weighted mean pixel coordinate, an (x, y) pair
* ``spread``   -- probability-weighted coordinate standard deviation per axis
* ``length``   -- boundary length as the sum of absolute probability
  differences across neighboring pixel pairs (Potts relaxation); on a hard
  mask it equals the number of neighbor edges crossing the class boundary
* ``ratio``    -- quotient of one scalar descriptor between two classes

Boundary length counts each unordered neighbor pair once. A symmetric
adjacency-matrix formulation counts every pair twice; multiply by 2 to
convert. Targets and predictions use the same convention, so optimization
is unaffected by the choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache

import numpy as np

from .errors import DegenerateClassError
from .grid import GridShape, LabelMask, ProbMap, one_hot, pixel_coords

# Mass at or below this is degenerate: centroid/spread/ratios are undefined.
# Degeneracy is always an explicit error or flag, never a silent epsilon.
EPS_MASS = 1e-8

SCALAR_DESCRIPTORS = frozenset({"volume", "length"})
PAIR_DESCRIPTORS = frozenset({"centroid", "spread"})
DESCRIPTOR_NAMES = ("volume", "centroid", "spread", "length")


class Connectivity(IntEnum):
    FOUR = 4
    EIGHT = 8


@dataclass(frozen=True)
class LaplacianCache:
    """Neighbor structure of a grid: unordered pixel-index edges (i < j).

    Depends only on the grid shape and connectivity, never on pixel values.
    Only the off-diagonal support is stored; the diagonal of the graph
    Laplacian never contributes to boundary length because |s_i - s_i| = 0.
    """

    shape: GridShape
    connectivity: Connectivity
    edge_i: np.ndarray
    edge_j: np.ndarray
    degree: np.ndarray

    @property
    def num_edges(self) -> int:
        return self.edge_i.shape[0]


@lru_cache(maxsize=None)
def _build_laplacian(shape: GridShape, connectivity: Connectivity) -> LaplacianCache:
    h, w = shape.height, shape.width
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    heads = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]          # right, down
    tails = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    if connectivity is Connectivity.EIGHT:
        heads += [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()]  # down-right, down-left
        tails += [idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
    edge_i = np.concatenate(heads) if heads else np.empty(0, dtype=np.int64)
    edge_j = np.concatenate(tails) if tails else np.empty(0, dtype=np.int64)
    degree = np.bincount(edge_i, minlength=h * w) + np.bincount(edge_j, minlength=h * w)
    for arr in (edge_i, edge_j, degree):
        arr.flags.writeable = False
    return LaplacianCache(shape, connectivity, edge_i, edge_j, degree)


def build_laplacian(
    shape: GridShape, connectivity: Connectivity = Connectivity.EIGHT
) -> LaplacianCache:
    """Neighbor edges for a grid, memoized per (shape, connectivity)."""
    return _build_laplacian(shape, Connectivity(connectivity))


@lru_cache(maxsize=None)
def _monomial(shape: GridShape, p: int, q: int) -> np.ndarray:
    xs, ys = pixel_coords(shape)
    m = xs**p * ys**q
    m.flags.writeable = False
    return m


def _class_column(probs: ProbMap, k: int) -> np.ndarray:
    if not 0 <= k < probs.num_classes:
        raise ValueError(f"class {k} out of range for K={probs.num_classes}")
    return probs.values[:, k]


def shape_moment(probs: ProbMap, k: int, p: int, q: int) -> float:
    """Raw moment of order (p, q): sum_i s[i,k] * x_i^p * y_i^q (0^0 := 1)."""
    if p < 0 or q < 0:
        raise ValueError("moment orders must be non-negative")
    return float(np.dot(_class_column(probs, k), _monomial(probs.shape, p, q)))


def central_moment(probs: ProbMap, k: int, p: int, q: int) -> float:
    """Moment of order (p, q) with coordinates shifted by the class centroid."""
    if p < 0 or q < 0:
        raise ValueError("moment orders must be non-negative")
    col = _class_column(probs, k)
    mass = float(col.sum())
    if mass <= EPS_MASS:
        raise DegenerateClassError(f"class {k} has mass {mass:.3g}")
    xs, ys = pixel_coords(probs.shape)
    cx = float(np.dot(col, xs)) / mass
    cy = float(np.dot(col, ys)) / mass
    return float(np.dot(col, (xs - cx) ** p * (ys - cy) ** q))


def volume(probs: ProbMap, k: int) -> float:
    """Class probability mass in pixels; exact pixel count on a binary map."""
    return float(_class_column(probs, k).sum())


def centroid(probs: ProbMap, k: int) -> tuple[float, float]:
    """Probability-weighted mean (x, y) coordinate of class k."""
    col = _class_column(probs, k)
    mass = float(col.sum())
    if mass <= EPS_MASS:
        raise DegenerateClassError(f"class {k} has mass {mass:.3g}")
    xs, ys = pixel_coords(probs.shape)
    return float(np.dot(col, xs)) / mass, float(np.dot(col, ys)) / mass


def spread(probs: ProbMap, k: int) -> tuple[float, float]:
    """Per-axis standard deviation of the class-k coordinate distribution."""
    col = _class_column(probs, k)
    mass = float(col.sum())
    if mass <= EPS_MASS:
        raise DegenerateClassError(f"class {k} has mass {mass:.3g}")
    xs, ys = pixel_coords(probs.shape)
    cx = float(np.dot(col, xs)) / mass
    cy = float(np.dot(col, ys)) / mass
    # Rounding can push the radicand marginally below zero; clamp.
    vx = max(float(np.dot(col, (xs - cx) ** 2)) / mass, 0.0)
    vy = max(float(np.dot(col, (ys - cy) ** 2)) / mass, 0.0)
    return float(np.sqrt(vx)), float(np.sqrt(vy))


def length(probs: ProbMap, k: int, lap: LaplacianCache) -> float:
    """Boundary length: sum of |s_i - s_j| over unordered neighbor edges."""
    if lap.shape != probs.shape:
        raise ValueError(f"laplacian shape {lap.shape} != probs shape {probs.shape}")
    col = _class_column(probs, k)
    return float(np.abs(col[lap.edge_i] - col[lap.edge_j]).sum())


def _descriptor_value(probs, k, name, lap):
    if name == "volume":
        return volume(probs, k)
    if name == "centroid":
        return centroid(probs, k)
    if name == "spread":
        return spread(probs, k)
    if name == "length":
        if lap is None:
            raise ValueError("length requires a LaplacianCache")
        return length(probs, k, lap)
    raise ValueError(f"unknown descriptor {name!r}")


def ratio(
    probs: ProbMap,
    f: str,
    k: int,
    l: int,
    lap: LaplacianCache | None = None,
    *,
    allow_pairs: bool = False,
):
    """Inter-class descriptor ratio f(k) / f(l).

    Scalar descriptors (volume, length) by default; pair-valued descriptors
    (centroid, spread) divide component-wise and must be opted into with
    ``allow_pairs``.
    """
    if f not in SCALAR_DESCRIPTORS and not (allow_pairs and f in PAIR_DESCRIPTORS):
        raise ValueError(f"ratio over {f!r} requires allow_pairs" if f in PAIR_DESCRIPTORS
                         else f"unknown descriptor {f!r}")
    num = _descriptor_value(probs, k, f, lap)
    den = _descriptor_value(probs, l, f, lap)
    if f in SCALAR_DESCRIPTORS:
        if den <= EPS_MASS:
            raise DegenerateClassError(f"{f} of class {l} is {den:.3g}, ratio undefined")
        return num / den
    out = []
    for c in range(2):
        if den[c] <= EPS_MASS:
            raise DegenerateClassError(
                f"{f}[{c}] of class {l} is {den[c]:.3g}, ratio undefined"
            )
        out.append(num[c] / den[c])
    return tuple(out)


@dataclass(frozen=True)
class ClassDescriptors:
    """Descriptor values of one class; centroid/spread are None when absent."""

    volume: float
    centroid: tuple[float, float] | None
    spread: tuple[float, float] | None
    length: float

    @property
    def absent(self) -> bool:
        return self.centroid is None


@dataclass(frozen=True)
class DescriptorSet:
    """Per-class descriptors plus optional named inter-class ratios."""

    classes: tuple[ClassDescriptors, ...]
    ratios: dict[tuple[str, int, int], float] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_dict(self) -> dict:
        return {
            "classes": [
                {
                    "k": k,
                    "volume": c.volume,
                    "centroid": list(c.centroid) if c.centroid else None,
                    "spread": list(c.spread) if c.spread else None,
                    "length": c.length,
                    "absent": c.absent,
                }
                for k, c in enumerate(self.classes)
            ],
            "ratios": [
                {"f": f, "k": k, "l": l, "value": v}
                for (f, k, l), v in sorted(self.ratios.items())
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DescriptorSet":
        classes = []
        for entry in sorted(payload["classes"], key=lambda e: e["k"]):
            cen = entry.get("centroid")
            spr = entry.get("spread")
            classes.append(
                ClassDescriptors(
                    volume=float(entry["volume"]),
                    centroid=None if cen is None else (float(cen[0]), float(cen[1])),
                    spread=None if spr is None else (float(spr[0]), float(spr[1])),
                    length=float(entry["length"]),
                )
            )
        ratios = {
            (r["f"], int(r["k"]), int(r["l"])): float(r["value"])
            for r in payload.get("ratios", [])
        }
        return cls(tuple(classes), ratios)


def describe(
    source: ProbMap | LabelMask,
    lap: LaplacianCache | None = None,
    ratio_pairs: tuple[tuple[str, int, int], ...] = (),
) -> DescriptorSet:
    """All four descriptors for every class, degenerate classes flagged absent.

    ``source`` may be a soft probability map or a hard mask (taken through its
    one-hot view). ``ratio_pairs`` lists (descriptor, k, l) ratios to include;
    a ratio whose denominator is degenerate is silently omitted.
    """
    probs = one_hot(source) if isinstance(source, LabelMask) else source
    if lap is None:
        lap = build_laplacian(probs.shape)
    classes = []
    for k in range(probs.num_classes):
        v = volume(probs, k)
        if v <= EPS_MASS:
            classes.append(ClassDescriptors(v, None, None, length(probs, k, lap)))
        else:
            classes.append(
                ClassDescriptors(
                    v, centroid(probs, k), spread(probs, k), length(probs, k, lap)
                )
            )
    ratios = {}
    for f, k, l in ratio_pairs:
        try:
            ratios[(f, k, l)] = ratio(probs, f, k, l, lap)
        except DegenerateClassError:
            continue
    return DescriptorSet(tuple(classes), ratios)
