"""Exact first derivatives of the descriptors and of the barrier loss.

The computation graph is small and fixed (softmax -> moments -> descriptors
-> barrier terms -> sum), so each descriptor's adjoint is written by hand and
accumulated in reverse rather than going through a general autodiff tape.

Every volume/centroid/spread barrier term contributes an affine function of
the fixed monomials (1, x, y, x^2, y^2) to the probability gradient, so the
whole non-length gradient is one (npixels, 5) @ (5, K) product of cached
monomials against accumulated coefficients. Moment values come from batched
per-class dot products (the variance via its raw-moment form). Boundary
length runs over shifted 2D views of the grid, batched across classes per
direction (identical term-by-term to the Laplacian edge list, just ordered
by direction), which avoids indexed gather/scatter in the hot path.

Boundary length uses |.|, whose subgradient at 0 is taken as 0. An optional
smooth mode replaces |d| with sqrt(d^2 + delta); finite-difference checks use
it, and it is exposed as a training flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constraints import EPS_ACT, ConstraintSpec, interval_terms
from .descriptors import EPS_MASS, Connectivity, LaplacianCache
from .errors import DegenerateClassError, NumericalError
from .grid import GridShape, LogitField, ProbMap, pixel_coords

SMOOTH_DELTA = 1e-6
# Radicand floor inside sqrt gradients; keeps the spread adjoint finite when
# a class collapses onto a line or point.
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class GradField:
    """d(loss)/d(logit) per pixel and class; rows sum to 0 (softmax nullspace).

    Takes ownership of the array it is given: the buffer is frozen in place
    rather than copied (loss_grad hands over a fresh array every call).
    """

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != self.shape.npixels:
            raise ValueError(
                f"expected ({self.shape.npixels}, K) values, got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise NumericalError("gradient must be finite")
        if vals.flags.writeable:
            vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@lru_cache(maxsize=None)
def _shift_pairs(connectivity: Connectivity):
    """(upper-left, lower-right) 2D slice pairs covering every neighbor edge."""
    pairs = [
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None))),
    ]
    if connectivity is Connectivity.EIGHT:
        pairs += [
            ((slice(None, -1), slice(None, -1)), (slice(1, None), slice(1, None))),
            ((slice(None, -1), slice(1, None)), (slice(1, None), slice(None, -1))),
        ]
    return tuple(pairs)


class _ClassStats:
    """Lazily evaluated per-class moments shared by the loss assembly.

    Intermediate arrays (centered coordinates, per-direction edge signs and
    their pixel incidence) are cached so that several constraint entries on
    the same class share one pass over the data.
    """

    def __init__(self, values, k, shape, lap, smooth_delta):
        self.col = values[:, k]
        self.shape = shape
        self.lap = lap
        self.smooth_delta = smooth_delta  # None = exact absolute value
        self.mass = float(self.col.sum())
        self._centroid = None
        self._centered = [None, None]
        self._centered_sq = [None, None]
        self._variances = None
        self._length = None
        self._dlength_dirs = None
        self._incidence = None

    def centroid(self):
        if self._centroid is None:
            xs, ys = pixel_coords(self.shape)
            self._centroid = (
                float(np.dot(self.col, xs)) / self.mass,
                float(np.dot(self.col, ys)) / self.mass,
            )
        return self._centroid

    def centered(self, comp):
        if self._centered[comp] is None:
            self._centered[comp] = (
                pixel_coords(self.shape)[comp] - self.centroid()[comp]
            )
        return self._centered[comp]

    def centered_sq(self, comp):
        if self._centered_sq[comp] is None:
            dc = self.centered(comp)
            self._centered_sq[comp] = dc * dc
        return self._centered_sq[comp]

    def variances(self):
        if self._variances is None:
            vx = max(float(np.dot(self.col, self.centered_sq(0))) / self.mass, 0.0)
            vy = max(float(np.dot(self.col, self.centered_sq(1))) / self.mass, 0.0)
            self._variances = (vx, vy)
        return self._variances

    def length(self):
        if self._length is None:
            grid2d = self.col.reshape(self.shape.height, self.shape.width)
            total = 0.0
            dirs = []
            for a, b in _shift_pairs(self.lap.connectivity):
                d = grid2d[a] - grid2d[b]
                if self.smooth_delta is None:
                    dl = np.sign(d)
                    np.abs(d, out=d)
                    total += float(d.sum())
                else:
                    r = np.sqrt(d * d + self.smooth_delta)
                    total += float(r.sum())
                    dl = d / r
                dirs.append(dl)
            self._length = total
            self._dlength_dirs = dirs
        return self._length

    def length_incidence(self):
        """Per-pixel sum of d|s_i - s_j| signs over incident edges."""
        if self._incidence is None:
            self.length()
            inc = np.zeros((self.shape.height, self.shape.width))
            for (a, b), dl in zip(_shift_pairs(self.lap.connectivity),
                                  self._dlength_dirs):
                inc[a] += dl
                inc[b] -= dl
            self._incidence = inc.reshape(-1)
        return self._incidence

    def centroid_colgrad(self, comp, upstream):
        return (upstream / self.mass) * self.centered(comp)

    def spread_colgrad(self, comp, upstream):
        # d sqrt(var)/ds_i = ((coord_i - c)^2 - var) / (2 sqrt(var) mass);
        # the centroid-motion term cancels exactly by the centering identity.
        var = self.variances()[comp]
        root = np.sqrt(max(var, VAR_FLOOR))
        scale = upstream / (2.0 * root * self.mass)
        return scale * (self.centered_sq(comp) - var)

    def length_colgrad(self, upstream):
        return upstream * self.length_incidence()


def descriptor_vjp(
    probs: ProbMap,
    k: int,
    f: str,
    lap: LaplacianCache,
    upstream,
    *,
    smooth_abs: bool = False,
    smooth_delta: float = SMOOTH_DELTA,
) -> np.ndarray:
    """Gradient of upstream . f(k) with respect to the probability map.

    ``upstream`` is a scalar for volume/length and an (x, y) pair for
    centroid/spread. The result has the full (npixels, K) shape; only the
    class-k column is nonzero.
    """
    if not 0 <= k < probs.num_classes:
        raise ValueError(f"class {k} out of range for K={probs.num_classes}")
    st = _ClassStats(
        probs.values, k, probs.shape, lap, smooth_delta if smooth_abs else None
    )
    out = np.zeros_like(probs.values)
    if f == "volume":
        out[:, k] = upstream
        return out
    if f == "length":
        if lap.shape != probs.shape:
            raise ValueError("laplacian shape mismatch")
        out[:, k] = st.length_colgrad(upstream)
        return out
    if f not in ("centroid", "spread"):
        raise ValueError(f"unknown descriptor {f!r}")
    if st.mass <= EPS_MASS:
        raise DegenerateClassError(f"class {k} has mass {st.mass:.3g}")
    ux, uy = upstream
    grad = st.centroid_colgrad if f == "centroid" else st.spread_colgrad
    out[:, k] = grad(0, ux) + grad(1, uy)
    return out


@lru_cache(maxsize=None)
def _design_matrix(shape: GridShape) -> np.ndarray:
    """Cached (npixels, 5) monomials [1, x, y, x^2, y^2]."""
    xs, ys = pixel_coords(shape)
    m = np.column_stack([np.ones(shape.npixels), xs, ys, xs * xs, ys * ys])
    m.flags.writeable = False
    return m


class _BatchEval:
    """Moments and boundary lengths of every class, evaluated in batch."""

    def __init__(self, s, shape: GridShape, lap: LaplacianCache, smooth_delta):
        self.s = s
        self.shape = shape
        self.lap = lap
        self.smooth_delta = smooth_delta  # None = exact absolute value
        self.masses = s.sum(axis=0)
        self._cen = None
        self._var = None
        self._lengths = None
        self._dlength_dirs = None

    def _moments(self):
        if self._cen is None:
            xs, ys = pixel_coords(self.shape)
            # Guarded denominator: values of (near) massless classes are
            # never consumed, their constraints are suspended upstream.
            m = np.maximum(self.masses, EPS_MASS)
            cx = np.einsum("n,nk->k", xs, self.s) / m
            cy = np.einsum("n,nk->k", ys, self.s) / m
            sxx = np.einsum("n,nk->k", xs * xs, self.s) / m
            syy = np.einsum("n,nk->k", ys * ys, self.s) / m
            self._cen = (cx, cy)
            # raw-moment form of the variance, clamped against rounding
            self._var = (
                np.maximum(sxx - cx * cx, 0.0),
                np.maximum(syy - cy * cy, 0.0),
            )
        return self._cen, self._var

    def centroid(self, k: int, comp: int) -> float:
        return float(self._moments()[0][comp][k])

    def variance(self, k: int, comp: int) -> float:
        return float(self._moments()[1][comp][k])

    def length(self, k: int) -> float:
        if self._lengths is None:
            v = self.s.reshape(self.shape.height, self.shape.width, -1)
            totals = np.zeros(self.s.shape[1])
            dirs = []
            for a, b in _shift_pairs(self.lap.connectivity):
                d = v[a] - v[b]
                if self.smooth_delta is None:
                    dl = np.sign(d)
                    np.abs(d, out=d)
                    totals += d.sum(axis=(0, 1))
                else:
                    r = np.sqrt(d * d + self.smooth_delta)
                    totals += r.sum(axis=(0, 1))
                    dl = d / r
                dirs.append(dl)
            self._lengths = totals
            self._dlength_dirs = dirs
        return float(self._lengths[k])

    def add_length_grad(self, g: np.ndarray, dlen: np.ndarray) -> None:
        """Scatter per-class length adjoints dlen_k * d(length_k)/ds into g."""
        g3 = g.reshape(self.shape.height, self.shape.width, -1)
        for (a, b), dl in zip(_shift_pairs(self.lap.connectivity),
                              self._dlength_dirs):
            wd = dl * dlen
            g3[a] += wd
            g3[b] -= wd


def loss_grad(
    logits: LogitField,
    spec: ConstraintSpec,
    lap: LaplacianCache,
    t: float | None = None,
    *,
    smooth_abs: bool = False,
    smooth_delta: float = SMOOTH_DELTA,
) -> tuple[float, GradField]:
    """Barrier loss of a logit field and its exact gradient through softmax.

    Entries on a class whose mass is below EPS_ACT are suspended (volume
    bounds stay active); a ratio entry is also suspended while its denominator
    descriptor is (near) zero. Matches ``constraints.total_loss`` on the same
    prediction (up to float summation order) whenever smooth_abs is off.
    """
    spec.check_classes(logits.num_classes)
    if lap.shape != logits.shape:
        raise ValueError(f"laplacian shape {lap.shape} != logits shape {logits.shape}")
    if t is None:
        t = spec.barrier.t0
    if t <= 0:
        raise ValueError("barrier slope t must be positive")

    # Softmax inline (same operation order as grid.softmax, minus the ProbMap
    # validation passes): this is the training hot path.
    s = logits.values - logits.values.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)
    shape = logits.shape
    num_classes = s.shape[1]

    ev = _BatchEval(s, shape, lap, smooth_delta if smooth_abs else None)
    # Rows: coefficients on the monomials 1, x, y, x^2, y^2 per class.
    coeff = np.zeros((5, num_classes))
    dlen = np.zeros(num_classes)
    loss = 0.0
    touched = False

    def add_term(label: str, v: float, lo: float, hi: float) -> float:
        nonlocal loss
        term, dv = interval_terms(v, lo, hi, t)
        if not (np.isfinite(term) and np.isfinite(dv)):
            raise NumericalError(f"{label}: non-finite barrier term at value {v!r}")
        loss += term
        return dv

    for e in sorted(spec.entries, key=lambda e: e.sort_key):
        mass = float(ev.masses[e.k])
        if e.f == "volume":
            coeff[0, e.k] += add_term(e.label, mass, e.lo, e.hi)
            touched = True
            continue
        if mass < EPS_ACT:
            continue
        touched = True
        if e.f == "length":
            dlen[e.k] += add_term(e.label, ev.length(e.k), e.lo, e.hi)
        elif e.f == "centroid":
            c = ev.centroid(e.k, e.comp)
            a = add_term(e.label, c, e.lo, e.hi) / mass
            # a * (coord - c)
            coeff[1 + e.comp, e.k] += a
            coeff[0, e.k] -= a * c
        else:  # spread
            var = ev.variance(e.k, e.comp)
            dv = add_term(e.label, float(np.sqrt(var)), e.lo, e.hi)
            b = dv / (2.0 * np.sqrt(max(var, VAR_FLOOR)) * mass)
            c = ev.centroid(e.k, e.comp)
            # b * ((coord - c)^2 - var)
            coeff[3 + e.comp, e.k] += b
            coeff[1 + e.comp, e.k] -= 2.0 * b * c
            coeff[0, e.k] += b * (c * c - var)

    for r in sorted(spec.ratios, key=lambda r: r.sort_key):
        mass_k, mass_l = float(ev.masses[r.k]), float(ev.masses[r.l])
        if mass_k < EPS_ACT or mass_l < EPS_ACT:
            continue
        num = mass_k if r.f == "volume" else ev.length(r.k)
        den = mass_l if r.f == "volume" else ev.length(r.l)
        if den <= EPS_MASS:
            continue
        touched = True
        dv = add_term(r.label, num / den, r.a, r.b)
        up_num = dv / den
        up_den = -dv * num / (den * den)
        if r.f == "volume":
            coeff[0, r.k] += up_num
            coeff[0, r.l] += up_den
        else:
            dlen[r.k] += up_num
            dlen[r.l] += up_den

    if not touched:
        return loss, GradField(shape, np.zeros_like(s))

    g = _design_matrix(shape) @ coeff
    if dlen.any():
        ev.add_length_grad(g, dlen)

    # Reverse through softmax: the Jacobian maps g to s * (g - <g, s>).
    inner = np.einsum("nk,nk->n", g, s)
    g -= inner[:, None]
    g *= s
    return loss, GradField(shape, g)
