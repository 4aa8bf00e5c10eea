"""Extended log-barrier penalties and bound-constraint assembly.

The barrier ``ext_barrier(z, t)`` penalizes a constraint written as z <= 0.
Inside the feasible region it is a scaled negative log; outside it continues
linearly with slope t, so it is defined for every real z and C1 at the
junction z = -1/t**2. Raising t over training tightens the constraint.

A two-sided bound lo <= v <= hi becomes the pair
``ext_barrier(lo - v, t) + ext_barrier(v - hi, t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .descriptors import (
    DESCRIPTOR_NAMES,
    EPS_MASS,
    PAIR_DESCRIPTORS,
    SCALAR_DESCRIPTORS,
    DescriptorSet,
    LaplacianCache,
    describe,
)
from .errors import SpecError
from .grid import ProbMap

# Mass (in pixels) below which a class's centroid/spread/length constraints
# are suspended during training; the volume bounds stay active and pull the
# class back up. Uniform-softmax initialization gives every class |omega|/K
# pixels, so suspension only triggers in pathological configurations.
EPS_ACT = 0.5


def _barrier_scalar(z: float, t: float) -> float:
    if z <= -1.0 / (t * t):
        return -math.log(-z) / t
    return t * z + 2.0 * math.log(t) / t + 1.0 / t


def _barrier_grad_scalar(z: float, t: float) -> float:
    if z <= -1.0 / (t * t):
        return -1.0 / (t * z)
    return t


def ext_barrier(z, t: float):
    """Extended log-barrier: -log(-z)/t for z <= -1/t^2, linear beyond."""
    if t <= 0:
        raise ValueError("barrier slope t must be positive")
    if np.ndim(z) == 0:
        return _barrier_scalar(float(z), t)
    z = np.asarray(z, dtype=np.float64)
    junction = -1.0 / (t * t)
    lin = t * z + 2.0 * np.log(t) / t + 1.0 / t
    with np.errstate(invalid="ignore", divide="ignore"):
        logb = -np.log(-z) / t
    return np.where(z <= junction, logb, lin)


def ext_barrier_grad(z, t: float):
    """Derivative of ext_barrier in z: -1/(t z) on the log branch, t beyond."""
    if t <= 0:
        raise ValueError("barrier slope t must be positive")
    if np.ndim(z) == 0:
        return _barrier_grad_scalar(float(z), t)
    z = np.asarray(z, dtype=np.float64)
    junction = -1.0 / (t * t)
    with np.errstate(invalid="ignore", divide="ignore"):
        logg = -1.0 / (t * z)
    return np.where(z <= junction, logg, t)


def interval_terms(v: float, lo: float, hi: float, t: float) -> tuple[float, float]:
    """Penalty for lo <= v <= hi and its derivative with respect to v."""
    value = _barrier_scalar(lo - v, t) + _barrier_scalar(v - hi, t)
    dv = _barrier_grad_scalar(v - hi, t) - _barrier_grad_scalar(lo - v, t)
    return value, dv


@dataclass(frozen=True)
class BarrierParams:
    """Epoch-indexed slope schedule: t(epoch) = min(t0 * growth^epoch, t_max)."""

    t0: float = 5.0
    growth: float = 1.1
    t_max: float = 100.0

    def __post_init__(self):
        if self.t0 <= 0:
            raise SpecError("t0 must be positive")
        if self.growth < 1:
            raise SpecError("growth must be >= 1")
        if self.t_max < self.t0:
            raise SpecError("t_max must be >= t0")

    def value_at(self, epoch: int) -> float:
        return min(self.t0 * self.growth**epoch, self.t_max)


@dataclass(frozen=True)
class BoundEntry:
    """One bound lo <= f(k) <= hi; comp selects the x/y component of a pair."""

    f: str
    k: int
    comp: int | None
    lo: float
    hi: float

    def __post_init__(self):
        if self.f not in DESCRIPTOR_NAMES:
            raise SpecError(f"unknown descriptor {self.f!r}")
        if self.f in PAIR_DESCRIPTORS:
            if self.comp not in (0, 1):
                raise SpecError(f"{self.f} bound needs comp 0 or 1")
        elif self.comp is not None:
            raise SpecError(f"{self.f} bound takes no component")
        if self.k < 0:
            raise SpecError("class index must be non-negative")
        if self.lo > self.hi:
            raise SpecError(f"lo {self.lo} > hi {self.hi} for {self.label}")

    @property
    def sort_key(self) -> tuple:
        return (self.f, self.k, -1 if self.comp is None else self.comp)

    @property
    def label(self) -> str:
        suffix = "" if self.comp is None else (".x", ".y")[self.comp]
        return f"{self.f}{suffix}(k={self.k})"


@dataclass(frozen=True)
class RatioEntry:
    """One bound a <= f(k)/f(l) <= b over a scalar descriptor."""

    f: str
    k: int
    l: int
    a: float
    b: float

    def __post_init__(self):
        if self.f not in SCALAR_DESCRIPTORS:
            raise SpecError(f"ratio bounds support scalar descriptors, not {self.f!r}")
        if self.k < 0 or self.l < 0:
            raise SpecError("class indices must be non-negative")
        if self.a > self.b:
            raise SpecError(f"a {self.a} > b {self.b} for {self.label}")

    @property
    def sort_key(self) -> tuple:
        return (self.f, self.k, self.l)

    @property
    def label(self) -> str:
        return f"ratio {self.f}(k={self.k})/{self.f}(k={self.l})"


@dataclass(frozen=True)
class ConstraintSpec:
    """Bound and ratio entries plus the barrier schedule."""

    entries: tuple[BoundEntry, ...]
    ratios: tuple[RatioEntry, ...] = ()
    barrier: BarrierParams = field(default_factory=BarrierParams)

    def max_class(self) -> int:
        ks = [e.k for e in self.entries] + [r.k for r in self.ratios] + [
            r.l for r in self.ratios
        ]
        return max(ks) if ks else -1

    def check_classes(self, num_classes: int) -> None:
        if self.max_class() >= num_classes:
            raise SpecError(
                f"spec references class {self.max_class()} but K={num_classes}"
            )


def bounds_from_target(
    targets: DescriptorSet, slack: float = 0.10
) -> tuple[BoundEntry, ...]:
    """Relax every target descriptor value into the interval [(1-slack)v, (1+slack)v].

    Absent classes get a single volume bound [0, 1] (one pixel of headroom);
    their centroid/spread/length are undefined on an empty region.
    """
    if slack < 0:
        raise SpecError("slack must be non-negative")
    entries: list[BoundEntry] = []
    for k, c in enumerate(targets.classes):
        if c.absent:
            entries.append(BoundEntry("volume", k, None, 0.0, 1.0))
            continue
        def band(v):
            return (1.0 - slack) * v, (1.0 + slack) * v
        entries.append(BoundEntry("volume", k, None, *band(c.volume)))
        for comp in range(2):
            entries.append(BoundEntry("centroid", k, comp, *band(c.centroid[comp])))
        for comp in range(2):
            entries.append(BoundEntry("spread", k, comp, *band(c.spread[comp])))
        entries.append(BoundEntry("length", k, None, *band(c.length)))
    return tuple(entries)


def shared_centroid_prior(spec: ConstraintSpec, k: int, l: int) -> ConstraintSpec:
    """Rewrite class k's centroid bounds to class l's (shared target location)."""
    source = {
        e.comp: e for e in spec.entries if e.f == "centroid" and e.k == l
    }
    if set(source) != {0, 1}:
        raise SpecError(f"class {l} has no complete centroid bounds")
    has_target = {e.comp for e in spec.entries if e.f == "centroid" and e.k == k}
    if has_target != {0, 1}:
        raise SpecError(f"class {k} has no complete centroid bounds")
    entries = tuple(
        replace(e, lo=source[e.comp].lo, hi=source[e.comp].hi)
        if e.f == "centroid" and e.k == k
        else e
        for e in spec.entries
    )
    return replace(spec, entries=entries)


def _bound_value(values: DescriptorSet, e: BoundEntry) -> float | None:
    """Current value of a bound entry, or None when the entry is suspended."""
    c = values.classes[e.k]
    if e.f == "volume":
        return c.volume
    if c.volume < EPS_ACT:
        return None
    if e.f == "length":
        return c.length
    pair = c.centroid if e.f == "centroid" else c.spread
    if pair is None:
        return None
    return pair[e.comp]


def _ratio_value(values: DescriptorSet, r: RatioEntry) -> float | None:
    ck, cl = values.classes[r.k], values.classes[r.l]
    if ck.volume < EPS_ACT or cl.volume < EPS_ACT:
        return None
    num = ck.volume if r.f == "volume" else ck.length
    den = cl.volume if r.f == "volume" else cl.length
    if den <= EPS_MASS:
        return None  # e.g. zero boundary length at a uniform initialization
    return num / den


def total_loss(values: DescriptorSet, spec: ConstraintSpec, t: float) -> float:
    """Sum of barrier pairs over all entries; suspended entries contribute 0.

    Summation follows a fixed order (sorted entry keys) so the result does not
    depend on the order the spec was written in.
    """
    spec.check_classes(values.num_classes)
    total = 0.0
    for e in sorted(spec.entries, key=lambda e: e.sort_key):
        v = _bound_value(values, e)
        if v is None:
            continue
        total += interval_terms(v, e.lo, e.hi, t)[0]
    for r in sorted(spec.ratios, key=lambda r: r.sort_key):
        v = _ratio_value(values, r)
        if v is None:
            continue
        total += interval_terms(v, r.a, r.b, t)[0]
    return float(total)


@dataclass(frozen=True)
class EntryStatus:
    """Evaluation of one constraint entry at a given prediction."""

    label: str
    value: float | None
    lo: float
    hi: float
    satisfied: bool
    suspended: bool

    def to_dict(self) -> dict:
        return {
            "entry": self.label,
            "value": self.value,
            "lo": self.lo,
            "hi": self.hi,
            "satisfied": self.satisfied,
            "suspended": self.suspended,
        }


def constraint_table(
    probs: ProbMap, spec: ConstraintSpec, lap: LaplacianCache
) -> list[EntryStatus]:
    """Per-entry value/bound/satisfaction for a prediction."""
    spec.check_classes(probs.num_classes)
    values = describe(probs, lap)
    rows = []
    for e in sorted(spec.entries, key=lambda e: e.sort_key):
        v = _bound_value(values, e)
        rows.append(
            EntryStatus(
                e.label, v, e.lo, e.hi,
                satisfied=v is not None and e.lo <= v <= e.hi,
                suspended=v is None,
            )
        )
    for r in sorted(spec.ratios, key=lambda r: r.sort_key):
        v = _ratio_value(values, r)
        rows.append(
            EntryStatus(
                r.label, v, r.a, r.b,
                satisfied=v is not None and r.a <= v <= r.b,
                suspended=v is None,
            )
        )
    return rows


def all_active_satisfied(rows: list[EntryStatus]) -> bool:
    return all(row.satisfied for row in rows if not row.suspended)


def spec_to_dict(spec: ConstraintSpec) -> dict:
    return {
        "entries": [
            {"f": e.f, "k": e.k, "comp": e.comp, "lo": e.lo, "hi": e.hi}
            for e in spec.entries
        ],
        "ratios": [
            {"f": r.f, "k": r.k, "l": r.l, "a": r.a, "b": r.b} for r in spec.ratios
        ],
        "barrier": {
            "t0": spec.barrier.t0,
            "growth": spec.barrier.growth,
            "t_max": spec.barrier.t_max,
        },
    }


def spec_from_dict(payload: dict) -> ConstraintSpec:
    try:
        entries = tuple(
            BoundEntry(
                f=str(e["f"]),
                k=int(e["k"]),
                comp=None if e.get("comp") is None else int(e["comp"]),
                lo=float(e["lo"]),
                hi=float(e["hi"]),
            )
            for e in payload.get("entries", [])
        )
        ratios = tuple(
            RatioEntry(
                f=str(r["f"]), k=int(r["k"]), l=int(r["l"]),
                a=float(r["a"]), b=float(r["b"]),
            )
            for r in payload.get("ratios", [])
        )
        b = payload.get("barrier", {})
        barrier = BarrierParams(
            t0=float(b.get("t0", 5.0)),
            growth=float(b.get("growth", 1.1)),
            t_max=float(b.get("t_max", 100.0)),
        )
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed constraint spec: {exc}") from exc
    return ConstraintSpec(entries, ratios, barrier)


def save_spec(path, spec: ConstraintSpec) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


def load_spec(path) -> ConstraintSpec:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from exc
    return spec_from_dict(payload)
