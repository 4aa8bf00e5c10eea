"""Synthetic ground-truth masks with matching grayscale images.

Two layouts:

* ``cardiac`` -- background, an off-center blob, and a ring concentric
  around a disk. The ring strictly surrounds the disk (shared center), and
  the ring/disk boundary-length ratio is kept inside [2, 3]; both structural
  facts are verified on the generated mask.
* ``blob`` -- background plus a single low-contrast blob.

Rasterization uses the analytic inclusion test at integer pixel centers
(no anti-aliasing), so descriptor targets computed from the mask are exact.

Class indices for ``cardiac``: 0 background, 1 blob, 2 ring, 3 disk.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .descriptors import Connectivity, DescriptorSet, build_laplacian, describe
from .errors import SpecError
from .grid import GridShape, LabelMask, pixel_coords

RING_DISK_LENGTH_RATIO = (2.0, 3.0)

_CARDIAC_LEVELS = (0.10, 0.45, 0.70, 0.95)
_BLOB_LEVELS = (0.45, 0.55)


class PhantomKind(str, Enum):
    CARDIAC = "cardiac"
    BLOB = "blob"


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, intensity, and seeding of one synthetic scene.

    Defaults describe the 64x64 cardiac layout; use :meth:`blob` for the
    single-blob scene (it recenters the blob on the grid).
    """

    kind: PhantomKind = PhantomKind.CARDIAC
    grid: GridShape = GridShape(64, 64)
    center: tuple[float, float] = (32.0, 40.0)
    disk_radius: float = 8.0
    ring_outer_radius: float = 12.0
    blob_center: tuple[float, float] = (32.0, 14.0)
    blob_radius: float = 10.0
    levels: tuple[float, ...] | None = None
    noise_sigma: float = 0.02
    seed: int = 0
    connectivity: Connectivity = Connectivity.EIGHT

    @classmethod
    def cardiac(cls, **overrides) -> "PhantomSpec":
        return cls(kind=PhantomKind.CARDIAC, **overrides)

    @classmethod
    def blob(cls, grid: GridShape = GridShape(64, 64), **overrides) -> "PhantomSpec":
        spec = cls(kind=PhantomKind.BLOB, grid=grid, **overrides)
        if "blob_center" not in overrides:
            spec = replace(
                spec, blob_center=((grid.height - 1) / 2.0, (grid.width - 1) / 2.0)
            )
        return spec

    @property
    def num_classes(self) -> int:
        return 4 if self.kind is PhantomKind.CARDIAC else 2


def _check_fits(grid: GridShape, center, radius, name):
    cx, cy = center
    if cx - radius < 0 or cx + radius > grid.height - 1:
        raise SpecError(f"{name} leaves the grid vertically")
    if cy - radius < 0 or cy + radius > grid.width - 1:
        raise SpecError(f"{name} leaves the grid horizontally")


def generate(spec: PhantomSpec) -> tuple[LabelMask, np.ndarray, DescriptorSet]:
    """Rasterize the scene; returns (mask, grayscale image, descriptor targets).

    Deterministic per seed (the seed only drives the intensity noise).
    Raises SpecError when the geometry does not fit the grid, shapes overlap,
    or the cardiac ring/disk length ratio falls outside [2, 3].
    """
    xs, ys = pixel_coords(spec.grid)
    labels = np.zeros(spec.grid.npixels, dtype=np.int64)
    bx, by = spec.blob_center
    blob = (xs - bx) ** 2 + (ys - by) ** 2 <= spec.blob_radius**2
    _check_fits(spec.grid, spec.blob_center, spec.blob_radius, "blob")

    if spec.kind is PhantomKind.CARDIAC:
        if spec.disk_radius >= spec.ring_outer_radius:
            raise SpecError("ring outer radius must exceed the disk radius")
        _check_fits(spec.grid, spec.center, spec.ring_outer_radius, "ring")
        cx, cy = spec.center
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        disk = d2 <= spec.disk_radius**2
        ring = (d2 <= spec.ring_outer_radius**2) & ~disk
        if np.any(blob & (ring | disk)):
            raise SpecError("blob overlaps the ring/disk structure")
        labels[blob] = 1
        labels[ring] = 2
        labels[disk] = 3
        for k, name in ((1, "blob"), (2, "ring"), (3, "disk")):
            if not np.any(labels == k):
                raise SpecError(f"{name} rasterized to zero pixels")
    else:
        labels[blob] = 1
        if not np.any(blob):
            raise SpecError("blob rasterized to zero pixels")

    mask = LabelMask(spec.grid, spec.num_classes, labels)
    lap = build_laplacian(spec.grid, spec.connectivity)
    ratio_pairs = (
        (("length", 2, 3),) if spec.kind is PhantomKind.CARDIAC else ()
    )
    targets = describe(mask, lap, ratio_pairs=ratio_pairs)

    if spec.kind is PhantomKind.CARDIAC:
        lo, hi = RING_DISK_LENGTH_RATIO
        r = targets.ratios[("length", 2, 3)]
        if not lo <= r <= hi:
            raise SpecError(
                f"ring/disk length ratio {r:.3f} outside [{lo}, {hi}]; "
                "adjust disk_radius/ring_outer_radius"
            )

    levels = spec.levels or (
        _CARDIAC_LEVELS if spec.kind is PhantomKind.CARDIAC else _BLOB_LEVELS
    )
    if len(levels) != spec.num_classes:
        raise SpecError(f"need {spec.num_classes} gray levels, got {len(levels)}")
    image = np.asarray(levels, dtype=np.float64)[labels]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    image = np.clip(image, 0.0, 1.0).reshape(spec.grid.height, spec.grid.width)
    return mask, image, targets
