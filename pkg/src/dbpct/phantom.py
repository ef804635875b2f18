"""Synthetic multi-grain phantoms.

A phantom is a Voronoi tessellation of the inscribed circle: random seed
points partition the disk into polygonal grains of constant intensity.
Everything outside the circle is zero, which keeps all projected mass on
an n-channel detector at every angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PhantomSpec", "support_radius", "inscribed_circle_mask",
           "voronoi_image", "generate_phantom", "generate_dataset"]


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of one random phantom draw.

    Generation is a pure function of the spec; the same seed always
    produces the same image on every platform (PCG64 stream).
    """

    size: int = 64
    grain_range: tuple[int, int] = (6, 14)
    intensity_range: tuple[float, float] = (0.2, 1.0)
    seed: int = 0

    def __post_init__(self):
        g_min, g_max = self.grain_range
        lo, hi = self.intensity_range
        if self.size < 8:
            raise ValueError(f"size must be >= 8, got {self.size}")
        if g_min < 2 or g_min > g_max:
            raise ValueError(f"invalid grain range {self.grain_range}")
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"invalid intensity range {self.intensity_range}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def support_radius(size: int) -> float:
    """Radius of the phantom support disk.

    ``(size - 1) / 2`` rather than ``size / 2``: a pixel at offset r from
    the rotation center lands at detector coordinate within r of the
    detector center, so this radius is the largest that keeps every
    in-support pixel on the detector at every angle (no projected mass is
    ever lost).
    """
    return (size - 1) / 2.0


def inscribed_circle_mask(size: int, radius: float | None = None) -> np.ndarray:
    """Boolean mask of pixels inside the support disk centered at the
    pixel-grid center ``((size-1)/2, (size-1)/2)``."""
    if radius is None:
        radius = support_radius(size)
    c = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size]
    return (rows - c) ** 2 + (cols - c) ** 2 <= radius**2


def voronoi_image(points: np.ndarray, intensities: np.ndarray, size: int) -> np.ndarray:
    """Nearest-seed labeling: each pixel inside the inscribed circle takes
    the intensity of its closest point (Euclidean, ties to the lowest
    point index); pixels outside the circle are zero.

    ``points`` is (g, 2) in (row, col) coordinates.
    """
    points = np.asarray(points, dtype=np.float64)
    intensities = np.asarray(intensities, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 1:
        raise ValueError(f"points must be (g, 2), got shape {points.shape}")
    if intensities.shape != (points.shape[0],):
        raise ValueError("one intensity per point is required")
    rows, cols = np.mgrid[0:size, 0:size]
    d2 = (rows[..., None] - points[:, 0]) ** 2 + (cols[..., None] - points[:, 1]) ** 2
    labels = np.argmin(d2, axis=-1)  # first minimum wins ties
    img = intensities[labels]
    img[~inscribed_circle_mask(size)] = 0.0
    return img


def _draw_points_in_circle(rng: np.random.Generator, count: int, size: int) -> np.ndarray:
    """Uniform points in the support disk via rejection sampling."""
    c = (size - 1) / 2.0
    radius = support_radius(size)
    points = np.empty((count, 2))
    k = 0
    while k < count:
        p = rng.uniform(-radius, radius, size=2)
        if p[0] ** 2 + p[1] ** 2 <= radius**2:
            points[k] = p + c
            k += 1
    return points


def generate_phantom(spec: PhantomSpec) -> np.ndarray:
    """Draw one multi-grain phantom, deterministically from ``spec.seed``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    g_min, g_max = spec.grain_range
    grains = int(rng.integers(g_min, g_max + 1))
    points = _draw_points_in_circle(rng, grains, spec.size)
    lo, hi = spec.intensity_range
    intensities = rng.uniform(lo, hi, size=grains)
    return voronoi_image(points, intensities, spec.size)


def generate_dataset(spec: PhantomSpec, count: int, base_seed: int) -> list[np.ndarray]:
    """Generate ``count`` phantoms; image ``k`` uses seed ``base_seed + k``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [
        generate_phantom(
            PhantomSpec(
                size=spec.size,
                grain_range=spec.grain_range,
                intensity_range=spec.intensity_range,
                seed=base_seed + k,
            )
        )
        for k in range(count)
    ]
