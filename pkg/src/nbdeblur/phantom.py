"""Synthetic test image: flat regions with sharp edges, plus an optional ramp.

Benchmarks and tests need a ground-truth image with known structure and no
external data dependency.  The layout scales with the requested size so the
same scene works from 32x32 up.
"""

from __future__ import annotations

import numpy as np

from .grids import ImageGrid


def make_phantom(height: int, width: int, peak: float = 255.0, ramp: bool = True) -> ImageGrid:
    """Piecewise-constant scene; ``ramp=True`` adds a horizontal gradient strip.

    Intensities stay within (0, 0.9*peak]: a dim background keeps every pixel
    photon-active, which matters for low-dispersion noise.
    """
    if height < 8 or width < 8:
        raise ValueError("phantom needs at least 8 pixels per side")
    if peak <= 0:
        raise ValueError("peak must be positive")
    img = np.full((height, width), 0.08 * peak)

    def rows(a, b):
        return slice(int(a * height), int(b * height))

    def cols(a, b):
        return slice(int(a * width), int(b * width))

    img[rows(0.10, 0.45), cols(0.08, 0.42)] = 0.85 * peak
    img[rows(0.55, 0.85), cols(0.10, 0.38)] = 0.30 * peak

    yy, xx = np.mgrid[0:height, 0:width]
    cy, cx = 0.32 * height, 0.68 * width
    radius = 0.17 * min(height, width)
    img[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2] = 0.55 * peak

    if ramp:
        band = img[rows(0.62, 0.92), cols(0.52, 0.95)]
        ramp_vals = np.linspace(0.08 * peak, 0.90 * peak, band.shape[1])
        band[:] = ramp_vals[None, :]

    return ImageGrid(img)
