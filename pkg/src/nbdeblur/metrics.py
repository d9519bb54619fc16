"""Image quality metrics: PSNR and mean SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .grids import as_pixels


@dataclass(frozen=True)
class SsimParams:
    """Constants of the windowed SSIM: 11x11 Gaussian window, sigma 1.5,
    stability constants k1/k2 on the given dynamic range."""

    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = 255.0

    def __post_init__(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and positive")
        if self.window_sigma <= 0 or self.k1 <= 0 or self.k2 <= 0 or self.peak <= 0:
            raise ValueError("window_sigma, k1, k2 and peak must be positive")


def psnr(reference, test, peak: float = 255.0) -> float:
    """10 log10(peak^2 / MSE); +inf for identical images."""
    ref = as_pixels(reference)
    tst = as_pixels(test)
    if ref.shape != tst.shape:
        raise ValueError("psnr: image dimensions differ: %s vs %s" % (ref.shape, tst.shape))
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def ssim(reference, test, params: SsimParams | None = None) -> float:
    """Mean structural similarity over all fully-interior windows.

    Windows never cross the image boundary (no padding semantics to invent),
    so both images must be at least window_size in each dimension.
    """
    p = params or SsimParams()
    x = as_pixels(reference)
    y = as_pixels(test)
    if x.shape != y.shape:
        raise ValueError("ssim: image dimensions differ: %s vs %s" % (x.shape, y.shape))
    if min(x.shape) < p.window_size:
        raise ValueError("ssim: image smaller than the %dx%d window" % (p.window_size, p.window_size))

    w = _gaussian_window(p.window_size, p.window_sigma)
    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    exx = convolve2d(x * x, w, mode="valid")
    eyy = convolve2d(y * y, w, mode="valid")
    exy = convolve2d(x * y, w, mode="valid")
    var_x = exx - mu_x ** 2
    var_y = eyy - mu_y ** 2
    cov = exy - mu_x * mu_y

    c1 = (p.k1 * p.peak) ** 2
    c2 = (p.k2 * p.peak) ** 2
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(ssim_map))
