"""Circulant linear operators: Gaussian blur and periodic forward differences.

Every operator here assumes periodic boundary conditions, so it is diagonal
in the 2-D DFT basis.  A SpectralOperator stores that diagonal (the DFT of
the operator's circularly embedded point-spread function); application and
its adjoint are componentwise products in the frequency domain.

Conventions fixed once so outputs are reproducible:
  * pixel (i, j) sits at row-major index i*width + j;
  * horizontal difference:  (Dx u)(i, j) = u(i, j+1 mod W) - u(i, j);
  * vertical difference:    (Dy u)(i, j) = u(i+1 mod H, j) - u(i, j);
  * a size-s kernel is embedded with tap (s//2, s//2) at the origin and the
    remaining taps wrapped circularly (even kernels have no center pixel;
    the continuous center is at (s-1)/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import as_pixels


@dataclass(frozen=True, eq=False)
class BlurKernel:
    """Normalized nonnegative convolution window of shape (size, size)."""

    size: int
    sigma: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.size, self.size):
            raise ValueError("weights shape does not match declared size")
        if np.any(w < 0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("kernel weights must sum to 1")
        object.__setattr__(self, "weights", w)


def gaussian_kernel(size: int, sigma: float) -> BlurKernel:
    """Sampled isotropic Gaussian window, normalized to unit mass.

    The center sits at the continuous coordinate ((size-1)/2, (size-1)/2),
    so even sizes are symmetric about the half-pixel between the two middle
    taps.
    """
    if size < 1:
        raise ValueError("kernel size must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    c = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - c
    sq = ax[:, None] ** 2 + ax[None, :] ** 2
    w = np.exp(-sq / (2.0 * sigma ** 2))
    return BlurKernel(size=size, sigma=float(sigma), weights=w / w.sum())


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Circulant operator represented by its DFT diagonal."""

    height: int
    width: int
    spectrum: np.ndarray

    def __post_init__(self):
        spec = np.asarray(self.spectrum, dtype=np.complex128)
        if spec.shape != (self.height, self.width):
            raise ValueError("spectrum shape does not match declared dimensions")
        object.__setattr__(self, "spectrum", spec)

    def _convolve(self, u, conjugate: bool) -> np.ndarray:
        u = as_pixels(u)
        if u.shape != (self.height, self.width):
            raise ValueError(
                "operator is %dx%d but image is %dx%d"
                % (self.height, self.width, u.shape[0], u.shape[1])
            )
        spec = np.conj(self.spectrum) if conjugate else self.spectrum
        out = np.fft.ifft2(spec * np.fft.fft2(u))
        residue = np.max(np.abs(out.imag))
        if residue > 1e-8 * np.linalg.norm(u):
            raise ValueError(
                "imaginary residue %.3e: spectrum is not conjugate-symmetric" % residue
            )
        return out.real

    def apply(self, u) -> np.ndarray:
        """Apply the operator: IDFT(spectrum * DFT(u))."""
        return self._convolve(u, conjugate=False)

    def apply_adjoint(self, u) -> np.ndarray:
        """Apply the adjoint: IDFT(conj(spectrum) * DFT(u))."""
        return self._convolve(u, conjugate=True)


def embed_kernel(kernel: BlurKernel, height: int, width: int) -> np.ndarray:
    """Place kernel taps on an HxW grid with tap (s//2, s//2) at the origin."""
    if kernel.size > min(height, width):
        raise ValueError("kernel larger than image")
    psf = np.zeros((height, width))
    psf[: kernel.size, : kernel.size] = kernel.weights
    anchor = kernel.size // 2
    return np.roll(psf, (-anchor, -anchor), axis=(0, 1))


def spectral_of_kernel(kernel: BlurKernel, height: int, width: int) -> SpectralOperator:
    """DFT of the circularly embedded kernel; DC entry is 1 for unit-mass kernels."""
    return SpectralOperator(height, width, np.fft.fft2(embed_kernel(kernel, height, width)))


def diff_spectra(height: int, width: int) -> tuple[SpectralOperator, SpectralOperator]:
    """Spectra of the periodic forward differences (horizontal, vertical)."""
    if height < 2 or width < 2:
        raise ValueError("difference operators need both dimensions >= 2")
    psf_x = np.zeros((height, width))
    psf_x[0, 0] = -1.0
    psf_x[0, width - 1] = 1.0
    psf_y = np.zeros((height, width))
    psf_y[0, 0] = -1.0
    psf_y[height - 1, 0] = 1.0
    return (
        SpectralOperator(height, width, np.fft.fft2(psf_x)),
        SpectralOperator(height, width, np.fft.fft2(psf_y)),
    )


# Stencil forms of the same differences.  These are exact (no FFT roundoff)
# and cheap, so the solver uses them wherever a spectrum is not required.


def forward_diff_x(u) -> np.ndarray:
    u = as_pixels(u)
    return np.roll(u, -1, axis=1) - u


def forward_diff_y(u) -> np.ndarray:
    u = as_pixels(u)
    return np.roll(u, -1, axis=0) - u


def diff_x_adjoint(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.roll(p, 1, axis=1) - p


def diff_y_adjoint(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.roll(p, 1, axis=0) - p


def gradient(u) -> np.ndarray:
    """Stack (Dx u, Dy u) along a leading axis: shape (2, H, W)."""
    u = as_pixels(u)
    return np.stack([forward_diff_x(u), forward_diff_y(u)])


def gradient_adjoint(p) -> np.ndarray:
    """Adjoint of gradient(): maps a (2, H, W) pair field back to an image."""
    p = np.asarray(p, dtype=np.float64)
    return diff_x_adjoint(p[0]) + diff_y_adjoint(p[1])
