"""Observation models: negative binomial and Poisson counts.

A pixel with blurred intensity mu observes a count drawn from NB(r, p) with
p = r / (r + mu), which has mean mu and variance mu + mu^2 / r.  As the
dispersion r grows the distribution tightens to Poisson(mu); the module
accepts r = inf as the Poisson sentinel so one simulation path covers both.

Sampling uses the gamma-Poisson mixture (lambda ~ Gamma(shape=r,
scale=mu/r), count ~ Poisson(lambda)), which is exact for real-valued r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import CountGrid, as_pixels
from .operators import BlurKernel, SpectralOperator

POISSON = math.inf
"""Dispersion sentinel selecting the Poisson limit."""


@dataclass(frozen=True)
class NbModelParams:
    """Dispersion parameter r; r = inf means Poisson."""

    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("dispersion r must be positive")

    @property
    def is_poisson(self) -> bool:
        return math.isinf(self.r)

    def failure_prob(self, mean: float) -> float:
        """Per-trial failure probability p = r / (r + mean)."""
        if self.is_poisson:
            return 1.0
        return self.r / (self.r + mean)


@dataclass(frozen=True, eq=False)
class NbObservation:
    """Counts together with the parameters that produced them."""

    counts: CountGrid
    params: NbModelParams
    blur: BlurKernel | None = None
    seed: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape


def _as_generator(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng)
    if isinstance(rng, np.random.Generator):
        return rng, None
    raise TypeError("rng must be an integer seed or a numpy Generator")


def nb_sample_field(means: np.ndarray, r: float, rng: np.random.Generator) -> np.ndarray:
    """Elementwise NB draws with the given means and shared dispersion r."""
    if not r > 0:
        raise ValueError("dispersion r must be positive")
    means = np.asarray(means, dtype=np.float64)
    if np.any(means < 0):
        raise ValueError("means must be nonnegative")
    if math.isinf(r):
        return rng.poisson(means).astype(np.int64)
    lam = rng.gamma(shape=r, scale=means / r)
    return rng.poisson(lam).astype(np.int64)


def nb_sample(mean: float, r: float, rng) -> int:
    """One NB draw with the given mean and dispersion (mean 0 gives 0)."""
    gen, _ = _as_generator(rng)
    return int(nb_sample_field(np.array([mean]), r, gen)[0])


def poisson_sample(mean: float, rng) -> int:
    """One Poisson draw (mean 0 gives 0)."""
    gen, _ = _as_generator(rng)
    if mean < 0:
        raise ValueError("mean must be nonnegative")
    return int(gen.poisson(mean))


def simulate_observation(
    truth,
    blur: SpectralOperator,
    r: float,
    rng,
    kernel: BlurKernel | None = None,
) -> NbObservation:
    """Blur the truth and sample per-pixel independent counts at dispersion r.

    ``rng`` may be an integer seed (recorded on the observation) or a numpy
    Generator (seed recorded as None).  ``r = POISSON`` selects Poisson noise.
    """
    pixels = as_pixels(truth)
    if np.any(pixels < 0):
        raise ValueError("truth image must be nonnegative")
    gen, seed = _as_generator(rng)
    means = np.clip(blur.apply(pixels), 0.0, None)
    counts = nb_sample_field(means, r, gen)
    return NbObservation(CountGrid(counts), NbModelParams(r), blur=kernel, seed=seed)


# ---------------------------------------------------------------------------
# Negative log-likelihood data-fit terms.  Both drop the g*log(mu) term at
# zero-count pixels (0*log(0) == 0 convention) and report +inf, rather than
# raising, when a positive count meets a non-positive mean.
# ---------------------------------------------------------------------------


def nb_data_fit(mean_field: np.ndarray, counts: np.ndarray, r: float) -> float:
    """sum_i (r + g_i) log(r + mu_i) - g_i log(mu_i)."""
    mu = np.asarray(mean_field, dtype=np.float64)
    g = np.asarray(counts, dtype=np.float64)
    if np.any((mu <= 0) & (g > 0)) or np.any(r + mu <= 0):
        return math.inf
    total = float(np.sum((r + g) * np.log(r + mu)))
    pos = g > 0
    if np.any(pos):
        total -= float(np.sum(g[pos] * np.log(mu[pos])))
    return total


def poisson_data_fit(mean_field: np.ndarray, counts: np.ndarray) -> float:
    """sum_i mu_i - g_i log(mu_i)."""
    mu = np.asarray(mean_field, dtype=np.float64)
    g = np.asarray(counts, dtype=np.float64)
    if np.any((mu <= 0) & (g > 0)):
        return math.inf
    total = float(np.sum(mu))
    pos = g > 0
    if np.any(pos):
        total -= float(np.sum(g[pos] * np.log(mu[pos])))
    return total


def nb_neg_log_likelihood(f, obs: NbObservation, blur: SpectralOperator) -> float:
    """NB data-fit of image f against the observed counts (up to a constant in f)."""
    return nb_data_fit(blur.apply(as_pixels(f)), obs.counts.counts, obs.params.r)


def poisson_neg_log_likelihood(f, obs: NbObservation, blur: SpectralOperator) -> float:
    """Poisson data-fit of image f against the observed counts (up to a constant in f)."""
    return poisson_data_fit(blur.apply(as_pixels(f)), obs.counts.counts)
