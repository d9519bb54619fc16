"""Closed-form scalar subproblem solvers used by the ADMM iteration.

Three pieces live here:

  * a cubic root solver (Cardano) for the per-pixel negative binomial
    fidelity step,
  * the quadratic closed form for the Poisson fidelity step,
  * the proximal operator of ||.||_1 - alpha * ||.||_2 for the gradient step.

All of them come in a scalar flavor and a vectorized field flavor; the
scalar flavor is the field flavor on a one-element array, so the two can
never drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQRT3 = math.sqrt(3.0)
_REAL_ROOT_TOL = 1e-8


def cubic_roots(a2, a1, a0) -> np.ndarray:
    """All roots of nu^3 + a2*nu^2 + a1*nu + a0, stacked on a trailing axis.

    Cardano's method.  Cube roots are taken branch-consistently: real cube
    roots when the discriminant is >= 0, and a principal complex cube root
    with its conjugate when it is negative (three real roots; complex
    intermediates are unavoidable there).  Taking independent principal
    branches for both cube roots would violate S*T = -(3*a1 - a2^2)/9 and
    produce non-roots, so we do not.

    Newton polishing runs until the polynomial residual reaches the target
    (usually a single step; clustered roots converge only linearly under
    Newton and need a few more).
    """
    a2, a1, a0 = np.broadcast_arrays(
        np.asarray(a2, dtype=np.float64),
        np.asarray(a1, dtype=np.float64),
        np.asarray(a0, dtype=np.float64),
    )
    q = (3.0 * a1 - a2 ** 2) / 9.0
    r = (9.0 * a2 * a1 - 27.0 * a0 - 2.0 * a2 ** 3) / 54.0
    disc = q ** 3 + r ** 2

    roots = np.empty(a2.shape + (3,), dtype=np.complex128)
    nonneg = disc >= 0.0
    if np.any(nonneg):
        sq = np.sqrt(disc[nonneg])
        s = np.cbrt(r[nonneg] + sq)
        t = np.cbrt(r[nonneg] - sq)
        re_pair = -0.5 * (s + t)
        im_pair = 0.5 * _SQRT3 * (s - t)
        roots[nonneg] = np.stack(
            [(s + t).astype(np.complex128), re_pair + 1j * im_pair, re_pair - 1j * im_pair],
            axis=-1,
        )
    neg = ~nonneg
    if np.any(neg):
        s = (r[neg] + 1j * np.sqrt(-disc[neg])) ** (1.0 / 3.0)
        sr, si = s.real, s.imag
        roots[neg] = np.stack(
            [2.0 * sr, -sr - _SQRT3 * si, -sr + _SQRT3 * si], axis=-1
        ).astype(np.complex128)
    roots += (-a2 / 3.0)[..., None]

    c2, c1, c0 = a2[..., None], a1[..., None], a0[..., None]
    target = 1e-12 * np.maximum.reduce([np.ones_like(a2), np.abs(a2), np.abs(a1), np.abs(a0)])[..., None]
    value = ((roots + c2) * roots + c1) * roots + c0
    for _ in range(40):
        slope = (3.0 * roots + 2.0 * c2) * roots + c1
        active = (np.abs(value) > target) & (np.abs(slope) > 1e-30)
        if not np.any(active):
            break
        roots = np.where(active, roots - value / np.where(active, slope, 1.0), roots)
        value = ((roots + c2) * roots + c1) * roots + c0
    return roots


def real_roots(roots: np.ndarray) -> np.ndarray:
    """Real parts of the entries whose imaginary part is negligible."""
    keep = np.abs(roots.imag) <= _REAL_ROOT_TOL * (1.0 + np.abs(roots.real))
    return roots.real[keep]


@dataclass(frozen=True)
class CubicCoefficients:
    """Monic cubic nu^3 + a2*nu^2 + a1*nu + a0."""

    a2: float
    a1: float
    a0: float

    def __post_init__(self):
        if not (math.isfinite(self.a2) and math.isfinite(self.a1) and math.isfinite(self.a0)):
            raise ValueError("cubic coefficients must be finite")

    @classmethod
    def for_nb_fidelity(cls, blurred, count, dual, r, penalty) -> "CubicCoefficients":
        """Optimality cubic of the per-pixel NB fidelity step, divided by the penalty."""
        a2, a1, a0 = _nb_cubic_coefficients(blurred, count, dual, r, penalty)
        return cls(float(a2), float(a1), float(a0))


def _nb_cubic_coefficients(blurred, count, dual, r, penalty):
    if not np.all(np.asarray(penalty) > 0):
        raise ValueError("penalty must be positive")
    if not np.all(np.asarray(r) > 0):
        raise ValueError("dispersion r must be positive")
    a2 = r - blurred - dual / penalty
    a1 = -r * blurred - r * dual / penalty + r / penalty
    a0 = -r * count / penalty
    return a2, a1, a0


def solve_cubic(coeffs: CubicCoefficients) -> list[float]:
    """Real roots of the cubic, ascending (multiple roots may repeat)."""
    roots = cubic_roots(coeffs.a2, coeffs.a1, coeffs.a0)
    return sorted(float(v) for v in real_roots(roots))


# ---------------------------------------------------------------------------
# Per-pixel negative binomial fidelity step:
#
#   argmin_{v >= 0}  (r + g) log(r + v) - g log(v) - x v + (beta/2) (a - v)^2
#
# where a is the blurred-image value, g the observed count and x the running
# multiplier.  Stationary points are roots of a cubic; candidates are the
# positive real roots, plus v = 0 when g = 0 (the log(v) term vanishes
# identically there, so the boundary is admissible).
# ---------------------------------------------------------------------------


def _nb_objective(v, blurred, count, dual, r, penalty):
    """Fidelity-step objective; +inf where v is outside the admissible set."""
    v = np.asarray(v, dtype=np.float64)
    ok = (v > 0) | ((v == 0) & (count == 0))
    safe_v = np.where(v > 0, v, 1.0)
    val = (
        (r + count) * np.log(r + np.where(ok, v, 0.0))
        - np.where(count > 0, count * np.log(safe_v), 0.0)
        - dual * v
        + 0.5 * penalty * (blurred - v) ** 2
    )
    return np.where(ok, val, np.inf)


def _nb_stationarity(v, blurred, count, dual, r, penalty):
    return (r + count) / (r + v) - count / v - dual + penalty * (v - blurred)


def _refine_positive_roots(v, blurred, count, dual, r, penalty, steps: int = 2):
    """Guarded Newton steps on the raw optimality condition.

    Cardano works on coefficients that scale like r (and r can be ~1e9 in the
    Poisson limit), so clustered-magnitude cancellation can cost several
    digits; the raw condition is perfectly conditioned near the root and
    restores them.
    """
    for _ in range(steps):
        pos = v > 0
        safe_v = np.where(pos, v, 1.0)
        slope = -(r + count) / (r + safe_v) ** 2 + count / safe_v ** 2 + penalty
        value = _nb_stationarity(safe_v, blurred, count, dual, r, penalty)
        step_ok = pos & (slope > 1e-30) & np.isfinite(value)
        stepped = safe_v - value / np.where(step_ok, slope, 1.0)
        v = np.where(step_ok & (stepped > 0) & np.isfinite(stepped), stepped, v)
    return v


def nb_fidelity_prox_field(blurred, counts, dual, r, penalty) -> np.ndarray:
    """Vectorized NB fidelity step over a whole field.

    ``r`` and ``penalty`` are scalars in solver use, but any array that
    broadcasts against the fields works.
    """
    blurred = np.asarray(blurred, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    dual = np.asarray(dual, dtype=np.float64)
    blurred, counts, dual, r, penalty = np.broadcast_arrays(
        blurred, counts, dual, np.asarray(r, dtype=np.float64), np.asarray(penalty, dtype=np.float64)
    )
    a2, a1, a0 = _nb_cubic_coefficients(blurred, counts, dual, r, penalty)
    roots = cubic_roots(a2, a1, a0)

    is_real = np.abs(roots.imag) <= _REAL_ROOT_TOL * (1.0 + np.abs(roots.real))
    cand = np.where(is_real & (roots.real > 0), roots.real, np.nan)

    b = blurred[..., None]
    g = counts[..., None]
    d = dual[..., None]
    r_col = r[..., None]
    p_col = penalty[..., None]
    refined = _refine_positive_roots(
        np.where(np.isnan(cand), -1.0, cand), b, g, d, r_col, p_col
    )
    cand = np.where(np.isnan(cand), np.nan, refined)

    obj = np.where(
        np.isnan(cand), np.inf, _nb_objective(np.nan_to_num(cand), b, g, d, r_col, p_col)
    )
    zero_obj = np.where(
        counts == 0,
        _nb_objective(np.zeros_like(blurred), blurred, counts, dual, r, penalty),
        np.inf,
    )
    all_obj = np.concatenate([obj, zero_obj[..., None]], axis=-1)
    all_cand = np.concatenate([np.nan_to_num(cand), np.zeros_like(zero_obj)[..., None]], axis=-1)

    best = np.argmin(all_obj, axis=-1)
    if np.any(~np.isfinite(np.take_along_axis(all_obj, best[..., None], axis=-1))):
        bad = ~np.isfinite(np.take_along_axis(all_obj, best[..., None], axis=-1))
        raise RuntimeError(
            "cubic solver produced no admissible candidate at %d pixel(s) with positive counts"
            % int(bad.sum())
        )
    return np.take_along_axis(all_cand, best[..., None], axis=-1)[..., 0]


def nb_fidelity_prox(blurred: float, count: int, dual: float, r: float, penalty: float) -> float:
    """Scalar NB fidelity step (see nb_fidelity_prox_field)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    return float(
        nb_fidelity_prox_field(
            np.array([blurred]), np.array([count]), np.array([dual]), r, penalty
        )[0]
    )


def poisson_fidelity_prox_field(blurred, counts, dual, penalty) -> np.ndarray:
    """Vectorized Poisson fidelity step: the nonnegative root of
    penalty*v^2 + (1 - dual - penalty*blurred)*v - count = 0."""
    if not np.all(np.asarray(penalty) > 0):
        raise ValueError("penalty must be positive")
    blurred = np.asarray(blurred, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    dual = np.asarray(dual, dtype=np.float64)
    b = penalty * blurred + dual - 1.0
    root = np.sqrt(b ** 2 + 4.0 * penalty * counts)
    # citardauq form on the cancellation-prone branch
    denom = np.where(b < 0, root - b, 1.0)
    v = np.where(b >= 0, (b + root) / (2.0 * penalty), 2.0 * counts / denom)
    return np.maximum(v, 0.0)


def poisson_fidelity_prox(blurred: float, count: int, dual: float, penalty: float) -> float:
    """Scalar Poisson fidelity step."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    return float(
        poisson_fidelity_prox_field(
            np.array([blurred]), np.array([count]), np.array([dual]), penalty
        )[0]
    )


# ---------------------------------------------------------------------------
# Proximal operator of ||y||_1 - alpha ||y||_2:
#
#   prox(x, alpha, lam) = argmin_y ||y||_1 - alpha ||y||_2 + (1/(2 lam)) ||x - y||^2
#
# Closed form by cases on m = ||x||_inf:
#   (i)   m > lam:             soft-threshold then stretch by (||z|| + alpha*lam)/||z||
#   (ii)  (1-alpha)lam < m <= lam:  1-sparse at the largest entry (ties: lowest index)
#   (iii) m <= (1-alpha)lam:   zero
# ---------------------------------------------------------------------------


def prox_l1_minus_alpha_l2(x, alpha: float, lam: float) -> np.ndarray:
    """Closed-form prox of the weighted l1-minus-l2 penalty on one vector."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    x = np.asarray(x, dtype=np.float64)
    m = np.max(np.abs(x))
    if m <= (1.0 - alpha) * lam:
        return np.zeros_like(x)
    if m > lam:
        z = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
        norm = np.linalg.norm(z)
        return z * ((norm + alpha * lam) / norm)
    out = np.zeros_like(x)
    idx = int(np.argmax(np.abs(x)))
    out[idx] = (m + (alpha - 1.0) * lam) * np.sign(x[idx])
    return out


def prox_l1_minus_alpha_l2_pairs(pairs: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """Vectorized prox over a (2, ...) field of 2-vectors (leading axis)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    pairs = np.asarray(pairs, dtype=np.float64)
    absval = np.abs(pairs)
    m = np.max(absval, axis=0)

    z = np.sign(pairs) * np.maximum(absval - lam, 0.0)
    znorm = np.sqrt(np.sum(z ** 2, axis=0))
    safe = np.where(znorm > 0, znorm, 1.0)
    stretched = z * ((znorm + alpha * lam) / safe)

    first_is_max = absval[0] >= absval[1]
    spike_mag = m + (alpha - 1.0) * lam
    spike = np.where(
        first_is_max,
        np.stack([spike_mag * np.sign(pairs[0]), np.zeros_like(m)]),
        np.stack([np.zeros_like(m), spike_mag * np.sign(pairs[1])]),
    )

    out = np.where(m > lam, stretched, spike)
    return np.where(m <= (1.0 - alpha) * lam, 0.0, out)
