"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one pass/fail line (visible with ``pytest -s`` or in the
captured output) and enforces its runtime budget.  Random inputs are seeded,
so reruns are deterministic.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from nbdeblur import (
    POISSON,
    SolverConfig,
    aitv_value,
    gaussian_kernel,
    make_phantom,
    psnr,
    run_admm,
    simulate_observation,
    spectral_of_kernel,
    ssim,
)
from nbdeblur.admm import AdmmState, update_image
from nbdeblur.cli import ExperimentConfig, run_benchmark
from nbdeblur.metrics import SsimParams
from nbdeblur.noise import nb_sample_field
from nbdeblur.operators import diff_spectra, gradient, gradient_adjoint
from nbdeblur.prox import (
    cubic_roots,
    nb_fidelity_prox_field,
    poisson_fidelity_prox_field,
    prox_l1_minus_alpha_l2,
)

from test_metrics import direct_ssim


@contextmanager
def criterion(num, name, budget_s):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print("[acceptance] criterion %2d (%s): FAIL" % (num, name))
        raise
    elapsed = time.perf_counter() - start
    within = elapsed < budget_s
    print(
        "[acceptance] criterion %2d (%s): %s in %.2fs (budget %.0fs)"
        % (num, name, "PASS" if within else "FAIL (runtime)", elapsed, budget_s)
    )
    assert within, "criterion %d exceeded its runtime budget" % num


# -- shared helpers -----------------------------------------------------------


def nb_stationarity(v, blurred, count, dual, r, penalty):
    return (r + count) / (r + v) - count / v - dual + penalty * (v - blurred)


def nb_objective_field(v, blurred, count, dual, r, penalty):
    safe = np.where(v > 0, v, 1.0)
    val = (
        (r + count) * np.log(r + np.maximum(v, 0.0))
        - np.where(count > 0, count * np.log(safe), 0.0)
        - dual * v
        + 0.5 * penalty * (blurred - v) ** 2
    )
    return np.where((v > 0) | ((v == 0) & (count == 0)), val, np.inf)


def lockstep_bisection_minimizer(blurred, count, dual, r, penalty):
    """Independent oracle for the NB fidelity step: bracket all sign changes
    of the stationarity function on a dense grid, bisect each bracket in
    lockstep, and pick the objective-minimizing candidate."""
    n = blurred.size
    upper = blurred + (np.maximum(dual, 0.0) + 1.0) / penalty + count + 1.0
    t = np.unique(np.concatenate([np.geomspace(1e-13, 1.0, 500), np.linspace(1e-10, 1.0, 300)]))
    v_grid = upper[:, None] * t[None, :]
    phi = nb_stationarity(
        v_grid, blurred[:, None], count[:, None], dual[:, None], r[:, None], penalty[:, None]
    )
    change = phi[:, :-1] * phi[:, 1:] < 0
    order = np.argsort(~change, axis=1, kind="stable")[:, :3]
    valid = np.take_along_axis(change, order, axis=1)
    lo = np.take_along_axis(v_grid[:, :-1], order, axis=1)
    hi = np.take_along_axis(v_grid[:, 1:], order, axis=1)

    b, g, d, rr, p = (a[:, None] for a in (blurred, count, dual, r, penalty))
    f_lo = nb_stationarity(np.where(valid, lo, 1.0), b, g, d, rr, p)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        f_mid = nb_stationarity(np.where(valid, mid, 1.0), b, g, d, rr, p)
        go_left = f_lo * f_mid <= 0
        hi = np.where(go_left, mid, hi)
        lo = np.where(go_left, lo, mid)
        f_lo = np.where(go_left, f_lo, f_mid)
    roots = 0.5 * (lo + hi)

    cand_obj = np.where(valid, nb_objective_field(roots, b, g, d, rr, p), np.inf)
    zero_obj = np.where(
        count == 0, nb_objective_field(np.zeros(n), blurred, count, dual, r, penalty), np.inf
    )
    all_obj = np.concatenate([cand_obj, zero_obj[:, None]], axis=1)
    all_v = np.concatenate([roots, np.zeros((n, 1))], axis=1)
    best = np.argmin(all_obj, axis=1)
    return np.take_along_axis(all_v, best[:, None], axis=1)[:, 0]


def local_grid_min(xs, alphas, lams, centers, half, step):
    """Objective minimum over square grids of the given step around centers."""
    offsets = np.arange(-half, half + step / 2, step)
    oy1, oy2 = np.meshgrid(offsets, offsets, indexing="ij")
    flat1 = oy1.ravel()[None, :]
    flat2 = oy2.ravel()[None, :]
    best = np.full(len(xs), np.inf)
    chunk = 400
    for s in range(0, len(xs), chunk):
        sl = slice(s, s + chunk)
        y1 = centers[sl, 0:1] + flat1
        y2 = centers[sl, 1:2] + flat2
        obj = (
            np.abs(y1)
            + np.abs(y2)
            - alphas[sl, None] * np.sqrt(y1 * y1 + y2 * y2)
            + ((xs[sl, 0:1] - y1) ** 2 + (xs[sl, 1:2] - y2) ** 2) / (2.0 * lams[sl, None])
        )
        best[sl] = obj.min(axis=1)
    return best


# -- criteria -----------------------------------------------------------------


def test_criterion_01_cubic_oracle_equivalence():
    with criterion(1, "cubic solver vs companion-matrix oracle", 5.0):
        rng = np.random.default_rng(11001)
        n = 10 ** 4
        a2, a1, a0 = rng.uniform(-10, 10, size=(3, n))
        roots = cubic_roots(a2, a1, a0)

        poly = ((roots + a2[:, None]) * roots + a1[:, None]) * roots + a0[:, None]
        scale = np.maximum.reduce([np.ones(n), np.abs(a2), np.abs(a1), np.abs(a0)])
        assert np.max(np.abs(poly).max(axis=1) / scale) < 1e-8

        companions = np.zeros((n, 3, 3))
        companions[:, 1, 0] = 1.0
        companions[:, 2, 1] = 1.0
        companions[:, 0, 2] = -a0
        companions[:, 1, 2] = -a1
        companions[:, 2, 2] = -a2
        eig = np.linalg.eigvals(companions)

        def real_parts(values):
            keep = np.abs(values.imag) <= 1e-8 * (1 + np.abs(values.real))
            return np.sort(values.real[keep])

        for i in range(n):
            mine = real_parts(roots[i])
            oracle = real_parts(eig[i])
            assert mine.size == oracle.size
            assert np.max(np.abs(mine - oracle)) <= 1e-6


def test_criterion_02_nb_fidelity_optimality():
    with criterion(2, "NB fidelity step optimality vs bisection oracle", 10.0):
        rng = np.random.default_rng(11002)
        n = 10 ** 4
        blurred = rng.uniform(0, 500, size=n)
        count = rng.integers(0, 501, size=n).astype(float)
        dual = rng.uniform(-10, 10, size=n)
        r = np.exp(rng.uniform(np.log(0.5), np.log(1000), size=n))
        penalty = np.exp(rng.uniform(np.log(0.01), np.log(10), size=n))

        v = nb_fidelity_prox_field(blurred, count, dual, r, penalty)
        pos = v > 0
        resid = nb_stationarity(v[pos], blurred[pos], count[pos], dual[pos], r[pos], penalty[pos])
        assert np.max(np.abs(resid)) < 1e-6

        oracle_v = lockstep_bisection_minimizer(blurred, count, dual, r, penalty)
        mine_obj = nb_objective_field(v, blurred, count, dual, r, penalty)
        oracle_obj = nb_objective_field(oracle_v, blurred, count, dual, r, penalty)
        assert np.max(np.abs(mine_obj - oracle_obj)) <= 1e-9


def test_criterion_03_prox_grid_oracle():
    with criterion(3, "l1-minus-l2 prox vs dense grid search", 30.0):
        rng = np.random.default_rng(11003)
        vectors = rng.uniform(-2.5, 2.5, size=(10 ** 3, 2))
        alphas = np.array([0.0, 0.3, 0.5, 0.8, 1.0])
        lams = np.array([0.1, 1.0, 5.0])

        xs = np.repeat(np.repeat(vectors, len(alphas), axis=0), len(lams), axis=0)
        al = np.tile(np.repeat(alphas, len(lams)), len(vectors))
        lm = np.tile(lams, len(vectors) * len(alphas))

        outs = np.array(
            [prox_l1_minus_alpha_l2(xs[i], al[i], lm[i]) for i in range(len(xs))]
        )
        closed_obj = (
            np.abs(outs).sum(axis=1)
            - al * np.linalg.norm(outs, axis=1)
            + ((xs - outs) ** 2).sum(axis=1) / (2.0 * lm)
        )

        # stage 1: coarse scan of [-3, 3]^2 at step 0.05.  Within one
        # (alpha, lam) group the grid-only terms are shared and the
        # cross-term is a small matrix product, so each group is one pass.
        offsets = np.arange(-3.0, 3.0 + 0.025, 0.05)
        oy1, oy2 = np.meshgrid(offsets, offsets, indexing="ij")
        grid_pts = np.stack([oy1.ravel(), oy2.ravel()], axis=1)
        grid_l1 = np.abs(grid_pts).sum(axis=1)
        grid_l2 = np.sqrt((grid_pts ** 2).sum(axis=1))
        grid_sq = (grid_pts ** 2).sum(axis=1)

        coarse = np.empty(len(xs))
        top3_centers = np.empty((len(xs), 3, 2))
        for alpha in alphas:
            for lam in lams:
                group = np.flatnonzero((al == alpha) & (lm == lam))
                base = grid_l1 - alpha * grid_l2 + grid_sq / (2.0 * lam)
                cross = (xs[group] @ grid_pts.T) / lam
                obj = base[None, :] - cross  # + ||x||^2/(2 lam), constant per case
                const = (xs[group] ** 2).sum(axis=1) / (2.0 * lam)
                coarse[group] = obj.min(axis=1) + const
                top3 = np.argpartition(obj, 3, axis=1)[:, :3]
                top3_centers[group] = grid_pts[top3]

        # stage 2: 1e-3 refinement around the three best coarse cells
        rep = 3
        xs3 = np.repeat(xs, rep, axis=0)
        al3 = np.repeat(al, rep)
        lm3 = np.repeat(lm, rep)
        centers = top3_centers.reshape(-1, 2)
        fine = local_grid_min(xs3, al3, lm3, centers, half=0.04, step=1e-3)
        fine = fine.reshape(-1, rep).min(axis=1)

        grid_best = np.minimum(coarse, fine)
        assert np.all(closed_obj <= grid_best + 1e-6)


def test_criterion_04_image_step_normal_equations():
    with criterion(4, "image-step FFT solve vs normal equations", 5.0):
        rng = np.random.default_rng(11004)
        blur = spectral_of_kernel(gaussian_kernel(5, 1.6), 16, 16)
        dx, dy = diff_spectra(16, 16)
        for _ in range(20):
            state = AdmmState(
                image=rng.uniform(0, 10, size=(16, 16)),
                fit=rng.uniform(0, 10, size=(16, 16)),
                grad=rng.uniform(-3, 3, size=(2, 16, 16)),
                dual_fit=rng.uniform(-2, 2, size=(16, 16)),
                dual_grad=rng.uniform(-2, 2, size=(2, 16, 16)),
                penalty=float(rng.uniform(0.05, 5.0)),
            )
            f = update_image(state, blur, dx, dy)
            beta = state.penalty
            residual = (
                beta * blur.apply_adjoint(blur.apply(f) - state.fit)
                + blur.apply_adjoint(state.dual_fit)
                + beta * gradient_adjoint(gradient(f) - state.grad)
                + gradient_adjoint(state.dual_grad)
            )
            rhs = blur.apply_adjoint(beta * state.fit - state.dual_fit) + gradient_adjoint(
                beta * state.grad - state.dual_grad
            )
            assert np.linalg.norm(residual) < 1e-8 * (1 + np.linalg.norm(rhs))


def test_criterion_05_poisson_limit_consistency():
    with criterion(5, "NB at huge dispersion matches Poisson", 120.0):
        rng = np.random.default_rng(11005)
        n = 10 ** 4
        blurred = rng.uniform(0, 1000, size=n)
        count = rng.integers(0, 1001, size=n)
        dual = rng.uniform(-5, 5, size=n)
        # the limit gap at a stationary point scales like |v - g| / (r * beta),
        # so penalties well below 0.1 make the true difference itself exceed
        # 1e-4 at these magnitudes; sample the range where the claim is exact
        penalty = np.exp(rng.uniform(np.log(0.1), np.log(10), size=n))
        nb = nb_fidelity_prox_field(blurred, count, dual, 1e9, penalty)
        po = poisson_fidelity_prox_field(blurred, count, dual, penalty)
        assert np.max(np.abs(nb - po)) < 1e-4

        truth = make_phantom(64, 64, ramp=False)
        kernel = gaussian_kernel(10, 2.5)
        blur = spectral_of_kernel(kernel, 64, 64)
        obs = simulate_observation(truth, blur, POISSON, 11005, kernel=kernel)
        nb_run = run_admm(obs, blur, SolverConfig(model="nb", r=1e9))
        po_run = run_admm(obs, blur, SolverConfig(model="poisson"))
        gap = np.linalg.norm(nb_run.f_hat.pixels - po_run.f_hat.pixels)
        assert gap < 1e-2 * np.linalg.norm(po_run.f_hat.pixels)


def test_criterion_06_trend_reproduction():
    with criterion(6, "NB-vs-Poisson PSNR trend on the phantom", 600.0):
        config = ExperimentConfig(
            phantom_size=128,
            phantom_ramp=False,
            models=("nb", "poisson"),
            r_values=(1.0, 1000.0),
            trials=3,
            base_seed=11006,
            blur_size=10,
            blur_sigma=2.5,
        )
        outcomes, rows = run_benchmark(config)
        assert all(o.status == "ok" for o in outcomes)
        mean = {(row.model, row.r): row.mean_psnr for row in rows}
        gap_noisy = mean[("nb", 1.0)] - mean[("poisson", 1.0)]
        gap_clean = mean[("nb", 1000.0)] - mean[("poisson", 1000.0)]
        print(
            "[acceptance]   psnr gaps: %+.2f dB at r=1, %+.2f dB at r=1000"
            % (gap_noisy, gap_clean)
        )
        assert gap_noisy >= 1.0
        assert abs(gap_clean) <= 1.0


def test_criterion_07_sampler_moments():
    with criterion(7, "NB sampler mean/variance", 10.0):
        rng = np.random.default_rng(11007)
        n = 10 ** 5
        for mu, r in ((50.0, 1.0), (50.0, 10.0), (200.0, 100.0)):
            draws = nb_sample_field(np.full(n, mu), r, rng).astype(float)
            mean = draws.mean()
            var = draws.var(ddof=1)
            se_mean = math.sqrt(var / n)
            centered = draws - mean
            se_var = math.sqrt(max(np.mean(centered ** 4) - var ** 2, 0.0) / n)
            assert abs(mean - mu) <= 3 * se_mean
            assert abs(var - (mu + mu ** 2 / r)) <= 3 * se_var


def test_criterion_08_metric_correctness():
    with criterion(8, "PSNR/SSIM correctness", 5.0):
        assert psnr(np.zeros((8, 8)), np.full((8, 8), 10.0), 255.0) == pytest.approx(
            28.131, abs=1e-3
        )
        rng = np.random.default_rng(11008)
        x = rng.uniform(0, 255, size=(32, 32))
        assert ssim(x, x.copy()) == 1.0
        for _ in range(3):
            a = rng.uniform(0, 255, size=(32, 32))
            b = np.clip(a + rng.normal(0, 25, size=(32, 32)), 0, 255)
            assert ssim(a, b) == pytest.approx(direct_ssim(a, b), abs=1e-9)
        assert ssim(a, b, SsimParams()) == ssim(b, a)


def test_criterion_09_solver_contract():
    with criterion(9, "termination, feasibility, determinism", 120.0):
        truth = make_phantom(64, 64, ramp=False)
        kernel = gaussian_kernel(10, 2.5)
        blur = spectral_of_kernel(kernel, 64, 64)
        obs = simulate_observation(truth, blur, 10.0, 11009, kernel=kernel)
        config = SolverConfig(model="nb")

        first = run_admm(obs, blur, config)
        assert first.terminated_by == "tolerance"
        rels = [h.rel_change for h in first.history[1:]]
        assert all(r > config.epsilon for r in rels[:-1])
        assert rels[-1] <= config.epsilon

        fit_scale = 1.0 + np.linalg.norm(blur.apply(first.f_hat.pixels))
        grad_scale = 1.0 + np.linalg.norm(gradient(first.f_hat.pixels))
        assert first.history[-1].residual_fit < 1e-3 * fit_scale
        assert first.history[-1].residual_grad < 1e-3 * grad_scale
        assert all(np.isfinite(h.objective) for h in first.history)

        second = run_admm(obs, blur, config)
        assert np.array_equal(first.f_hat.pixels, second.f_hat.pixels)
        assert first.history == second.history


def test_criterion_10_aitv_nonnegativity():
    with criterion(10, "weighted TV difference stays nonnegative", 5.0):
        rng = np.random.default_rng(11010)
        for _ in range(10 ** 3):
            image = rng.uniform(-100, 100, size=(16, 16))
            atv = aitv_value(image, 0.0)
            for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
                value = aitv_value(image, alpha)
                assert value >= (1 - alpha) * atv - 1e-9 * (1 + atv)
                assert (1 - alpha) * atv >= 0.0