"""The fourteen acceptance criteria, each at its stated tolerance and runtime budget.

Every criterion prints one ``PASS``/``FAIL`` line. Run with pytest (the lines
are repeated in the terminal summary) or directly as a script.
"""
import math
import sys
import time

import mpmath as mp
import numpy as np
import pytest

from gsv.errors import InapplicableGamma
from gsv.explosion import CERTIFIED_ABOVE, explosion_certificate, holder_split, truncated_moment_mc
from gsv.kernels import KernelSpec, PathGrid, covariance, holder_modulus, sample_gaussian_paths
from gsv.model import ModelSpec, ScalingParams, VolFunction
from gsv.pricing import bs_dimensionless_call, bs_integral_form, implied_vol
from gsv.rates import (
    CONVERGED,
    RateOptions,
    bm_drift_max_cdf,
    bm_drift_max_cdf_printed,
    cl_tail,
    exit_rate,
    ldp_rate_path,
    ldp_rate_terminal,
    mdp_rate_terminal,
)
from gsv.simulate import estimate_tail, mdp_tilt

RESULTS = []
CRITERIA = {}


def criterion(number, title, budget):
    def wrap(fn):
        CRITERIA[number] = (title, budget, fn)
        return fn

    return wrap


def run(number):
    title, budget, fn = CRITERIA[number]
    start = time.perf_counter()
    ok, detail = fn()
    took = time.perf_counter() - start
    ok = bool(ok) and took < budget
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{took:.2f}s / {budget:g}s]"
    print(line)
    RESULTS.append(line)
    return ok, line


# ---------------------------------------------------------------- criteria


@criterion(1, "Schilder reduction", 1.0)
def schilder():
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.constant(1.0), rho=0.0)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        g = np.concatenate(([0.0], np.cumsum(rng.normal(scale=0.25, size=16))))
        exact = 0.5 * np.sum(np.diff(g) ** 2) * 16
        worst = max(worst, abs(ldp_rate_path(model, g).value - exact))
    return worst <= 1e-12, f"max abs error {worst:.2e} over 100 paths"


@criterion(2, "constant-sigma rate closed form", 30.0)
def constant_rate():
    worst = 0.0
    for rho in (0.0, 0.5, -0.5):
        model = ModelSpec(KernelSpec.rl(0.75), VolFunction.constant(0.2), rho=rho)
        for x in (0.05, 0.1, 0.2):
            r = ldp_rate_terminal(model, x)
            worst = max(worst, abs(r.value / mdp_rate_terminal(0.2, 1.0, x) - 1))
    return worst <= 1e-4, f"max relative error {worst:.2e}"


@criterion(3, "grid-refinement monotonicity", 300.0)
def refinement():
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.bounded_smooth(0.2, 0.3), rho=-0.5)
    worst, statuses = -math.inf, set()
    for x in (0.1, 0.3, -0.3):
        r = ldp_rate_terminal(model, x, RateOptions(levels=(16, 32, 64, 128)))
        vals = [v for _, v in r.grid_levels]
        worst = max(worst, max(b - a for a, b in zip(vals, vals[1:])))
        statuses.add(r.status)
    return worst <= 1e-6 and statuses == {CONVERGED}, f"largest increase {worst:.2e}, status {sorted(statuses)}"


@criterion(4, "exit rate Brownian oracle", 120.0)
def exit_oracle():
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.constant(1.0), rho=0.0)
    worst = 0.0
    for b, t in ((0.3, 0.5), (0.5, 1.0)):
        r = exit_rate(model, (-b, b), t, RateOptions(n=32))
        worst = max(worst, abs(r.value / (b * b / (2 * t)) - 1))
    return worst <= 1e-3, f"max relative error {worst:.2e}"


@criterion(5, "CL terminal law", 120.0)
def cl_law():
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.bounded_smooth(0.2, 0.5), rho=0.0)
    x, grid, limit = 0.1, PathGrid(128), cl_tail(0.2, 1.0, 0.1)
    parts = []
    z = None
    for eps in (0.2, 0.05):
        est = estimate_tail(model, ScalingParams(eps, 0.75, beta=0.75), x, grid, 100_000, seed=5)
        z = (est.mean - limit) / est.stderr
        parts.append(f"eps={eps}: {est.mean:.5f}+-{est.stderr:.5f}")
    return abs(z) <= 4, f"{'; '.join(parts)}; limit {limit:.5f}; final gap {z:+.2f} SE"


def _bridge_max_tail(mu, T, y, n, count, seed, chunk=50_000):
    """P(sup_{t<=T} mu t + Z_t > y) from n-step paths, conditioning on the Brownian bridge between nodes."""
    rng = np.random.default_rng(seed)
    dt = T / n
    vals = []
    for start in range(0, count, chunk):
        m = min(chunk, count - start)
        path = np.zeros((m, n + 1))
        np.cumsum(mu * dt + math.sqrt(dt) * rng.standard_normal((m, n)), axis=1, out=path[:, 1:])
        a, b = path[:, :-1], path[:, 1:]
        below = (a < y) & (b < y)
        cross = np.exp(-2 * np.where(below, (y - a) * (y - b), 0.0) / dt)
        with np.errstate(divide="ignore"):
            log_stay = np.where(below, np.log1p(-np.minimum(cross, 1.0)), -np.inf)
        vals.append(-np.expm1(log_stay.sum(axis=1)))
    v = np.concatenate(vals)
    return v.mean(), v.std(ddof=1) / math.sqrt(v.size)


@criterion(6, "corrected barrier law", 60.0)
def barrier():
    mu, T, y = -0.1, 1.0, 0.5
    mean, se = _bridge_max_tail(mu, T, y, 512, 1_000_000, seed=6)
    corrected, printed = bm_drift_max_cdf(mu, T, y), bm_drift_max_cdf_printed(mu, T, y)
    zc, zp = (corrected - mean) / se, (printed - mean) / se
    ok = abs(zc) <= 4 and abs(zp) > 4
    return ok, (
        f"MC {mean:.5f}+-{se:.5f}; corrected {corrected:.5f} ({zc:+.2f} SE); "
        f"printed variant {printed:.5f} ({zp:+.0f} SE, inconsistent)"
    )


@criterion(7, "Black-Scholes integral identity", 1.0)
def bs_identity():
    worst = 0.0
    for x in (0.0, 0.1, 0.3, 0.6, 1.0):
        for nu in (0.1, 0.2, 0.5, 1.0):
            worst = max(worst, abs(bs_integral_form(x, nu) - bs_dimensionless_call(x, nu)))
    return worst <= 1e-8, f"max abs difference {worst:.2e} on 20 points"


@criterion(8, "implied-vol inversion", 1.0)
def iv_roundtrip():
    rng = np.random.default_rng(8)
    worst = 0.0
    for k, nu in zip(rng.uniform(0, 1, 100), rng.uniform(0.05, 2, 100)):
        p = bs_dimensionless_call(k, nu)
        worst = max(worst, abs(bs_dimensionless_call(k, implied_vol(k, p)) - p))
    return worst <= 1e-10, f"max residual {worst:.2e}"


@criterion(9, "MDP tail convergence", 600.0)
def mdp_sweep():
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.bounded_smooth(0.2, 0.3), rho=0.0)
    x, grid = 0.6, PathGrid(64)
    limit = -mdp_rate_terminal(0.2, 1.0, x)
    gaps, logs = [], []
    for eps in (0.8, 0.4, 0.2, 0.1):
        sc = ScalingParams(eps, 0.75, beta=0.375)
        est = estimate_tail(model, sc, x, grid, 50_000, seed=3, tilt=mdp_tilt(model, sc, x, grid))
        logs.append(est.scaled_log)
        gaps.append(abs(est.scaled_log - limit))
    rel = gaps[-1] / abs(limit)
    ok = gaps[-1] < gaps[0] and rel <= 0.25
    shown = ", ".join(f"{v:.3f}" for v in logs)
    return ok, f"scaled_log {shown} vs {limit:.3f}; relative gap at eps=0.1 {rel:.1%}"


@criterion(10, "moment-explosion certificate", 1.0)
def certificate():
    mp.mp.dps = 50
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.poly_plus(1.0, 2), rho=0.0)
    H = mp.mpf(3) / 4
    v = 1 / ((2 * H + 2) * mp.gamma(H + mp.mpf(3) / 2) ** 2)
    worst, ok, ustars = 0.0, True, []
    for M in (1e3, 1e6, 1e9):
        c = explosion_certificate(model, None, 0.1, 1.0, M)
        if c.status != CERTIFIED_ABOVE:
            return False, f"M={M:g} not certified"
        u, g = mp.mpf(c.u_star), mp.mpf(1) / 10
        bound = g * u**4 / 4 - u**2 / (2 * v) + mp.log(mp.sqrt(2 / mp.pi) * mp.sqrt(v) / (u + mp.sqrt(u**2 + 4 * v)))
        worst = max(worst, float(abs(bound - c.log_lower_bound) / abs(bound)))
        ok &= float(bound - g * 4) > M
        ustars.append(c.u_star)
    return ok and worst <= 1e-9, f"u* = {ustars}, max relative deviation {worst:.1e}"


@criterion(11, "lognormal moment oracle", 60.0)
def lognormal():
    s0, t = 0.3, 1.0
    model = ModelSpec(KernelSpec.rl(0.75), VolFunction.constant(s0), rho=0.0)
    est = truncated_moment_mc(model, 2.0, t, 1e8, PathGrid(16), 100_000, seed=11)
    exact = math.exp(s0 * s0 * t)
    z = (est.mean - exact) / est.stderr
    return abs(z) <= 4, f"{est.mean:.5f}+-{est.stderr:.5f} vs {exact:.5f} ({z:+.2f} SE)"


@criterion(12, "holder_split positivity", 1.0)
def holder():
    rhos = [r for r in np.linspace(-0.95, 0.95, 20) if abs(r) > 1e-9]
    bad, checked = [], 0
    for rho in rhos:
        crit = 1 / (1 - rho * rho)
        gammas = list(np.linspace(-10, 10, 41)) + [0.0, crit, crit * (1 + 1e-9), -1e-9, crit / 2]
        for g in gammas:
            checked += 1
            inside = 0 <= g <= crit
            try:
                _, _, ell = holder_split(g, rho)
                if inside or not ell > 0:
                    bad.append((g, rho))
            except InapplicableGamma:
                if not inside:
                    bad.append((g, rho))
    return not bad, f"{checked} lattice points, {len(bad)} violations"


@criterion(13, "kernel regularity", 60.0)
def regularity():
    grid = PathGrid(64)
    parts, ok = [], True
    for H in (0.3, 0.75):
        spec = KernelSpec.rl(H)
        ratios = [holder_modulus(spec, grid, 2.0**-k) / 2.0 ** (-2 * H * k) for k in range(1, 7)]
        spread = max(ratios) / min(ratios)
        ok &= spread < 2.0 and all(np.isfinite(ratios))
        parts.append(f"H={H}: ratio in [{min(ratios):.3f}, {max(ratios):.3f}]")
    return ok, "; ".join(parts)


@criterion(14, "sampling law", 60.0)
def sampling():
    spec, grid = KernelSpec.fbm(0.7), PathGrid(64)
    s = sample_gaussian_paths(spec, grid, 100_000, seed=14, backend="exact")
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(10):
        i, j = rng.integers(1, 65, 2)
        p = s.vol_path[:, i] * s.vol_path[:, j]
        z = (p.mean() - covariance(spec, grid.nodes[i], grid.nodes[j])) / (p.std(ddof=1) / math.sqrt(p.size))
        worst = max(worst, abs(z))
    return worst <= 4, f"largest deviation {worst:.2f} SE over 10 node pairs"


# ---------------------------------------------------------------- drivers


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, line = run(number)
    assert ok, line


if __name__ == "__main__":
    outcomes = [run(n)[0] for n in sorted(CRITERIA)]
    sys.exit(0 if all(outcomes) else 1)
