import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from gsv.errors import DegenerateEstimate, UnsupportedKernel
from gsv.kernels import KernelSpec, PathGrid
from gsv.model import CL, EXCEPTIONAL, LDP, MDP, MCEstimate, ModelSpec, ScalingParams, VolFunction
from gsv.pricing import bs_dimensionless_call
from gsv.rates import cl_running_max
from gsv.simulate import (
    estimate_call,
    estimate_exit_prob,
    estimate_tail,
    mdp_tilt,
    node_index,
    simulate_log_price,
)

RL = KernelSpec.rl(0.75)
BOUNDED = VolFunction.bounded_smooth(0.2, 0.5)


def const_model(s0=0.2, rho=0.0, kernel=RL):
    return ModelSpec(kernel, VolFunction.constant(s0), rho=rho)


# ---- VolFunction, ScalingParams


VOLS = [
    VolFunction.constant(0.3),
    VolFunction.affine(0.2, 0.4),
    VolFunction.exp(0.2, -0.7),
    VolFunction.poly_plus(0.1, 4),
    BOUNDED,
]


@given(st.floats(-50, 50), st.sampled_from(range(len(VOLS))))
def test_sigma_positive(x, i):
    assert VOLS[i](x) > 0


@given(st.floats(-1, 1), st.floats(-1, 1), st.sampled_from([1.0, 2.0, 5.0]), st.sampled_from(range(len(VOLS))))
def test_modulus_consistency(u, v, delta, i):
    sig = VOLS[i]
    x, y = u * delta, v * delta
    assert abs(sig(x) - sig(y)) <= sig.local_constant(delta) * abs(x - y) * (1 + 1e-12) + 1e-15


def test_custom_vol_modulus_uses_derivative():
    sig = VolFunction.custom(lambda x: 1.0 + 0.5 * np.sin(x))
    assert sig.local_constant(2.0) == pytest.approx(0.505, rel=1e-3)


@pytest.mark.parametrize(
    "family,params",
    [("CONSTANT", (0.0,)), ("AFFINE", (1.0, -1.0)), ("POLY_PLUS", (1.0, 3)), ("BOUNDED_SMOOTH", (1.0, 1.0))],
)
def test_vol_validation(family, params):
    with pytest.raises(ValueError):
        VolFunction(family, params)


@pytest.mark.parametrize(
    "kw,regime",
    [
        (dict(H=0.7), LDP),
        (dict(H=0.7, beta=0.35), MDP),
        (dict(H=0.7, alpha=0.2, beta=0.1), MDP),
        (dict(H=0.7, beta=0.7), CL),
        (dict(H=0.7, alpha=0.3, beta=0.4), EXCEPTIONAL),
        (dict(H=0.7, alpha=0.7), EXCEPTIONAL),
    ],
)
def test_regime_tags(kw, regime):
    sc = ScalingParams(eps=0.1, **kw)
    assert sc.regime == regime
    assert sc.speed_exponent == pytest.approx(2 * sc.H - 2 * sc.alpha - 2 * sc.beta)


@pytest.mark.parametrize("kw", [dict(beta=0.8), dict(beta=-0.1), dict(alpha=0.5, beta=0.4), dict(alpha=-1.0)])
def test_scaling_validation(kw):
    with pytest.raises(ValueError):
        ScalingParams(eps=0.1, H=0.7, **kw)


def test_scaling_powers_do_not_underflow():
    sc = ScalingParams(eps=1e-300, H=1.5, alpha=0.5)
    assert sc.strike_scale == pytest.approx(1e-150, rel=1e-10)
    assert sc.vol_scale == 0.0 or sc.vol_scale > 0


def test_model_validation():
    with pytest.raises(ValueError):
        ModelSpec(RL, BOUNDED, rho=1.5)
    with pytest.raises(ValueError):
        ModelSpec(RL, BOUNDED, T=2.0)
    assert ModelSpec(RL, BOUNDED, rho=-0.6).rho_bar == pytest.approx(0.8)


def test_mcestimate_invariants():
    with pytest.raises(ValueError):
        MCEstimate(0.1, -1.0, 10, 0)
    with pytest.raises(ValueError):
        MCEstimate(0.1, 0.0, 0, 0)


# ---- simulate_log_price


def test_constant_sigma_terminal_law():
    s0 = 0.2
    paths = simulate_log_price(const_model(s0), ScalingParams(1.0, 0.75, beta=0.75), PathGrid(64), 40000, seed=1)
    xt = paths.terminal
    se_mean = xt.std(ddof=1) / math.sqrt(xt.size)
    assert abs(xt.mean() + s0**2 / 2) < 4 * se_mean
    var_se = s0**2 * math.sqrt(2.0 / xt.size)
    assert abs(xt.var(ddof=1) - s0**2) < 4 * var_se
    assert np.all(paths.paths[:, 0] == 0.0)


def test_constant_sigma_normality_on_fine_grid():
    xt = simulate_log_price(const_model(0.3), ScalingParams(1.0, 0.75, beta=0.75), PathGrid(128), 40000, seed=3).terminal
    z = (xt + 0.045) / 0.3
    # skewness and excess kurtosis of a normal sample have stderr sqrt(6/N) and sqrt(24/N)
    assert abs(stats.skew(z)) < 4 * math.sqrt(6 / z.size)
    assert abs(stats.kurtosis(z)) < 4 * math.sqrt(24 / z.size)


@pytest.mark.parametrize("kernel", [RL, KernelSpec.fbm(0.3)], ids=["rl", "fbm"])
def test_martingale_bounded_sigma(kernel):
    model = ModelSpec(kernel, BOUNDED, rho=0.0)
    xt = simulate_log_price(model, ScalingParams(1.0, kernel.H, beta=kernel.H), PathGrid(64), 40000, seed=5).terminal
    s = np.exp(xt)
    assert abs(s.mean() - 1) < 4 * s.std(ddof=1) / math.sqrt(s.size)


def test_simulation_deterministic():
    model = ModelSpec(RL, BOUNDED, rho=-0.5)
    sc = ScalingParams(0.3, 0.75, beta=0.3)
    a = simulate_log_price(model, sc, PathGrid(32), 9000, seed=11).paths
    b = simulate_log_price(model, sc, PathGrid(32), 9000, seed=11).paths
    assert np.array_equal(a, b)
    c = simulate_log_price(model, sc, PathGrid(32), 9000, seed=12).paths
    assert not np.array_equal(a, c)


def test_simulation_independent_of_threads(monkeypatch):
    model = ModelSpec(RL, BOUNDED, rho=-0.5)
    sc = ScalingParams(0.3, 0.75)
    monkeypatch.setenv("GSV_THREADS", "1")
    a = simulate_log_price(model, sc, PathGrid(16), 10000, seed=4).paths
    monkeypatch.setenv("GSV_THREADS", "3")
    b = simulate_log_price(model, sc, PathGrid(16), 10000, seed=4).paths
    assert np.array_equal(a, b)


def test_covariance_backend_needs_rho_zero():
    with pytest.raises(UnsupportedKernel):
        simulate_log_price(ModelSpec(RL, BOUNDED, rho=0.3), ScalingParams(0.5, 0.75), PathGrid(8), 10, 0, "covariance")
    p = simulate_log_price(ModelSpec(RL, BOUNDED), ScalingParams(0.5, 0.75), PathGrid(8), 10, 0, "covariance")
    assert p.paths.shape == (10, 9)


def test_discretisation_error_shrinks():
    # sigma depends on B-hat, so the left-point sum has a bias that falls with n
    model = ModelSpec(KernelSpec.rl(0.5), VolFunction.exp(0.3, 1.0))
    sc = ScalingParams(1.0, 0.5, beta=0.5)
    means = []
    for n in (4, 16, 64):
        xt = simulate_log_price(model, sc, PathGrid(n), 60000, seed=7).terminal
        means.append(np.exp(xt).mean())
    errs = [abs(m - 1) for m in means]
    assert errs[-1] < 0.02


# ---- estimate_tail


@pytest.mark.parametrize("eps", [0.5, 0.05])
def test_tail_constant_sigma_cl(eps):
    model = const_model(1.0)
    est = estimate_tail(model, ScalingParams(eps, 0.75, beta=0.75), 0.5, PathGrid(16), 40000, seed=2)
    exact = special.ndtr(-(0.5 + 0.5))
    assert abs(est.mean - exact) < 4 * est.stderr
    assert est.scaled_log == pytest.approx(math.log(est.mean))


def test_tail_scaled_log_exponent():
    sc = ScalingParams(0.5, 0.75, beta=0.25, alpha=0.1)
    est = estimate_tail(const_model(0.3), sc, 0.2, PathGrid(16), 20000, seed=2)
    assert est.scaled_log == pytest.approx(0.5 ** (1.5 - 0.2 - 0.5) * math.log(est.mean), rel=1e-12)


def test_tail_degenerate_without_tilt():
    with pytest.raises(DegenerateEstimate):
        estimate_tail(const_model(0.2), ScalingParams(1.0, 0.75), 50.0, PathGrid(16), 5000, seed=0)


def test_tail_rejects_nonpositive_x():
    with pytest.raises(ValueError):
        estimate_tail(const_model(0.2), ScalingParams(1.0, 0.75), 0.0, PathGrid(8), 10, seed=0)


def test_tilt_unbiased():
    model = ModelSpec(RL, BOUNDED, rho=-0.4)
    sc = ScalingParams(0.4, 0.75, beta=0.375)
    grid = PathGrid(32)
    plain = estimate_tail(model, sc, 0.3, grid, 60000, seed=8)
    tilted = estimate_tail(model, sc, 0.3, grid, 60000, seed=9, tilt=mdp_tilt(model, sc, 0.3, grid))
    assert abs(plain.mean - tilted.mean) < 4 * math.hypot(plain.stderr, tilted.stderr)
    assert tilted.stderr < plain.stderr


def test_tilt_reaches_deep_tail():
    model = const_model(0.2)
    sc = ScalingParams(1.0, 0.75)
    grid = PathGrid(16)
    est = estimate_tail(model, sc, 1.5, grid, 20000, seed=1, tilt=mdp_tilt(model, sc, 1.5, grid))
    exact = special.ndtr(-(1.5 / 0.2 + 0.1))
    assert abs(est.mean - exact) < 4 * est.stderr
    assert est.stderr < 0.05 * est.mean


def test_tail_monotone_in_x_common_numbers():
    model = ModelSpec(RL, BOUNDED, rho=0.3)
    sc = ScalingParams(0.5, 0.75)
    vals = [estimate_tail(model, sc, x, PathGrid(16), 8000, seed=6).mean for x in (0.05, 0.1, 0.2, 0.3)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


# ---- estimate_call


def test_call_constant_sigma_is_black_scholes():
    s0, eps, x = 0.3, 0.5, 0.2
    sc = ScalingParams(eps, 0.75, beta=0.25, alpha=0.2)
    est = estimate_call(const_model(s0), sc, x, PathGrid(8), 40000, seed=3)
    k, nu = x * eps**0.2, eps**0.5 * s0
    assert abs(est.mean - bs_dimensionless_call(k, nu)) < 4 * est.stderr


def test_call_bounded_by_spot():
    est = estimate_call(ModelSpec(RL, BOUNDED), ScalingParams(1.0, 0.75), 0.01, PathGrid(16), 20000, seed=3)
    assert est.mean <= 1 + 4 * est.stderr


def test_call_monotone_in_strike():
    model = ModelSpec(RL, BOUNDED, rho=-0.3)
    sc = ScalingParams(0.5, 0.75)
    vals = [estimate_call(model, sc, x, PathGrid(16), 8000, seed=2).mean for x in (0.01, 0.05, 0.1, 0.2)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_call_alpha_override():
    model, grid = const_model(0.3), PathGrid(8)
    a = estimate_call(model, ScalingParams(0.5, 0.75, alpha=0.3), 0.1, grid, 5000, seed=1)
    b = estimate_call(model, ScalingParams(0.5, 0.75), 0.1, grid, 5000, seed=1, alpha=0.3)
    assert a.mean == b.mean


# ---- estimate_exit_prob


def test_exit_wide_and_narrow_intervals():
    model, sc, grid = const_model(0.2), ScalingParams(1.0, 0.75), PathGrid(32)
    assert estimate_exit_prob(model, sc, (-1e6, 1e6), 1.0, grid, 4000, seed=0).mean == 0.0
    assert estimate_exit_prob(model, sc, (-1e-9, 1e-9), 1.0, grid, 4000, seed=0).mean == 1.0


def test_exit_one_sided_barrier():
    s0, b, n = 0.2, 0.15, 512
    model, sc = const_model(s0), ScalingParams(0.3, 0.75, beta=0.75)
    est = estimate_exit_prob(model, sc, (-1e6, b), 1.0, PathGrid(n), 40000, seed=4)
    # discrete monitoring shifts the barrier by 0.5826 sigma sqrt(dt)
    shifted = cl_running_max(s0, 1.0, b + 0.5826 * s0 * math.sqrt(1.0 / n))
    assert abs(est.mean - shifted) < 4 * est.stderr


def test_exit_monotone_in_t():
    model, sc, grid = ModelSpec(RL, BOUNDED), ScalingParams(0.5, 0.75), PathGrid(32)
    vals = [estimate_exit_prob(model, sc, (-0.1, 0.1), t, grid, 4000, seed=5).mean for t in (0.25, 0.5, 1.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_exit_validation():
    model, sc, grid = const_model(), ScalingParams(1.0, 0.75), PathGrid(8)
    with pytest.raises(ValueError):
        estimate_exit_prob(model, sc, (0.1, 0.2), 1.0, grid, 10, seed=0)
    with pytest.raises(ValueError):
        node_index(grid, 0.3)
    assert node_index(grid, 0.375) == 3
