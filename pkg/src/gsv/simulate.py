"""Monte Carlo engine for the scaled log-price X^{eps,beta,H}.

X_t = -1/2 eps^(2H-2beta) int_0^t sigma(eps^H B-hat_s)^2 ds
      + eps^(H-beta) int_0^t sigma(eps^H B-hat_s) (rho_bar dW_s + rho dB_s)

Both integrals use left-point sums on the grid. Work is done block by block
(see :mod:`gsv.rng`) so memory stays bounded and results do not depend on
the thread count.
"""
from dataclasses import dataclass, replace
import math

import numpy as np

from . import rng as _rng
from .errors import DegenerateEstimate, UnsupportedKernel
from .kernels import PathGrid, block_drawer
from .model import MCEstimate, ModelSpec, ScalingParams


@dataclass(frozen=True)
class LogPricePaths:
    paths: np.ndarray  # (count, n+1), X at the grid nodes
    grid: PathGrid
    backend: str

    @property
    def terminal(self):
        return self.paths[:, -1]


def _block_kernel(model, scaling, grid, backend, tilt):
    if backend == "covariance" and model.rho != 0.0:
        raise UnsupportedKernel(
            "the covariance backend samples B-hat only; rho != 0 needs the joint law",
            backend=backend,
        )
    draw = block_drawer(model.kernel, grid, backend)
    dt = grid.dt
    theta = None if tilt is None else np.asarray(tilt, float)
    if theta is not None and theta.shape != (grid.n,):
        raise ValueError("tilt needs one value per grid interval")
    vs, ns, ds = scaling.vol_scale, scaling.noise_scale, scaling.drift_scale
    rho, rb = model.rho, model.rho_bar

    def run(gen, size):
        db, vol, dw = draw(gen, size)
        logw = None
        if theta is not None:
            dw = dw + theta * dt
            logw = -(dw @ theta) + 0.5 * dt * float(theta @ theta)
        sig = model.sigma(vs * vol[:, :-1])
        noise = rb * dw if db is None or rho == 0.0 else rb * dw + rho * db
        inc = ns * sig * noise - 0.5 * ds * dt * sig**2
        X = np.zeros((size, grid.n + 1))
        np.cumsum(inc, axis=1, out=X[:, 1:])
        ivar = np.zeros((size, grid.n + 1))
        np.cumsum(dt * sig**2, axis=1, out=ivar[:, 1:])
        return X, logw, ivar

    return run


def run_blocks(model, scaling, grid, count, seed, reduce, backend="kernel", tilt=None):
    """Apply ``reduce(X, logw, ivar)`` blockwise and concatenate the results.

    ``ivar`` is the running integrated variance int_0^t sigma(eps^H B-hat)^2 ds.
    ``logw`` is the log likelihood ratio of the W-tilt, or None.
    """
    if not isinstance(model, ModelSpec) or not isinstance(scaling, ScalingParams):
        raise TypeError("model and scaling must be ModelSpec and ScalingParams")
    step = _block_kernel(model, scaling, grid, backend, tilt)
    parts = _rng.map_blocks(lambda g, size: reduce(*step(g, size)), count, seed)
    return np.concatenate(parts)


def simulate_log_price(model, scaling, grid, count, seed, backend="kernel"):
    """Sample X^{eps,beta,H} at the grid nodes. X_0 = 0 (unit spot)."""
    paths = run_blocks(model, scaling, grid, count, seed, lambda X, w, v: X, backend)
    return LogPricePaths(paths, grid, backend)


def summarise(values, seed, scaling=None):
    count = values.size
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    scaled = None
    if scaling is not None and mean > 0:
        scaled = scaling.power(scaling.speed_exponent) * math.log(mean)
    return MCEstimate(mean, stderr, count, int(seed), scaled)


def _weighted(indicator, logw):
    return indicator.astype(float) if logw is None else np.where(indicator, np.exp(logw), 0.0)


def estimate_tail(model, scaling, x, grid, count, seed, tilt=None, backend="kernel"):
    """P(X_T >= x eps^alpha), optionally importance-sampled by shifting W.

    ``tilt`` is a per-interval drift theta for W: samples are drawn with
    dW = dZ + theta dt and weighted by exp(-sum theta dW + 1/2 sum theta^2 dt).
    """
    if not x > 0:
        raise ValueError("x must be positive")
    level = x * scaling.strike_scale
    vals = run_blocks(
        model, scaling, grid, count, seed, lambda X, w, v: _weighted(X[:, -1] >= level, w), backend, tilt
    )
    if tilt is None and not np.any(vals):
        raise DegenerateEstimate("no sample reached the tail level; supply a tilt", x=x, count=count)
    return summarise(vals, seed, scaling)


def tilt_from_control(ldot, scaling):
    """W-drift realising the W-control ``ldot`` at noise level eps^(H - alpha - beta)."""
    return np.asarray(ldot, float) * scaling.power(scaling.alpha + scaling.beta - scaling.H)


def mdp_tilt(model, scaling, x, grid):
    """Constant W-tilt aimed at X_T = x eps^alpha for sigma frozen at sigma(0).

    The drift compensation 1/2 eps^(2H-2beta) sigma0^2 T is folded into the
    target, so the tilted terminal value is centred on the tail level.
    """
    s0, T = model.sigma.sigma0, grid.T
    target = x * scaling.strike_scale + 0.5 * scaling.drift_scale * s0**2 * T
    theta = target / (scaling.noise_scale * s0 * model.rho_bar * T)
    return np.full(grid.n, theta)


def estimate_call(model, scaling, x, grid, count, seed, alpha=None, backend="kernel"):
    """E[(exp(X_T) - exp(x eps^alpha))^+] with unit spot."""
    if not x > 0:
        raise ValueError("x must be positive")
    if alpha is not None:
        scaling = replace(scaling, alpha=alpha)
    strike = math.exp(x * scaling.strike_scale)
    vals = run_blocks(
        model, scaling, grid, count, seed, lambda X, w, v: np.maximum(np.exp(X[:, -1]) - strike, 0.0), backend
    )
    return summarise(vals, seed, scaling)


def node_index(grid, t):
    """Index of node t; t must coincide with a grid node."""
    k = int(round(t / grid.dt))
    if not 0 < k <= grid.n or not math.isclose(k * grid.dt, t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"t={t} is not a node of the grid in (0, T]")
    return k


def estimate_exit_prob(model, scaling, interval, t, grid, count, seed, backend="kernel"):
    """Fraction of paths leaving (a, b) at some grid node in (0, t]."""
    a, b = interval
    if not a < 0 < b:
        raise ValueError("interval must satisfy a < 0 < b")
    k = node_index(grid, t) if not math.isclose(t, grid.T) else grid.n

    def reduce(X, w, v):
        seg = X[:, 1 : k + 1]
        return ((seg.max(axis=1) >= b) | (seg.min(axis=1) <= a)).astype(float)

    vals = run_blocks(model, scaling, grid, count, seed, reduce, backend)
    return summarise(vals, seed)
