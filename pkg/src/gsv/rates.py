"""Rate functions: numerical LDP problems and closed-form MDP / CL laws.

The LDP problems are solved by a Ritz method. Controls f' are step functions
on a uniform grid of ``n`` cells. Every integral in the objective is taken on
one fixed fine quadrature (``quad_cells`` uniform cells times ``gauss_points``
Gauss-Legendre nodes). Because ``quad_cells`` is a multiple of every control
grid used, coarse step controls are exactly representable on finer grids and
their objective values coincide: refining the grid can only lower the value.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
import math

import numpy as np
from scipy import optimize, special

from .errors import DegenerateCorrelation, NotSelfSimilar, WrongRegime
from .kernels import PathGrid, cell_integrals
from .model import CL, EXCEPTIONAL, LDP, MDP, ScalingParams

CONVERGED = "CONVERGED"
MAX_ITER = "MAX_ITER"
INFEASIBLE = "INFEASIBLE"

_TIE = 1e-10


@dataclass(frozen=True)
class RateOptions:
    n: int = 64
    levels: tuple | None = None  # e.g. (16, 32, 64, 128); overrides n
    quad_cells: int = 256
    gauss_points: int = 4
    restarts: int = 8
    seed: int = 0
    maxiter: int = 500
    gtol: float = 1e-10

    def __post_init__(self):
        if self.levels is not None:
            lv = tuple(int(v) for v in self.levels)
            if not lv or any(v < 1 for v in lv) or list(lv) != sorted(set(lv)):
                raise ValueError("levels must be strictly increasing positive integers")
            object.__setattr__(self, "levels", lv)
        if self.n < 1 or self.restarts < 1 or self.gauss_points < 1:
            raise ValueError("n, restarts and gauss_points must be positive")

    @property
    def grid_sizes(self):
        return self.levels if self.levels else (self.n,)

    def fine_cells(self):
        """Smallest multiple of ``quad_cells`` divisible by every grid size."""
        m = math.lcm(*self.grid_sizes)
        return m * max(1, -(-self.quad_cells // m))

    def to_dict(self):
        return {
            "n": self.n,
            "levels": list(self.levels) if self.levels else None,
            "quad_cells": self.quad_cells,
            "gauss_points": self.gauss_points,
            "restarts": self.restarts,
            "seed": self.seed,
            "maxiter": self.maxiter,
            "gtol": self.gtol,
        }


@dataclass(frozen=True)
class ControlPath:
    grid: PathGrid
    fdot: np.ndarray
    ldot: np.ndarray | None = None

    @property
    def energy(self):
        return 0.5 * self.grid.dt * float(np.sum(self.fdot**2))

    def to_dict(self):
        return {
            "n": self.grid.n,
            "T": self.grid.T,
            "fdot": [float(v) for v in self.fdot],
            "ldot": None if self.ldot is None else [float(v) for v in self.ldot],
        }


@dataclass(frozen=True)
class RateResult:
    value: float
    minimizer: ControlPath
    restarts_used: int
    grid_levels: list
    status: str
    restart_values: list = field(default_factory=list)

    def to_dict(self):
        return {
            "value": self.value,
            "minimizer": self.minimizer.to_dict(),
            "restarts_used": self.restarts_used,
            "grid_levels": [[n, v] for n, v in self.grid_levels],
            "status": self.status,
            "restart_values": list(self.restart_values),
        }


# ------------------------------------------------------------- quadrature


@lru_cache(maxsize=32)
def _fine_rule(kernel, T, cells, points):
    """Quadrature nodes/weights on [0, T] and the kernel cell matrix on fine cells."""
    x, w = np.polynomial.legendre.leggauss(points)
    h = T / cells
    left = np.arange(cells) * h
    tau = (left[:, None] + 0.5 * h * (x + 1.0)[None, :]).ravel()
    wq = np.tile(0.5 * h * w, cells)
    A = cell_integrals(kernel, tau, np.linspace(0.0, T, cells + 1))
    for arr in (tau, wq, A):
        arr.setflags(write=False)
    return tau, wq, A


class _Problem:
    """Discretised objective on ``n`` control cells covering [0, m dt].

    ``kind`` is ``"terminal"`` (target ``x``) or ``"path"`` (slopes ``gdot``).
    """

    def __init__(self, model, n, opts, kind, x=0.0, gdot=None, m=None):
        if abs(model.rho) >= 1.0:
            raise DegenerateCorrelation("variational problems need |rho| < 1", rho=model.rho)
        self.model, self.kind, self.x = model, kind, float(x)
        self.n, self.m = n, n if m is None else m
        self.dt = model.T / n
        cells = opts.fine_cells()
        tau, wq, A = _fine_rule(model.kernel, model.T, cells, opts.gauss_points)
        per = cells // n
        keep = self.m * per * opts.gauss_points
        self.w = wq[:keep]
        # fine cells folded into control cells, restricted to [0, m dt]
        self.A = A[:keep, : self.m * per].reshape(keep, self.m, per).sum(axis=2)
        self.cell = np.repeat(np.arange(self.m), per * opts.gauss_points)
        self.gdot = None if gdot is None else np.asarray(gdot, float)[self.cell]
        self.rho2 = 1.0 - model.rho**2

    def _fold(self, v):
        return np.bincount(self.cell, weights=v, minlength=self.m)

    def __call__(self, fd):
        sig_fn, rho, rb2, w = self.model.sigma, self.model.rho, self.rho2, self.w
        fh = self.A @ fd
        sig = np.asarray(sig_fn(fh), float)
        dsig = np.asarray(sig_fn.deriv(fh), float)
        fc = fd[self.cell]
        energy = 0.5 * self.dt * float(fd @ fd)
        if self.kind == "terminal":
            S1 = float(w @ (sig * fc))
            S2 = float(w @ sig**2)
            r = self.x - rho * S1
            val = r * r / (2 * rb2 * S2) + energy
            d1 = -rho * r / (rb2 * S2)
            d2 = -r * r / (2 * rb2 * S2 * S2)
            gq = d1 * w * fc + 2 * d2 * w * sig
            direct = d1 * self._fold(w * sig)
        else:
            r = self.gdot - rho * sig * fc
            val = 0.5 * float(w @ (r * r / sig**2)) / rb2 + energy
            gq = -w * r * self.gdot / (rb2 * sig**3)
            direct = self._fold(-w * rho * r / (rb2 * sig))
        grad = direct + (gq * dsig) @ self.A + self.dt * fd
        return val, grad

    def ldot(self, fd):
        """Optimal W-control per cell (cell averages over the quadrature)."""
        sig = np.asarray(self.model.sigma(self.A @ fd), float)
        rb = math.sqrt(self.rho2)
        if self.kind == "terminal":
            fc = fd[self.cell]
            lam = (self.x - self.model.rho * float(self.w @ (sig * fc))) / (self.rho2 * float(self.w @ sig**2))
            lq = lam * rb * sig
        else:
            lq = (self.gdot - self.model.rho * sig * fd[self.cell]) / (rb * sig)
        return self._fold(self.w * lq) / self.dt


def _starts(problem, scale, opts, warm):
    rng = np.random.default_rng([opts.seed, problem.n])
    m = problem.m
    out = [np.zeros(m), np.full(m, scale), np.full(m, -scale)]
    for _ in range(max(0, opts.restarts - 3)):
        out.append(scale * rng.standard_normal(m))
    out = out[: opts.restarts]
    if warm is not None:
        out.append(warm)
    return out


def _converged(res, dt):
    return bool(res.success) or float(np.max(np.abs(res.jac), initial=0.0)) <= 1e-7 * dt


def _solve(problem, scale, opts, warm=None):
    best, records = None, []
    for x0 in _starts(problem, scale, opts, warm):
        res = optimize.minimize(
            problem,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.maxiter, "gtol": opts.gtol, "ftol": 1e-15},
        )
        val = float(problem(res.x)[0])
        rec = (val, 0.5 * problem.dt * float(res.x @ res.x), res.x, _converged(res, problem.dt))
        records.append(rec)
        if best is None or val < best[0] - _TIE or (abs(val - best[0]) <= _TIE and rec[1] < best[1]):
            best = rec
    return best, [r[0] for r in records]


def _run_levels(model, opts, make, scale):
    levels, warm, prev_n = [], None, None
    best = values = problem = None
    for n in opts.grid_sizes:
        problem = make(n)
        if warm is not None:
            warm = np.repeat(warm, n // prev_n)
        best, values = _solve(problem, scale, opts, warm)
        levels.append((n, best[0]))
        warm, prev_n = best[2], n
    grid = PathGrid(problem.n, model.T)
    fd = np.zeros(problem.n)
    fd[: problem.m] = best[2]
    ld = np.zeros(problem.n)
    ld[: problem.m] = problem.ldot(best[2])
    return RateResult(
        value=max(best[0], 0.0),
        minimizer=ControlPath(grid, fd, ld),
        restarts_used=len(values),
        grid_levels=levels,
        status=CONVERGED if best[3] else MAX_ITER,
        restart_values=values,
    )


def _scale(model, x, horizon):
    s = abs(x) / (model.sigma.sigma0 * horizon)
    return s if s > 0 else 1.0


# ------------------------------------------------------------- LDP problems


def terminal_functional(model, x, fdot, opts=None):
    """Discretised I_T integrand at a step control; returns (value, gradient)."""
    opts = opts or RateOptions(n=len(fdot))
    return _Problem(model, len(fdot), opts, "terminal", x=x)(np.asarray(fdot, float))


def path_functional(model, g, fdot, opts=None):
    """Discretised Q_T integrand at a step control; returns (value, gradient)."""
    g = np.asarray(g, float)
    opts = opts or RateOptions(n=len(g) - 1)
    gdot = np.diff(g) / (model.T / (len(g) - 1))
    return _Problem(model, len(g) - 1, opts, "path", gdot=gdot)(np.asarray(fdot, float))


def ldp_rate_terminal(model, x, opts=None):
    """inf over f of (x - rho int sigma(f-hat) f')^2 / (2 rho_bar^2 int sigma(f-hat)^2) + 1/2 int f'^2."""
    opts = opts or RateOptions()
    return _run_levels(
        model, opts, lambda n: _Problem(model, n, opts, "terminal", x=x), _scale(model, x, model.T)
    )


def ldp_rate_path(model, g, opts=None):
    """Q_T(g) for the piecewise-linear path with node values ``g`` (g[0] = 0).

    The W-control is eliminated in closed form, l' = (g' - rho sigma f') / (rho_bar sigma).
    """
    g = np.asarray(g, float)
    if g.ndim != 1 or g.size < 2 or g[0] != 0.0:
        raise ValueError("g must be a node vector with g[0] = 0")
    n = g.size - 1
    opts = replace(opts or RateOptions(), n=n, levels=None)
    gdot = np.diff(g) / (model.T / n)
    scale = _scale(model, float(np.max(np.abs(g))), model.T)
    return _run_levels(model, opts, lambda k: _Problem(model, k, opts, "path", gdot=gdot), scale)


def exit_rate(model, interval, t, opts=None):
    """inf of Q_T over paths leaving (a, b) by time t.

    For a hitting node s and boundary c the cheapest path ending at c at time
    s costs the terminal functional restricted to [0, s]; after s the path
    stays at c for free. The minimum runs over both boundaries and every grid
    node in (0, t].
    """
    a, b = interval
    if not a < 0 < b:
        raise ValueError("interval must satisfy a < 0 < b")
    opts = replace(opts or RateOptions(), levels=None)
    n, T = opts.n, model.T
    if not 0 < t <= T * (1 + 1e-12):
        raise ValueError("t must lie in (0, T]")
    dt = T / n
    last = int(math.floor(t / dt + 1e-9))
    if last < 1:
        raise ValueError("t is below the first grid node")
    best = None
    values = []
    for m in range(1, last + 1):
        for c in (a, b):
            prob = _Problem(model, n, opts, "terminal", x=c, m=m)
            rec, vals = _solve(prob, _scale(model, c, m * dt), opts)
            values.append(rec[0])
            if best is None or rec[0] < best[0][0] - _TIE:
                best = (rec, prob, m, c)
    rec, prob, m, c = best
    fd = np.zeros(n)
    fd[:m] = rec[2]
    ld = np.zeros(n)
    ld[:m] = prob.ldot(rec[2])
    return RateResult(
        value=max(rec[0], 0.0),
        minimizer=ControlPath(PathGrid(n, T), fd, ld),
        restarts_used=opts.restarts,
        grid_levels=[(n, max(rec[0], 0.0))],
        status=CONVERGED if rec[3] else MAX_ITER,
        restart_values=values,
    )


# ------------------------------------------------------------- closed forms


def mdp_rate_terminal(sigma0, T, x):
    return x * x / (2.0 * T * sigma0 * sigma0)


def mdp_rate_path(sigma0, g, T=1.0):
    g = np.asarray(g, float)
    dt = T / (g.size - 1)
    return float(np.sum(np.diff(g) ** 2) / dt) / (2.0 * sigma0 * sigma0)


def cl_tail(sigma0, T, x):
    """Limit of P(X_T^{eps,H,H} >= x): Nbar(x / (sqrt(T) sigma0) + sqrt(T) sigma0 / 2)."""
    v = math.sqrt(T) * sigma0
    return float(special.ndtr(-(x / v + 0.5 * v)))


def bm_drift_max_cdf(mu, T, y):
    """P(sup_{t<=T} (mu t + Z_t) > y), the standard barrier law."""
    if not y > 0:
        raise ValueError("y must be positive")
    s = math.sqrt(T)
    first = special.ndtr(-(y - mu * T) / s)
    # exp(2 mu y) Nbar(.) in log space for large |mu y|
    second = math.exp(2 * mu * y + special.log_ndtr(-(y + mu * T) / s))
    return float(min(1.0, first + second))


def bm_drift_max_cdf_printed(mu, T, y):
    """The barrier formula with Phi where the upper tail belongs, kept for comparison."""
    z = special.ndtr((y - mu * T) / math.sqrt(T))
    return float(z + math.exp(2 * mu * y) * (1.0 - z))


def cl_running_max(sigma0, T, x):
    """Limit of P(sup_t X_t^{eps,H,H} > x): Brownian motion with drift -sigma0/2 at level x/sigma0."""
    if not x > 0:
        raise ValueError("x must be positive")
    return bm_drift_max_cdf(-0.5 * sigma0, T, x / sigma0)


def exceptional_tail(sigma0, T, x):
    """Limit of P(X_T >= x eps^alpha) when alpha + beta = H: Nbar(x / (sqrt(T) sigma0))."""
    return float(special.ndtr(-x / (math.sqrt(T) * sigma0)))


def small_time_rescale(scaling, t, kernel):
    """Small-noise parameters equivalent to small time ``t`` for a self-similar kernel.

    eps becomes t; the drift power becomes H - beta + 1/2 (recorded in
    ``drift_exponent``), the drift replacement that carries the small-noise
    limit theorems over to small time.
    """
    if not kernel.self_similar:
        raise NotSelfSimilar(f"{kernel.family} kernels are not self-similar", family=kernel.family)
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if t == 1:
        return scaling
    return ScalingParams(
        eps=t,
        H=scaling.H,
        beta=scaling.beta,
        alpha=scaling.alpha,
        drift_exponent=scaling.H - scaling.beta + 0.5,
    )


def tail_limit(model, scaling, x, opts=None):
    """Theoretical limit for the tail sweep.

    LDP and MDP return the limit of the scaled log, minus the rate. CL and the
    exceptional regime return the limiting probability itself.
    """
    reg = scaling.regime
    s0, T = model.sigma.sigma0, model.T
    if reg == LDP:
        return -ldp_rate_terminal(model, x, opts).value
    if reg == MDP:
        return -mdp_rate_terminal(s0, T, x)
    if reg == CL:
        return cl_tail(s0, T, x)
    if reg == EXCEPTIONAL:
        return exceptional_tail(s0, T, x)
    raise WrongRegime(f"unknown regime {reg}")
