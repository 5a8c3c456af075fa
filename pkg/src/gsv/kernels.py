"""Volterra kernels, covariances and joint sampling of (B, W, B-hat).

Families
--------
``RIEMANN_LIOUVILLE``
    K(t, s) = (t - s)^(H - 1/2) / Gamma(H + 1/2).
``FBM``
    Covariance C_H(t, s) = (t^2H + s^2H - |t - s|^2H) / 2 in closed form. The
    pointwise kernel used for joint sampling is the Molchan-Golosov kernel.
``FRACTIONAL_OU``
    U_t = int_0^t exp(-a (t - s)) dB^H_s, whose Volterra kernel is obtained
    from the fBM kernel by numerical integration.
``CUSTOM``
    A lower-triangular matrix ``K[i][j]`` on the uniform grid, read as a
    piecewise-constant kernel.

Every singular family is written as K(t, s) = (t - s)^(H - 1/2) g(t, s). On a
cell the power factor is integrated exactly and the cofactor g is frozen at
the cell midpoint.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg, special

from . import rng as _rng
from .errors import NotPSD, UnsupportedKernel

FBM = "FBM"
RIEMANN_LIOUVILLE = "RIEMANN_LIOUVILLE"
FRACTIONAL_OU = "FRACTIONAL_OU"
CUSTOM = "CUSTOM"
FAMILIES = (FBM, RIEMANN_LIOUVILLE, FRACTIONAL_OU, CUSTOM)

BACKENDS = ("kernel", "exact", "covariance")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_CELL_X, _CELL_W = np.polynomial.legendre.leggauss(3)
# tanh-sinh rule on [-1, 1]; _TS_Q = pi sinh(kh), x = tanh(_TS_Q / 2)
_TS_K = np.arange(-40, 41) * 0.1
_TS_Q = np.pi * np.sinh(_TS_K)
_TS_W = 0.1 * 0.5 * np.pi * np.cosh(_TS_K) / np.cosh(0.5 * _TS_Q) ** 2


@dataclass(frozen=True)
class KernelSpec:
    family: str
    T: float = 1.0
    H: float | None = None
    a: float | None = None
    matrix: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.family == CUSTOM:
            if self.matrix is None:
                raise ValueError("CUSTOM kernel needs a matrix")
            m = np.asarray(self.matrix, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
                raise ValueError("CUSTOM matrix must be square of size n+1 >= 2")
            if np.any(np.triu(m) != 0.0):
                raise ValueError("CUSTOM matrix must be strictly lower-triangular")
            object.__setattr__(self, "matrix", tuple(tuple(float(v) for v in row) for row in m))
        else:
            if self.H is None or not 0.0 < self.H < 1.0:
                raise ValueError("H must lie in (0, 1)")
        if self.family == FRACTIONAL_OU and (self.a is None or not self.a > 0):
            raise ValueError("FRACTIONAL_OU needs a mean-reversion rate a > 0")

    @classmethod
    def fbm(cls, H, T=1.0):
        return cls(FBM, T=T, H=H)

    @classmethod
    def rl(cls, H, T=1.0):
        return cls(RIEMANN_LIOUVILLE, T=T, H=H)

    @classmethod
    def fou(cls, H, a, T=1.0):
        return cls(FRACTIONAL_OU, T=T, H=H, a=a)

    @classmethod
    def custom(cls, matrix, T=1.0):
        return cls(CUSTOM, T=T, matrix=matrix)

    @property
    def self_similar(self):
        return self.family in (FBM, RIEMANN_LIOUVILLE)

    @property
    def singular_exponent(self):
        return 0.0 if self.family == CUSTOM else self.H - 0.5

    @property
    def custom_n(self):
        return len(self.matrix) - 1

    def to_dict(self):
        out = {"family": self.family, "T": self.T}
        if self.H is not None:
            out["H"] = self.H
        if self.a is not None:
            out["a"] = self.a
        if self.matrix is not None:
            out["matrix"] = [list(r) for r in self.matrix]
        return out


@dataclass(frozen=True)
class PathGrid:
    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("grid needs n >= 1 steps")
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self):
        return self.T / self.n

    @property
    def nodes(self):
        return np.arange(self.n + 1) * self.dt


@dataclass
class GaussianSample:
    """A batch of ``count`` joint samples.

    Arrays are shaped ``(count, n)`` for increments and ``(count, n + 1)`` for
    the volatility path. ``b_increments`` is ``None`` for the covariance
    backend, which only produces the marginal law of B-hat.
    """

    b_increments: np.ndarray | None
    vol_path: np.ndarray
    w_increments: np.ndarray
    backend: str = "kernel"

    def __len__(self):
        return self.vol_path.shape[0]


# ---------------------------------------------------------------- kernels


def _mg_const(H):
    return np.sqrt(2 * H * special.gamma(1.5 - H) / (special.gamma(H + 0.5) * special.gamma(2 - 2 * H)))


def _fbm_cofactor(H, t, s):
    # Molchan-Golosov: K(t,s) = c_H (t-s)^(H-1/2) 2F1(H-1/2, 1/2-H; H+1/2; 1-t/s)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = 1.0 - t / s
    return _mg_const(H) * special.hyp2f1(H - 0.5, 0.5 - H, H + 0.5, z)


def _fou_cofactor(H, a, t, s):
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    p = H + 0.5
    d = np.maximum(t - s, 0.0)
    # int_s^t e^{-a(t-r)} K_H(r,s) dr with w = (r-s)^p removing the singularity
    top = d**p
    w = 0.5 * (_GL_X[:, None] + 1.0) * top.ravel()[None, :]
    r = s.ravel()[None, :] + w ** (1.0 / p)
    vals = np.exp(-a * (t.ravel()[None, :] - r)) * _fbm_cofactor(H, r, s.ravel()[None, :])
    inner = 0.5 * top.ravel() * (_GL_W @ vals) / p
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(d.ravel() > 0, a * d.ravel() ** (0.5 - H) * inner, 0.0)
    return (_fbm_cofactor(H, t.ravel(), s.ravel()) - corr).reshape(t.shape)


def _cofactor(spec, t, s):
    if spec.family == RIEMANN_LIOUVILLE:
        return np.full(np.broadcast(t, s).shape, 1.0 / special.gamma(spec.H + 0.5))
    if spec.family == FBM:
        return _fbm_cofactor(spec.H, t, s)
    if spec.family == FRACTIONAL_OU:
        return _fou_cofactor(spec.H, spec.a, t, s)
    return _custom_eval(spec, t, s)


def _custom_eval(spec, t, s):
    m = np.asarray(spec.matrix)
    n = spec.custom_n
    dt = spec.T / n
    i = np.clip(np.floor(np.asarray(t) / dt + 1e-9).astype(int), 0, n)
    j = np.clip(np.floor(np.asarray(s) / dt + 1e-9).astype(int), 0, n)
    return m[i, j]


def kernel_eval(spec, t, s):
    """K(t, s), vectorised. Zero for s >= t, including the diagonal."""
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    if np.any((t < 0) | (s < 0) | (t > spec.T * (1 + 1e-12)) | (s > spec.T * (1 + 1e-12))):
        raise ValueError("times must lie in [0, T]")
    below = s < t
    out = np.zeros(t.shape)
    if np.any(below):
        tb, sb = t[below], s[below]
        cof = _cofactor(spec, tb, np.maximum(sb, 1e-300) if spec.family != CUSTOM else sb)
        out[below] = (tb - sb) ** spec.singular_exponent * cof
    return out if out.ndim else float(out)


def cell_integrals(spec, times, edges):
    """``A[q, k] ~ int_{e_k}^{min(e_{k+1}, t_q)} K(t_q, u) du``.

    The power factor is integrated in closed form; the cofactor is frozen at
    the midpoint of the part of the cell lying below ``t_q``.
    """
    times = np.asarray(times, float)[:, None]
    lo = np.asarray(edges[:-1], float)[None, :]
    hi = np.minimum(np.asarray(edges[1:], float)[None, :], times)
    active = hi > lo
    out = np.zeros((times.shape[0], lo.shape[1]))
    if spec.family == CUSTOM:
        # piecewise constant kernel: split each cell at the kernel's own grid
        n = spec.custom_n
        fine = np.linspace(0.0, spec.T, n + 1)
        for q in range(times.shape[0]):
            tq = times[q, 0]
            for k in np.nonzero(active[q])[0]:
                a, b = lo[0, k], hi[q, k]
                cuts = np.unique(np.concatenate(([a, b], fine[(fine > a) & (fine < b)])))
                mids = 0.5 * (cuts[1:] + cuts[:-1])
                out[q, k] = np.sum(kernel_eval(spec, np.full_like(mids, tq), mids) * np.diff(cuts))
        return out
    p = spec.singular_exponent + 1.0
    tq = np.broadcast_to(times, out.shape)[active]
    a = np.broadcast_to(lo, out.shape)[active]
    b = hi[active]
    if spec.family == RIEMANN_LIOUVILLE:
        out[active] = ((tq - a) ** p - (tq - b) ** p) / p * _cofactor(spec, tq, a)
        return out
    # substitute w = (t - u)^p so the power factor is exact, then Gauss in w
    wa, wb = (tq - a) ** p, (tq - b) ** p
    w = wb[:, None] + 0.5 * (_CELL_X[None, :] + 1.0) * (wa - wb)[:, None]
    u = tq[:, None] - w ** (1.0 / p)
    vals = _cofactor(spec, np.broadcast_to(tq[:, None], u.shape), np.maximum(u, 1e-300))
    res = 0.5 * (wa - wb) / p * (vals @ _CELL_W)
    # the cofactor is singular at u = 0; cells starting there get tanh-sinh
    first = a == 0.0
    if np.any(first):
        res[first] = _origin_cells(spec, tq[first], b[first])
    out[active] = res
    return out


def _origin_cells(spec, t, b):
    # int_0^b (t-u)^(p-1) cof(t,u) du; 1 - x is formed directly to keep t - u exact near u = t
    e = np.exp(-_TS_Q)
    one_plus, one_minus = 2.0 / (1.0 + e), 2.0 * e / (1.0 + e)
    u = 0.5 * b[:, None] * one_plus[None, :]
    gap = (t - b)[:, None] + 0.5 * b[:, None] * one_minus[None, :]
    vals = gap ** spec.singular_exponent * _cofactor(spec, np.broadcast_to(t[:, None], u.shape), np.maximum(u, 1e-300))
    return 0.5 * b * (vals @ _TS_W)


@lru_cache(maxsize=64)
def kernel_weights(spec, grid):
    """``W[i, j] = (1/dt) int_{t_j}^{t_{j+1}} K(t_i, u) du``, shape ``(n+1, n)``.

    ``B-hat(t_i) = sum_j W[i, j] dB_j`` is the kernel-discretisation backend.
    """
    _check_grid(spec, grid)
    t = grid.nodes
    W = cell_integrals(spec, t, t) / grid.dt
    W.setflags(write=False)
    return W


def _check_grid(spec, grid):
    if not np.isclose(spec.T, grid.T):
        raise ValueError("grid horizon differs from kernel horizon")
    if spec.family == CUSTOM and spec.custom_n % grid.n and grid.n % spec.custom_n:
        raise UnsupportedKernel("CUSTOM kernel grid incompatible with the requested grid")


def hatf(spec, control, grid):
    """f-hat(t_i) = int_0^{t_i} K(t_i, u) f'(u) du for a step control ``f'``.

    ``control`` has one value per grid interval (or shape ``(..., n)``).
    """
    control = np.asarray(control, float)
    if control.shape[-1] != grid.n:
        raise ValueError("control needs one value per grid interval")
    W = kernel_weights(spec, grid)
    return grid.dt * control @ W.T


# ------------------------------------------------------------- covariance


def _rl_cov(H, t, s):
    lo, hi = np.minimum(t, s), np.maximum(t, s)
    g = special.gamma(H + 0.5)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = lo ** (H + 0.5) * hi ** (H - 0.5) / ((H + 0.5) * g * g) * special.hyp2f1(
            0.5 - H, 1.0, H + 1.5, lo / hi
        )
    return np.where(lo > 0, val, 0.0)


def _fbm_cov(H, t, s):
    return 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))


def _composite_gl(upper, panels=48, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, upper, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _fou_cov_scalar(H, a, t, s):
    rt, wt = _composite_gl(t)
    rs, ws = _composite_gl(s)
    et = np.exp(-a * (t - rt)) * wt
    es = np.exp(-a * (s - rs)) * ws
    c = _fbm_cov(H, t, s)
    c -= a * np.sum(es * _fbm_cov(H, t, rs))
    c -= a * np.sum(et * _fbm_cov(H, rt, s))
    c += a * a * et @ _fbm_cov(H, rt[:, None], rs[None, :]) @ es
    return c


def _custom_cov(spec, t, s):
    n = spec.custom_n
    edges = np.linspace(0.0, spec.T, n + 1)
    lo = min(t, s)
    if lo <= 0:
        return 0.0
    cuts = np.concatenate((edges[edges < lo], [lo]))
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    kt = kernel_eval(spec, np.full_like(mids, t), mids)
    ks = kernel_eval(spec, np.full_like(mids, s), mids)
    return float(np.sum(kt * ks * np.diff(cuts)))


def covariance(spec, t, s):
    """Cov(B-hat_t, B-hat_s). Vectorised for FBM and RIEMANN_LIOUVILLE."""
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    if spec.family == FBM:
        out = _fbm_cov(spec.H, t, s)
    elif spec.family == RIEMANN_LIOUVILLE:
        out = _rl_cov(spec.H, t, s)
    elif spec.family == FRACTIONAL_OU:
        out = np.vectorize(lambda a, b: _fou_cov_scalar(spec.H, spec.a, a, b) if min(a, b) > 0 else 0.0)(t, s)
        out = 0.5 * (out + np.vectorize(lambda a, b: _fou_cov_scalar(spec.H, spec.a, b, a) if min(a, b) > 0 else 0.0)(t, s))
    else:
        out = np.vectorize(lambda a, b: _custom_cov(spec, a, b))(t, s)
    out = np.asarray(out, float)
    return out if out.ndim else float(out)


def kernel_covariance(spec, t, s):
    """Cov(B-hat_t, B-hat_s) by adaptive quadrature of kernel products."""
    lo = min(t, s)
    if lo <= 0:
        return 0.0
    val, _ = integrate.quad(lambda u: kernel_eval(spec, t, u) * kernel_eval(spec, s, u), 0.0, lo, limit=400)
    return val


@lru_cache(maxsize=64)
def covariance_matrix(spec, grid):
    """Covariance of B-hat at nodes t_1..t_n (node 0 is excluded)."""
    _check_grid(spec, grid)
    t = grid.nodes[1:]
    if spec.family in (FBM, RIEMANN_LIOUVILLE):
        C = covariance(spec, t[:, None], t[None, :])
    else:
        C = np.empty((grid.n, grid.n))
        for i in range(grid.n):
            for j in range(i + 1):
                C[i, j] = C[j, i] = covariance(spec, t[i], t[j])
    C = 0.5 * (C + C.T)
    C.setflags(write=False)
    return C


def psd_factor(C):
    """Lower Cholesky factor of ``C + lam I`` with ``lam`` doubled from 1e-14 tr
    up to 1e-10 tr. Raises ``NotPSD`` when every attempt fails."""
    C = np.asarray(C, float)
    tr = max(float(np.trace(C)), 1e-300)
    try:
        return linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        pass
    lam = 1e-14 * tr
    while lam <= 1e-10 * tr * (1 + 1e-12):
        try:
            return linalg.cholesky(C + lam * np.eye(len(C)), lower=True)
        except linalg.LinAlgError:
            lam *= 2.0
    raise NotPSD("covariance factorisation failed after maximal jitter")


@lru_cache(maxsize=64)
def _cov_factor(spec, grid):
    L = psd_factor(covariance_matrix(spec, grid))
    L.setflags(write=False)
    return L


@lru_cache(maxsize=64)
def _residual_factor(spec, grid):
    # Cov(B-hat | dB) = C - dt W W^T, clipped to PSD (W is approximate off RL)
    W = kernel_weights(spec, grid)[1:]
    R = covariance_matrix(spec, grid) - grid.dt * W @ W.T
    vals, vecs = linalg.eigh(0.5 * (R + R.T))
    F = vecs * np.sqrt(np.clip(vals, 0.0, None))
    F.setflags(write=False)
    return F


def sample_gaussian_paths(spec, grid, count, seed, backend="kernel"):
    """Draw ``count`` joint samples of (dB, B-hat, dW).

    Backends
    --------
    ``kernel``
        B-hat at the nodes is the deterministic map ``W @ dB`` (see
        :func:`kernel_weights`); it under-represents the variance carried inside
        each cell, by a few percent on coarse grids.
    ``exact``
        ``W @ dB`` plus an independent Gaussian residual with the conditional
        covariance ``C - dt W W^T``: the joint law of (dB, B-hat) at the nodes
        is exact.
    ``covariance``
        B-hat from the Cholesky factor of the covariance matrix; no dB.
    """
    parts = _rng.map_blocks(block_drawer(spec, grid, backend), count, seed)
    db = None if backend == "covariance" else np.concatenate([p[0] for p in parts])
    vol = np.concatenate([p[1] for p in parts])
    dw = np.concatenate([p[2] for p in parts])
    return GaussianSample(db, vol, dw, backend)


def block_drawer(spec, grid, backend="kernel"):
    """Return ``draw(rng, size) -> (dB, B-hat, dW)`` for one block of samples."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    _check_grid(spec, grid)
    n, sq = grid.n, np.sqrt(grid.dt)
    W = kernel_weights(spec, grid) if backend != "covariance" else None
    F = _residual_factor(spec, grid) if backend == "exact" else None
    L = _cov_factor(spec, grid) if backend == "covariance" else None

    def draw(gen, size):
        db = gen.standard_normal((size, n)) * sq
        dw = gen.standard_normal((size, n)) * sq
        vol = np.zeros((size, n + 1))
        if backend == "covariance":
            vol[:, 1:] = gen.standard_normal((size, n)) @ L.T
            return None, vol, dw
        vol[:, 1:] = db @ W[1:].T
        if backend == "exact":
            vol[:, 1:] += gen.standard_normal((size, n)) @ F.T
        return db, vol, dw

    return draw


# -------------------------------------------------------------- regularity


def _pointwise(spec):
    """Scalar kernel for adaptive quadrature (avoids array overhead)."""
    H = spec.H
    if spec.family == RIEMANN_LIOUVILLE:
        c = 1.0 / special.gamma(H + 0.5)
        return lambda t, s: c * (t - s) ** (H - 0.5) if s < t else 0.0
    if spec.family == FBM:
        c = _mg_const(H)
        return lambda t, s: (
            c * (t - s) ** (H - 0.5) * special.hyp2f1(H - 0.5, 0.5 - H, H + 0.5, 1.0 - t / s) if 0 < s < t else 0.0
        )
    return lambda t, s: float(kernel_eval(spec, t, s))


def _sq_diff_integral(spec, t1, t2):
    # int_0^T |K(t2,s) - K(t1,s)|^2 ds for t1 < t2
    k = _pointwise(spec)
    a = integrate.quad(lambda u: (k(t2, u) - k(t1, u)) ** 2, 0.0, t1, limit=200)[0] if t1 > 0 else 0.0
    b = integrate.quad(lambda u: k(t2, u) ** 2, t1, t2, limit=200)[0]
    return a + b


@lru_cache(maxsize=16)
def _modulus_table(spec, grid):
    t = grid.nodes
    n = grid.n
    D = np.zeros((n + 1, n + 1))
    for lag in range(1, n + 1):
        for i in range(n + 1 - lag):
            D[i, i + lag] = _sq_diff_integral(spec, t[i], t[i + lag])
    # running sup over lags
    best = np.zeros(n + 1)
    for lag in range(1, n + 1):
        best[lag] = max(best[lag - 1], max(D[i, i + lag] for i in range(n + 1 - lag)))
    best.setflags(write=False)
    return best


def holder_modulus(spec, grid, h):
    """Grid approximation of M(h) = sup_{|t1-t2|<=h} int |K(t1,s) - K(t2,s)|^2 ds."""
    if not 0 <= h <= grid.T * (1 + 1e-12):
        raise ValueError("h must lie in [0, T]")
    _check_grid(spec, grid)
    lag = int(np.floor(h / grid.dt + 1e-9))
    return float(_modulus_table(spec, grid)[min(lag, grid.n)])
