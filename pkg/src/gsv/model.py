"""Model description: volatility function, model spec, small-noise scaling."""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .kernels import KernelSpec

CONSTANT = "CONSTANT"
AFFINE = "AFFINE"
EXP = "EXP"
POLY_PLUS = "POLY_PLUS"
BOUNDED_SMOOTH = "BOUNDED_SMOOTH"
CUSTOM = "CUSTOM"
VOL_FAMILIES = (CONSTANT, AFFINE, EXP, POLY_PLUS, BOUNDED_SMOOTH, CUSTOM)

LDP = "LDP"
MDP = "MDP"
CL = "CL"
EXCEPTIONAL = "EXCEPTIONAL"

_TOL = 1e-12


@dataclass(frozen=True)
class VolFunction:
    """A positive volatility function sigma.

    ``params`` by family::

        CONSTANT        (sigma0,)        sigma0
        AFFINE          (c0, c1)         c0 + c1 |x|
        EXP             (c, lam)         c exp(lam x)
        POLY_PLUS       (c, k)           c (1 + x^k), k even >= 2
        BOUNDED_SMOOTH  (c0, c1)         c0 (1 + c1 tanh x), |c1| < 1

    ``CUSTOM`` wraps a callable ``fn``; an optional ``witness`` (see
    :mod:`gsv.explosion`) declares its growth class.

    All built-in families are locally Lipschitz: the declared modulus is
    omega(s) = s with constant schedule :meth:`local_constant`.
    """

    family: str
    params: tuple = ()
    fn: object = field(default=None, compare=False)
    dfn: object = field(default=None, compare=False)
    witness: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in VOL_FAMILIES:
            raise ValueError(f"unknown volatility family {self.family!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        need = {CONSTANT: 1, AFFINE: 2, EXP: 2, POLY_PLUS: 2, BOUNDED_SMOOTH: 2, CUSTOM: 0}[self.family]
        if len(p) != need:
            raise ValueError(f"{self.family} takes {need} parameters")
        f = self.family
        if f == CONSTANT and not p[0] > 0:
            raise ValueError("sigma0 must be positive")
        if f == AFFINE and not (p[0] > 0 and p[1] >= 0):
            raise ValueError("AFFINE needs c0 > 0 and c1 >= 0")
        if f == EXP and not p[0] > 0:
            raise ValueError("EXP needs c > 0")
        if f == POLY_PLUS and not (p[0] > 0 and p[1] >= 2 and p[1] == int(p[1]) and int(p[1]) % 2 == 0):
            raise ValueError("POLY_PLUS needs c > 0 and an even integer k >= 2")
        if f == BOUNDED_SMOOTH and not (p[0] > 0 and abs(p[1]) < 1):
            raise ValueError("BOUNDED_SMOOTH needs c0 > 0 and |c1| < 1")
        if f == CUSTOM:
            if not callable(self.fn):
                raise ValueError("CUSTOM volatility needs a callable fn")
            if not self(0.0) > 0:
                raise ValueError("sigma(0) must be positive")

    # constructors
    @classmethod
    def constant(cls, sigma0):
        return cls(CONSTANT, (sigma0,))

    @classmethod
    def affine(cls, c0, c1):
        return cls(AFFINE, (c0, c1))

    @classmethod
    def exp(cls, c, lam):
        return cls(EXP, (c, lam))

    @classmethod
    def poly_plus(cls, c, k):
        return cls(POLY_PLUS, (c, k))

    @classmethod
    def bounded_smooth(cls, c0, c1):
        return cls(BOUNDED_SMOOTH, (c0, c1))

    @classmethod
    def custom(cls, fn, dfn=None, witness=None):
        return cls(CUSTOM, (), fn=fn, dfn=dfn, witness=witness)

    def __call__(self, x):
        x = np.asarray(x, float)
        p, f = self.params, self.family
        if f == CONSTANT:
            out = np.full(x.shape, p[0])
        elif f == AFFINE:
            out = p[0] + p[1] * np.abs(x)
        elif f == EXP:
            out = p[0] * np.exp(p[1] * x)
        elif f == POLY_PLUS:
            out = p[0] * (1.0 + x ** int(p[1]))
        elif f == BOUNDED_SMOOTH:
            out = p[0] * (1.0 + p[1] * np.tanh(x))
        else:
            out = np.asarray(self.fn(x), float)
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, float)
        p, f = self.params, self.family
        if f == CONSTANT:
            out = np.zeros(x.shape)
        elif f == AFFINE:
            out = p[1] * np.sign(x)
        elif f == EXP:
            out = p[0] * p[1] * np.exp(p[1] * x)
        elif f == POLY_PLUS:
            k = int(p[1])
            out = p[0] * k * x ** (k - 1)
        elif f == BOUNDED_SMOOTH:
            out = p[0] * p[1] / np.cosh(x) ** 2
        elif self.dfn is not None:
            out = np.asarray(self.dfn(x), float)
        else:
            h = 1e-6 * np.maximum(1.0, np.abs(x))
            out = (np.asarray(self.fn(x + h)) - np.asarray(self.fn(x - h))) / (2 * h)
        return out if out.ndim else float(out)

    @property
    def sigma0(self):
        return float(self(0.0))

    @property
    def is_even(self):
        return self.family in (CONSTANT, AFFINE, POLY_PLUS) or (
            self.family == EXP and self.params[1] == 0
        ) or (self.family == BOUNDED_SMOOTH and self.params[1] == 0)

    def local_constant(self, delta):
        """L(delta) with |sigma(x) - sigma(y)| <= L(delta) |x - y| on [-delta, delta]."""
        p, f = self.params, self.family
        if f == CONSTANT:
            return 0.0
        if f == AFFINE:
            return p[1]
        if f == EXP:
            return p[0] * abs(p[1]) * math.exp(abs(p[1]) * delta)
        if f == POLY_PLUS:
            k = int(p[1])
            return p[0] * k * delta ** (k - 1)
        if f == BOUNDED_SMOOTH:
            return p[0] * abs(p[1])
        xs = np.linspace(-delta, delta, 2001)
        return float(np.max(np.abs(self.deriv(xs)))) * 1.01

    def to_dict(self):
        if self.family == CUSTOM:
            return {"family": CUSTOM}
        return {"family": self.family, "params": list(self.params)}


@dataclass(frozen=True)
class ModelSpec:
    kernel: KernelSpec
    sigma: VolFunction
    rho: float = 0.0
    T: float | None = None
    s0: float = 1.0

    def __post_init__(self):
        if self.T is None:
            object.__setattr__(self, "T", self.kernel.T)
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if not self.T > 0 or not math.isclose(self.T, self.kernel.T):
            raise ValueError("model horizon must be positive and equal the kernel horizon")
        if not self.s0 > 0:
            raise ValueError("s0 must be positive")

    @property
    def rho_bar(self):
        return math.sqrt(1.0 - self.rho**2)

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "sigma": self.sigma.to_dict(),
            "rho": self.rho,
            "T": self.T,
            "s0": self.s0,
        }


@dataclass(frozen=True)
class ScalingParams:
    """Small-noise parametrisation (eps, H, beta, alpha).

    ``drift_exponent`` overrides the drift power 2H - 2 beta; it is set by
    :func:`gsv.rates.small_time_rescale`, which trades the drift for
    t^(H - beta + 1/2).
    """

    eps: float
    H: float
    beta: float = 0.0
    alpha: float = 0.0
    drift_exponent: float | None = None

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if not self.H > 0:
            raise ValueError("H must be positive")
        if not -_TOL <= self.beta <= self.H + _TOL:
            raise ValueError("beta must lie in [0, H]")
        if not self.alpha >= -_TOL:
            raise ValueError("alpha must be non-negative")
        if self.alpha + self.beta > self.H + _TOL:
            raise ValueError("alpha + beta must not exceed H")

    @property
    def regime(self):
        s = self.alpha + self.beta
        if s <= _TOL:
            return LDP
        if self.beta >= self.H - _TOL and self.alpha <= _TOL:
            return CL
        if s >= self.H - _TOL:
            return EXCEPTIONAL
        return MDP

    @property
    def speed_exponent(self):
        """Exponent p of the normalisation eps^p log P (2H - 2 alpha - 2 beta)."""
        return 2 * self.H - 2 * self.alpha - 2 * self.beta

    def power(self, p):
        """eps**p evaluated in log space."""
        return math.exp(p * math.log(self.eps))

    @property
    def vol_scale(self):
        return self.power(self.H)

    @property
    def noise_scale(self):
        return self.power(self.H - self.beta)

    @property
    def drift_scale(self):
        d = 2 * self.H - 2 * self.beta if self.drift_exponent is None else self.drift_exponent
        return self.power(d)

    @property
    def strike_scale(self):
        return self.power(self.alpha)

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def to_dict(self):
        out = {"eps": self.eps, "H": self.H, "beta": self.beta, "alpha": self.alpha, "regime": self.regime}
        if self.drift_exponent is not None:
            out["drift_exponent"] = self.drift_exponent
        return out


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    count: int
    seed: int
    scaled_log: float | None = None

    def __post_init__(self):
        if self.count < 1 or not self.stderr >= 0:
            raise ValueError("need count >= 1 and stderr >= 0")

    def to_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "count": self.count,
            "seed": self.seed,
            "scaled_log": self.scaled_log,
        }
