"""Growth classes of sigma, moment-explosion certificates, MC diagnostics.

Certificates rest on the chain

    E exp{gamma int_0^t sigma(B-hat)^2} >= exp{-gamma t c} E exp{gamma t sigma~((1/t) int_0^t B-hat)}
                                        >= exp{gamma t sigma~(u) - gamma t c} P(int_0^t B-hat >= t u)

for a convex non-decreasing minorant sigma~ with sigma^2 >= sigma~ - c, followed
by a lower bound on the Gaussian tail. The Monte Carlo diagnostics can only
suggest divergence; the certificates are what proves it.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import InapplicableGamma, NonpositiveVariance, Unclassified, WitnessNotSmooth
from .kernels import FBM, RIEMANN_LIOUVILLE, covariance
from .model import AFFINE, BOUNDED_SMOOTH, CONSTANT, CUSTOM, EXP, POLY_PLUS, ScalingParams
from .simulate import summarise, node_index, run_blocks

LINEAR = "LINEAR"
FASTER_THAN_LINEAR = "FASTER_THAN_LINEAR"
CONVEX_MINORANT = "CONVEX_MINORANT"

CERTIFIED_ABOVE = "CERTIFIED_ABOVE"
NOT_FOUND = "NOT_FOUND"
LINEAR_CLASS = "LINEAR_CLASS"
BUDGET_EXHAUSTED = "BUDGET_EXHAUSTED"

MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class GrowthWitness:
    """Declared growth of sigma.

    LINEAR: sigma(x)^2 <= c1 + c2 x^2.
    FASTER_THAN_LINEAR: sigma(x) >= x g(x) for x > x1, g increasing to infinity.
    CONVEX_MINORANT: sigma(x)^2 >= sigma_tilde(x) - offset, sigma_tilde convex,
    equal to x^2 g(x)^2 from x3 on and constant below.

    ``side`` = -1 means the growth happens as x -> -infinity; the witness then
    describes x -> sigma(-x). B-hat is centred Gaussian, so either side gives
    the same bounds.
    """

    kind: str
    c1: float | None = None
    c2: float | None = None
    x1: float | None = None
    g: object = None
    x3: float | None = None
    sigma_tilde: object = None
    offset: float | None = None
    side: int = 1

    def to_dict(self):
        out = {"class": self.kind, "side": self.side}
        for k in ("c1", "c2", "x1", "x3", "offset"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


def growth_class(sigma):
    p, f = sigma.params, sigma.family
    if f == CONSTANT:
        return GrowthWitness(LINEAR, c1=p[0] ** 2, c2=p[0] ** 2)
    if f == AFFINE:
        c2 = 2 * p[1] ** 2 if p[1] > 0 else p[0] ** 2
        return GrowthWitness(LINEAR, c1=2 * p[0] ** 2, c2=c2)
    if f == BOUNDED_SMOOTH:
        top = (p[0] * (1 + abs(p[1]))) ** 2
        return GrowthWitness(LINEAR, c1=top, c2=top)
    if f == POLY_PLUS:
        c, k = p[0], int(p[1])
        return GrowthWitness(FASTER_THAN_LINEAR, x1=2.0, g=lambda x: c * np.asarray(x, float) ** (k - 1) / 2)
    if f == EXP:
        c, lam = p
        if lam == 0:
            return GrowthWitness(LINEAR, c1=c * c, c2=c * c)
        a = abs(lam)
        return GrowthWitness(
            FASTER_THAN_LINEAR,
            x1=2.0 / a,
            g=lambda x: c * np.exp(a * np.asarray(x, float)) / np.asarray(x, float),
            side=1 if lam > 0 else -1,
        )
    if f == CUSTOM:
        if isinstance(sigma.witness, GrowthWitness):
            return sigma.witness
        raise Unclassified("CUSTOM volatility needs a declared growth witness")
    raise Unclassified(f"no growth rule for {f}")


def _midpoint_convex(fn, lo, hi, count=1000, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.uniform(lo, hi, count)
    b = rng.uniform(lo, hi, count)
    fa, fb, fm = fn(a), fn(b), fn(0.5 * (a + b))
    return bool(np.all(fm <= 0.5 * (fa + fb) * (1 + 1e-12) + 1e-12))


def convex_minorant(sigma, witness=None):
    """sigma~(x) = x^2 g(x)^2 for x >= x3, sigma~(x3) below; offset sigma~(x3)."""
    w = witness if witness is not None else growth_class(sigma)
    if w.kind == CONVEX_MINORANT:
        return w
    if w.kind != FASTER_THAN_LINEAR or w.g is None:
        raise WitnessNotSmooth("a convex minorant needs a faster-than-linear witness", growth=w.kind)
    g, x3 = w.g, float(w.x1)

    def tilde(x):
        x = np.maximum(np.asarray(x, float), x3)
        out = (x * g(x)) ** 2
        return out if out.ndim else float(out)

    # the join at x3 is convex only if the right branch starts non-decreasing
    h = 1e-6 * max(1.0, x3)
    if tilde(x3 + h) < tilde(x3) or not _midpoint_convex(tilde, x3 - 1.0, 4 * x3 + 4.0):
        raise WitnessNotSmooth("witness does not give a convex non-decreasing minorant", x3=x3)
    return GrowthWitness(CONVEX_MINORANT, x1=w.x1, g=g, x3=x3, sigma_tilde=tilde, offset=float(tilde(x3)), side=w.side)


def integrated_variance(kernel, t, points=None):
    """v = Var(int_0^t B-hat ds).

    RL and fBM have closed forms; other families use :func:`integrated_variance_quad`.
    """
    if points is None and kernel.family == RIEMANN_LIOUVILLE:
        H = kernel.H
        return t ** (2 * H + 2) / ((2 * H + 2) * math.gamma(H + 1.5) ** 2)
    if points is None and kernel.family == FBM:
        return t ** (2 * kernel.H + 2) / (2 * kernel.H + 2)
    return integrated_variance_quad(kernel, t, points)


def integrated_variance_quad(kernel, t, points=None):
    """v = 2 int_0^t int_0^1 C(u, u w) u dw du by tensor Gauss-Legendre.

    The substitution s = u w moves the diagonal kink of C to the boundary.
    Families without a closed form covariance get a coarser rule, since each
    evaluation is itself a quadrature.
    """
    if points is None:
        points = 64 if kernel.family in (FBM, RIEMANN_LIOUVILLE) else 24
    x, wts = np.polynomial.legendre.leggauss(points)
    u = 0.5 * t * (x + 1)
    wu = 0.5 * t * wts
    w = 0.5 * (x + 1)
    ww = 0.5 * wts
    U, Wr = np.meshgrid(u, w, indexing="ij")
    C = np.asarray(covariance(kernel, U, U * Wr), float)
    return float(2.0 * wu @ (C * U) @ ww)


def gaussian_tail_log_bound(a, v):
    """log of sqrt(2/pi) sqrt(v) / (a + sqrt(a^2 + 4v)) exp(-a^2 / (2v)), a lower bound on log P(N(0,v) >= a)."""
    return 0.5 * math.log(2 / math.pi) + 0.5 * math.log(v) - math.log(a + math.sqrt(a * a + 4 * v)) - a * a / (2 * v)


def jensen_lower_bound(model, witness, gamma, t, u, v=None):
    """gamma t sigma~(u) + log P-bound(int_0^t B-hat >= t u).

    The minorant offset is not included here; see :func:`explosion_certificate`.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if witness.kind != CONVEX_MINORANT:
        raise WitnessNotSmooth("jensen_lower_bound needs a convex-minorant witness")
    if u < witness.x3:
        raise ValueError("u must lie beyond the witness threshold")
    if v is None:
        v = integrated_variance(model.kernel, t)
    if not v > 0:
        raise NonpositiveVariance("Var(int B-hat) is not positive", v=v)
    return gamma * t * float(witness.sigma_tilde(u)) + gaussian_tail_log_bound(t * u, v)


@dataclass(frozen=True)
class ExplosionCertificate:
    gamma: float
    t: float
    u_star: float | None
    log_lower_bound: float | None
    variance_v: float
    status: str
    M: float
    offset_term: float = 0.0
    reason: str | None = None

    @property
    def certified(self):
        return self.status == CERTIFIED_ABOVE

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "t": self.t,
            "u_star": self.u_star,
            "log_lower_bound": self.log_lower_bound,
            "variance_v": self.variance_v,
            "status": self.status,
            "M": self.M,
            "offset_term": self.offset_term,
            "reason": self.reason,
        }


def explosion_certificate(model, witness, gamma, t, M, max_doublings=MAX_DOUBLINGS):
    """Search u = x3 2^k, k <= max_doublings, for a log lower bound above M.

    M is a threshold on log E exp{gamma int_0^t sigma^2}. A point counts only
    if the bound minus gamma t offset exceeds M, so the certificate is sound
    including the minorant offset.
    """
    if witness is None:
        witness = growth_class(model.sigma)
    v = integrated_variance(model.kernel, t)
    if not v > 0:
        raise NonpositiveVariance("Var(int B-hat) is not positive", v=v)
    if witness.kind == LINEAR:
        return ExplosionCertificate(gamma, t, None, None, v, NOT_FOUND, M, reason=LINEAR_CLASS)
    cm = convex_minorant(model.sigma, witness)
    off = gamma * t * cm.offset
    u0 = cm.x3 if cm.x3 > 0 else 1.0
    for k in range(max_doublings + 1):
        u = u0 * 2.0**k
        with np.errstate(over="ignore"):
            lb = jensen_lower_bound(model, cm, gamma, t, u, v)
        if not math.isfinite(lb):
            break
        if lb - off > M:
            return ExplosionCertificate(gamma, t, u, lb, v, CERTIFIED_ABOVE, M, offset_term=off)
    return ExplosionCertificate(gamma, t, None, None, v, NOT_FOUND, M, offset_term=off, reason=BUDGET_EXHAUSTED)


def moment_reduction(gamma, rho):
    """E[S_t^gamma] = E exp{c_quad int sigma^2 + c_lin int sigma dB}."""
    if abs(rho) > 1:
        raise ValueError("|rho| must not exceed 1")
    return (gamma * gamma * (1 - rho * rho) - gamma) / 2, gamma * rho


def holder_split(gamma, rho):
    """Hoelder exponent p, tilt eta and quadratic coefficient l > 0.

    Applicable for gamma > 1 / (1 - rho^2) or gamma < 0; the returned p
    doubles the minimal admissible margin p - 1.
    """
    if rho == 0 or abs(rho) > 1:
        raise ValueError("holder_split needs 0 < |rho| <= 1")
    r2 = rho * rho
    crit = math.inf if r2 == 1 else 1 / (1 - r2)
    if 0 <= gamma <= crit:
        raise InapplicableGamma("gamma lies in [0, 1/(1-rho^2)]", gamma=gamma, rho=rho)
    # with this p - 1 the quadratic coefficient reduces to half the margin,
    # which is written out directly to avoid cancellation for small |gamma|
    margin = gamma * gamma * (1 - r2) - gamma
    if gamma > 0:
        d = 2 * gamma * r2 / (gamma * (1 - r2) - 1)
        eta = -(gamma * (1 - r2) - 1) / (2 * rho)
    else:
        d = 2 * gamma * gamma * r2 / margin
        eta = -margin / (2 * gamma * rho)
    p = 1 + d
    ell = 0.5 * margin
    return p, eta, ell


def _unit_scaling(model):
    H = model.kernel.H if model.kernel.H is not None else 0.5
    return ScalingParams(eps=1.0, H=H, beta=H)


def truncated_moment_mc(model, gamma, t, M, grid, count, seed, backend="kernel"):
    """E[min(S_t^gamma, M)] with unit spot. Evidence of divergence only."""
    if not M > 0:
        raise ValueError("M must be positive")
    k = node_index(grid, t)
    cap = math.log(M)
    vals = run_blocks(
        model, _unit_scaling(model), grid, count, seed,
        lambda X, w, v: np.exp(np.minimum(gamma * X[:, k], cap)), backend,
    )
    return summarise(vals, seed)


def exp_variance_moment_mc(model, gamma, t, M, grid, count, seed, backend="kernel"):
    """E[min(exp{gamma int_0^t sigma(B-hat)^2}, M)]."""
    if not (gamma > 0 and M > 0):
        raise ValueError("gamma and M must be positive")
    k = node_index(grid, t)
    cap = math.log(M)
    vals = run_blocks(
        model, _unit_scaling(model), grid, count, seed,
        lambda X, w, v: np.exp(np.minimum(gamma * v[:, k], cap)), backend,
    )
    return summarise(vals, seed)
