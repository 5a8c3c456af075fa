"""Normalised Black-Scholes call, implied volatility, leading-order asymptotics."""
from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, special

from .errors import GrowthViolation, PriceOutOfRange, WrongRegime, ZeroRate
from .model import CL, EXCEPTIONAL, LDP, MDP

IV_BRACKET = (1e-8, 1e3)
IV_MAX_ITER = 200


@dataclass(frozen=True)
class AsymptoticTerm:
    """Leading term coefficient * eps^eps_exponent, divided by sqrt(log(1/eps)) if ``log_correction``."""

    coefficient: float
    eps_exponent: float
    log_correction: bool = False
    regime: str = ""
    description: str = ""

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")

    def evaluate(self, eps):
        v = self.coefficient * math.exp(self.eps_exponent * math.log(eps))
        return v / math.sqrt(math.log(1.0 / eps)) if self.log_correction else v

    def to_dict(self):
        return {
            "coefficient": self.coefficient,
            "eps_exponent": self.eps_exponent,
            "log_correction": self.log_correction,
            "regime": self.regime,
        }


def bs_dimensionless_call(k, nu):
    """C_-(k, nu) = N(-k/nu + nu/2) - e^k N(-k/nu - nu/2), unit spot, zero rate."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if nu <= 0:
        return 0.0
    a = -k / nu
    return float(special.ndtr(a + 0.5 * nu) - math.exp(k) * special.ndtr(a - 0.5 * nu))


def implied_vol(k, price):
    """Invert :func:`bs_dimensionless_call` in nu by bisection."""
    if not 0.0 < price < 1.0:
        raise PriceOutOfRange("price must lie in (0, 1)", k=k, price=price)
    lo, hi = IV_BRACKET
    if price <= bs_dimensionless_call(k, lo):
        return lo
    if price >= bs_dimensionless_call(k, hi):
        raise PriceOutOfRange("price above the bracket's upper value", k=k, price=price)
    for _ in range(IV_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if bs_dimensionless_call(k, mid) < price:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bs_integral_form(x, nu):
    """int_x^inf e^y Nbar(y/nu + nu/2) dy by adaptive quadrature."""
    f = lambda y: math.exp(y + special.log_ndtr(-(y / nu + 0.5 * nu)))
    return integrate.quad(f, x, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def _check_growth(sigma):
    if sigma is None:
        return
    from .explosion import LINEAR, growth_class

    if growth_class(sigma).kind != LINEAR:
        raise GrowthViolation(
            f"{sigma.family} volatility grows faster than linearly; the call asymptotics do not apply",
            family=sigma.family,
        )


def call_asymptote(rate_value, scaling, x, alpha=None, sigma=None, T=1.0):
    """Decay term of eps^(2H-2alpha-2beta) log C(eps, x eps^alpha) -> -J.

    LDP: J = ``rate_value`` (I_T(x) from the rate solver). MDP: J is
    x^2 / (2 T sigma(0)^2), taken from ``sigma`` when ``rate_value`` is None.
    Returns J as the coefficient of eps^(2 alpha + 2 beta - 2H).
    """
    if alpha is not None and alpha != scaling.alpha:
        from dataclasses import replace

        scaling = replace(scaling, alpha=alpha)
    reg = scaling.regime
    if reg not in (LDP, MDP):
        raise WrongRegime(f"call decay asymptotics need LDP or MDP, not {reg}", regime=reg)
    _check_growth(sigma)
    if rate_value is None:
        if reg == LDP or sigma is None:
            raise ValueError("rate_value is required (or sigma in the MDP regime)")
        rate_value = x * x / (2.0 * T * sigma.sigma0**2)
    return AsymptoticTerm(
        coefficient=float(rate_value),
        eps_exponent=-scaling.speed_exponent,
        regime=reg,
        description="log call price decay rate",
    )


def call_limit_cl(sigma0, T, x):
    return bs_dimensionless_call(x, math.sqrt(T) * sigma0)


def call_exceptional(sigma0, T, x, alpha):
    """C ~ eps^alpha int_x^inf Nbar(y / (sqrt(T) sigma0)) dy when alpha + beta = H."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    c = math.sqrt(T) * sigma0
    coef = integrate.quad(lambda y: special.ndtr(-y / c), x, np.inf, epsabs=1e-14, limit=200)[0]
    return AsymptoticTerm(coef, alpha, regime=EXCEPTIONAL, description="call price, exceptional regime")


def iv_asymptote(scaling, x, rate_value=None, sigma0=None, T=1.0):
    """Leading implied-volatility term in each regime."""
    reg, H, beta, alpha = scaling.regime, scaling.H, scaling.beta, scaling.alpha
    if reg == LDP:
        if rate_value is None:
            raise ValueError("LDP implied volatility needs the rate value I_T(x)")
        if not rate_value > 0:
            raise ZeroRate("I_T(x) = 0; the implied-volatility formula is degenerate", x=x)
        return AsymptoticTerm(x / math.sqrt(2.0 * rate_value), H - beta - 0.5, regime=LDP, description="implied vol")
    if reg in (MDP, CL):
        if sigma0 is None:
            raise ValueError(f"{reg} implied volatility needs sigma(0)")
        p = -0.5 if reg == CL else H - beta - 0.5
        return AsymptoticTerm(math.sqrt(T) * sigma0, p, regime=reg, description="implied vol")
    if reg == EXCEPTIONAL:
        if not 0 < alpha <= H + 1e-12:
            raise WrongRegime("exceptional regime needs alpha in (0, H]", alpha=alpha)
        return AsymptoticTerm(
            x / math.sqrt(2.0 * alpha), alpha - 0.5, log_correction=True, regime=EXCEPTIONAL, description="implied vol"
        )
    raise WrongRegime(f"unknown regime {reg}")
