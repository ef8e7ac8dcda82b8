"""Epsilon-skew normal, Laplace and t distributions.

Each family is two-piece: with ``z = (x - theta) / sigma`` and
``q = 1 - sign(z) eps`` the density is ``g(z / q) / sigma`` for a symmetric
base density ``g``. The left half therefore carries mass ``(1 + eps) / 2``.
The Laplace base is ``exp(-|v| / sqrt(2)) / (2 sqrt(2))``.
"""

from dataclasses import dataclass
from math import lgamma
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .exceptions import DegenerateSampleError, InvalidParamsError
from .loss import SQRT2, LossParams, rho_esh, sign

FAMILIES = ("ESN", "ESL", "ESt")
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SkewFamilyParams:
    family: str
    theta: float = 0.0
    sigma: float = 1.0
    eps: float = 0.0
    nu: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParamsError(f"unknown family {self.family!r}")
        if not self.sigma > 0:
            raise InvalidParamsError("sigma must be positive")
        if not -1 < self.eps < 1:
            raise InvalidParamsError("eps must lie in (-1, 1)")
        if self.family == "ESt" and not (self.nu is not None and self.nu > 0):
            raise InvalidParamsError("ESt needs a positive nu")


@dataclass(frozen=True)
class MixtureSpec:
    weight_primary: float
    primary: SkewFamilyParams
    secondary: SkewFamilyParams

    def __post_init__(self):
        if not 0 <= self.weight_primary <= 1:
            raise InvalidParamsError("mixture weight must lie in [0, 1]")


def contaminated_esn(eps0, weight=0.9):
    """``weight * ESN(0, 1, eps0) + (1 - weight) * ESL(0, 1, eps0)``."""
    return MixtureSpec(
        weight, SkewFamilyParams("ESN", 0.0, 1.0, eps0), SkewFamilyParams("ESL", 0.0, 1.0, eps0)
    )


def _base_logpdf(v, family, nu):
    if family == "ESN":
        return -0.5 * v**2 - _LOG_SQRT_2PI
    if family == "ESL":
        return -np.abs(v) / SQRT2 - np.log(2.0 * SQRT2)
    c = lgamma((nu + 1) / 2) - lgamma(nu / 2) - 0.5 * np.log(nu * np.pi)
    return c - 0.5 * (nu + 1) * np.log1p(v**2 / nu)


def log_density(x, p: SkewFamilyParams):
    """Normalised log density, vectorised over ``x``."""
    z = (np.asarray(x, dtype=float) - p.theta) / p.sigma
    q = 1.0 - sign(z) * p.eps
    out = _base_logpdf(z / q, p.family, p.nu) - np.log(p.sigma)
    return float(out) if np.ndim(out) == 0 else out


def density(x, p: SkewFamilyParams):
    return np.exp(log_density(x, p))


def loglik(data, p: SkewFamilyParams):
    return float(np.sum(log_density(data, p)))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _half_draws(rng, family, nu, n):
    if family == "ESN":
        return np.abs(rng.standard_normal(n))
    if family == "ESL":
        return SQRT2 * rng.standard_exponential(n)
    return np.abs(rng.standard_t(nu, n))


def sample(p: SkewFamilyParams, n, seed=None):
    """Draw ``n`` values. ``seed`` may be an int, None or a ``np.random.Generator``.

    The side is chosen first (left with probability ``(1 + eps) / 2``), then a
    half-distribution draw is scaled by ``sigma (1 +- eps)``.
    """
    rng = _rng(seed)
    left = rng.random(n) < (1.0 + p.eps) / 2.0
    mag = _half_draws(rng, p.family, p.nu, n)
    scale = np.where(left, -(1.0 + p.eps), 1.0 - p.eps)
    return p.theta + p.sigma * scale * mag


def sample_mixture(m: MixtureSpec, n, seed=None):
    """Draws from a two-component mixture; component chosen per draw."""
    rng = _rng(seed)
    first = rng.random(n) < m.weight_primary
    a = sample(m.primary, n, rng)
    b = sample(m.secondary, n, rng)
    return np.where(first, a, b)


def aic_bic(logL, k, n):
    """``(AIC, BIC) = (2k - 2 logL, -2 logL + k log n)``."""
    if n < 1 or k < 1:
        raise InvalidParamsError("need n >= 1 and k >= 1")
    return 2.0 * k - 2.0 * logL, -2.0 * logL + k * np.log(n)


@dataclass
class MLFit:
    params: SkewFamilyParams
    logL: float
    converged: bool
    n_params: int = 3


def _to_eps(t):
    return np.tanh(t)


def _from_eps(e):
    return np.arctanh(np.clip(e, -0.999, 0.999))


def _profile_sigma(z, eps, family):
    # closed-form scale maximising the likelihood for fixed location and skewness
    q = 1.0 - sign(z) * eps
    if family == "ESN":
        return np.sqrt(np.mean(z**2 / q**2))
    return np.mean(np.abs(z) / q) / SQRT2


def _negll_factory(x, family, nu):
    n = x.size
    if family in ("ESN", "ESL"):

        def f(v):
            theta, eps = v[0], _to_eps(v[1])
            if not abs(eps) < 1.0:
                return np.inf
            s = _profile_sigma(x - theta, eps, family)
            if not s > 0:
                return np.inf
            return -loglik(x, SkewFamilyParams(family, theta, s, eps))

        return f

    def f(v):
        theta, sig, eps = v[0], np.exp(v[1]), _to_eps(v[2])
        if not (abs(eps) < 1.0 and sig > 0):
            return np.inf
        z = (x - theta) / sig
        q = 1.0 - sign(z) * eps
        return -(np.sum(_base_logpdf(z / q, family, nu)) - n * np.log(sig))

    return f


def fit_ml(data, family, nu_fixed=None, n_starts=5, seed=0):
    """Maximum likelihood for ``(theta, sigma, eps)`` of one family.

    Nelder-Mead over ``(theta, log sigma, atanh eps)`` from ``(median, MAD, 0)``
    and ``n_starts - 1`` perturbed starts. For ESN and ESL the scale is
    profiled out in closed form. ``nu_fixed`` is required for ESt.
    """
    x = np.asarray(data, dtype=float).ravel()
    if np.unique(x).size < 3:
        raise DegenerateSampleError("need at least three distinct values")
    if family not in FAMILIES:
        raise InvalidParamsError(f"unknown family {family!r}")
    if family == "ESt" and nu_fixed is None:
        raise InvalidParamsError("ESt requires nu_fixed")
    med = float(np.median(x))
    scale = float(np.median(np.abs(x - med))) or float(np.std(x))
    f = _negll_factory(x, family, nu_fixed)
    rng = np.random.default_rng(seed)
    profiled = family in ("ESN", "ESL")

    best = None
    for i in range(n_starts):
        jitter = rng.normal(0, 0.5, 3) if i else np.zeros(3)
        t0 = med + jitter[0] * scale
        e0 = float(np.clip(jitter[2], -0.9, 0.9))
        v0 = [t0, _from_eps(e0)] if profiled else [t0, np.log(scale) + jitter[1], _from_eps(e0)]
        res = optimize.minimize(
            f, v0, method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000},
        )
        if best is None or res.fun < best.fun:
            best = res
    v = best.x
    if profiled:
        theta, eps = float(v[0]), float(_to_eps(v[1]))
        sig = float(_profile_sigma(x - theta, eps, family))
    else:
        theta, sig, eps = float(v[0]), float(np.exp(v[1])), float(_to_eps(v[2]))
    p = SkewFamilyParams(family, theta, sig, eps, nu_fixed if family == "ESt" else None)
    return MLFit(p, loglik(x, p), bool(best.success))


def fit_normal(data):
    """Gaussian ML fit, returned with ``eps = 0`` and two free parameters."""
    x = np.asarray(data, dtype=float).ravel()
    p = SkewFamilyParams("ESN", float(np.mean(x)), float(np.std(x)), 0.0)
    return MLFit(p, loglik(x, p), True, n_params=2)


def esh_log_normalizer(p: LossParams):
    """``log C`` with ``C = int exp(-rho_ESH(v)) dv`` in closed form.

    ``exp(-rho_ESH(u_i)) / (sigma q_i C)``, ``q_i = 1 - sign(x_i - theta) eps``,
    is then a proper density, and ``-loglik`` equals the ESH objective plus
    ``n log C``.
    """
    a, b = 1.0 + p.eps, 1.0 - p.eps
    sqrt2pi = np.sqrt(2.0 * np.pi)
    core = a * sqrt2pi * (0.5 - ndtr(p.c1 / a)) + b * sqrt2pi * (ndtr(p.c2 / b) - 0.5)
    tails = (a**2 / -p.c1) * np.exp(-(p.c1**2) / (2 * a**2)) + (b**2 / p.c2) * np.exp(
        -(p.c2**2) / (2 * b**2)
    )
    return float(np.log(core + tails))


def loglik_esh(data, theta, sigma, eps, p: LossParams):
    """Log likelihood of the density generated by the ESH loss (see :func:`esh_log_normalizer`)."""
    x = np.asarray(data, dtype=float).ravel()
    pl = p.with_eps(eps)
    r = x - theta
    q = 1.0 - sign(r) * eps
    u = r / (sigma * q)
    return float(-np.sum(rho_esh(u, pl)) - x.size * np.log(sigma) - np.sum(np.log(q))
                 - x.size * esh_log_normalizer(pl))
