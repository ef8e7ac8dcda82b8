"""Epsilon-skew Huber (ESH) loss family and its relatives.

All functions are vectorised over ``u`` (or ``x``) and return a float for
scalar input. The sign convention throughout is ``sign(0) = +1``: a zero
residual belongs to the right-hand, ``(1 - eps)`` branch.
"""

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidParamsError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class LossParams:
    """Tuning triple ``(c1, c2, eps)`` of the ESH loss.

    ``c1 < 0 < c2`` are the left and right knots on the standardized scale,
    ``eps`` in ``(-1, 1)`` the skewness.
    """

    c1: float
    c2: float
    eps: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.c1) and np.isfinite(self.c2)):
            raise InvalidParamsError("tuning constants must be finite")
        if not self.c1 < 0 < self.c2:
            raise InvalidParamsError(f"need c1 < 0 < c2, got c1={self.c1}, c2={self.c2}")
        if not -1.0 < self.eps < 1.0:
            raise InvalidParamsError(f"eps must lie in (-1, 1), got {self.eps}")

    def with_eps(self, eps):
        return replace(self, eps=float(eps))


@dataclass(frozen=True)
class HuberParams:
    k: float

    def __post_init__(self):
        if not (self.k > 0 and np.isfinite(self.k)):
            raise InvalidParamsError(f"Huber k must be positive, got {self.k}")


def sign(u):
    """Sign with ``sign(0) = +1``."""
    return np.where(np.asarray(u) >= 0, 1.0, -1.0)


def _ret(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


def rho_esh(u, p: LossParams):
    """ESH loss: quadratic on ``[c1, c2]``, linear outside, continuous at the knots."""
    u = np.asarray(u, dtype=float)
    lo, hi = (1.0 + p.eps) ** 2, (1.0 - p.eps) ** 2
    out = np.select(
        [u < p.c1, u < 0, u <= p.c2],
        [
            (p.c1 * u - 0.5 * p.c1**2) / lo,
            0.5 * u**2 / lo,
            0.5 * u**2 / hi,
        ],
        default=(p.c2 * u - 0.5 * p.c2**2) / hi,
    )
    return _ret(out)


def psi_esh(u, p: LossParams):
    """Derivative of :func:`rho_esh`; nondecreasing and bounded."""
    u = np.asarray(u, dtype=float)
    lo, hi = (1.0 + p.eps) ** 2, (1.0 - p.eps) ** 2
    out = np.select(
        [u < p.c1, u < 0, u <= p.c2],
        [np.full_like(u, p.c1 / lo), u / lo, u / hi],
        default=p.c2 / hi,
    )
    return _ret(out)


def weight_esh(u, p: LossParams):
    """IRLS weight ``psi(u) / u``; at ``u = 0`` the right-branch limit ``1/(1-eps)^2``."""
    u = np.asarray(u, dtype=float)
    lo, hi = (1.0 + p.eps) ** 2, (1.0 - p.eps) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.select(
            [u < p.c1, u < 0, u <= p.c2],
            [p.c1 / (lo * u), np.full_like(u, 1.0 / lo), np.full_like(u, 1.0 / hi)],
            default=p.c2 / (hi * u),
        )
    return _ret(out)


def rho_huber(u, h: HuberParams):
    """Huber's loss in the ``u^2`` / ``2k|u| - k^2`` normalisation (so ``rho' = 2 psi``)."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    return _ret(np.where(a <= h.k, u**2, 2.0 * h.k * a - h.k**2))


def psi_huber(u, h: HuberParams):
    u = np.asarray(u, dtype=float)
    return _ret(np.clip(u, -h.k, h.k))


def rho_esn(u, eps):
    """Epsilon-skew normal kernel ``u^2 / (2 (1 - sign(u) eps)^2)``."""
    u = np.asarray(u, dtype=float)
    q = 1.0 - sign(u) * eps
    return _ret(0.5 * u**2 / q**2)


def rho_esl(u, eps):
    """Epsilon-skew Laplace kernel ``|u| / (sqrt(2) (1 - sign(u) eps))``."""
    u = np.asarray(u, dtype=float)
    q = 1.0 - sign(u) * eps
    return _ret(np.abs(u) / (SQRT2 * q))


# Scores: derivatives of rho_esh((x - theta) / (sigma (1 - sign(x - theta) eps)))
# with respect to theta, sigma and eps, where eps also enters rho_esh itself.
# In terms of z = (x - theta) / sigma, psi_theta and psi_sigma carry a 1/sigma
# factor and psi_eps none. Knots sit at z = c1 (1 + eps) and z = c2 (1 - eps).


def _branches(z, p):
    pl, ql = 1.0 + p.eps, 1.0 - p.eps
    return [z < p.c1 * pl, z < 0, z <= p.c2 * ql], pl, ql


def score_theta(x, p: LossParams, theta=0.0, sigma=1.0):
    z = (np.asarray(x, dtype=float) - theta) / sigma
    conds, pl, ql = _branches(z, p)
    out = np.select(
        conds,
        [np.full_like(z, -p.c1 / pl**3), -z / pl**4, -z / ql**4],
        default=-p.c2 / ql**3,
    )
    return _ret(out / sigma)


def score_sigma(x, p: LossParams, theta=0.0, sigma=1.0):
    z = (np.asarray(x, dtype=float) - theta) / sigma
    conds, pl, ql = _branches(z, p)
    out = np.select(
        conds,
        [-p.c1 * z / pl**3, -(z**2) / pl**4, -(z**2) / ql**4],
        default=-p.c2 * z / ql**3,
    )
    return _ret(out / sigma)


def score_eps(x, p: LossParams, theta=0.0, sigma=1.0):
    z = (np.asarray(x, dtype=float) - theta) / sigma
    conds, pl, ql = _branches(z, p)
    out = np.select(
        conds,
        [
            -3.0 * p.c1 * z / pl**4 + p.c1**2 / pl**3,
            -2.0 * z**2 / pl**5,
            2.0 * z**2 / ql**5,
        ],
        default=3.0 * p.c2 * z / ql**4 - p.c2**2 / ql**3,
    )
    return _ret(out)


def scores(x, p: LossParams, theta=0.0, sigma=1.0):
    """Stacked ``(psi_theta, psi_sigma, psi_eps)``, shape ``(3,) + shape(x)``."""
    return np.array(
        [
            score_theta(x, p, theta, sigma),
            score_sigma(x, p, theta, sigma),
            score_eps(x, p, theta, sigma),
        ]
    )


def loss_table(p: LossParams, start, stop, step):
    """Grid of ``(u, rho, psi, w)`` rows from ``start`` to ``stop`` inclusive."""
    if step <= 0:
        raise InvalidParamsError("step must be positive")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise InvalidParamsError("empty grid")
    u = start + step * np.arange(n)
    u = np.round(u, 12)
    return np.column_stack([u, rho_esh(u, p), psi_esh(u, p), weight_esh(u, p)])
