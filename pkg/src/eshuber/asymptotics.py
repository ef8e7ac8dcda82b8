"""Closed-form moments, A and B matrices, and influence diagnostics.

The reference distribution is ESN(0, sigma, eps). On each of the four loss
segments (left tail, left core, right core, right tail, with knots at
``z = c1 (1 + eps)``, ``0`` and ``z = c2 (1 - eps)``) every score, score product
and score derivative is a polynomial in ``z = x / sigma``. Their expectations
are therefore sums of truncated normal moments

    int_0^a t^k phi(t) dt = 2^(k/2) / (2 sqrt(pi)) * gamma((k + 1) / 2, a^2 / 2),

with the tail counterpart in terms of the upper incomplete gamma function.
``A = E[Psi Psi^T]`` and ``B = E[d Psi / d tau]``, with ``Psi = (psi_theta,
psi_sigma, psi_eps)`` the parameter scores of :mod:`eshuber.loss`.
"""

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np

from .exceptions import InvalidParamsError, SingularMatrixError
from .loss import LossParams, score_eps, score_sigma, score_theta
from .specfun import lower_incomplete_gamma, upper_incomplete_gamma

SINGULAR_RTOL = 1e-12
PARAM_NAMES = ("theta", "sigma", "eps")
_SQRT_PI = sqrt(pi)


def _check_sigma(sigma):
    if not (sigma > 0 and np.isfinite(sigma)):
        raise InvalidParamsError(f"sigma must be positive and finite, got {sigma!r}")


def _segments(p: LossParams):
    """Per-segment polynomial coefficients (ascending powers of z) at sigma = 1.

    Returns a list of ``(side, knot, tail, rho, scores, hess)`` where ``side`` is
    -1 or +1, ``knot`` the standardized knot ``c1`` or ``c2``, ``tail`` whether
    the segment lies beyond the knot.
    """
    a, b = 1.0 + p.eps, 1.0 - p.eps
    c1, c2 = p.c1, p.c2
    segs = []
    # left tail
    segs.append((-1, c1, True,
                 [-0.5 * c1**2 / a**2, c1 / a**3],
                 [[-c1 / a**3], [0.0, -c1 / a**3], [c1**2 / a**3, -3 * c1 / a**4]],
                 [[[0.0], [c1 / a**3], [3 * c1 / a**4]],
                  [None, [0.0, 2 * c1 / a**3], [0.0, 3 * c1 / a**4]],
                  [None, None, [-3 * c1**2 / a**4, 12 * c1 / a**5]]]))
    # left core
    segs.append((-1, c1, False,
                 [0.0, 0.0, 0.5 / a**4],
                 [[0.0, -1 / a**4], [0.0, 0.0, -1 / a**4], [0.0, 0.0, -2 / a**5]],
                 [[[1 / a**4], [0.0, 2 / a**4], [0.0, 4 / a**5]],
                  [None, [0.0, 0.0, 3 / a**4], [0.0, 0.0, 4 / a**5]],
                  [None, None, [0.0, 0.0, 10 / a**6]]]))
    # right core
    segs.append((1, c2, False,
                 [0.0, 0.0, 0.5 / b**4],
                 [[0.0, -1 / b**4], [0.0, 0.0, -1 / b**4], [0.0, 0.0, 2 / b**5]],
                 [[[1 / b**4], [0.0, 2 / b**4], [0.0, -4 / b**5]],
                  [None, [0.0, 0.0, 3 / b**4], [0.0, 0.0, -4 / b**5]],
                  [None, None, [0.0, 0.0, 10 / b**6]]]))
    # right tail
    segs.append((1, c2, True,
                 [-0.5 * c2**2 / b**2, c2 / b**3],
                 [[-c2 / b**3], [0.0, -c2 / b**3], [-(c2**2) / b**3, 3 * c2 / b**4]],
                 [[[0.0], [c2 / b**3], [-3 * c2 / b**4]],
                  [None, [0.0, 2 * c2 / b**3], [0.0, -3 * c2 / b**4]],
                  [None, None, [-3 * c2**2 / b**4, 12 * c2 / b**5]]]))
    return segs


def _moments(side, knot, tail, eps, kmax):
    """``int z^k f(z) dz`` over one segment for ``k = 0..kmax``, f the ESN(0,1,eps) density."""
    h = 1.0 + eps if side < 0 else 1.0 - eps
    x = 0.5 * knot**2
    out = np.empty(kmax + 1)
    for k in range(kmax + 1):
        s = 0.5 * (k + 1)
        g = upper_incomplete_gamma(s, x) if tail else lower_incomplete_gamma(s, x)
        out[k] = side**k * h ** (k + 1) * 2 ** (0.5 * k) / (2 * _SQRT_PI) * g
    return out


def _expect(poly_per_seg, p):
    total = 0.0
    for (side, knot, tail, *_), poly in zip(_segments(p), poly_per_seg):
        poly = np.trim_zeros(np.asarray(poly, dtype=float), "b")
        if poly.size == 0:
            continue
        m = _moments(side, knot, tail, p.eps, poly.size - 1)
        total += float(poly @ m)
    return total


# sigma powers carried by each score and by each second derivative
_SCORE_POW = np.array([1, 1, 0])
_HESS_POW = _SCORE_POW[:, None] + _SCORE_POW[None, :]


def expected_rho(p: LossParams, sigma=1.0):
    """``E[rho_ESH(u)]`` with ``u`` the standardized residual of an ESN(0, sigma, eps) draw.

    Does not depend on ``sigma``; the argument is accepted for a uniform API.
    """
    _check_sigma(sigma)
    return _expect([s[3] for s in _segments(p)], p)


def expected_scores(p: LossParams, sigma=1.0):
    """``(E[psi_theta], E[psi_sigma], E[psi_eps])`` under ESN(0, sigma, eps)."""
    _check_sigma(sigma)
    segs = _segments(p)
    out = np.array([_expect([s[4][i] for s in segs], p) for i in range(3)])
    return out / sigma**_SCORE_POW


def matrix_a(p: LossParams, sigma=1.0):
    """``A = E[Psi Psi^T]`` under ESN(0, sigma, eps)."""
    _check_sigma(sigma)
    segs = _segments(p)
    A = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            polys = [np.polynomial.polynomial.polymul(s[4][i], s[4][j]) for s in segs]
            A[i, j] = A[j, i] = _expect(polys, p)
    return A / sigma**_HESS_POW


def _matrix_b_raw(p, sigma):
    segs = _segments(p)
    B = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            B[i, j] = B[j, i] = _expect([s[5][i][j] for s in segs], p)
    return B / sigma**_HESS_POW


def _check_nonsingular(B):
    scale = max(np.max(np.abs(B)), np.finfo(float).tiny) ** 3
    if abs(np.linalg.det(B)) < SINGULAR_RTOL * scale:
        raise SingularMatrixError("B is numerically singular")


def matrix_b(p: LossParams, sigma=1.0):
    """``B = E[d Psi / d(theta, sigma, eps)]`` under ESN(0, sigma, eps).

    Raises
    ------
    SingularMatrixError
        If ``|det B|`` is below ``1e-12`` relative to the entry scale.
    """
    _check_sigma(sigma)
    B = _matrix_b_raw(p, sigma)
    _check_nonsingular(B)
    return B


def asymptotic_cov(p: LossParams, sigma=1.0):
    """``B^-1 A B^-T``, the covariance of ``sqrt(n) (tau_hat - tau)``."""
    A, B = matrix_a(p, sigma), matrix_b(p, sigma)
    X = np.linalg.solve(B, A)
    cov = np.linalg.solve(B, X.T).T
    return 0.5 * (cov + cov.T)


def _upper(s, x):
    return upper_incomplete_gamma(s, x)


def _lower(s, x):
    return lower_incomplete_gamma(s, x)


def matrix_a_reference(p: LossParams, sigma=1.0):
    """Alternative closed form for ``A`` behind the reference variance table.

    It uses incomplete-gamma cutoffs ``c1^2 / (2 (1+eps)^2)`` and
    ``c2^2 / (2 (1-eps)^2)`` instead of ``c1^2 / 2`` and ``c2^2 / 2``, and it
    does not equal ``E[Psi Psi^T]`` (compare :func:`matrix_a`). It is kept only
    so that ``variance_table(method="reference")`` can regenerate that table.
    """
    _check_sigma(sigma)
    c1, c2, s = p.c1, p.c2, sigma
    P, M = 1.0 + p.eps, 1.0 - p.eps
    a, b = c1**2 / (2 * P**2), c2**2 / (2 * M**2)
    sp, s2p, r2 = _SQRT_PI, sqrt(2 * pi), sqrt(2.0)
    U, L = _upper, _lower
    att = (c1**2 / (s**2 * P**5 * 2 * sp) * U(.5, a) + 1 / (s**2 * P**3 * sp) * L(1.5, a)
           + 1 / (s**2 * M**3 * sp) * L(1.5, b) + c2**2 / (s**2 * M**5 * 2 * sp) * U(.5, b))
    ast = (-c1**2 / (s**2 * P**3 * s2p) * U(1, a) - 2 / (s**2 * P * s2p) * L(2, a)
           + 2 / (s**2 * M * s2p) * L(2, b) + c2**2 / (s**2 * M**3 * s2p) * U(1, b))
    aet = (-3 * c1**2 / (s * P**4 * s2p) * U(1, a) - c1**3 / (s * P**5 * 2 * sp) * U(.5, a)
           - 2 * r2 / (s * P**2 * sp) * L(2, a) - 2 * r2 / (s * M**2 * sp) * L(2, b)
           - 3 * c2**2 / (s * M**4 * s2p) * U(1, b) + c2**3 / (s * M**5 * 2 * sp) * U(.5, b))
    ass = (c1**2 / (s**2 * P * sp) * U(1.5, a) + 2 * P / (s**2 * sp) * L(2.5, a)
           + 2 * M / (s**2 * sp) * L(2.5, b) + c2**2 / (s**2 * M * sp) * U(1.5, b))
    aes = (3 * c1**2 / (s * P**2 * sp) * U(1.5, a) + c1**3 / (s * P**3 * s2p) * U(1, a)
           + 4 / (s * sp) * L(2.5, a) - 4 / (s * sp) * L(2.5, b)
           - 3 * c2**2 / (s * M**2 * sp) * U(1.5, b) + c2**3 / (s * M**3 * s2p) * U(1, b))
    aee = (9 * c1**2 / (P**3 * sp) * U(1.5, a) + 3 * r2 * c1**3 / (P**4 * sp) * U(1, a)
           + c1**4 / (P**5 * 2 * sp) * U(.5, a) + 8 / (P * sp) * L(2.5, a)
           + 8 / (M * sp) * L(2.5, b) + 9 * c2**2 / (M**3 * sp) * U(1.5, b)
           - 3 * r2 * c2**3 / (M**4 * sp) * U(1, b) + c2**4 / (M**5 * 2 * sp) * U(.5, b))
    return np.array([[att, ast, aet], [ast, ass, aes], [aet, aes, aee]])


def variance_table(p: LossParams, sigma=1.0, n_list=(30, 50, 100, 150), method="sandwich"):
    """Rows ``(n, var_theta, var_sigma, var_eps)`` of asymptotic variances divided by n.

    Parameters
    ----------
    method : {"sandwich", "reference"}
        ``"sandwich"`` uses ``diag(B^-1 A B^-T) / n``. ``"reference"`` uses
        ``diag(inv(A_ref)) / n`` with :func:`matrix_a_reference`, which is the
        convention behind the reference values (0.190253, 0.018747, 0.021061 at n = 30
        for eps = -0.2, c = (-1.1, 3.7)).
    """
    ns = [int(n) for n in n_list]
    if not ns or min(ns) < 1:
        raise InvalidParamsError("n_list must hold positive counts")
    if method == "sandwich":
        d = np.diag(asymptotic_cov(p, sigma))
    elif method == "reference":
        d = np.diag(np.linalg.inv(matrix_a_reference(p, sigma)))
    else:
        raise InvalidParamsError(f"unknown method {method!r}")
    return np.array([[n, *(d / n)] for n in ns])


def score_vector(x, p: LossParams, sigma=1.0):
    """``Psi(x)`` at ``theta = 0``; shape ``(3,)`` or ``(3, len(x))``."""
    return np.array([score_theta(x, p, 0.0, sigma), score_sigma(x, p, 0.0, sigma),
                     score_eps(x, p, 0.0, sigma)])


def influence_function(x, p: LossParams, sigma=1.0):
    """``IF(x) = -B^-1 Psi(x)``; vectorised, columns follow ``x``."""
    B = matrix_b(p, sigma)
    return -np.linalg.solve(B, score_vector(x, p, sigma))


def ges(x_grid, p: LossParams, sigma=1.0):
    """Euclidean norm of the influence function at each grid point."""
    return np.linalg.norm(influence_function(np.atleast_1d(x_grid), p, sigma), axis=0)


def influence_theta_known_nuisance(x, p: LossParams, sigma=1.0):
    """Location influence with sigma and eps known: ``-psi_theta(x) / B_11``."""
    B = _matrix_b_raw(p, sigma)
    if B[0, 0] == 0:
        raise SingularMatrixError("B_11 vanishes")
    return -np.asarray(score_theta(x, p, 0.0, sigma)) / B[0, 0]


def uniqueness_minors(p: LossParams, sigma=1.0):
    """Leading principal minors ``(K1, K2, K3)`` of B."""
    B = _matrix_b_raw(p, sigma)
    return (float(B[0, 0]), float(np.linalg.det(B[:2, :2])), float(np.linalg.det(B)))


@dataclass
class AsymptoticReport:
    A: np.ndarray
    B: np.ndarray
    cov: np.ndarray
    minors: tuple
    params: LossParams
    sigma: float

    def ges(self, x_grid):
        IF = -np.linalg.solve(self.B, score_vector(np.atleast_1d(x_grid), self.params, self.sigma))
        return np.linalg.norm(IF, axis=0)


def asymptotic_report(p: LossParams, sigma=1.0):
    A, B = matrix_a(p, sigma), matrix_b(p, sigma)
    return AsymptoticReport(A, B, asymptotic_cov(p, sigma), uniqueness_minors(p, sigma), p, float(sigma))
