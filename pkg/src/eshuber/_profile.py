"""Skewness-profiled solve shared by the univariate and regression fits.

For a fixed skewness the location (or coefficient) and scale equations are
continuous in all unknowns, because psi vanishes at a zero residual. Only the
skewness equation jumps, through its ``sum s_i / q_i`` term, when a residual
changes sign. Profiling out ``(b, sigma)`` therefore leaves a one-dimensional
function of ``eps`` that is bracketed and bisected: the search ends either at
a root or at a jump that straddles zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .loss import LossParams, psi_esh, rho_esh, sign

EPS_MARGIN = 1e-6
_INNER_TOL = 1e-10
_NEWTON_MAX = 200
BRACKET_XTOL = 1e-15


@dataclass
class ProfileSolution:
    b: np.ndarray
    sigma: float
    eps: float
    kink: bool
    evaluations: int


def _dpsi(u, p: LossParams):
    lo, hi = (1.0 + p.eps) ** 2, (1.0 - p.eps) ** 2
    return np.select([u < p.c1, u < 0, u <= p.c2], [0.0, 1.0 / lo, 1.0 / hi], default=0.0)


def solve_fixed_eps(y, X, b, sigma, eps, loss: LossParams):
    """Solve the coefficient and scale equations with the skewness held at ``eps``.

    With ``tau = 1/sigma`` and ``beta = tau b`` the equations are the
    stationarity conditions of the convex function
    ``sum g(tau y_i - x_i beta) - n log(tau)``, ``g(r) = rho(r / (1 - sign(r) eps))``,
    which is minimised by damped Newton steps.
    Returns ``(b, sigma)`` or None when the inner tolerance is not reached.
    """
    n, k = X.shape
    pl = loss.with_eps(eps)

    def parts(v):
        beta, tau = v[:k], v[k]
        r = tau * y - X @ beta
        q = 1.0 - sign(r) * eps
        u = r / q
        return r, q, u

    def fun(v):
        if not v[k] > 0:
            return np.inf
        _, _, u = parts(v)
        return float(np.sum(rho_esh(u, pl)) - n * np.log(v[k])) / n

    def grad(v):
        _, q, u = parts(v)
        g1 = psi_esh(u, pl) / q
        return np.concatenate([-X.T @ g1, [y @ g1 - n / v[k]]]) / n

    def hess(v):
        _, q, u = parts(v)
        g2 = _dpsi(u, pl) / q**2
        h = np.empty((k + 1, k + 1))
        h[:k, :k] = (X.T * g2) @ X
        h[:k, k] = h[k, :k] = -X.T @ (g2 * y)
        h[k, k] = np.sum(g2 * y**2) + n / v[k] ** 2
        return h / n

    tau0 = 1.0 / sigma
    v = np.concatenate([tau0 * np.asarray(b, dtype=float), [tau0]])
    f = fun(v)
    for _ in range(_NEWTON_MAX):
        g = grad(v)
        if np.max(np.abs(g)) < 1e-14:
            break
        h = hess(v)
        ridge = 1e-12 * max(np.trace(h), 1e-300)
        try:
            step = -np.linalg.solve(h + ridge * np.eye(k + 1), g)
        except np.linalg.LinAlgError:
            step = -g
        slope = float(g @ step)
        if not slope < 0:
            step, slope = -g, -float(g @ g)
        gmax = np.max(np.abs(g))
        t = 1.0
        while t > 1e-12:
            v_new = v + t * step
            f_new = fun(v_new)
            if f_new <= f + 1e-4 * t * slope:
                break
            # below round-off in f, judge the step by the gradient instead
            if f_new <= f + 1e-15 * abs(f) and np.max(np.abs(grad(v_new))) < gmax:
                break
            t *= 0.5
        else:
            break
        if np.array_equal(v_new, v):
            break
        v, f = v_new, f_new
    if not (np.all(np.isfinite(v)) and v[k] > 0):
        return None
    b_hat, s_hat = v[:k] / v[k], 1.0 / v[k]
    if np.max(np.abs(_equations(y, X, b_hat, s_hat, eps, pl))) > _INNER_TOL:
        return None
    return b_hat, float(s_hat)


def _equations(y, X, b, sigma, eps, pl):
    # coefficient and scale equations divided by n
    r = y - X @ b
    q = 1.0 - sign(r) * eps
    u = r / (sigma * q)
    psi = psi_esh(u, pl)
    return np.concatenate([X.T @ (psi / (sigma * q)), [np.sum(psi * u) - y.size]]) / y.size


def eps_residual(y, X, b, sigma, eps, loss: LossParams):
    """Skewness estimating equation divided by n, loss skewness tied to ``eps``."""
    r = y - X @ b
    s = sign(r)
    q = 1.0 - s * eps
    u = r / (sigma * q)
    psi = psi_esh(u, loss.with_eps(eps))
    return float(np.mean(psi * u * s / q) - np.mean(s / q))


class _Failed(Exception):
    pass


def solve_profiled(y, X, b, sigma, eps, loss: LossParams, budget, step=0.01, window=0.16):
    """Bracket and bisect the profiled skewness equation starting near ``eps``.

    The search is local: it only looks for a sign change within ``window`` of
    the starting skewness, since it is meant to settle sweeps that cycle
    around a solution, not to find a different one. Returns a
    :class:`ProfileSolution` or None when the starting inner solve fails, no
    sign change lies inside the window, or ``budget`` inner solves are
    exhausted.
    """
    lo_lim, hi_lim = -1.0 + EPS_MARGIN, 1.0 - EPS_MARGIN
    state = {"b": np.asarray(b, dtype=float), "s": float(sigma), "n": 0}
    cache = {}

    def h(e):
        if e in cache:
            return cache[e][0]
        if state["n"] >= budget:
            raise _Failed
        state["n"] += 1
        out = solve_fixed_eps(y, X, state["b"], state["s"], e, loss)
        if out is None:
            raise _Failed
        state["b"], state["s"] = out
        val = eps_residual(y, X, out[0], out[1], e, loss)
        cache[e] = (val, out[0].copy(), out[1])
        return val

    try:
        e0 = float(np.clip(eps, lo_lim, hi_lim))
        f0 = h(e0)
        e_hat = e0
        if f0 != 0.0:
            # expand alternately below and above until the sign flips
            a, e1, d = e0, None, step
            while e1 is None:
                for e_try in (e0 - d, e0 + d):
                    if not lo_lim < e_try < hi_lim:
                        continue
                    try:
                        f_try = h(e_try)
                    except _Failed:
                        # inner solve broke down; treat the trial as unusable
                        if state["n"] >= budget:
                            raise
                        continue
                    if np.sign(f_try) != np.sign(f0):
                        e1 = e_try
                        break
                else:
                    if 2.0 * d > window:
                        return None
                    d *= 2.0
                    continue
            # tighten to the nearest evaluated point on the starting side
            same = [e for e in cache if np.sign(cache[e][0]) == np.sign(f0)]
            a = min(same, key=lambda e: abs(e - e1))
            lo, hi = (a, e1) if a < e1 else (e1, a)
            e_hat = optimize.brentq(h, lo, hi, xtol=BRACKET_XTOL)
        val = h(e_hat)
    except _Failed:
        return None
    _, b_hat, s_hat = cache[e_hat]
    # a genuine root leaves a residual at the level of the inner tolerance
    kink = abs(val) > 1e-9
    return ProfileSolution(b_hat, float(s_hat), float(e_hat), kink, state["n"])
