"""Joint location/scale/skewness M-estimation with the ESH loss.

The fit is the iterative reweighting algorithm: at each sweep the location
is a weighted mean, the scale a weighted root-mean-square, and the skewness
the root of its estimating equation, in that order. Inside a sweep the loss
skewness is the current skewness estimate.

The log term of the objective jumps whenever the location crosses a data
point, so the skewness equation, and with it the location equation profiled
over scale and skewness, is discontinuous in the location. Often no exact root
exists and the sweeps cycle between neighbouring sign patterns. When that
happens the fit switches to a one-dimensional search over the location with
scale and skewness solved exactly, and stops either at a root or at the data
point where the profiled location equation jumps from positive to negative.
The latter is reported with ``kink=True``.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from .exceptions import DegenerateSampleError, InvalidParamsError
from .loss import HuberParams, LossParams, psi_esh, rho_esh, sign, weight_esh

EPS_MARGIN = 1e-6
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit_univariate` and the regression fit.

    ``loss.eps`` is not used as a fixed value: the loss skewness follows the
    current estimate. ``fix_eps`` pins the skewness instead of estimating it.
    """

    loss: LossParams
    tol: float = 1e-8
    max_iter: int = 500
    init: Optional[Tuple[float, float, float]] = None
    fix_eps: Optional[float] = None
    record_history: bool = False
    eps_update: str = "root"
    cycle_check: int = 25

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParamsError("tol must be positive")
        if self.max_iter < 1:
            raise InvalidParamsError("max_iter must be at least 1")
        if self.fix_eps is not None and not -1 < self.fix_eps < 1:
            raise InvalidParamsError("fix_eps must lie in (-1, 1)")
        if self.cycle_check < 1:
            raise InvalidParamsError("cycle_check must be at least 1")
        if self.eps_update not in ("root", "closed-form"):
            raise InvalidParamsError(f"unknown eps_update {self.eps_update!r}")


@dataclass
class UnivariateFit:
    theta: float
    sigma: float
    eps: float
    iterations: int
    converged: bool
    final_step_norm: float
    weights: np.ndarray
    objective: float
    eps_clamped: bool = False
    descent_violations: int = 0
    kink: bool = False
    history: list = field(default_factory=list)

    @property
    def params(self):
        return np.array([self.theta, self.sigma, self.eps])


def mad(x):
    """Unscaled median absolute deviation ``median(|x - median(x)|)``."""
    x = np.asarray(x, dtype=float)
    return float(np.median(np.abs(x - np.median(x))))


def _initial_scale(x):
    s = mad(x)
    if s <= 0:
        # more than half the sample is tied at the median
        s = float(np.mean(np.abs(x - np.median(x))))
    return s


def _as_sample(data, min_distinct=3):
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise DegenerateSampleError("empty sample")
    if not np.all(np.isfinite(x)):
        raise DegenerateSampleError("sample contains non-finite values")
    if np.unique(x).size < min_distinct:
        raise DegenerateSampleError(
            f"need at least {min_distinct} distinct values, got {np.unique(x).size}"
        )
    return x


def _check_point(sigma, eps):
    if not sigma > 0:
        raise InvalidParamsError("sigma must be positive")
    if not -1 < eps < 1:
        raise InvalidParamsError("eps must lie in (-1, 1)")


def objective_q(data, theta, sigma, eps, p: LossParams):
    """Objective ``sum rho(u_i) + n log(sigma) + sum log(1 - s_i eps)``.

    ``u_i = (x_i - theta) / (sigma (1 - s_i eps))`` with ``s_i = sign(x_i - theta)``.
    The loss uses ``p`` as given; pass ``p.with_eps(eps)`` for the tied objective.
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise DegenerateSampleError("empty sample")
    _check_point(sigma, eps)
    r = x - theta
    q = 1.0 - sign(r) * eps
    u = r / (sigma * q)
    return float(np.sum(rho_esh(u, p)) + x.size * np.log(sigma) + np.sum(np.log(q)))


def estimating_equations(data, theta, sigma, eps, p: LossParams):
    """Partial derivatives of :func:`objective_q` in ``(theta, sigma, eps)``.

    The loss parameters ``p`` are held fixed, so the skewness derivative only
    acts through the standardisation and the log term.
    """
    x = np.asarray(data, dtype=float).ravel()
    _check_point(sigma, eps)
    r = x - theta
    s = sign(r)
    q = 1.0 - s * eps
    u = r / (sigma * q)
    psi = weight_esh(u, p) * u
    d_theta = -np.sum(psi / (sigma * q))
    d_sigma = -np.sum(psi * u) / sigma + x.size / sigma
    d_eps = np.sum(psi * u * s / q) - np.sum(s / q)
    return np.array([d_theta, d_sigma, d_eps])


def eps_equation(r, sigma, eps, loss: LossParams):
    """Skewness estimating equation at residuals ``r`` with the loss skewness tied to ``eps``."""
    s = sign(r)
    q = 1.0 - s * eps
    u = r / (sigma * q)
    psi = weight_esh(u, loss.with_eps(eps)) * u
    return float(np.sum(psi * u * s / q) - np.sum(s / q))


def solve_eps(r, sigma, loss: LossParams):
    """Root of :func:`eps_equation` in ``eps`` for fixed residuals and scale.

    Returns ``(eps, clamped)``. When the equation keeps one sign over the whole
    admissible interval the nearest bound is returned and flagged.
    """
    lo, hi = -1.0 + EPS_MARGIN, 1.0 - EPS_MARGIN
    f_lo = eps_equation(r, sigma, lo, loss)
    f_hi = eps_equation(r, sigma, hi, loss)
    if f_lo > 0 and f_hi > 0:
        return lo, True
    if f_lo < 0 and f_hi < 0:
        return hi, True
    root = optimize.brentq(lambda e: eps_equation(r, sigma, e, loss), lo, hi, xtol=1e-14)
    return float(root), False


def _clamp_eps(e):
    lo, hi = -1.0 + EPS_MARGIN, 1.0 - EPS_MARGIN
    if e < lo:
        return lo, True
    if e > hi:
        return hi, True
    return e, False


@dataclass
class _Profile:
    sigma: float
    eps: float
    g: float


def _profile(x, theta, sigma, eps, loss: LossParams):
    """Solve the scale and skewness equations at fixed ``theta``.

    Returns the solution together with ``g = -dQ/dtheta``, or None when the
    solver fails. Signs of the residuals are frozen, so the system is smooth.
    """
    r = x - theta
    s = sign(r)
    if np.all(s == s[0]):
        return _profile_one_sided(r, s, sigma, eps, loss)

    def eqs(v):
        sg, e = np.exp(v[0]), np.tanh(v[1])
        q = 1.0 - s * e
        u = r / (sg * q)
        psi = psi_esh(u, loss.with_eps(e))
        # skewness equation scaled by mean(1/q), which blows up as |eps| -> 1
        d_eps = (np.mean(psi * u * s / q) - np.mean(s / q)) / np.mean(1.0 / q)
        return [np.mean(psi * u) - 1.0, d_eps]

    e0 = np.clip(eps, -1.0 + 1e-3, 1.0 - 1e-3)
    sol = optimize.root(eqs, [np.log(sigma), np.arctanh(e0)], method="hybr", options={"xtol": 1e-14})
    if not np.all(np.isfinite(sol.x)) or np.max(np.abs(eqs(sol.x))) > 1e-11:
        return None
    sg, e = float(np.exp(sol.x[0])), float(np.tanh(sol.x[1]))
    if not abs(e) < 1.0 - EPS_MARGIN:
        return None
    q = 1.0 - s * e
    g = float(np.sum(psi_esh(r / (sg * q), loss.with_eps(e)) / (sg * q)))
    return _Profile(sg, e, g)


def _profile_one_sided(r, s, sigma, eps, loss):
    # With every residual on one side the skewness equation is a multiple of
    # the scale equation, so only sigma (1 - s eps) is identified: keep eps.
    e = float(np.clip(eps, -1.0 + EPS_MARGIN, 1.0 - EPS_MARGIN))
    pl = loss.with_eps(e)
    q = 1.0 - s * e

    def f(ls):
        u = r / (np.exp(ls) * q)
        return np.mean(psi_esh(u, pl) * u) - 1.0

    lo, hi = np.log(sigma) - 1.0, np.log(sigma) + 1.0
    for _ in range(60):
        if f(lo) > 0 > f(hi):
            break
        lo, hi = lo - 1.0, hi + 1.0
    else:
        return None
    sg = float(np.exp(optimize.brentq(f, lo, hi, xtol=1e-15)))
    g = float(np.sum(psi_esh(r / (sg * q), pl) / (sg * q)))
    return _Profile(sg, e, g)


def _refine(x, theta, sigma, eps, loss, budget):
    """Walk the profiled location equation across data points.

    Returns ``(theta, profile, kink, evaluations)`` or None.
    """
    xs = np.unique(x)
    state = {"s": sigma, "e": eps, "n": 0}

    def prof(t):
        state["n"] += 1
        out = _profile(x, t, state["s"], state["e"], loss)
        if out is not None:
            state["s"], state["e"] = out.sigma, out.eps
        return out

    def root_between(a, b):
        def g(t):
            out = prof(t)
            if out is None:
                raise _ProfileFailure
            return out.g

        try:
            t = optimize.brentq(g, a, b, xtol=1e-15)
        except _ProfileFailure:
            return None
        out = prof(t)
        return None if out is None else (t, out, False, state["n"])

    cur = prof(theta)
    if cur is None:
        # no profile at the sweep location; restart from the adjacent data points
        i = np.searchsorted(xs, theta)
        for t in xs[max(i - 1, 0):i + 1]:
            cur = prof(float(t))
            if cur is not None:
                theta = float(t)
                break
        else:
            return None
    while state["n"] < budget:
        if cur.g == 0.0:
            return theta, cur, False, state["n"]
        if cur.g > 0:
            if theta in xs:
                # on a data point: the jump here may already straddle zero
                after = prof(np.nextafter(theta, np.inf))
                if after is None or after.g < 0:
                    return theta, prof(theta), True, state["n"]
                theta, cur = float(np.nextafter(theta, np.inf)), after
                continue
            i = np.searchsorted(xs, theta, side="right")
            if i >= xs.size:
                return None
            a = float(xs[i])
            left = prof(a)  # sign(0) = +1: the left limit
            if left is None:
                return None
            if left.g <= 0:
                return root_between(theta, a)
            right = prof(np.nextafter(a, np.inf))
            if right is None:
                return None
            if right.g < 0:
                return a, prof(a), True, state["n"]
            theta, cur = float(np.nextafter(a, np.inf)), right
        else:
            i = np.searchsorted(xs, theta, side="left") - 1
            if i < 0:
                return None
            a = float(xs[i])
            right = prof(np.nextafter(a, np.inf))
            # a missing right limit (skewness pushed to the bound) cannot
            # bracket a root, so go on to the jump at a
            if right is not None and right.g >= 0:
                return root_between(float(np.nextafter(a, np.inf)), theta)
            left = prof(a)
            if left is None:
                # no profile on either side of a, so a is not a solution either
                theta, cur = a, _Profile(state["s"], state["e"], -np.inf)
                continue
            if left.g > 0:
                return a, left, True, state["n"]
            theta, cur = a, left
    return None


class _ProfileFailure(Exception):
    pass


def fit_univariate(data, cfg: FitConfig) -> UnivariateFit:
    """Estimate ``(theta, sigma, eps)`` by iterative reweighting.

    Parameters
    ----------
    data : array_like
        One-dimensional sample with at least three distinct values.
    cfg : FitConfig
        Tuning constants, convergence threshold and optional start point.
        The default start is ``(median, MAD, 0)``.

    Returns
    -------
    UnivariateFit
        ``converged`` is False when ``max_iter`` sweeps did not bring the
        parameter step norm below ``cfg.tol``. After ``cfg.cycle_check``
        unconverged sweeps the location search described in the module
        docstring takes over; its evaluations count as iterations.

    Raises
    ------
    DegenerateSampleError
        Fewer than three distinct values, or the scale collapses.
    """
    x = _as_sample(data)
    n = x.size
    spread = float(np.ptp(x))
    if cfg.init is not None:
        theta, sigma, eps = map(float, cfg.init)
    else:
        theta, sigma, eps = float(np.median(x)), _initial_scale(x), 0.0
    if cfg.fix_eps is not None:
        eps = float(cfg.fix_eps)
    _check_point(sigma, eps)

    clamped = False
    violations = 0
    history = []
    q_prev = objective_q(x, theta, sigma, eps, cfg.loss.with_eps(eps))
    step_norm = np.inf
    converged = False
    kink = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        p = cfg.loss.with_eps(eps)
        # weights at (theta_k, sigma_k, eps_k)
        r = x - theta
        q = 1.0 - sign(r) * eps
        w = weight_esh(r / (sigma * q), p)

        a = w / (sigma * q) ** 2
        theta_new = float(np.sum(a * x) / np.sum(a))

        r = x - theta_new
        s = sign(r)
        q = 1.0 - s * eps
        sigma_new = float(np.sqrt(np.sum(w * r**2 / q**2) / n))
        if not sigma_new > SIGMA_FLOOR * max(spread, 1e-300):
            raise DegenerateSampleError("scale estimate collapsed to zero")

        if cfg.fix_eps is not None:
            eps_new = eps
        elif cfg.eps_update == "root":
            eps_new, hit = solve_eps(r, sigma_new, cfg.loss)
            clamped |= hit
        else:
            # weights refreshed at (theta_{k+1}, sigma_{k+1}, eps_k)
            w1 = weight_esh(r / (sigma_new * q), p)
            num = np.sum(s / q**2 - w1 * r**2 * s / (sigma_new**2 * q**3))
            eps_new, hit = _clamp_eps(float(num / np.sum(1.0 / q**2)))
            clamped |= hit

        step = np.array([theta_new - theta, sigma_new - sigma, eps_new - eps])
        step_norm = float(np.linalg.norm(step))
        if not np.isfinite(step_norm):
            raise DegenerateSampleError("iteration produced non-finite values")
        theta, sigma, eps = theta_new, sigma_new, eps_new

        q_new = objective_q(x, theta, sigma, eps, cfg.loss.with_eps(eps))
        if q_new > q_prev + 1e-9:
            violations += 1
        q_prev = q_new
        if cfg.record_history:
            history.append((theta, sigma, eps))
        if step_norm < cfg.tol:
            converged = True
            break
        if cfg.fix_eps is None and it == cfg.cycle_check:
            ref = _refine(x, theta, sigma, eps, cfg.loss, cfg.max_iter - it)
            if ref is not None:
                t_new, prof, kink, evals = ref
                it += evals
                # the final bracket is a single floating-point gap
                step_norm = float(np.spacing(abs(t_new)))
                theta, sigma, eps = float(t_new), prof.sigma, prof.eps
                converged = True
                if cfg.record_history:
                    history.append((theta, sigma, eps))
                break

    p = cfg.loss.with_eps(eps)
    r = x - theta
    u = r / (sigma * (1.0 - sign(r) * eps))
    return UnivariateFit(
        theta=theta,
        sigma=sigma,
        eps=eps,
        iterations=it,
        converged=converged,
        final_step_norm=step_norm,
        weights=np.asarray(weight_esh(u, p)),
        objective=objective_q(x, theta, sigma, eps, p),
        eps_clamped=clamped,
        descent_violations=violations,
        kink=kink,
        history=history,
    )


def fit_huber_location_scale(data, h: HuberParams, tol=1e-8, max_iter=500):
    """Symmetric Huber M-estimates of location and scale.

    Runs the same sweeps with ``c1 = -k``, ``c2 = k`` and skewness pinned at 0.
    Returns ``(theta, sigma)``.
    """
    cfg = FitConfig(LossParams(-h.k, h.k, 0.0), tol=tol, max_iter=max_iter, fix_eps=0.0)
    fit = fit_univariate(data, cfg)
    return fit.theta, fit.sigma
