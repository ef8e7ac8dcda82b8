"""ESH M-estimation for the linear model ``y = X b + u``.

The sweep mirrors the univariate fit with the weighted mean replaced by a
weighted least-squares solve: coefficients, then scale, then skewness. As in
the univariate case the skewness equation jumps whenever a residual changes
sign, so sweeps that have not settled after ``cfg.cycle_check`` iterations
hand over to a search over the skewness with coefficients and scale solved
exactly. It ends at a root or at a jump of the skewness equation
(``kink=True``); the coefficient and scale equations hold in both cases.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from scipy import optimize

from ._profile import BRACKET_XTOL, solve_fixed_eps, solve_profiled
from .distributions import FAMILIES, SkewFamilyParams, contaminated_esn, log_density, sample_mixture
from .exceptions import (DegenerateResidualError, InvalidParamsError, NumericalError,
                         RankDeficiencyError)
from .loss import HuberParams, LossParams, psi_esh, rho_esh, sign, weight_esh
from .univariate import SIGMA_FLOOR, FitConfig, mad, solve_eps

TRUE_B = np.array([3.0, 5.0, 1.0, -4.0, 2.0, -2.0])
COND_LIMIT = 1e12


@dataclass(frozen=True)
class RegressionData:
    """Response ``y`` (length n) and design ``X`` (n x p) with n > p and full column rank."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.size:
            raise InvalidParamsError(f"X has {X.shape[0]} rows but y has {y.size} values")
        if not y.size > X.shape[1]:
            raise InvalidParamsError("need more observations than coefficients")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise InvalidParamsError("data contain non-finite values")
        if np.linalg.cond(X) > COND_LIMIT:
            raise RankDeficiencyError("design matrix is numerically rank deficient")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class RegressionFit:
    b: np.ndarray
    sigma: float
    eps: float
    iterations: int
    converged: bool
    final_step_norm: float
    weights: np.ndarray
    objective: float
    eps_clamped: bool = False
    kink: bool = False
    history: list = field(default_factory=list)


def objective_q_reg(d: RegressionData, b, sigma, eps, p: LossParams):
    """Regression objective; ``p`` is used as given (pass ``p.with_eps(eps)`` to tie it)."""
    r = d.y - d.X @ np.asarray(b, dtype=float)
    q = 1.0 - sign(r) * eps
    return float(np.sum(rho_esh(r / (sigma * q), p)) + d.n * np.log(sigma) + np.sum(np.log(q)))


def grad_b(d: RegressionData, b, sigma, eps, p: LossParams):
    """``dQ/db = -sum psi(u_i) x_i / (sigma q_i)`` with the loss held at ``p``."""
    r = d.y - d.X @ np.asarray(b, dtype=float)
    q = 1.0 - sign(r) * eps
    psi = psi_esh(r / (sigma * q), p)
    return -d.X.T @ (psi / (sigma * q))


def estimating_equations_reg(d: RegressionData, b, sigma, eps, p: LossParams):
    """``(dQ/db, dQ/dsigma, dQ/deps)`` concatenated, loss held at ``p``."""
    r = d.y - d.X @ np.asarray(b, dtype=float)
    s = sign(r)
    q = 1.0 - s * eps
    u = r / (sigma * q)
    psi = psi_esh(u, p)
    d_b = -d.X.T @ (psi / (sigma * q))
    d_sigma = -np.sum(psi * u) / sigma + d.n / sigma
    d_eps = np.sum(psi * u * s / q) - np.sum(s / q)
    return np.concatenate([d_b, [d_sigma, d_eps]])


def _wls(X, y, a):
    # rank-revealing least squares on the row-scaled system
    sa = np.sqrt(a)
    A = X * sa[:, None]
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 0 or (sv[0] / sv[-1]) ** 2 > COND_LIMIT:
        raise RankDeficiencyError("weighted cross-product matrix is numerically singular")
    return np.linalg.lstsq(A, y * sa, rcond=None)[0]


def fit_regression(d: RegressionData, cfg: FitConfig) -> RegressionFit:
    """Estimate ``(b, sigma, eps)`` by iteratively reweighted least squares.

    Starts from ``b = 0``, ``sigma = MAD(y)``, ``eps = 0`` unless ``cfg.init``
    gives ``(b0, sigma0, eps0)``. ``cfg.fix_eps`` pins the skewness.

    Raises
    ------
    DegenerateResidualError
        All residuals vanish (exact fit) or the scale collapses.
    RankDeficiencyError
        The weighted design is numerically singular.
    """
    X, y, n = d.X, d.y, d.n
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    yscale = max(float(np.max(np.abs(y))), 1e-300)
    if np.max(np.abs(y - X @ ols)) <= 1e-12 * yscale:
        raise DegenerateResidualError("all residuals vanish: the data are an exact fit")
    if cfg.init is not None:
        b = np.asarray(cfg.init[0], dtype=float).copy()
        sigma, eps = float(cfg.init[1]), float(cfg.init[2])
        if b.shape != (d.p,):
            raise InvalidParamsError(f"initial b must have length {d.p}")
    else:
        b = np.zeros(d.p)
        sigma = mad(y) or float(np.mean(np.abs(y - np.median(y))))
        eps = 0.0
    if cfg.fix_eps is not None:
        eps = float(cfg.fix_eps)
    if not sigma > 0:
        raise DegenerateResidualError("initial scale is zero")

    clamped = False
    history = []
    step_norm = np.inf
    converged = False
    kink = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        p = cfg.loss.with_eps(eps)
        r = y - X @ b
        q = 1.0 - sign(r) * eps
        w = weight_esh(r / (sigma * q), p)
        b_new = _wls(X, y, w / (sigma * q) ** 2)

        r = y - X @ b_new
        q = 1.0 - sign(r) * eps
        sigma_new = float(np.sqrt(np.sum(w * r**2 / q**2) / n))
        if not sigma_new > SIGMA_FLOOR * yscale:
            raise DegenerateResidualError("scale estimate collapsed to zero")

        if cfg.fix_eps is None:
            eps_new, hit = solve_eps(r, sigma_new, cfg.loss)
            clamped |= hit
        else:
            eps_new = eps

        step = np.concatenate([b_new - b, [sigma_new - sigma, eps_new - eps]])
        step_norm = float(np.linalg.norm(step))
        b, sigma, eps = b_new, sigma_new, eps_new
        if cfg.record_history:
            history.append((b.copy(), sigma, eps))
        if step_norm < cfg.tol:
            converged = True
            break
        if cfg.fix_eps is None and it == cfg.cycle_check:
            sol = solve_profiled(y, X, b, sigma, eps, cfg.loss, cfg.max_iter - it)
            if sol is not None:
                it += sol.evaluations
                b, sigma, eps, kink = sol.b, sol.sigma, sol.eps, sol.kink
                # width of the final skewness bracket
                step_norm = BRACKET_XTOL
                converged = True
                if cfg.record_history:
                    history.append((b.copy(), sigma, eps))
                break

    p = cfg.loss.with_eps(eps)
    r = y - X @ b
    u = r / (sigma * (1.0 - sign(r) * eps))
    return RegressionFit(
        b=b,
        sigma=sigma,
        eps=eps,
        iterations=it,
        converged=converged,
        final_step_norm=step_norm,
        weights=np.asarray(weight_esh(u, p)),
        objective=objective_q_reg(d, b, sigma, eps, p),
        eps_clamped=clamped,
        kink=kink,
        history=history,
    )


def generate_regression_sample(n, eps0, seed=None, u_hook=None) -> RegressionData:
    """Design ``[1, z1..z5]`` with standard normal ``z`` and mixture errors.

    ``y = X (3, 5, 1, -4, 2, -2) + u`` where ``u`` follows the contaminated
    skew-normal mixture with skewness ``eps0``. ``u_hook``, when given, maps
    the drawn errors to replacements (a test hook).
    """
    if n < 10:
        raise InvalidParamsError("n must be at least 10")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 5))])
    u = sample_mixture(contaminated_esn(eps0), n, rng)
    if u_hook is not None:
        u = np.asarray(u_hook(u), dtype=float)
    return RegressionData(X @ TRUE_B + u, X)


def fit_huber_regression(d: RegressionData, h: HuberParams):
    """Symmetric Huber regression with joint scale: the ESH equations at ``eps = 0``, ``c = -+k``.

    Returns ``(b, sigma)``.
    """
    b0 = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    r = d.y - d.X @ b0
    s0 = mad(r) or float(np.mean(np.abs(r)))
    if not s0 > 0:
        raise DegenerateResidualError("all residuals vanish: the data are an exact fit")
    out = solve_fixed_eps(d.y, d.X, b0, s0, 0.0, LossParams(-h.k, h.k))
    if out is None:
        raise NumericalError("Huber regression did not converge")
    return out


@dataclass
class RegressionMLFit:
    b: np.ndarray
    sigma: float
    eps: float
    logL: float
    converged: bool


def _esn_fixed_eps(X, y, eps, b):
    # ESN likelihood for fixed eps: least squares with weights 1/q^2, q from residual signs
    for _ in range(100):
        q = 1.0 - sign(y - X @ b) * eps
        b_new = _wls(X, y, 1.0 / q**2)
        if np.array_equal(sign(y - X @ b_new), sign(y - X @ b)):
            b = b_new
            break
        b = b_new
    r = y - X @ b
    q = 1.0 - sign(r) * eps
    sigma = float(np.sqrt(np.mean(r**2 / q**2)))
    return b, sigma


def _reg_loglik(y, X, b, sigma, eps, family, nu):
    p = SkewFamilyParams(family, 0.0, sigma, eps, nu)
    return float(np.sum(log_density(y - X @ b, p)))


def fit_regression_ml(d: RegressionData, family="ESN", nu_fixed=None) -> RegressionMLFit:
    """Maximum likelihood for ``(b, sigma, eps)`` with epsilon-skew errors.

    ESN profiles ``b`` and ``sigma`` out exactly for each skewness and scans
    the profile likelihood (coarse grid, then bounded Brent). ESL and ESt use
    Nelder-Mead over ``(b, log sigma, atanh eps)`` started at the ESN fit.
    """
    if family not in FAMILIES:
        raise InvalidParamsError(f"unknown family {family!r}")
    if family == "ESt" and nu_fixed is None:
        raise InvalidParamsError("ESt requires nu_fixed")
    X, y, n = d.X, d.y, d.n
    b_ols = np.linalg.lstsq(X, y, rcond=None)[0]
    if np.max(np.abs(y - X @ b_ols)) <= 1e-12 * max(float(np.max(np.abs(y))), 1e-300):
        raise DegenerateResidualError("all residuals vanish: the data are an exact fit")

    def prof(e):
        b, s = _esn_fixed_eps(X, y, e, b_ols)
        return n * np.log(s), b, s

    grid = np.linspace(-0.95, 0.95, 20)
    vals = [prof(e)[0] for e in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda e: prof(e)[0], bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    eps = float(res.x)
    _, b, s = prof(eps)
    converged = bool(res.success)
    if family != "ESN":
        k = d.p

        def negll(v):
            val = _reg_loglik(y, X, v[:k], np.exp(v[k]), np.tanh(v[k + 1]), family, nu_fixed)
            return -val if np.isfinite(val) else np.inf

        v0 = np.concatenate([b, [np.log(s), np.arctanh(np.clip(eps, -0.99, 0.99))]])
        out = optimize.minimize(negll, v0, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 20000,
                                         "maxfev": 20000, "adaptive": True})
        b, s, eps = out.x[:k], float(np.exp(out.x[k])), float(np.tanh(out.x[k + 1]))
        converged = bool(out.success)
    logL = _reg_loglik(y, X, b, s, eps, family, nu_fixed)
    return RegressionMLFit(np.asarray(b), s, eps, logL, converged)
