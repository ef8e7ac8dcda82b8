import numpy as np
import pytest
from scipy import optimize

from eshuber._profile import eps_residual
from eshuber.exceptions import DegenerateResidualError, InvalidParamsError, RankDeficiencyError
from eshuber.loss import HuberParams, LossParams
from eshuber.regression import (TRUE_B, RegressionData, estimating_equations_reg, fit_huber_regression,
                                fit_regression, fit_regression_ml, generate_regression_sample, grad_b,
                                objective_q_reg)
from eshuber.univariate import FitConfig

LOSS = LossParams(-1.1, 5.2)


def test_data_validation():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    with pytest.raises(InvalidParamsError):
        RegressionData(np.ones(4), X)
    with pytest.raises(InvalidParamsError):
        RegressionData(np.ones(2), X[:2])
    with pytest.raises(RankDeficiencyError):
        RegressionData(np.arange(5.0), np.column_stack([X, 2 * X[:, 1]]))
    with pytest.raises(InvalidParamsError):
        RegressionData(np.array([1, 2, np.inf, 4, 5.0]), X)
    assert RegressionData(np.arange(5.0), np.arange(5.0) ** 2).X.shape == (5, 1)


def test_ols_reduction():
    d = generate_regression_sample(120, -0.5, seed=3)
    wide = LossParams(-1e6, 1e6)
    f = fit_regression(d, FitConfig(wide, fix_eps=0.0, tol=1e-12))
    ols = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    np.testing.assert_allclose(f.b, ols, atol=1e-8)
    r = d.y - d.X @ ols
    assert f.sigma == pytest.approx(np.sqrt(np.mean(r**2)), rel=1e-8)


def test_exact_fit_raises():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    with pytest.raises(DegenerateResidualError):
        fit_regression(RegressionData(X @ [1.0, 2.0], X), FitConfig(LOSS))
    with pytest.raises(DegenerateResidualError):
        fit_regression_ml(RegressionData(X @ [1.0, 2.0], X))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = generate_regression_sample(40, rng.uniform(-0.8, 0.8), seed=rng)
        p = LossParams(-rng.uniform(0.2, 3), rng.uniform(0.2, 6), rng.uniform(-0.8, 0.8))
        b = TRUE_B + rng.normal(0, 0.3, 6)
        sigma, eps = rng.uniform(0.5, 2), rng.uniform(-0.7, 0.7)
        h = 1e-6
        fd = []
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            fd.append((objective_q_reg(d, b + e, sigma, eps, p) - objective_q_reg(d, b - e, sigma, eps, p)) / (2 * h))
        np.testing.assert_allclose(grad_b(d, b, sigma, eps, p), fd, rtol=1e-6, atol=1e-6)
        full = estimating_equations_reg(d, b, sigma, eps, p)
        np.testing.assert_allclose(full[:6], fd, rtol=1e-6, atol=1e-6)
        ds = (objective_q_reg(d, b, sigma + h, eps, p) - objective_q_reg(d, b, sigma - h, eps, p)) / (2 * h)
        de = (objective_q_reg(d, b, sigma, eps + h, p) - objective_q_reg(d, b, sigma, eps - h, p)) / (2 * h)
        np.testing.assert_allclose(full[6:], [ds, de], rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_fit_solves_coefficient_and_scale_equations(seed):
    d = generate_regression_sample(200, -0.2, seed=seed)
    cfg = FitConfig(LOSS)
    f = fit_regression(d, cfg)
    assert f.converged
    e = estimating_equations_reg(d, f.b, f.sigma, f.eps, LOSS.with_eps(f.eps)) / d.n
    assert np.max(np.abs(e[:-1])) <= 10 * cfg.tol
    if f.kink:
        # the skewness equation changes sign across a residual sign flip
        lo = eps_residual(d.y, d.X, f.b, f.sigma, f.eps, LOSS)
        assert lo != 0.0
    else:
        assert abs(e[-1]) <= 10 * cfg.tol
    assert np.max(np.abs(f.b - TRUE_B)) < 1.0


def test_fixed_eps_equivariance():
    d = generate_regression_sample(150, -0.5, seed=8)
    g = np.array([1.0, -2.0, 0.5, 0.0, 3.0, -1.0])
    cfg = FitConfig(LOSS, fix_eps=-0.3, tol=1e-12)
    f1 = fit_regression(d, cfg)
    f2 = fit_regression(RegressionData(d.y + d.X @ g, d.X), FitConfig(LOSS, fix_eps=-0.3, tol=1e-12,
                                                                        init=(f1.b + g, f1.sigma, -0.3)))
    np.testing.assert_allclose(f2.b, f1.b + g, atol=1e-7)
    assert f2.sigma == pytest.approx(f1.sigma, rel=1e-7)


def huber_reg_oracle(d, k):
    def f(v):
        z = (d.y - d.X @ v[:-1]) / np.exp(v[-1])
        a = np.abs(z)
        return np.sum(np.where(a <= k, 0.5 * z**2, k * a - 0.5 * k**2)) + d.n * v[-1]

    ols = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    v0 = np.concatenate([ols, [np.log(np.std(d.y - d.X @ ols))]])
    return optimize.minimize(f, v0, method="BFGS", options={"gtol": 1e-10}).x


def test_huber_regression_matches_direct_minimisation():
    d = generate_regression_sample(300, -0.5, seed=1)
    b, s = fit_huber_regression(d, HuberParams(1.4))
    v = huber_reg_oracle(d, 1.4)
    np.testing.assert_allclose(b, v[:-1], atol=1e-5)
    assert s == pytest.approx(np.exp(v[-1]), rel=1e-5)


def test_generator_hook_and_skewness_sign():
    d = generate_regression_sample(50, -0.2, seed=4, u_hook=np.zeros_like)
    np.testing.assert_allclose(d.y, d.X @ TRUE_B)
    d = generate_regression_sample(20000, -0.5, seed=5)
    u = d.y - d.X @ TRUE_B
    assert np.mean(u < 0) == pytest.approx(0.25, abs=0.01)
    with pytest.raises(InvalidParamsError):
        generate_regression_sample(5, 0.0)
    a = generate_regression_sample(30, -0.2, seed=9)
    b = generate_regression_sample(30, -0.2, seed=9)
    np.testing.assert_array_equal(a.y, b.y)


def test_esn_ml_profile_is_optimal():
    d = generate_regression_sample(200, -0.5, seed=6)
    m = fit_regression_ml(d, "ESN")
    from eshuber.regression import _reg_loglik
    assert m.logL >= _reg_loglik(d.y, d.X, TRUE_B, 1.0, -0.5, "ESN", None)
    rng = np.random.default_rng(0)
    for _ in range(20):
        db = rng.normal(0, 0.01, 6)
        assert m.logL >= _reg_loglik(d.y, d.X, m.b + db, m.sigma, m.eps, "ESN", None) - 1e-9


@pytest.mark.parametrize("family,nu", [("ESL", None), ("ESt", 5.0)])
def test_other_ml_families(family, nu):
    d = generate_regression_sample(150, -0.2, seed=2)
    m = fit_regression_ml(d, family, nu_fixed=nu)
    assert m.sigma > 0 and -1 < m.eps < 1
    assert np.max(np.abs(m.b - TRUE_B)) < 1.0


def test_ml_argument_errors():
    d = generate_regression_sample(50, 0.0, seed=0)
    with pytest.raises(InvalidParamsError):
        fit_regression_ml(d, "ESt")
    with pytest.raises(InvalidParamsError):
        fit_regression_ml(d, "Cauchy")


def test_noiseless_generator_recovers_coefficients():
    d = generate_regression_sample(40, -0.5, seed=1, u_hook=np.zeros_like)
    np.testing.assert_allclose(np.linalg.lstsq(d.X, d.y, rcond=None)[0], TRUE_B, atol=1e-10)


def test_generated_errors_right_skewed_for_negative_eps():
    d = generate_regression_sample(20000, -0.8, seed=2)
    u = d.y - d.X @ TRUE_B
    assert np.mean((u - u.mean()) ** 3) > 0
