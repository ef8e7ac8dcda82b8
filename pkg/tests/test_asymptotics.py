import numpy as np
import pytest
from scipy import integrate

from eshuber.asymptotics import (asymptotic_cov, asymptotic_report, expected_rho, expected_scores, ges,
                                 influence_function, influence_theta_known_nuisance, matrix_a,
                                 matrix_b, score_vector, uniqueness_minors, variance_table)
from eshuber.distributions import SkewFamilyParams, sample
from eshuber.exceptions import InvalidParamsError
from eshuber.loss import LossParams, rho_esh
from eshuber.univariate import FitConfig, fit_univariate


# Independent per-branch derivatives of rho((x - theta) / (sigma q)) at theta = 0, sigma = 1.
def _branch(x, c1, c2, e):
    if x < c1 * (1 + e):
        return "lt"
    if x < 0:
        return "li"
    return "ri" if x <= c2 * (1 - e) else "rt"


def _scores(x, c1, c2, e):
    p, q = 1 + e, 1 - e
    b = _branch(x, c1, c2, e)
    if b == "ri":
        return np.array([-x / q**4, -x * x / q**4, 2 * x * x / q**5])
    if b == "rt":
        return np.array([-c2 / q**3, -c2 * x / q**3, 3 * c2 * x / q**4 - c2**2 / q**3])
    if b == "li":
        return np.array([-x / p**4, -x * x / p**4, -2 * x * x / p**5])
    return np.array([-c1 / p**3, -c1 * x / p**3, -3 * c1 * x / p**4 + c1**2 / p**3])


def _hess(x, c1, c2, e):
    p, q = 1 + e, 1 - e
    b = _branch(x, c1, c2, e)
    if b == "ri":
        H = [[1 / q**4, 2 * x / q**4, -4 * x / q**5], [0, 3 * x * x / q**4, -4 * x * x / q**5],
             [0, 0, 10 * x * x / q**6]]
    elif b == "rt":
        H = [[0, c2 / q**3, -3 * c2 / q**4], [0, 2 * c2 * x / q**3, -3 * c2 * x / q**4],
             [0, 0, 12 * c2 * x / q**5 - 3 * c2**2 / q**4]]
    elif b == "li":
        H = [[1 / p**4, 2 * x / p**4, 4 * x / p**5], [0, 3 * x * x / p**4, 4 * x * x / p**5],
             [0, 0, 10 * x * x / p**6]]
    else:
        H = [[0, c1 / p**3, 3 * c1 / p**4], [0, 2 * c1 * x / p**3, 3 * c1 * x / p**4],
             [0, 0, 12 * c1 * x / p**5 - 3 * c1**2 / p**4]]
    H = np.array(H, float)
    return np.triu(H) + np.triu(H, 1).T


def _dens(x, e):
    q = 1 - e if x >= 0 else 1 + e
    return np.exp(-x * x / (2 * q * q)) / np.sqrt(2 * np.pi)


def quad_oracle(c1, c2, e):
    knots = [c1 * (1 + e), 0.0, c2 * (1 - e)]
    segs = [(-np.inf, knots[0]), (knots[0], 0.0), (0.0, knots[2]), (knots[2], np.inf)]

    def E(f):
        return sum(integrate.quad(lambda x: f(x) * _dens(x, e), a, b, epsabs=1e-14, epsrel=1e-12,
                                  limit=200)[0] for a, b in segs)

    A, B, m = np.zeros((3, 3)), np.zeros((3, 3)), np.zeros(3)
    for i in range(3):
        m[i] = E(lambda x: _scores(x, c1, c2, e)[i])
        for j in range(i, 3):
            A[i, j] = A[j, i] = E(lambda x: _scores(x, c1, c2, e)[i] * _scores(x, c1, c2, e)[j])
            B[i, j] = B[j, i] = E(lambda x: _hess(x, c1, c2, e)[i, j])
    return A, B, m


def random_params(k, seed):
    rng = np.random.default_rng(seed)
    return [LossParams(-rng.uniform(0.05, 3), rng.uniform(0.3, 7), rng.uniform(-0.85, 0.85))
            for _ in range(k)]


@pytest.mark.parametrize("p", random_params(20, 17))
def test_closed_forms_match_quadrature(p):
    A, B, m = quad_oracle(p.c1, p.c2, p.eps)
    np.testing.assert_allclose(matrix_a(p), A, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(matrix_b(p), B, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(expected_scores(p), m, rtol=1e-7, atol=1e-9)


def test_expected_rho_matches_quadrature():
    p = LossParams(-1.1, 3.7, -0.2)
    f = lambda x: rho_esh(x / (1 - np.sign(x) * p.eps if x != 0 else 1 - p.eps), p) * _dens(x, p.eps)  # noqa: E731
    val = sum(integrate.quad(f, a, b, epsabs=1e-14)[0] for a, b in
              [(-np.inf, -1.32), (-1.32, 0), (0, 4.44), (4.44, np.inf)])
    assert expected_rho(p) == pytest.approx(val, rel=1e-9)


def test_scores_against_sample_means():
    p = LossParams(-0.7, 5.0, -0.5)
    x = sample(SkewFamilyParams("ESN", 0, 1, -0.5), 4 * 10**5, seed=3)
    psi = score_vector(x, p)
    se = psi.std(axis=1) / np.sqrt(x.size)
    assert np.all(np.abs(psi.mean(axis=1) - expected_scores(p)) < 5 * se)


def test_sigma_scaling():
    p = LossParams(-0.7, 5.0, -0.5)
    A1, A2 = matrix_a(p), matrix_a(p, 2.0)
    powers = np.array([1, 1, 0])
    np.testing.assert_allclose(A2, A1 / 2.0 ** (powers[:, None] + powers[None, :]), rtol=1e-13)
    with pytest.raises(InvalidParamsError):
        matrix_a(p, 0.0)


def test_psd_and_symmetric():
    for p in random_params(10, 5):
        for M in (matrix_a(p), asymptotic_cov(p)):
            np.testing.assert_allclose(M, M.T, atol=1e-12 * np.max(np.abs(M)))
            assert np.min(np.linalg.eigvalsh(M)) > -1e-10 * np.max(np.abs(M))


def test_symmetric_case_zeros():
    p = LossParams(-1.5, 1.5, 0.0)
    A, B = matrix_a(p), matrix_b(p)
    for M in (A, B):
        assert abs(M[0, 1]) < 1e-14 and abs(M[1, 2]) < 1e-14


def test_variance_table_scales_as_one_over_n():
    p = LossParams(-1.1, 3.7, -0.2)
    t = variance_table(p, n_list=(30, 60, 300))
    np.testing.assert_allclose(t[1, 1:] * 2, t[0, 1:], rtol=1e-14)
    np.testing.assert_allclose(t[2, 1:] * 10, t[0, 1:], rtol=1e-14)
    np.testing.assert_allclose(t[0, 1:], np.diag(asymptotic_cov(p)) / 30, rtol=1e-14)
    with pytest.raises(InvalidParamsError):
        variance_table(p, method="bootstrap")
    with pytest.raises(InvalidParamsError):
        variance_table(p, n_list=())


def test_reference_table_values():
    t = variance_table(LossParams(-1.1, 3.7, -0.2), n_list=(30,), method="reference")
    np.testing.assert_allclose(t[0, 1:], [0.190253, 0.018747, 0.021061], rtol=5e-3)


def test_minors_and_report():
    p = LossParams(-1.1, 3.7, -0.2)
    B = matrix_b(p)
    k1, k2, k3 = uniqueness_minors(p)
    assert k1 == pytest.approx(B[0, 0])
    assert k3 == pytest.approx(np.linalg.det(B))
    rep = asymptotic_report(p)
    np.testing.assert_allclose(rep.cov, asymptotic_cov(p))
    xs = np.array([-3.0, 0.5, 8.0])
    np.testing.assert_allclose(rep.ges(xs), ges(xs, p))


def test_influence_function_identity():
    p = LossParams(-0.7, 5.0, -0.5)
    x = np.linspace(-10, 10, 41)
    IF = influence_function(x, p)
    np.testing.assert_allclose(-matrix_b(p) @ IF, score_vector(x, p), atol=1e-12)


def test_gross_error_sensitivity_grows():
    p = LossParams(-1.1, 3.7, -0.2)
    g = ges(np.array([10.0, 100.0, 1000.0]), p)
    assert g[0] < g[1] < g[2]
    assert g[2] > 50 * g[0]


def test_location_influence_bounded():
    p = LossParams(-1.1, 3.7, -0.2)
    x = np.array([-1e8, -1e3, -10.0, 0.3, 10.0, 1e3, 1e8])
    v = influence_theta_known_nuisance(x, p)
    B11 = matrix_b(p)[0, 0]
    bound = max(abs(p.c1) / (1 + p.eps) ** 3, p.c2 / (1 - p.eps) ** 3) / B11
    assert np.all(np.abs(v) <= bound * (1 + 1e-12))
    assert v[0] == pytest.approx(v[1]) and v[-1] == pytest.approx(v[-2])


@pytest.mark.xfail(reason="expected scores are nonzero under the model, so the sandwich does "
                          "not describe the tied estimator; see the decisions ledger", strict=True)
def test_sandwich_matches_simulation():
    p = LossParams(-1.1, 3.7, -0.2)
    n, reps = 100, 200
    th = [fit_univariate(sample(SkewFamilyParams("ESN", 0, 1, -0.2), n, seed=s), FitConfig(p)).theta
          for s in range(reps)]
    assert n * np.var(th) == pytest.approx(asymptotic_cov(p)[0, 0], rel=0.25)


def test_minors_nonzero_for_tabulated_tuning():
    from eshuber.montecarlo import DEFAULT_TUNING
    for table in DEFAULT_TUNING.values():
        for eps0, (c1, c2) in table.items():
            assert all(abs(k) > 1e-8 for k in uniqueness_minors(LossParams(c1, c2, eps0)))
