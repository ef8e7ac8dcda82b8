import math

import numpy as np
import pytest
from scipy import integrate

from eshuber.distributions import (MixtureSpec, SkewFamilyParams, aic_bic, contaminated_esn,
                                   density, esh_log_normalizer, fit_ml, fit_normal, log_density,
                                   loglik, loglik_esh, sample, sample_mixture)
from eshuber.exceptions import DegenerateSampleError, InvalidParamsError
from eshuber.loss import LossParams, rho_esh, rho_esn, rho_esl


def integrate_pieces(f, points):
    pts = sorted(points)
    total = integrate.quad(f, -np.inf, pts[0], epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    total += integrate.quad(f, pts[-1], np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total


def random_family_params(rng, family, k=10):
    out = []
    for _ in range(k):
        nu = rng.uniform(1.5, 20) if family == "ESt" else None
        out.append(SkewFamilyParams(family, rng.uniform(-3, 3), rng.uniform(0.3, 4),
                                    rng.uniform(-0.9, 0.9), nu))
    return out


def test_esn_symmetric_reduction():
    assert log_density(0.0, SkewFamilyParams("ESN")) == pytest.approx(-0.5 * math.log(2 * math.pi))
    x = np.linspace(-4, 4, 17)
    expected = -0.5 * x**2 - 0.5 * math.log(2 * math.pi)
    np.testing.assert_allclose(log_density(x, SkewFamilyParams("ESN")), expected, rtol=1e-14)


@pytest.mark.parametrize("family", ["ESN", "ESL", "ESt"])
def test_normalization_and_mass_split(family):
    rng = np.random.default_rng({"ESN": 1, "ESL": 2, "ESt": 3}[family])
    for p in random_family_params(rng, family):
        f = lambda x: density(x, p)  # noqa: E731
        total = integrate_pieces(f, [p.theta - p.sigma, p.theta, p.theta + p.sigma])
        assert total == pytest.approx(1.0, abs=1e-8)
        left = integrate.quad(f, -np.inf, p.theta, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
        assert left == pytest.approx((1 + p.eps) / 2, abs=1e-8)


def test_empirical_mass_split():
    p = SkewFamilyParams("ESN", 0.5, 2.0, -0.3)
    x = sample(p, 10**6, seed=0)
    assert np.mean(x < p.theta) == pytest.approx(0.35, abs=0.002)


def test_symmetric_sample_mean():
    n = 10**5
    x = sample(SkewFamilyParams("ESN"), n, seed=1)
    assert abs(np.mean(x)) < 4 / math.sqrt(n)


def test_sampling_reproducible():
    p = SkewFamilyParams("ESL", 0, 1, 0.4)
    np.testing.assert_array_equal(sample(p, 50, seed=9), sample(p, 50, seed=9))


def test_degenerate_mixture_matches_primary_stream():
    m = MixtureSpec(1.0, SkewFamilyParams("ESN", 0, 1, -0.2), SkewFamilyParams("ESL", 0, 1, -0.2))
    a = sample_mixture(m, 200, seed=4)
    # the mixture draws its component labels first, then each component in turn
    rng = np.random.default_rng(4)
    rng.random(200)
    b = sample(m.primary, 200, rng)
    np.testing.assert_array_equal(a, b)


def test_invalid_mixture_and_params():
    with pytest.raises(InvalidParamsError):
        MixtureSpec(1.2, SkewFamilyParams("ESN"), SkewFamilyParams("ESL"))
    with pytest.raises(InvalidParamsError):
        SkewFamilyParams("ESt", nu=None)
    with pytest.raises(InvalidParamsError):
        SkewFamilyParams("ESN", sigma=0)
    with pytest.raises(InvalidParamsError):
        SkewFamilyParams("XYZ")


@pytest.mark.parametrize("family,kernel", [("ESN", lambda u, e: rho_esn(u, e)),
                                           ("ESL", lambda u, e: rho_esl(u, e))])
def test_log_density_is_kernel_plus_constant(family, kernel):
    eps = -0.35
    z = np.linspace(-6, 6, 241)
    diff = -log_density(z, SkewFamilyParams(family, 0, 1, eps)) - kernel(z, eps)
    assert np.ptp(diff) < 1e-10


def test_est_approaches_normal():
    x = np.array([-2.0, -0.7, 0.0, 0.4, 1.9])
    a = density(x, SkewFamilyParams("ESt", 0, 1, 0, 1e4))
    b = density(x, SkewFamilyParams("ESN", 0, 1, 0))
    np.testing.assert_allclose(a, b, atol=1e-3)


@pytest.mark.parametrize("p", [SkewFamilyParams("ESN", 0, 1, -0.5), SkewFamilyParams("ESL", 1, 2, 0.3),
                               SkewFamilyParams("ESt", 0, 1, -0.2, 4.0)])
def test_sampler_matches_density_ks(p):
    x = np.sort(sample(p, 10**5, seed=21))
    grid = np.quantile(x, np.linspace(0.005, 0.995, 150))
    cdf, prev, acc = [], -np.inf, 0.0
    for g in grid:
        acc += integrate.quad(lambda t: density(t, p), prev, g, limit=200)[0]
        cdf.append(acc)
        prev = g
    ecdf = np.searchsorted(x, grid, side="right") / x.size
    assert np.max(np.abs(ecdf - np.array(cdf))) < 0.01


def test_fit_ml_recovers_truth():
    x = sample(SkewFamilyParams("ESN", 0, 1, -0.5), 10**5, seed=5)
    m = fit_ml(x, "ESN")
    assert m.params.theta == pytest.approx(0, abs=0.03)
    assert m.params.sigma == pytest.approx(1, abs=0.03)
    assert m.params.eps == pytest.approx(-0.5, abs=0.03)


@pytest.mark.parametrize("family", ["ESN", "ESL", "ESt"])
def test_fit_ml_beats_truth(family):
    x = sample_mixture(contaminated_esn(-0.3), 150, seed=8)
    m = fit_ml(x, family, nu_fixed=5.0 if family == "ESt" else None)
    truth = SkewFamilyParams(family, 0, 1, -0.3, 5.0 if family == "ESt" else None)
    assert m.logL >= loglik(x, truth)
    assert m.logL == pytest.approx(loglik(x, m.params))


def test_esn_ml_biased_under_contamination():
    # small contaminated samples: the scale inflates and the skewness overshoots
    sg, ep = [], []
    for s in range(200):
        m = fit_ml(sample_mixture(contaminated_esn(-0.2), 30, seed=1000 + s), "ESN", n_starts=2)
        sg.append(m.params.sigma)
        ep.append(m.params.eps)
    assert np.mean(sg) > 1.0
    assert np.mean(ep) < -0.2


def test_fit_ml_errors():
    with pytest.raises(DegenerateSampleError):
        fit_ml([1.0, 1.0, 2.0], "ESN")
    with pytest.raises(InvalidParamsError):
        fit_ml([1.0, 2.0, 3.0, 4.0], "ESt")


def test_fit_normal():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    m = fit_normal(x)
    assert m.n_params == 2
    assert m.params.theta == pytest.approx(3.5)
    assert m.params.sigma == pytest.approx(np.std(x))


def test_aic_bic_examples():
    aic, bic = aic_bic(0.0, 3, math.e)
    assert aic == pytest.approx(6.0) and bic == pytest.approx(3.0)
    aic, _ = aic_bic(27.1501, 3, 50)
    assert aic == pytest.approx(-48.3002, abs=1e-10)
    for n in (10, 57, 1000):
        a, b = aic_bic(-12.5, 4, n)
        assert a - b == pytest.approx(2 * 4 - 4 * math.log(n))
    with pytest.raises(InvalidParamsError):
        aic_bic(1.0, 0, 10)


@pytest.mark.parametrize("p", [LossParams(-1.1, 3.7, -0.2), LossParams(-0.1, 6.4, 0.5),
                               LossParams(-2.5, 0.3, 0.8)])
def test_esh_density_normalized(p):
    c = integrate_pieces(lambda v: np.exp(-rho_esh(v, p)), [p.c1, 0.0, p.c2])
    assert esh_log_normalizer(p) == pytest.approx(math.log(c), abs=1e-10)
    f = lambda x: math.exp(loglik_esh([x], 0.3, 1.7, p.eps, p))  # noqa: E731
    pts = [0.3 + 1.7 * p.c1 * (1 + p.eps), 0.3, 0.3 + 1.7 * p.c2 * (1 - p.eps)]
    assert integrate_pieces(f, pts) == pytest.approx(1.0, abs=1e-8)
