import numpy as np
import pytest
from pydantic import ValidationError
from scipy import special as spc

import ar1
import mcmc
from ar1 import Ar1Model
from ar1 import TruncNormal
from errors import DomainError
from errors import McmcDiagnosticWarning
from mcmc import McmcConfig
from uvalues import UDraw


PHI = TruncNormal(m=0.0, s=0.4, lo=-0.5, hi=0.5)
SIGMA = TruncNormal(m=1.5, s=0.4, lo=1.0, hi=2.0)


def _model(n):
    return Ar1Model(prior_phi=PHI, prior_sigma=SIGMA, n=n)


def test_truncated_normal():
    assert ar1.tn_inv_cdf(0.5, PHI) == pytest.approx(0.0, abs=1e-12)
    assert ar1.tn_inv_cdf(0.5, SIGMA) == pytest.approx(1.5)
    assert ar1.tn_cdf(PHI.lo, PHI) == 0.0
    assert ar1.tn_cdf(PHI.hi, PHI) == 1.0
    u = np.array([0.1, 0.4, 0.9])
    np.testing.assert_allclose(ar1.tn_cdf(ar1.tn_inv_cdf(u, SIGMA), SIGMA), u)
    with pytest.raises(DomainError):
        ar1.tn_inv_cdf(1.0, PHI)
    with pytest.raises(ValidationError):
        TruncNormal(m=0.0, s=1.0, lo=1.0, hi=1.0)
    with pytest.raises(ValidationError):
        Ar1Model(prior_phi=PHI, prior_sigma=PHI, n=10)


def test_filter():
    eps = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(ar1.ar1_filter(0.0, 1.0, eps), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(ar1.ar1_filter(0.5, 1.0, eps), [1.0, 0.5, 0.25])
    noise = np.random.default_rng(0).standard_normal(50)
    np.testing.assert_allclose(ar1.ar1_filter(0.3, 2.0, noise), 2 * ar1.ar1_filter(0.3, 1.0, noise))


def test_white_noise_variance(rng):
    y = ar1.ar1_simulate(0.0, 1.5, 10_000, rng)
    se = 1.5 ** 2 * np.sqrt(2 / y.size)
    assert abs(y.var() - 1.5 ** 2) < 4 * se
    with pytest.raises(DomainError):
        ar1.ar1_simulate(0.0, 0.0, 10, rng)


def test_data_uvalues():
    assert ar1.ar1_data_uvalues(0.0, 1.0, [1.0])[0] == pytest.approx(spc.ndtr(1.0))
    np.testing.assert_allclose(ar1.ar1_data_uvalues(0.5, 1.0, [0.0, 0.0, 0.0]), 0.5)
    u = np.random.default_rng(3).uniform(size=40)
    y = ar1.ar1_filter(0.3, 1.2, spc.ndtri(u))
    np.testing.assert_allclose(ar1.ar1_data_uvalues(0.3, 1.2, y), u, atol=1e-8)
    # per-draw parameters broadcast over the series
    rows = ar1.ar1_data_uvalues(np.array([0.3, 0.0]), np.array([1.2, 1.0]), y)
    assert rows.shape == (2, 40)
    np.testing.assert_allclose(rows[0], u, atol=1e-8)


def test_likelihood_differences():
    lik = ar1.Ar1Likelihood([0.0], _model(2))
    (ua, ub) = (0.2, 0.7)
    (sa, sb) = (ar1.tn_inv_cdf(ua, SIGMA), ar1.tn_inv_cdf(ub, SIGMA))
    # Y = 0: only -log(sigma) varies
    assert lik((0.5, ua)) - lik((0.5, ub)) == pytest.approx(np.log(sb) - np.log(sa))

    y = np.array([0.3, -0.2, 0.5])
    shifted = ar1.Ar1Likelihood(y + 1.0, _model(3))((0.5, 0.5))
    base = ar1.Ar1Likelihood(y, _model(3))((0.5, 0.5))
    # phi = 0 at u1 = 0.5, sigma = 1.5 at u2 = 0.5
    expected = -(np.sum((y + 1.0) ** 2) - np.sum(y ** 2)) / (2 * 1.5 ** 2)
    assert shifted - base == pytest.approx(expected)
    assert ar1.ar1_logpost_u(0.5, 0.5, y, _model(3)) == pytest.approx(base)
    assert ar1.Ar1Likelihood(2 * y, _model(3))((0.5, 0.5)) < base


def test_mcmc_config():
    with pytest.raises(ValidationError):
        McmcConfig(iterations=100, burn_in=100)
    with pytest.raises(ValidationError):
        McmcConfig(step_sizes=(0.1, -0.1))
    assert McmcConfig(iterations=10, burn_in=4, thin=3).kept == 2


def test_logit():
    np.testing.assert_allclose(spc.expit(mcmc.logit(np.array([0.1, 0.5, 0.9]))), [0.1, 0.5, 0.9])


def test_chain_recovers_phi(rng):
    y = ar1.ar1_simulate(0.4, 1.5, 500, rng)
    config = McmcConfig(seed=5)
    result = ar1.ar1_mcmc(y, _model(500), config)
    assert result.draws.shape == (1000, 2)
    phi = ar1.tn_inv_cdf(result.draws[:, 0], PHI)
    assert abs(phi.mean() - 0.4) < 0.1
    assert 0.05 <= result.acceptance_rate <= 0.95
    again = ar1.ar1_mcmc(y, _model(500), config)
    np.testing.assert_array_equal(result.draws, again.draws)
    assert result.summary()["draws"] == 1000


def test_chain_needs_data():
    with pytest.raises(DomainError):
        ar1.ar1_mcmc([], _model(2))


def test_unhealthy_chain_warns(rng):
    y = ar1.ar1_simulate(0.2, 1.5, 300, rng)
    config = McmcConfig(iterations=400, burn_in=100, step_sizes=(60.0, 60.0), adapt=False)
    with pytest.warns(McmcDiagnosticWarning):
        result = ar1.ar1_mcmc(y, _model(300), config)
    assert result.warnings


def test_udrawset_from_chain(rng):
    y = ar1.ar1_simulate(0.1, 1.5, 30, rng)
    model = ar1.Ar1UModel(_model(30), McmcConfig(iterations=600, burn_in=500))
    ds = model.udrawset(y, T=50, seed=1)
    assert ds.values.shape == (50, 32)
    assert model.last_result.draws.shape == (50, 2)
    assert ds.labels[2].strata == {"time": 1}


def _udraw(n, u1=0.5, u2=0.3):
    labels = ar1.Ar1UModel(_model(n)).labels
    eps = np.linspace(0.05, 0.95, n)
    return UDraw(np.concatenate([[u1, u2], eps]), labels)


def test_suite_on_a_single_draw(hoeffding_tables):
    tables = {n: hoeffding_tables(n) for n in ar1.table_sizes(10)}
    p = ar1.ar1_test_suite(_udraw(10), tables)
    assert list(p) == list(ar1.TEST_NAMES)
    assert p["p_phi"] == 1.0
    # increasing u-values are maximally dependent on the index
    assert p["p_data_index"] == pytest.approx(1 / 2001)
    assert all(0 < v <= 1 for v in p.values())
    with pytest.raises(DomainError):
        ar1.ar1_test_suite(_udraw(10), {10: tables[10]})


def test_short_series_skips_lag_tests(hoeffding_tables):
    assert ar1.table_sizes(6) == (6, 5)
    tables = {n: hoeffding_tables(n) for n in ar1.table_sizes(6)}
    p = ar1.ar1_test_suite(_udraw(6), tables)
    assert "p_data_lag2" not in p
    assert "p_data_lag1" in p
