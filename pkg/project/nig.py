"""Normal model with a conjugate Normal-InverseGamma prior.

    sigma^2 ~ InvGamma(alpha0, beta0),  mu | sigma^2 ~ N(mu0, sigma^2 / kappa0),
    Y_i | mu, sigma^2 ~ N(mu, sigma^2) i.i.d.

u-values: U1 = Phi((mu - mu0) sqrt(kappa0) / sigma), U2 = F_InvGamma(sigma^2),
and Phi((Y_i - mu) / sigma) for the data.  The map is invertible, so the
recovery is deterministic.
"""

import logging

import numpy as np
from cytoolz import partition_all
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import FiniteFloat
from scipy import special as spc
from scipy import stats as sps

import stattests
from errors import DomainError
from errors import UnsupportedConfiguration
from uvalues import GenerativeModel
from uvalues import data_label
from uvalues import param_label


log = logging.getLogger(__name__)


class NigParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu0: FiniteFloat
    kappa0: FiniteFloat = Field(gt=0)
    alpha0: FiniteFloat = Field(gt=0)
    beta0: FiniteFloat = Field(gt=0)


def _observations(data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 1:
        raise DomainError(f"data must be a vector, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise DomainError("data must be finite")
    return data


def nig_update(prior: NigParams, data) -> NigParams:
    data = _observations(data)
    n = data.size
    if n == 0:
        return prior
    ybar = data.mean()
    ss = np.sum((data - ybar) ** 2)
    kappa_n = prior.kappa0 + n
    return NigParams(
        mu0=(prior.kappa0 * prior.mu0 + n * ybar) / kappa_n,
        kappa0=kappa_n,
        alpha0=prior.alpha0 + n / 2,
        beta0=prior.beta0 + ss / 2 + prior.kappa0 * n * (ybar - prior.mu0) ** 2 / (2 * kappa_n),
    )


def nig_sample(posterior: NigParams, T, seed):
    """T draws of (mu, sigma^2) as two arrays; `seed` may be a Generator."""
    if T < 1:
        raise DomainError(f"need at least one draw, got T={T}")
    rng = np.random.default_rng(seed)
    lam = rng.gamma(shape=posterior.alpha0, scale=1 / posterior.beta0, size=T)
    sigma2 = 1 / lam
    mu = rng.normal(posterior.mu0, np.sqrt(sigma2 / posterior.kappa0))
    return (mu, sigma2)


# -- named priors --------------------------------------------------------------

def weak_prior(data=None):
    return NigParams(mu0=0.0, kappa0=0.1, alpha0=2.0, beta0=300.0)


def data_dependent_prior(data):
    data = _observations(data)
    n = data.size
    return NigParams(mu0=data.mean(), kappa0=n, alpha0=n / 2, beta0=np.var(data, ddof=1) * n / 2)


def poor_prior(data):
    """Informed by an earlier, badly biased measurement: 179 +- 42."""
    n = _observations(data).size
    return NigParams(mu0=179.0, kappa0=n, alpha0=n / 2, beta0=42.0 ** 2 * (n / 2) * n)


PRIORS = {
    "weak": weak_prior,
    "data_dependent": data_dependent_prior,
    "poor": poor_prior,
}


def named_prior(name, data):
    if name not in PRIORS:
        raise DomainError(f"unknown Normal-InverseGamma prior {name!r}; choose from {sorted(PRIORS)}")
    return PRIORS[name](data)


def matched_normal_data(data, rng):
    """Synthetic N(ybar, s^2) data of the same size as `data`."""
    data = _observations(data)
    return rng.normal(data.mean(), np.std(data, ddof=1), size=data.size)


# -- u-values ------------------------------------------------------------------

def _theta(theta):
    theta = np.asarray(theta, dtype=float)
    (mu, sigma2) = (np.asarray(theta[..., 0]), np.asarray(theta[..., 1]))
    if np.any(sigma2 <= 0):
        raise DomainError("sigma^2 must be positive")
    return (mu, sigma2)


class NigModel(GenerativeModel):
    K = 2

    def __init__(self, n, prior: NigParams):
        self.prior = prior
        super().__init__(n)

    def label_schema(self):
        return [param_label("mu"), param_label("sigma2")] + [
            data_label("y", i) for i in range(self.n)
        ]

    def sample_theta(self, u_param):
        (u1, u2) = np.asarray(u_param, dtype=float)
        p = self.prior
        sigma2 = p.beta0 / spc.gammainccinv(p.alpha0, u2)
        mu = p.mu0 + np.sqrt(sigma2 / p.kappa0) * spc.ndtri(u1)
        return np.array([mu, sigma2])

    def sample_data(self, u_data, theta):
        (mu, sigma2) = _theta(theta)
        return mu + np.sqrt(sigma2) * spc.ndtri(np.asarray(u_data, dtype=float))

    def recover_param_uvalues(self, theta, data, rng=None):
        (mu, sigma2) = _theta(theta)
        p = self.prior
        u1 = spc.ndtr((mu - p.mu0) * np.sqrt(p.kappa0 / sigma2))
        # P(sigma^2 <= s) = P(lambda >= 1/s) for lambda ~ Gamma(alpha0, rate beta0)
        u2 = spc.gammaincc(p.alpha0, p.beta0 / sigma2)
        return np.stack([u1, u2], axis=-1)

    def recover_data_uvalues(self, theta, data, rng=None):
        (mu, sigma2) = _theta(theta)
        data = _observations(data)
        return spc.ndtr((data - mu[..., None]) / np.sqrt(sigma2)[..., None])

    def posterior_draws(self, data, T, rng):
        (mu, sigma2) = nig_sample(nig_update(self.prior, data), T, rng)
        return np.column_stack([mu, sigma2])


def nig_uvalues(mu, sigma2, prior: NigParams, data):
    data = _observations(data)
    return NigModel(data.size, prior).uvalues(np.array([mu, sigma2]), data, rng=None)


def nig_test_suite(drawset):
    """Per-draw p_mu, p_sigma and p_data_unif for a NigModel draw set."""
    return {
        "p_mu": stattests.p_extreme(drawset.column("mu")),
        "p_sigma": stattests.p_extreme(drawset.column("sigma2")),
        "p_data_unif": stattests.ad_test(drawset.block(lambda lab: lab.name == "y")),
    }


# -- posterior densities of the p-values ----------------------------------------

def _open_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if not np.all((grid > 0) & (grid < 1)):
        raise DomainError("density grid must lie strictly inside (0, 1)")
    return grid


def plambda_density(grid, posterior: NigParams, prior: NigParams):
    """Exact posterior density of p_sigma, available for an InvGamma(1, 1) prior."""
    if prior.alpha0 != 1 or prior.beta0 != 1:
        raise UnsupportedConfiguration(
            f"closed-form p_sigma density needs alpha0 = beta0 = 1, got "
            f"({prior.alpha0}, {prior.beta0})"
        )
    p = _open_grid(grid)
    f_lam = sps.gamma(posterior.alpha0, scale=1 / posterior.beta0).pdf
    return f_lam(-np.log1p(-p / 2)) / (2 - p) + f_lam(-np.log(p / 2)) / p


def pmu_density(grid, prior: NigParams, lambda_draws, posterior: NigParams, batch=512):
    """Posterior density of p_mu, mixing the analytic density given lambda over
    posterior lambda draws."""
    p = _open_grid(grid)
    lam = np.asarray(lambda_draws, dtype=float).ravel()
    if lam.size == 0:
        raise DomainError("need at least one lambda draw")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise DomainError("lambda draws must be finite and positive")

    total = np.zeros_like(p)
    for chunk in partition_all(batch, lam):
        lam_s = np.asarray(chunk)[:, None]
        scale = np.sqrt(prior.kappa0 * lam_s)
        post_sd = 1 / np.sqrt(posterior.kappa0 * lam_s)
        for z in (spc.ndtri(p / 2), spc.ndtri(1 - p / 2)):
            mu = prior.mu0 + z / scale
            jacobian = 1 / (2 * scale * sps.norm.pdf(z))
            total += np.sum(sps.norm.pdf(mu, posterior.mu0, post_sd) * jacobian, axis=0)
    return total / lam.size


def ppc_min_pvalue(data, draws):
    """P(min Y* <= min y | y), averaging the exact CDF of the minimum over
    posterior (mu, sigma^2) draws given as rows."""
    data = _observations(data)
    if data.size == 0:
        raise DomainError("posterior predictive check of an empty dataset")
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] == 0:
        raise DomainError("posterior predictive check needs at least one draw")
    (mu, sigma2) = _theta(draws)
    z = (data.min() - mu) / np.sqrt(sigma2)
    # 1 - (1 - Phi(z))^n
    return float(np.mean(-np.expm1(data.size * spc.log_ndtr(-z))))
