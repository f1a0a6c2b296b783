"""AR(1) model with truncated-normal priors, sampled in u-space.

    Y_i = phi Y_{i-1} + sigma eps_i,  Y_0 = 0,  eps_i ~ N(0, 1),
    phi ~ TN(m, s^2, [lo, hi]),  sigma ~ TN(m, s^2, [lo, hi]) with lo > 0.

Because the u-space prior is uniform, the posterior of (u1, u2) is the
likelihood evaluated at (F_phi^-1(u1), F_sigma^-1(u2)).
"""

import logging

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import FiniteFloat
from pydantic import model_validator
from scipy import signal
from scipy import special as spc

import stattests
from bernoulli import lag_pairs
from errors import DomainError
from errors import SchemaMismatch
from mcmc import McmcConfig
from mcmc import rwm_unit_cube
from uvalues import GenerativeModel
from uvalues import Role
from uvalues import UDraw
from uvalues import data_label
from uvalues import param_label


log = logging.getLogger(__name__)


TEST_NAMES = (
    "p_phi",
    "p_sigma",
    "p_data_unif",
    "p_data_index",
    "p_data_lag1",
    "p_data_lag2",
)

_HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


class TruncNormal(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: FiniteFloat
    s: FiniteFloat = Field(gt=0)
    lo: float
    hi: float

    @model_validator(mode="after")
    def _check_interval(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        return self

    def mass(self):
        """(Phi(z_lo), Phi(z_hi) - Phi(z_lo))"""
        lo = spc.ndtr((self.lo - self.m) / self.s)
        width = spc.ndtr((self.hi - self.m) / self.s) - lo
        if width < 1e-300:
            raise DomainError(f"truncation interval [{self.lo}, {self.hi}] holds no normal mass")
        return (lo, width)


def tn_cdf(x, tn: TruncNormal):
    (lo, width) = tn.mass()
    cdf = np.clip((spc.ndtr((np.asarray(x, dtype=float) - tn.m) / tn.s) - lo) / width, 0.0, 1.0)
    return float(cdf) if cdf.ndim == 0 else cdf


def tn_inv_cdf(u, tn: TruncNormal):
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("truncated-normal quantile needs u strictly inside (0, 1)")
    (lo, width) = tn.mass()
    x = np.clip(tn.m + tn.s * spc.ndtri(lo + u * width), tn.lo, tn.hi)
    return float(x) if x.ndim == 0 else x


class Ar1Model(BaseModel):
    model_config = ConfigDict(frozen=True)

    prior_phi: TruncNormal
    prior_sigma: TruncNormal
    n: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_sigma(self):
        if self.prior_sigma.lo <= 0:
            raise ValueError("the prior on sigma must have strictly positive support")
        return self


def _series(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise DomainError("need a non-empty series")
    if not np.all(np.isfinite(y)):
        raise DomainError("series must be finite")
    return y


def _lagged(y, lag=1):
    """y shifted right by `lag` along the last axis, zero-filled."""
    pad = np.zeros(y.shape[:-1] + (lag,))
    return np.concatenate([pad, y[..., :-lag]], axis=-1)


def ar1_filter(phi, sigma, eps):
    """Y_i = phi Y_{i-1} + sigma eps_i from Y_0 = 0."""
    return signal.lfilter([sigma], [1.0, -phi], np.asarray(eps, dtype=float))


def ar1_simulate(phi, sigma, n, rng):
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if n < 1:
        raise DomainError(f"series length must be positive, got {n}")
    return ar1_filter(phi, sigma, rng.standard_normal(n))


def ar1_data_uvalues(phi, sigma, y):
    """Phi((Y_i - phi Y_{i-1}) / sigma); phi and sigma may be (T,) arrays."""
    y = _series(y)
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be positive")
    resid = y - phi[..., None] * _lagged(y)
    return spc.ndtr(resid / sigma[..., None])


class Ar1Likelihood:
    """Log-likelihood as a function of (u1, u2), from sufficient statistics."""

    def __init__(self, y, model: Ar1Model):
        y = _series(y)
        x = _lagged(y)
        self.model = model
        self.n = y.size
        self.syy = float(y @ y)
        self.sxy = float(y @ x)
        self.sxx = float(x @ x)

    def params(self, u):
        return (
            tn_inv_cdf(u[0], self.model.prior_phi),
            tn_inv_cdf(u[1], self.model.prior_sigma),
        )

    def __call__(self, u):
        (phi, sigma) = self.params(u)
        rss = self.syy - 2 * phi * self.sxy + phi * phi * self.sxx
        return -self.n * (np.log(sigma) + _HALF_LOG_2PI) - rss / (2 * sigma * sigma)


def ar1_logpost_u(u1, u2, y, model: Ar1Model):
    """Unnormalized log posterior density of (u1, u2) given the series."""
    return Ar1Likelihood(y, model)((u1, u2))


def ar1_mcmc(y, model: Ar1Model, config: McmcConfig = McmcConfig()):
    """Adaptive random-walk Metropolis over (u1, u2); draws are u-values."""
    target = Ar1Likelihood(y, model)
    return rwm_unit_cube(target, initial=(0.5, 0.5), config=config)


class Ar1UModel(GenerativeModel):
    K = 2

    def __init__(self, model: Ar1Model, config: McmcConfig = McmcConfig()):
        self.model = model
        self.config = config
        self.last_result = None
        super().__init__(model.n)

    def label_schema(self):
        return [param_label("phi"), param_label("sigma")] + [
            data_label("eps", i, time=i + 1) for i in range(self.n)
        ]

    def sample_theta(self, u_param):
        (u1, u2) = np.asarray(u_param, dtype=float)
        return np.array([
            tn_inv_cdf(u1, self.model.prior_phi),
            tn_inv_cdf(u2, self.model.prior_sigma),
        ])

    def sample_data(self, u_data, theta):
        (phi, sigma) = np.asarray(theta, dtype=float)
        return ar1_filter(phi, sigma, spc.ndtri(np.asarray(u_data, dtype=float)))

    def recover_param_uvalues(self, theta, data, rng=None):
        theta = np.asarray(theta, dtype=float)
        return np.stack(
            [
                np.asarray(tn_cdf(theta[..., 0], self.model.prior_phi)),
                np.asarray(tn_cdf(theta[..., 1], self.model.prior_sigma)),
            ],
            axis=-1,
        )

    def recover_data_uvalues(self, theta, data, rng=None):
        theta = np.asarray(theta, dtype=float)
        return ar1_data_uvalues(theta[..., 0], theta[..., 1], data)

    def posterior_draws(self, data, T, rng):
        """T thinned post-burn-in draws of (phi, sigma) from one chain."""
        config = self.config.model_copy(
            update={
                "iterations": self.config.burn_in + T * self.config.thin,
                "seed": int(rng.integers(2 ** 62)),
            }
        )
        result = ar1_mcmc(data, self.model, config)
        self.last_result = result
        return np.column_stack([
            tn_inv_cdf(result.draws[:, 0], self.model.prior_phi),
            tn_inv_cdf(result.draws[:, 1], self.model.prior_sigma),
        ])


def _find(labels, role, name):
    idx = [j for (j, lab) in enumerate(labels) if lab.role is role and lab.name == name]
    if not idx:
        raise SchemaMismatch(f"draw has no {role.value} u-values named {name!r}")
    return idx


def _table(tables, n):
    if n not in tables:
        raise DomainError(f"no Hoeffding null table for n={n}; have {sorted(tables)}")
    return tables[n]


def table_sizes(n):
    """Pair counts of the index, lag-1 and lag-2 Hoeffding tests that can run."""
    return tuple(m for m in (n, n - 1, n - 2) if m >= stattests.HOEFFDING_MIN_N)


def ar1_test_suite(draws, tables):
    """The six AR(1) p-values for a UDraw (floats) or a UDrawSet (per draw).

    `tables` maps n to a Hoeffding null table and must hold n, n-1 and n-2.
    Hoeffding tests with fewer than five pairs are left out of the result.
    """
    single = isinstance(draws, UDraw)
    values = draws.values[None, :] if single else draws.values
    labels = draws.labels
    (phi,) = _find(labels, Role.PARAMETER, "phi")
    (sigma,) = _find(labels, Role.PARAMETER, "sigma")
    eps = values[:, _find(labels, Role.DATA, "eps")]
    n = eps.shape[1]
    index = np.broadcast_to(np.arange(1, n + 1) / n, eps.shape)

    results = {
        "p_phi": stattests.p_extreme(values[:, phi]),
        "p_sigma": stattests.p_extreme(values[:, sigma]),
        "p_data_unif": stattests.ad_test(eps),
    }
    pairs = {
        "p_data_index": (eps, index),
        "p_data_lag1": lag_pairs(eps, 1),
        "p_data_lag2": lag_pairs(eps, 2),
    }
    for (name, (x, y)) in pairs.items():
        m = x.shape[-1]
        if m < stattests.HOEFFDING_MIN_N:
            log.warning(f"{name} skipped: {m} pairs are too few for Hoeffding's D")
            continue
        results[name] = stattests.hoeffding_test(x, y, _table(tables, m))
    if single:
        return {k: float(np.asarray(v).ravel()[0]) for (k, v) in results.items()}
    return {k: np.atleast_1d(v) for (k, v) in results.items()}
