"""Bernoulli trials with a Beta prior, checked through randomized PIT u-values.

Y_i = 1 exactly when U_{i+1} > 1 - theta, so given (theta, Y_i) the data
u-value is drawn uniformly from (0, 1 - theta) or (1 - theta, 1).  The
recovery is stochastic but always reproduces Y.
"""

import logging

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import FiniteFloat
from scipy import special as spc

import stattests
from errors import DomainError
from uvalues import GenerativeModel
from uvalues import data_label
from uvalues import param_label


log = logging.getLogger(__name__)


class BernoulliPrior(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: FiniteFloat = Field(gt=0)
    b: FiniteFloat = Field(gt=0)


PRIORS = {
    "uniform": BernoulliPrior(a=1, b=1),
    "jeffreys": BernoulliPrior(a=0.5, b=0.5),
    "poor": BernoulliPrior(a=1, b=50),
}


def named_prior(name):
    if name not in PRIORS:
        raise DomainError(f"unknown Beta prior {name!r}; choose from {sorted(PRIORS)}")
    return PRIORS[name]


def binary(data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 1:
        raise DomainError(f"data must be a vector, got shape {data.shape}")
    if not np.all((data == 0) | (data == 1)):
        raise DomainError("Bernoulli data must be 0/1")
    return data.astype(int)


def bb_update(prior: BernoulliPrior, data) -> BernoulliPrior:
    data = binary(data)
    s = int(data.sum())
    return BernoulliPrior(a=prior.a + s, b=prior.b + data.size - s)


def switch_count(data):
    """Number of i with Y_i != Y_{i+1}, per row."""
    data = np.asarray(data).astype(int)
    return np.count_nonzero(np.diff(data, axis=-1), axis=-1)


def lag_pairs(u, lag=1):
    """(u_i, u_{i+lag}) for every valid i, along the last axis."""
    u = np.asarray(u, dtype=float)
    if lag < 1:
        raise DomainError(f"lag must be at least 1, got {lag}")
    if u.shape[-1] <= lag:
        raise DomainError(f"{u.shape[-1]} values leave no pairs at lag {lag}")
    return (u[..., :-lag], u[..., lag:])


class _RandomizedPit(GenerativeModel):
    """Bernoulli data given one success probability theta = theta[..., 0]."""

    K = 1
    deterministic_recovery = False

    def label_schema(self):
        return [param_label("theta")] + [data_label("y", i) for i in range(self.n)]

    def check_data(self, data):
        return binary(super().check_data(data))

    def sample_data(self, u_data, theta):
        theta = np.asarray(theta, dtype=float)[..., 0]
        return (np.asarray(u_data, dtype=float) > 1 - theta).astype(int)

    def recover_data_uvalues(self, theta, data, rng):
        theta = np.asarray(theta, dtype=float)[..., 0, None]
        data = binary(data)
        cut = 1 - theta
        lower = np.where(data == 1, cut, 0.0)
        upper = np.where(data == 1, 1.0, cut)
        return lower + (upper - lower) * rng.uniform(size=lower.shape)


class BetaBernoulliModel(_RandomizedPit):
    def __init__(self, n, prior: BernoulliPrior):
        self.prior = prior
        super().__init__(n)

    def sample_theta(self, u_param):
        return np.atleast_1d(spc.betaincinv(self.prior.a, self.prior.b, u_param))

    def recover_param_uvalues(self, theta, data, rng=None):
        theta = np.asarray(theta, dtype=float)
        if not np.all((theta > 0) & (theta < 1)):
            raise DomainError("theta must lie strictly inside (0, 1)")
        return spc.betainc(self.prior.a, self.prior.b, theta)

    def posterior_draws(self, data, T, rng):
        post = bb_update(self.prior, data)
        return rng.beta(post.a, post.b, size=T)[:, None]


class DiscreteThetaBernoulli(_RandomizedPit):
    """theta is 1/4 or 3/4 with equal prior mass.

    The parameter u-value is itself randomized: Uniform(0, 1/2) when
    theta = 1/4 and Uniform(1/2, 1) when theta = 3/4.
    """

    LOW = 0.25
    HIGH = 0.75

    def sample_theta(self, u_param):
        return np.where(np.asarray(u_param, dtype=float) < 0.5, self.LOW, self.HIGH)

    def recover_param_uvalues(self, theta, data, rng):
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isin(theta, (self.LOW, self.HIGH))):
            raise DomainError(f"theta must be {self.LOW} or {self.HIGH}")
        return np.where(theta == self.LOW, 0.0, 0.5) + 0.5 * rng.uniform(size=theta.shape)

    def posterior_draws(self, data, T, rng):
        data = binary(data)
        s = data.sum()
        # log odds of theta = 3/4 against theta = 1/4
        p_high = spc.expit((2 * s - data.size) * np.log(3))
        return np.where(rng.uniform(size=T) < p_high, self.HIGH, self.LOW)[:, None]


def bb_uvalues(theta, data, rng, prior: BernoulliPrior = PRIORS["uniform"]):
    data = binary(data)
    return BetaBernoulliModel(data.size, prior).uvalues(np.array([theta]), data, rng)


def ppc_switch_pvalue(data, theta_draws, rng, two_sided=False):
    """Posterior predictive P(T(Y*) <= T(y)) for the switch count, one
    replicate dataset per posterior draw of theta."""
    data = binary(data)
    if data.size < 2:
        raise DomainError("switch statistic needs at least two trials")
    theta = np.asarray(theta_draws, dtype=float).ravel()
    if theta.size == 0:
        raise DomainError("posterior predictive check needs at least one draw")
    observed = switch_count(data)
    replicates = switch_count(rng.uniform(size=(theta.size, data.size)) < theta[:, None])
    lower = np.mean(replicates <= observed)
    if not two_sided:
        return float(lower)
    upper = np.mean(replicates >= observed)
    return float(min(1.0, 2 * min(lower, upper)))


def bb_test_suite(drawset, table=None):
    """Per-draw p_theta, p_data_unif and, given a null table for n - 1 pairs,
    p_data_indep (lag-1 Hoeffding)."""
    data_u = drawset.block(lambda lab: lab.name == "y")
    results = {
        "p_theta": stattests.p_extreme(drawset.column("theta")),
        "p_data_unif": stattests.ad_test(data_u),
    }
    if table is not None:
        results["p_data_indep"] = stattests.hoeffding_test(*lag_pairs(data_u, 1), table=table)
    return results
