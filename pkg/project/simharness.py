"""Batch simulations: AR(1) scenarios, null calibration and self-consistency.

Every replicate draws its own generator from `[master_seed, index]`, so the
result does not depend on how replicates are split across worker processes.
"""

import enum
import functools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from typing import Dict

import numpy as np
from cytoolz import merge_with
from cytoolz import partition_all
from cytoolz import valmap
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from scipy import signal

import ar1
import bernoulli
import nig
import stattests
from aggregate import cauchy_combine
from errors import ClampWarning
from errors import DomainError
from errors import McmcDiagnosticWarning
from mcmc import McmcConfig
from uvalues import Role
from uvalues import is_data


log = logging.getLogger(__name__)


# Step 0.005, so 0.01 and 0.05 are grid points exactly.
SCENARIO_GRID = np.arange(201) / 200
REPLICATE_CHUNK = 50


class DgpVariant(str, enum.Enum):
    AR1 = "ar1"
    HETEROSKEDASTIC = "heteroskedastic"
    AR2 = "ar2"


class ModelKind(str, enum.Enum):
    NIG = "nig"
    BETA_BERNOULLI = "bernoulli"


PHI_PRIOR = ar1.TruncNormal(m=0.0, s=0.4, lo=-0.5, hi=0.5)
SIGMA_PRIOR = ar1.TruncNormal(m=1.5, s=0.4, lo=1.0, hi=2.0)
NARROW_PHI_PRIOR = ar1.TruncNormal(m=0.0, s=0.1, lo=-0.5, hi=0.5)
NARROW_SIGMA_PRIOR = ar1.TruncNormal(m=1.5, s=0.1, lo=1.0, hi=2.0)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=1, le=5)
    true_prior_phi: ar1.TruncNormal = PHI_PRIOR
    true_prior_sigma: ar1.TruncNormal = SIGMA_PRIOR
    hyp_prior_phi: ar1.TruncNormal = PHI_PRIOR
    hyp_prior_sigma: ar1.TruncNormal = SIGMA_PRIOR
    dgp_variant: DgpVariant = DgpVariant.AR1
    n: int = Field(500, ge=5)

    @model_validator(mode="after")
    def _check_variant(self):
        if self.id == 1:
            same = (
                self.true_prior_phi == self.hyp_prior_phi
                and self.true_prior_sigma == self.hyp_prior_sigma
            )
            if not same or self.dgp_variant is not DgpVariant.AR1:
                raise ValueError("scenario 1 is the correctly specified AR(1) model")
        if self.id == 4 and self.dgp_variant is not DgpVariant.HETEROSKEDASTIC:
            raise ValueError("scenario 4 has heteroskedastic errors")
        if self.id == 5 and self.dgp_variant is not DgpVariant.AR2:
            raise ValueError("scenario 5 has second-order dependence")
        return self

    def hypothesized(self):
        return ar1.Ar1Model(prior_phi=self.hyp_prior_phi, prior_sigma=self.hyp_prior_sigma, n=self.n)


def scenario(scenario_id, n=500):
    """One of the five AR(1) study designs."""
    designs = {
        1: {},
        2: {"hyp_prior_phi": NARROW_PHI_PRIOR},
        3: {"hyp_prior_sigma": NARROW_SIGMA_PRIOR},
        4: {"dgp_variant": DgpVariant.HETEROSKEDASTIC},
        5: {"dgp_variant": DgpVariant.AR2},
    }
    if scenario_id not in designs:
        raise DomainError(f"scenario id must be 1..5, got {scenario_id}")
    return Scenario(id=scenario_id, n=n, **designs[scenario_id])


def dgp_series(variant, phi, sigma, eps):
    """The true data-generating process applied to fixed innovations."""
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    variant = DgpVariant(variant)
    if variant is DgpVariant.AR1:
        return ar1.ar1_filter(phi, sigma, eps)
    if variant is DgpVariant.HETEROSKEDASTIC:
        i = np.arange(1, n + 1)
        c = 1 + (2 * i - n - 1) / n
        return ar1.ar1_filter(phi, 1.0, np.sqrt(c) * sigma * eps)
    # sgn(0) = 0, so phi = 0 reduces to AR(1)
    second = np.sign(phi) * np.abs(phi) ** 0.25
    return signal.lfilter([sigma], [1.0, -phi, -second], eps)


def dgp_draw(scenario: Scenario, rng):
    """(phi, sigma, Y) with parameters from the TRUE priors."""
    (u_phi, u_sigma) = rng.uniform(size=2)
    phi = ar1.tn_inv_cdf(u_phi, scenario.true_prior_phi)
    sigma = ar1.tn_inv_cdf(u_sigma, scenario.true_prior_sigma)
    y = dgp_series(scenario.dgp_variant, phi, sigma, rng.standard_normal(scenario.n))
    return (phi, sigma, y)


# -- expected p-value CDFs ------------------------------------------------------

@dataclass(frozen=True)
class ExpectedCdf:
    """Share of datasets whose p-value is <= each grid point, kept as counts."""

    test_name: str
    grid: np.ndarray
    counts: np.ndarray
    total: int

    @classmethod
    def from_pvalues(cls, test_name, pvalues, grid=SCENARIO_GRID):
        p = np.sort(stattests.check_pvalue(np.atleast_1d(pvalues)))
        grid = np.asarray(grid, dtype=float)
        return cls(test_name, grid, np.searchsorted(p, grid, side="right"), int(p.size))

    @property
    def cdf_values(self):
        return self.counts / self.total

    def merge(self, other):
        if self.test_name != other.test_name or not np.array_equal(self.grid, other.grid):
            raise DomainError(f"cannot merge CDFs of {self.test_name} and {other.test_name}")
        return ExpectedCdf(self.test_name, self.grid, self.counts + other.counts, self.total + other.total)

    def cdf_at(self, u):
        hits = np.flatnonzero(np.isclose(self.grid, u, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise DomainError(f"{u} is not a grid point")
        return float(self.cdf_values[hits[0]])

    def sup_distance(self):
        """max |CDF(u) - u| over the grid."""
        return float(np.max(np.abs(self.cdf_values - self.grid)))


def _merge_cdfs(parts):
    return merge_with(lambda cdfs: functools.reduce(ExpectedCdf.merge, cdfs), *parts)


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as exe:
            return list(exe.map(fn, jobs))
    return [fn(job) for job in jobs]


def _chunks(n_reps):
    return [tuple(chunk) for chunk in partition_all(REPLICATE_CHUNK, range(n_reps))]


# -- AR(1) scenarios ----------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioRun:
    scenario: Scenario
    n_datasets: int
    seed: int
    cdfs: Dict[str, ExpectedCdf]
    acceptance_rates: np.ndarray
    flagged_chains: int

    def diagnostics(self):
        rates = self.acceptance_rates
        return {
            "chains": int(rates.size),
            "acceptance_mean": float(rates.mean()),
            "acceptance_min": float(rates.min()),
            "acceptance_max": float(rates.max()),
            "flagged": int(self.flagged_chains),
        }


def _scenario_chunk(job):
    (scn, config, tables, seed, indices) = job
    model = ar1.Ar1UModel(scn.hypothesized(), config)
    pvalues = {name: [] for name in ar1.TEST_NAMES}
    rates = []
    flagged = 0
    for index in indices:
        rng = np.random.default_rng([seed, index])
        (_, _, y) = dgp_draw(scn, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", McmcDiagnosticWarning)
            drawset = model.udrawset(y, T=1, seed=int(rng.integers(2 ** 62)), dataset_id=f"dataset-{index}")
        rates.append(model.last_result.acceptance_rate)
        flagged += bool(model.last_result.warnings)
        for (name, p) in ar1.ar1_test_suite(drawset, tables).items():
            pvalues[name].append(float(p[0]))
    cdfs = {name: ExpectedCdf.from_pvalues(name, p) for (name, p) in pvalues.items()}
    return (cdfs, rates, flagged)


def run_scenario(scenario: Scenario, n_datasets, config: McmcConfig, seed, tables, workers=1):
    """Expected CDF of each AR(1) test p-value over datasets from the true DGP,
    one post-burn-in posterior draw per dataset under the hypothesized model."""
    if n_datasets < 1:
        raise DomainError(f"need at least one dataset, got {n_datasets}")
    missing = [m for m in ar1.table_sizes(scenario.n) if m not in tables]
    if missing:
        raise DomainError(f"missing Hoeffding null tables for n={missing}")
    log.info(f"Running scenario {scenario.id} on {n_datasets} datasets (n={scenario.n})...")

    jobs = [(scenario, config, tables, seed, idx) for idx in _chunks(n_datasets)]
    parts = _map(_scenario_chunk, jobs, workers)
    rates = np.concatenate([np.asarray(r, dtype=float) for (_, r, _) in parts])
    run = ScenarioRun(
        scenario=scenario,
        n_datasets=n_datasets,
        seed=seed,
        cdfs=_merge_cdfs([c for (c, _, _) in parts]),
        acceptance_rates=rates,
        flagged_chains=sum(f for (_, _, f) in parts),
    )
    if run.flagged_chains:
        log.warning(f"{run.flagged_chains} of {n_datasets} chains had unhealthy acceptance rates")
    return run


# -- conjugate-model runs -----------------------------------------------------------

def make_model(kind, prior, n):
    kind = ModelKind(kind)
    if kind is ModelKind.NIG:
        return nig.NigModel(n, prior)
    return bernoulli.BetaBernoulliModel(n, prior)


def default_prior(kind):
    if ModelKind(kind) is ModelKind.NIG:
        return nig.weak_prior()
    return bernoulli.PRIORS["uniform"]


def _suite(kind, drawset, table):
    if ModelKind(kind) is ModelKind.NIG:
        return nig.nig_test_suite(drawset)
    return bernoulli.bb_test_suite(drawset, table)


def _check_reps(n_reps):
    if n_reps < 100:
        raise DomainError(f"calibration runs need at least 100 replicates, got {n_reps}")


@dataclass(frozen=True)
class SelfConsistencyRun:
    """Pooled first-draw u-values by coordinate group, and test p-values."""

    uvalues: Dict[str, np.ndarray]
    pvalues: Dict[str, np.ndarray]


def _group(label):
    return f"{label.role.value}:{label.name}" if label.role is Role.PARAMETER else "data"


def _self_consistency_chunk(job):
    (kind, prior, n, table, seed, indices) = job
    model = make_model(kind, prior, n)
    groups = [_group(lab) for lab in model.labels]
    pooled = {g: [] for g in groups}
    pvalues = {}
    for index in indices:
        rng = np.random.default_rng([seed, index])
        (_, _, y) = model.forward(rng)
        drawset = model.udrawset(y, T=1, seed=int(rng.integers(2 ** 62)))
        for (g, u) in zip(groups, drawset.values[0]):
            pooled[g].append(u)
        for (name, p) in _suite(kind, drawset, table).items():
            pvalues.setdefault(name, []).append(float(np.asarray(p).ravel()[0]))
    return (pooled, pvalues)


def _concat_parts(parts):
    return merge_with(lambda chunks: np.concatenate([np.asarray(c) for c in chunks]), *parts)


def self_consistency_run(kind, prior, n_reps, seed, n, table=None, workers=1):
    """Draw (theta, Y) from the hypothesized model, then one exact posterior
    u-draw per replicate; every pooled coordinate should be Uniform(0, 1)."""
    _check_reps(n_reps)
    log.info(f"Self-consistency run: {ModelKind(kind).value}, {n_reps} replicates")
    jobs = [(kind, prior, n, table, seed, idx) for idx in _chunks(n_reps)]
    parts = _map(_self_consistency_chunk, jobs, workers)
    return SelfConsistencyRun(
        uvalues=_concat_parts([u for (u, _) in parts]),
        pvalues=_concat_parts([p for (_, p) in parts]),
    )


def _ppc_chunk(job):
    (kind, prior, n, draws, seed, indices) = job
    model = make_model(kind, prior, n)
    out = []
    for index in indices:
        rng = np.random.default_rng([seed, index])
        (_, _, y) = model.forward(rng)
        thetas = model.posterior_draws(y, draws, rng)
        if ModelKind(kind) is ModelKind.NIG:
            out.append(nig.ppc_min_pvalue(y, thetas))
        else:
            out.append(bernoulli.ppc_switch_pvalue(y, thetas[:, 0], rng))
    return out


def ppc_calibration_run(kind, prior, n_reps, seed, n, draws=200, workers=1):
    """PPC p-values (min statistic for NIG, switch count for Bernoulli) on
    data simulated from the hypothesized model itself."""
    _check_reps(n_reps)
    jobs = [(kind, prior, n, draws, seed, idx) for idx in _chunks(n_reps)]
    return np.concatenate([np.asarray(p) for p in _map(_ppc_chunk, jobs, workers)])


def _external_chunk(job):
    (n, prior, inject, seed, indices) = job
    model = bernoulli.BetaBernoulliModel(n, prior)
    out = []
    for index in indices:
        rng = np.random.default_rng([seed, index])
        (_, _, y) = model.forward(rng)
        covariate = y.astype(bool) if inject else rng.uniform(size=n) < 0.5
        drawset = model.udrawset(y, T=1, seed=int(rng.integers(2 ** 62)))
        try:
            out.append(stattests.mann_whitney_p(drawset.block(is_data)[0], covariate))
        except DomainError:
            log.debug(f"Replicate {index}: covariate has a single level, skipped")
    return out


def external_null_run(n_reps, seed, n=100, prior=bernoulli.PRIORS["uniform"], inject_dependence=False, workers=1):
    """Mann-Whitney p-values of data u-values against a binary covariate drawn
    independently of Y (or equal to Y when dependence is injected)."""
    _check_reps(n_reps)
    jobs = [(n, prior, inject_dependence, seed, idx) for idx in _chunks(n_reps)]
    return np.concatenate([np.asarray(p, dtype=float) for p in _map(_external_chunk, jobs, workers)])


@dataclass(frozen=True)
class CombinerCalibration:
    p_star: Dict[str, np.ndarray]
    alphas: tuple
    rates: Dict[str, Dict[float, float]] = field(default_factory=dict)

    def standard_error(self, alpha):
        n = next(iter(self.p_star.values())).size
        return float(np.sqrt(alpha * (1 - alpha) / n))

    def within_bounds(self, test_name, alpha):
        """Empirical P(p* <= alpha) inside [alpha/2, 3 alpha/2] +- 3 SE."""
        slack = 3 * self.standard_error(alpha)
        rate = self.rates[test_name][alpha]
        return 0.5 * alpha - slack <= rate <= 1.5 * alpha + slack


def _combiner_chunk(job):
    (n, prior, T, table, seed, indices) = job
    model = bernoulli.BetaBernoulliModel(n, prior)
    out = {}
    with warnings.catch_warnings():
        # p = 1 from the discrete Hoeffding null gets clamped
        warnings.simplefilter("ignore", ClampWarning)
        for index in indices:
            rng = np.random.default_rng([seed, index])
            (_, _, y) = model.forward(rng)
            drawset = model.udrawset(y, T=T, seed=int(rng.integers(2 ** 62)))
            for (name, p) in bernoulli.bb_test_suite(drawset, table).items():
                out.setdefault(name, []).append(cauchy_combine(p))
    return out


def combiner_calibration_run(n_datasets, T, alphas, seed, n=100, prior=bernoulli.PRIORS["uniform"], table=None, workers=1):
    """Cauchy-combined p* per test over null-simulated Bernoulli datasets."""
    _check_reps(n_datasets)
    alphas = tuple(float(a) for a in alphas)
    jobs = [(n, prior, T, table, seed, idx) for idx in _chunks(n_datasets)]
    p_star = _concat_parts(_map(_combiner_chunk, jobs, workers))
    rates = valmap(lambda p: {a: float(np.mean(p <= a)) for a in alphas}, p_star)
    return CombinerCalibration(p_star=p_star, alphas=alphas, rates=rates)
