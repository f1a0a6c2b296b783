"""The analyses behind each command: worked examples, scenario acceptance and
the self-check property suite.

Each builder returns a `Report`: a JSON-ready summary, the aggregated result
records, and the curves the command exports as CSV.
"""

import logging
import warnings
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List

import numpy as np
from cytoolz import merge

import ar1
import bernoulli
import nig
import simharness
import stattests
from aggregate import adjust_family
from aggregate import combine
from errors import DomainError
from errors import McmcDiagnosticWarning
from mcmc import McmcConfig
from uvalues import UDrawSet
from uvalues import is_data
from uvalues import tilted_ecdf


log = logging.getLogger(__name__)


TILTED_DRAWS = 100
DENSITY_GRID = np.linspace(0.005, 0.995, 199)
AR1_MIN_N = 5

# Self-check levels: a property fails when its p-value drops below this.
SELFCHECK_LEVEL = 1e-3
SELFCHECK_ALPHAS = (0.01, 0.05)
SELFCHECK_TRIALS = 30

# The posterior predictive contrast always runs at least this many replicates.
PPC_REPS = 2000
PPC_NIG_N = 5


@dataclass
class Report:
    summary: dict
    records: List[dict]
    drawset: UDrawSet = None
    tilted: list = field(default_factory=list)
    densities: Dict[str, tuple] = field(default_factory=dict)
    baseline: List[dict] = field(default_factory=list)

    def csv_records(self):
        return self.records + self.baseline


def aggregate_suite(suite, family_id, procedure="holm"):
    """Cauchy-combine every per-draw p-value vector, then adjust across the family."""
    outcomes = [combine(name, p) for (name, p) in suite.items()]
    return adjust_family(outcomes, procedure=procedure, family_id=family_id)


def tilted_curves(drawset: UDrawSet, k=TILTED_DRAWS):
    data_u = drawset.block(is_data)
    return [(t, tilted_ecdf(data_u[t])) for t in range(min(k, drawset.T))]


def _baseline(name, p):
    return {"test_name": name, "method": "ppc", "p_star": float(p)}


def _log_results(records):
    for rec in records:
        log.info(f"{rec['test_name']}: p* = {rec['p_star']:.3g}, adjusted {rec['adjusted_p']:.3g}")


# -- Newcomb (Normal-InverseGamma) ---------------------------------------------------

def newcomb_report(data, prior_name, draws, seed, dataset_id="newcomb", synthetic=False, procedure="holm"):
    data = np.asarray(data, dtype=float)
    if synthetic:
        data = nig.matched_normal_data(data, np.random.default_rng([seed, 1]))
        dataset_id = f"{dataset_id}-synthetic"
    prior = nig.named_prior(prior_name, data)
    log.info(f"Checking {dataset_id} (n={data.size}) under the {prior_name} prior with {draws} draws...")

    model = nig.NigModel(data.size, prior)
    (thetas, drawset) = model.posterior_udrawset(data, draws, seed, dataset_id=dataset_id)
    records = aggregate_suite(nig.nig_test_suite(drawset), dataset_id, procedure)
    _log_results(records)

    posterior = nig.nig_update(prior, data)
    ppc = nig.ppc_min_pvalue(data, thetas)
    density = nig.pmu_density(DENSITY_GRID, prior, 1 / thetas[:, 1], posterior=posterior)
    summary = {
        "example": "newcomb",
        "dataset": {"id": dataset_id, "n": int(data.size), "synthetic": synthetic},
        "prior": merge({"name": prior_name}, prior.model_dump()),
        "posterior": posterior.model_dump(),
        "draws": draws,
        "seed": seed,
        "results": records,
        "ppc": {"statistic": "min", "p_value": ppc},
    }
    return Report(
        summary=summary,
        records=records,
        drawset=drawset,
        tilted=tilted_curves(drawset),
        densities={"p_mu": (DENSITY_GRID, density)},
        baseline=[_baseline("ppc_min", ppc)],
    )


# -- Bernoulli (Beta-Bernoulli) -----------------------------------------------------------

def bernoulli_report(data, prior_name, draws, seed, table, dataset_id="bernoulli", procedure="holm"):
    """`table` is the Hoeffding null for n - 1 lag-1 pairs."""
    data = bernoulli.binary(data)
    if table.n != data.size - 1:
        raise DomainError(f"lag-1 test of {data.size} trials needs a table for n={data.size - 1}, got n={table.n}")
    prior = bernoulli.named_prior(prior_name)
    log.info(f"Checking {dataset_id} (n={data.size}) under the {prior_name} prior with {draws} draws...")

    model = bernoulli.BetaBernoulliModel(data.size, prior)
    (thetas, drawset) = model.posterior_udrawset(data, draws, seed, dataset_id=dataset_id)
    records = aggregate_suite(bernoulli.bb_test_suite(drawset, table), dataset_id, procedure)
    _log_results(records)

    ppc = bernoulli.ppc_switch_pvalue(data, thetas[:, 0], np.random.default_rng([seed, 1]))
    summary = {
        "example": "bernoulli",
        "dataset": {
            "id": dataset_id,
            "n": int(data.size),
            "successes": int(data.sum()),
            "switches": int(bernoulli.switch_count(data)),
        },
        "prior": merge({"name": prior_name}, prior.model_dump()),
        "posterior": bernoulli.bb_update(prior, data).model_dump(),
        "draws": draws,
        "seed": seed,
        "null_table": {"n": table.n, "J": table.J, "seed": table.seed},
        "results": records,
        "ppc": {"statistic": "switches", "p_value": ppc},
    }
    return Report(
        summary=summary,
        records=records,
        drawset=drawset,
        tilted=tilted_curves(drawset),
        baseline=[_baseline("ppc_switches", ppc)],
    )


# -- AR(1) ---------------------------------------------------------------------------

def ar1_model(n, prior_phi=simharness.PHI_PRIOR, prior_sigma=simharness.SIGMA_PRIOR):
    if n < AR1_MIN_N:
        raise DomainError(f"AR(1) checks need at least {AR1_MIN_N} observations, got {n}")
    return ar1.Ar1Model(prior_phi=prior_phi, prior_sigma=prior_sigma, n=n)


def ar1_fit_report(y, model: ar1.Ar1Model, config: McmcConfig, tables, dataset_id="ar1", procedure="holm"):
    y = np.asarray(y, dtype=float)
    umodel = ar1.Ar1UModel(model, config)
    log.info(f"Sampling {dataset_id} (n={y.size}): {config.iterations} iterations, burn-in {config.burn_in}...")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", McmcDiagnosticWarning)
        (thetas, drawset) = umodel.posterior_udrawset(y, config.kept, config.seed, dataset_id=dataset_id)
    chain = umodel.last_result
    for message in chain.warnings:
        log.warning(f"MCMC: {message}")

    suite = ar1.ar1_test_suite(drawset, tables)
    records = aggregate_suite(suite, dataset_id, procedure)
    _log_results(records)
    summary = {
        "example": "ar1",
        "dataset": {"id": dataset_id, "n": int(y.size)},
        "prior": {
            "phi": model.prior_phi.model_dump(),
            "sigma": model.prior_sigma.model_dump(),
        },
        "mcmc": config.model_dump(),
        "diagnostics": merge(
            chain.summary(),
            {
                "posterior_mean_phi": float(thetas[:, 0].mean()),
                "posterior_mean_sigma": float(thetas[:, 1].mean()),
            },
        ),
        "results": records,
        "skipped": [name for name in ar1.TEST_NAMES if name not in suite],
    }
    return Report(summary=summary, records=records, drawset=drawset, tilted=tilted_curves(drawset))


def _item(name, statistic, threshold, passed, **extra):
    return merge(
        {"name": name, "statistic": float(statistic), "threshold": float(threshold), "passed": bool(passed)},
        extra,
    )


def diagonal_tolerance(n_datasets):
    """0.05 at scale; wider for small runs, where Monte-Carlo noise alone
    (the 0.999 Kolmogorov quantile) exceeds it."""
    return max(0.05, 1.95 / np.sqrt(n_datasets))


def scenario_properties(run: simharness.ScenarioRun):
    """Acceptance properties of one scenario's expected p-value CDFs."""
    cdfs = run.cdfs
    tol = diagonal_tolerance(run.n_datasets)
    at05 = {name: cdf.cdf_at(0.05) for (name, cdf) in cdfs.items()}
    sid = run.scenario.id
    items = []
    if sid == 1:
        for (name, cdf) in cdfs.items():
            items.append(_item(f"{name} diagonal", cdf.sup_distance(), tol, cdf.sup_distance() <= tol))
    elif sid in (2, 3):
        shifted = "p_phi" if sid == 2 else "p_sigma"
        items.append(_item(f"{shifted} detects prior conflict", at05[shifted], 0.15, at05[shifted] > 0.15))
        for name in ("p_data_unif", "p_data_index"):
            if name in cdfs:
                d = cdfs[name].sup_distance()
                items.append(_item(f"{name} near diagonal", d, tol + 0.03, d <= tol + 0.03))
    elif sid == 4:
        if "p_data_index" in at05:
            p = at05["p_data_index"]
            items.append(_item("p_data_index detects heteroskedasticity", p, 0.5, p >= 0.5))
    elif sid == 5:
        if "p_data_lag2" in at05:
            p = at05["p_data_lag2"]
            items.append(_item("p_data_lag2 detects second-order dependence", p, 0.5, p >= 0.5))
        for (name, p) in at05.items():
            if name != "p_data_lag2":
                items.append(_item(f"{name} puts mass near zero", p, 0.05, p > 0.05))
    return items


def scenario_report(run: simharness.ScenarioRun):
    items = scenario_properties(run)
    summary = {
        "example": "ar1-scenario",
        "scenario": run.scenario.model_dump(),
        "n_datasets": run.n_datasets,
        "seed": run.seed,
        "diagnostics": run.diagnostics(),
        "tests": {
            name: {
                "cdf_at_0.01": cdf.cdf_at(0.01),
                "cdf_at_0.05": cdf.cdf_at(0.05),
                "sup_distance": cdf.sup_distance(),
            }
            for (name, cdf) in run.cdfs.items()
        },
        "properties": items,
        "passed": all(item["passed"] for item in items),
    }
    return Report(summary=summary, records=items)


# -- self-check -------------------------------------------------------------------------

def _uniformity_items(prefix, samples, pvalue=stattests.ks_pvalue):
    """Kolmogorov-Smirnov by default: p-values may sit on 1, which the
    Anderson-Darling statistic does not accept."""
    return [
        _item(f"{prefix} {name} uniform", p, SELFCHECK_LEVEL, p > SELFCHECK_LEVEL)
        for (name, p) in ((name, float(pvalue(u))) for (name, u) in samples.items())
    ]


def selfcheck_report(seed, table, n_reps=500, T=50, inject_dependence=False, workers=1):
    """Reduced-scale property suite; `table` is the Hoeffding null for the
    Bernoulli lag-1 test (n = table.n + 1 trials).  Posterior predictive
    p-values pass when uniformity is rejected."""
    n_bb = table.n + 1
    items = []

    log.info(f"Self-consistency (Normal-InverseGamma, {n_reps} replicates)...")
    run = simharness.self_consistency_run("nig", nig.weak_prior(), n_reps, seed, n=20, workers=workers)
    items += _uniformity_items("nig u-values", run.uvalues, stattests.ad_test)
    items += _uniformity_items("nig", run.pvalues)

    log.info(f"Self-consistency (Beta-Bernoulli, {n_reps} replicates)...")
    run = simharness.self_consistency_run(
        "bernoulli", bernoulli.PRIORS["uniform"], n_reps, seed + 1, n=n_bb, workers=workers
    )
    items += _uniformity_items("bernoulli u-values", run.uvalues, stattests.ad_test)
    items += _uniformity_items("bernoulli", run.pvalues)

    log.info(f"External covariate null ({n_reps} replicates, dependence injected: {inject_dependence})...")
    p = simharness.external_null_run(
        n_reps, seed + 2, n=n_bb, inject_dependence=inject_dependence, workers=workers
    )
    d = stattests.ks_distance(p)
    tol = diagonal_tolerance(p.size)
    items.append(_item("external covariate p_mann_whitney uniform", d, tol, d < tol))

    log.info(f"Combiner calibration ({n_reps} datasets, T={T})...")
    calib = simharness.combiner_calibration_run(
        n_reps, T, SELFCHECK_ALPHAS, seed + 3, n=n_bb, table=table, workers=workers
    )
    for (name, rates) in calib.rates.items():
        for (alpha, rate) in rates.items():
            items.append(
                _item(
                    f"{name} combined level {alpha}",
                    rate,
                    alpha,
                    calib.within_bounds(name, alpha),
                    standard_error=calib.standard_error(alpha),
                )
            )

    ppc_reps = max(n_reps, PPC_REPS)
    log.info(f"Posterior predictive contrast ({ppc_reps} replicates)...")
    for (kind, prior, n, stat) in (
        ("nig", nig.weak_prior(), PPC_NIG_N, "ppc_min"),
        ("bernoulli", bernoulli.PRIORS["uniform"], n_bb, "ppc_switch"),
    ):
        p = simharness.ppc_calibration_run(kind, prior, ppc_reps, seed + 4, n=n, workers=workers)
        ks = stattests.ks_pvalue(p)
        items.append(_item(f"{kind} {stat} non-uniform", ks, SELFCHECK_LEVEL, ks < SELFCHECK_LEVEL))

    failed = [item["name"] for item in items if not item["passed"]]
    for name in failed:
        log.warning(f"Property failed: {name}")
    summary = {
        "example": "selfcheck",
        "seed": seed,
        "replicates": n_reps,
        "inject_dependence": inject_dependence,
        "properties": items,
        "failed": failed,
        "passed": not failed,
    }
    return Report(summary=summary, records=items)
