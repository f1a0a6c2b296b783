#!/usr/bin/env python


import enum
import logging
import os
from pathlib import Path

import click
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError

import ar1
import bernoulli
import checks
import conversion
import nig
import simharness
import stattests
import store
from aggregate import PROCEDURES
from errors import DomainError
from errors import UpcError
from mcmc import McmcConfig


log = logging.getLogger(__name__)


EXIT_PROPERTY_FAILURE = 1
EXIT_INPUT_ERROR = 2


class OutputFormat(str, enum.Enum):
    CSV = "csv"
    JSON = "json"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 0
    draws: int = Field(1, ge=1)
    output_dir: Path
    format: OutputFormat = OutputFormat.JSON

    def prepare(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.output_dir, os.W_OK):
            raise DomainError(f"output directory {self.output_dir} is not writable")
        return self.output_dir


def write_report(report: checks.Report, config: RunConfig, save_draws=0):
    out = config.prepare()
    if config.format is OutputFormat.JSON:
        conversion.write_json(report.summary, out / "aggregate.json")
    else:
        conversion.write_records_csv(report.csv_records(), out / "aggregate.csv")
    if report.tilted:
        conversion.write_tilted_csv(report.tilted, out / "tilted_cdf.csv")
    if report.densities:
        conversion.write_density_csv(report.densities, out / "densities.csv")
    if save_draws and report.drawset is not None:
        conversion.write_udrawset_csv(report.drawset.head(save_draws), out / "udraws.csv")
    log.info(f"Wrote results to {out}")


class UpcCli(click.Group):
    """Maps library and input errors to exit code 2."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (UpcError, ValidationError, OSError) as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_INPUT_ERROR)


def _options(*options):
    def decorate(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorate


def output_options(default_out):
    return _options(
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--out", type=click.Path(file_okay=False), default=default_out, show_default=True),
        click.option("--format", "fmt", type=click.Choice([f.value for f in OutputFormat]), default="json", show_default=True),
    )


table_options = _options(
    click.option("--j", "J", type=int, default=stattests.DEFAULT_NULL_SIZE, show_default=True, help="Hoeffding null-table size."),
    click.option("--table-seed", type=int, default=0, show_default=True),
    click.option("--cache-dir", type=click.Path(file_okay=False), default=None, help="Defaults to $UPC_CACHE_DIR or ./upc-cache."),
    click.option("--workers", type=int, default=store.default_workers, help="Defaults to $UPC_WORKERS or the CPU count."),
)

adjust_option = click.option(
    "--adjust", type=click.Choice(PROCEDURES), default="holm", show_default=True,
    help="Multiplicity adjustment across the tests of one dataset.",
)

save_draws_option = click.option(
    "--save-draws", type=click.IntRange(min=0), default=0, help="Export the first K u-draws as CSV.",
)


@click.group(cls=UpcCli)
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
def cli(verbose):
    """Uniform parametrization checks for Bayesian models."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)


@cli.command()
@click.option("--prior", type=click.Choice(sorted(nig.PRIORS)), default="weak", show_default=True)
@click.option("--draws", type=int, default=50_000, show_default=True)
@click.option("--data", "data_path", type=click.Path(dir_okay=False), default=None, help="CSV with a `y` column; defaults to the bundled Newcomb data.")
@click.option("--synthetic", is_flag=True, help="Replace the data by matched-moment normal data.")
@save_draws_option
@adjust_option
@output_options("out/newcomb")
def newcomb(prior, draws, data_path, synthetic, save_draws, adjust, seed, out, fmt):
    """Normal-InverseGamma checks of the speed-of-light data."""
    config = RunConfig(seed=seed, draws=draws, output_dir=out, format=fmt)
    path = data_path or conversion.bundled("newcomb.csv")
    data = conversion.read_dataset(path)
    report = checks.newcomb_report(
        data, prior, draws, seed, dataset_id=Path(path).stem, synthetic=synthetic, procedure=adjust,
    )
    write_report(report, config, save_draws)


@cli.command("bernoulli")
@click.option("--prior", type=click.Choice(sorted(bernoulli.PRIORS)), default="uniform", show_default=True)
@click.option("--draws", type=int, default=10_000, show_default=True)
@click.option("--data", "data_path", type=click.Path(dir_okay=False), default=None, help="CSV with a 0/1 `y` column; defaults to the bundled trials.")
@save_draws_option
@adjust_option
@table_options
@output_options("out/bernoulli")
def bernoulli_cmd(prior, draws, data_path, save_draws, adjust, J, table_seed, cache_dir, workers, seed, out, fmt):
    """Beta-Bernoulli checks, including lag-1 independence of the trials."""
    config = RunConfig(seed=seed, draws=draws, output_dir=out, format=fmt)
    path = data_path or conversion.bundled("bernoulli_trials.csv")
    data = bernoulli.binary(conversion.read_dataset(path))
    table = store.hoeffding_table(data.size - 1, J, table_seed, directory=cache_dir, workers=workers)
    report = checks.bernoulli_report(data, prior, draws, seed, table, dataset_id=Path(path).stem, procedure=adjust)
    write_report(report, config, save_draws)


@cli.command("ar1-fit")
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True)
@click.option("--phi-prior", type=float, nargs=4, default=(0.0, 0.4, -0.5, 0.5), show_default=True, help="M S LO HI")
@click.option("--sigma-prior", type=float, nargs=4, default=(1.5, 0.4, 1.0, 2.0), show_default=True, help="M S LO HI")
@click.option("--mcmc-iters", type=int, default=2000, show_default=True)
@click.option("--mcmc-burnin", type=int, default=1000, show_default=True)
@click.option("--mcmc-thin", type=int, default=1, show_default=True)
@save_draws_option
@adjust_option
@table_options
@output_options("out/ar1")
def ar1_fit(data_path, phi_prior, sigma_prior, mcmc_iters, mcmc_burnin, mcmc_thin, save_draws, adjust, J, table_seed, cache_dir, workers, seed, out, fmt):
    """AR(1) checks of a series, sampled by adaptive Metropolis."""
    mcmc = McmcConfig(iterations=mcmc_iters, burn_in=mcmc_burnin, thin=mcmc_thin, seed=seed)
    config = RunConfig(seed=seed, draws=mcmc.kept, output_dir=out, format=fmt)
    y = conversion.read_dataset(data_path)
    model = checks.ar1_model(
        y.size,
        prior_phi=ar1.TruncNormal(**dict(zip(("m", "s", "lo", "hi"), phi_prior))),
        prior_sigma=ar1.TruncNormal(**dict(zip(("m", "s", "lo", "hi"), sigma_prior))),
    )
    tables = store.hoeffding_tables(ar1.table_sizes(y.size), J, table_seed, directory=cache_dir, workers=workers)
    report = checks.ar1_fit_report(y, model, mcmc, tables, dataset_id=Path(data_path).stem, procedure=adjust)
    write_report(report, config, save_draws)


@cli.command("ar1-scenario")
@click.option("--id", "scenario_id", type=click.IntRange(1, 5), required=True)
@click.option("--datasets", type=int, default=1000, show_default=True)
@click.option("--n", "n", type=int, default=500, show_default=True, help="Series length.")
@click.option("--mcmc-burnin", type=int, default=1000, show_default=True)
@table_options
@output_options("out/ar1-scenario")
def ar1_scenario(scenario_id, datasets, n, mcmc_burnin, J, table_seed, cache_dir, workers, seed, out, fmt):
    """Expected p-value CDFs of the AR(1) tests under one study scenario."""
    config = RunConfig(seed=seed, draws=datasets, output_dir=out, format=fmt)
    scn = simharness.scenario(scenario_id, n=n)
    mcmc = McmcConfig(iterations=mcmc_burnin + 1, burn_in=mcmc_burnin, seed=seed)
    tables = store.hoeffding_tables(ar1.table_sizes(n), J, table_seed, directory=cache_dir, workers=workers)
    run = simharness.run_scenario(scn, datasets, mcmc, seed, tables, workers=workers)
    report = checks.scenario_report(run)
    write_report(report, config)
    conversion.write_expected_cdfs_csv(run.cdfs, config.output_dir / "expected_cdfs.csv")
    if not report.summary["passed"]:
        log.warning(f"Scenario {scenario_id} failed its acceptance properties")
        click.get_current_context().exit(EXIT_PROPERTY_FAILURE)


@cli.command("calibrate-hoeffding")
@click.option("--n", "sizes", type=int, multiple=True, required=True, help="Sample size; repeat for several tables.")
@click.option("--j", "J", type=int, default=stattests.DEFAULT_NULL_SIZE, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=store.default_workers)
@click.option("--export", type=click.Path(file_okay=False), default=None, help="Also write each table as CSV here.")
def calibrate_hoeffding(sizes, J, seed, cache_dir, workers, export):
    """Build and cache Hoeffding null tables; cached tables are left alone."""
    for n in sorted(set(sizes)):
        if store.is_cached(n, J, seed, directory=cache_dir):
            log.info(f"Table (n={n}, J={J}, seed={seed}) already cached, skipping")
            if not export:
                continue
        table = store.hoeffding_table(n, J, seed, directory=cache_dir, workers=workers)
        if export:
            Path(export).mkdir(parents=True, exist_ok=True)
            path = Path(export) / f"hoeffding_n{n}_J{J}_seed{seed}.csv"
            conversion.write_null_table_csv(table, path)
            log.info(f"Exported {path}")


@cli.command()
@click.option("--reps", type=int, default=500, show_default=True, help="Replicates per property.")
@click.option("--draws", type=int, default=50, show_default=True, help="Posterior draws per dataset for the combiner check.")
@click.option("--inject-dependence", is_flag=True, help="Make the external covariate equal to Y; the suite must then fail.")
@click.option("--j", "J", type=int, default=20_000, show_default=True)
@click.option("--table-seed", type=int, default=0, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=store.default_workers)
@output_options("out/selfcheck")
def selfcheck(reps, draws, inject_dependence, J, table_seed, cache_dir, workers, seed, out, fmt):
    """Reduced-scale property suite: self-consistency, external covariate
    independence, combiner calibration and the posterior predictive contrast."""
    config = RunConfig(seed=seed, draws=draws, output_dir=out, format=fmt)
    table = store.hoeffding_table(checks.SELFCHECK_TRIALS - 1, J, table_seed, directory=cache_dir, workers=workers)
    report = checks.selfcheck_report(
        seed, table, n_reps=reps, T=draws, inject_dependence=inject_dependence, workers=workers,
    )
    write_report(report, config)
    if not report.summary["passed"]:
        click.echo(f"Failed: {', '.join(report.summary['failed'])}", err=True)
        click.get_current_context().exit(EXIT_PROPERTY_FAILURE)


if __name__ == "__main__":
    cli()
