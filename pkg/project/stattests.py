"""Calibrated tests on one draw of u-values.

Each test returns a p-value that is Uniform(0,1) when the u-values are i.i.d.
uniform.  The statistic functions accept a single sample (1-D) or a stack of
samples, one per posterior draw (2-D, one row per draw), and vectorize over
the rows.
"""

import functools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from cytoolz import partition_all
from scipy import stats as sps

from errors import ApproximationWarning
from errors import DomainError
from errors import TieWarning


log = logging.getLogger(__name__)


DEFAULT_NULL_SIZE = 100_000
AD_ASYMPTOTIC_MIN_N = 8
MW_EXACT_MAX_GROUP = 8
HOEFFDING_MIN_N = 5
TIE_JITTER = 1e-9

# Replicates per seeded chunk when building null tables.  Fixed, so the table
# does not depend on how many workers built it.
NULL_CHUNK = 1000

# Upper bound on the (rows, n, n) comparison cube held in memory at once.
_CUBE_BUDGET = 4_000_000


def check_pvalue(p):
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DomainError("p-values must be finite and lie in [0, 1]")
    return p


def _interior(u, what):
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise DomainError(f"{what} of an empty sample")
    if not np.all((u > 0) & (u < 1)):
        raise DomainError(f"{what} needs values strictly inside (0, 1); clamp first")
    return u


def _scalar_or_array(result, single):
    return float(result[0]) if single else result


def p_extreme(u):
    """2 min(u, 1 - u): small when a u-value sits in either tail."""
    u = _interior(u, "extremeness test")
    p = 2 * np.minimum(u, 1 - u)
    return float(p) if p.ndim == 0 else p


# -- Anderson-Darling --------------------------------------------------------

def ad_statistic(u):
    """A^2 against Uniform(0,1), per row."""
    u = _interior(u, "Anderson-Darling statistic")
    single = u.ndim == 1
    u = np.atleast_2d(u)
    n = u.shape[-1]
    ordered = np.sort(u, axis=-1)
    weights = 2 * np.arange(1, n + 1) - 1
    terms = np.log(ordered) + np.log1p(-ordered[:, ::-1])
    a2 = -n - (terms @ weights) / n
    return _scalar_or_array(a2, single)


def _ad_limit_cdf(z):
    """Limiting CDF of A^2 for a fully specified null (series fit of
    Marsaglia & Marsaglia 2004).  Returns (cdf, survival)."""
    shape = np.shape(z)
    z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    cdf = np.zeros_like(z)
    sf = np.ones_like(z)

    small = (z > 0) & (z < 2)
    zs = z[small]
    poly = 2.00012 + (
        0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * zs) * zs) * zs) * zs
    ) * zs
    cdf[small] = np.exp(-1.2337141 / zs) / np.sqrt(zs) * poly
    sf[small] = 1 - cdf[small]

    big = z >= 2
    zb = z[big]
    inner = np.exp(
        1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * zb) * zb) * zb) * zb) * zb
    )
    cdf[big] = np.exp(-inner)
    # 1 - exp(-x) without cancellation for the far tail
    sf[big] = -np.expm1(-inner)
    return (cdf.reshape(shape), np.clip(sf, 0.0, 1.0).reshape(shape))


@dataclass(frozen=True)
class NullTable:
    """Sorted Monte-Carlo sample of a statistic under independence/uniformity."""

    statistic: str
    n: int
    J: int
    seed: int
    stats: np.ndarray

    def __post_init__(self):
        stats = np.asarray(self.stats, dtype=float)
        if stats.shape != (self.J,):
            raise DomainError(f"table holds {stats.shape} statistics, expected {self.J}")
        if np.any(np.diff(stats) < 0):
            raise DomainError("null statistics must be sorted ascending")
        stats.setflags(write=False)
        object.__setattr__(self, "stats", stats)


class HoeffdingNullTable(NullTable):
    def __init__(self, n, J, seed, stats):
        if n < HOEFFDING_MIN_N:
            raise DomainError(f"Hoeffding statistic needs n >= {HOEFFDING_MIN_N}, got {n}")
        super().__init__("hoeffding", n, J, seed, stats)


def right_tail_pvalue(stat, table):
    """(1 + #{t_j >= stat}) / (J + 1): never zero, exact under the null."""
    stat = np.asarray(stat, dtype=float)
    below = np.searchsorted(table.stats, stat, side="left")
    p = (1 + table.J - below) / (table.J + 1)
    return float(p) if p.ndim == 0 else p


def _null_chunk(job):
    (statistic, n, seed, chunk_index, size) = job
    rng = np.random.default_rng([seed, chunk_index])
    if statistic == "hoeffding":
        x = rng.uniform(size=(size, n))
        y = rng.uniform(size=(size, n))
        return hoeffding_statistic(x, y)
    return ad_statistic(rng.uniform(size=(size, n)))


def _build_null(statistic, n, J, seed, workers):
    jobs = [
        (statistic, n, seed, c, len(chunk))
        for (c, chunk) in enumerate(partition_all(NULL_CHUNK, range(J)))
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as exe:
            pieces = list(exe.map(_null_chunk, jobs))
    else:
        pieces = [_null_chunk(job) for job in jobs]
    return np.sort(np.concatenate(pieces))


def build_ad_null(n, J=DEFAULT_NULL_SIZE, seed=0, workers=1):
    if n < 1 or J < 1:
        raise DomainError(f"invalid Anderson-Darling null size n={n}, J={J}")
    log.info(f"Building Anderson-Darling null table (n={n}, J={J}, seed={seed})...")
    return NullTable("anderson-darling", n, J, seed, _build_null("ad", n, J, seed, workers))


@functools.lru_cache(maxsize=16)
def _memo_ad_null(n, J, seed):
    return build_ad_null(n, J, seed)


def ad_pvalue(a2, n, method="auto", J=DEFAULT_NULL_SIZE, seed=0, table=None):
    """P-value of A^2 under a fully specified Uniform(0,1) null.

    method is "asymptotic" (limiting distribution), "montecarlo" (add-one
    estimate against J null samples of size n), or "auto": asymptotic for
    n >= 8, Monte Carlo below that.
    """
    a2 = np.asarray(a2, dtype=float)
    if np.any(a2 < 0) or not np.all(np.isfinite(a2)):
        raise DomainError("A^2 must be finite and nonnegative")
    if n < 1:
        raise DomainError(f"sample size must be positive, got {n}")
    if method == "auto":
        method = "asymptotic" if n >= AD_ASYMPTOTIC_MIN_N else "montecarlo"

    if method == "asymptotic":
        if n < AD_ASYMPTOTIC_MIN_N:
            warnings.warn(
                f"asymptotic Anderson-Darling p-value at n={n} is a rough approximation",
                ApproximationWarning,
            )
        (_, p) = _ad_limit_cdf(a2)
    elif method == "montecarlo":
        if J < 1:
            raise DomainError(f"Monte-Carlo null size must be positive, got J={J}")
        if table is None:
            table = _memo_ad_null(int(n), int(J), int(seed))
        elif table.n != n:
            raise DomainError(f"null table is for n={table.n}, statistic has n={n}")
        p = np.asarray(right_tail_pvalue(a2, table))
    else:
        raise DomainError(f"unknown Anderson-Darling p-value method: {method}")
    return float(p) if p.ndim == 0 else p


def ad_test(u, method="auto"):
    """Anderson-Darling uniformity p-value of each row of `u`."""
    u = np.asarray(u, dtype=float)
    return ad_pvalue(ad_statistic(u), u.shape[-1], method=method)


# -- Hoeffding ---------------------------------------------------------------

def _break_ties(x, rng):
    ordered = np.sort(x, axis=-1)
    if not np.any(np.diff(ordered, axis=-1) == 0):
        return x
    warnings.warn("ties in Hoeffding input broken by jitter", TieWarning)
    rng = rng if rng is not None else np.random.default_rng(0)
    return x + rng.uniform(-TIE_JITTER, TIE_JITTER, size=x.shape)


def _hoeffding_rows(x, y):
    n = x.shape[-1]
    order = np.argsort(x, axis=-1)
    # in x-order the x ranks are 1..n
    s = sps.rankdata(np.take_along_axis(y, order, axis=-1), axis=-1)
    r = np.arange(1, n + 1, dtype=float)
    below = np.tril(s[:, None, :] < s[:, :, None], k=-1)
    q = 1 + below.sum(axis=-1, dtype=float)

    d1 = np.sum((q - 1) * (q - 2), axis=-1)
    d2 = np.sum((r - 1) * (r - 2) * (s - 1) * (s - 2), axis=-1)
    d3 = np.sum((r - 2) * (s - 2) * (q - 1), axis=-1)
    return ((n - 2) * (n - 3) * d1 + d2 - 2 * (n - 2) * d3) / (
        n * (n - 1) * (n - 2) * (n - 3) * (n - 4)
    )


def hoeffding_statistic(x, y, rng=None):
    """Hoeffding's D from bivariate rank counts; bounded above by 1/30."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DomainError(f"paired samples differ in shape: {x.shape} vs {y.shape}")
    single = x.ndim == 1
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    n = x.shape[-1]
    if n < HOEFFDING_MIN_N:
        raise DomainError(f"Hoeffding statistic needs n >= {HOEFFDING_MIN_N}, got {n}")
    if np.any(np.ptp(x, axis=-1) == 0) or np.any(np.ptp(y, axis=-1) == 0):
        raise DomainError("Hoeffding statistic is undefined for a constant vector")
    x = _break_ties(x, rng)
    y = _break_ties(y, rng)

    rows = max(1, _CUBE_BUDGET // (n * n))
    d = np.concatenate(
        [
            _hoeffding_rows(x[batch], y[batch])
            for batch in map(list, partition_all(rows, range(x.shape[0])))
        ]
    )
    return _scalar_or_array(d, single)


def build_hoeffding_null(n, J=DEFAULT_NULL_SIZE, seed=0, workers=1):
    if n < HOEFFDING_MIN_N:
        raise DomainError(f"Hoeffding null table needs n >= {HOEFFDING_MIN_N}, got {n}")
    if J < 1000:
        raise DomainError(f"Hoeffding null table needs J >= 1000, got {J}")
    log.info(f"Building Hoeffding null table (n={n}, J={J}, seed={seed})...")
    stats = _build_null("hoeffding", n, J, seed, workers)
    return HoeffdingNullTable(n, J, seed, stats)


def hoeffding_pvalue(d, table):
    return right_tail_pvalue(d, table)


def hoeffding_test(x, y, table):
    """Independence p-value of each row pair, against an empirical null."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != table.n:
        raise DomainError(f"null table is for n={table.n}, samples have n={x.shape[-1]}")
    return hoeffding_pvalue(hoeffding_statistic(x, y), table)


# -- rank tests against covariates ---------------------------------------------

def mann_whitney_p(values, group):
    """Two-sided Mann-Whitney U p-value between the True and False groups."""
    values = np.asarray(values, dtype=float)
    group = np.asarray(group, dtype=bool)
    if values.shape != group.shape:
        raise DomainError("values and group labels differ in length")
    x = values[group]
    y = values[~group]
    if x.size == 0 or y.size == 0:
        raise DomainError("Mann-Whitney test needs both groups non-empty")
    small = max(x.size, y.size) <= MW_EXACT_MAX_GROUP
    untied = np.unique(values).size == values.size
    method = "exact" if small and untied else "asymptotic"
    if small and not untied:
        log.debug("Ties in a small Mann-Whitney sample, using the normal approximation")
    res = sps.mannwhitneyu(x, y, alternative="two-sided", use_continuity=True, method=method)
    return float(res.pvalue)


def kruskal_wallis_p(values, group):
    """Kruskal-Wallis H p-value (tie-corrected, chi-square with k-1 df)."""
    values = np.asarray(values, dtype=float)
    group = np.asarray(group)
    if values.shape != group.shape:
        raise DomainError("values and group labels differ in length")
    samples = [values[group == g] for g in np.unique(group)]
    if len(samples) < 2:
        raise DomainError("Kruskal-Wallis test needs at least two groups")
    if np.ptp(values) == 0:
        raise DomainError("Kruskal-Wallis test is undefined when all values are tied")
    return float(sps.kruskal(*samples).pvalue)


# -- distance to uniform ---------------------------------------------------------

def _unit_sample(values):
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise DomainError("distance to uniform of an empty sample")
    return values


def ks_distance(values):
    """sup |F(u) - u| over the jump points of the empirical CDF."""
    return float(sps.kstest(_unit_sample(values), "uniform").statistic)


def ks_pvalue(values):
    return float(sps.kstest(_unit_sample(values), "uniform").pvalue)
