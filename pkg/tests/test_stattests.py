import math

import numpy as np
import pytest
from scipy import stats as sps

import stattests
from errors import ApproximationWarning
from errors import DomainError
from errors import TieWarning
from stattests import HoeffdingNullTable


def test_p_extreme():
    assert stattests.p_extreme(0.3) == pytest.approx(0.6)
    assert stattests.p_extreme(0.5) == 1.0
    np.testing.assert_allclose(stattests.p_extreme(np.array([0.1, 0.9])), [0.2, 0.2])
    with pytest.raises(DomainError):
        stattests.p_extreme(0.0)


def test_ad_statistic_single_point():
    # n = 1: A^2 = -1 - (log u + log(1 - u))
    assert stattests.ad_statistic(np.array([0.5])) == pytest.approx(2 * np.log(2) - 1)


def test_ad_statistic_rows_match_vectors(rng):
    u = rng.uniform(size=(4, 30))
    rows = stattests.ad_statistic(u)
    assert rows.shape == (4,)
    for (row, a2) in zip(u, rows):
        assert stattests.ad_statistic(row) == pytest.approx(a2)


@pytest.mark.parametrize(
    "a2, p",
    [
        (2.492, 0.05),
        (3.857, 0.01),
        (1.933, 0.10),
    ],
)
def test_ad_asymptotic_critical_values(a2, p):
    assert stattests.ad_pvalue(a2, n=100) == pytest.approx(p, abs=1e-3)


def test_ad_small_n():
    with pytest.warns(ApproximationWarning):
        stattests.ad_pvalue(1.0, n=5, method="asymptotic")
    table = stattests.build_ad_null(5, J=2000, seed=1)
    assert table.stats.size == 2000
    p = stattests.ad_pvalue(1.0, n=5, method="montecarlo", table=table)
    assert 0 < p <= 1
    # huge statistic: only the add-one term remains
    assert stattests.ad_pvalue(1e6, n=5, table=table) == pytest.approx(1 / 2001)
    with pytest.raises(DomainError):
        stattests.ad_pvalue(1.0, n=5, method="bootstrap")


def test_ad_test_rejects_nonuniform(rng):
    assert stattests.ad_test(rng.uniform(size=200) ** 3) < 1e-6
    assert stattests.ad_test(rng.uniform(size=200)) > 1e-4


def test_hoeffding_perfect_dependence():
    x = np.arange(1.0, 21.0)
    assert stattests.hoeffding_statistic(x, x) == pytest.approx(1 / 30)
    assert stattests.hoeffding_statistic(x[:5], x[:5]) == pytest.approx(1 / 30)


def test_hoeffding_rows_match_vectors(rng):
    x = rng.uniform(size=(3, 12))
    y = rng.uniform(size=(3, 12))
    rows = stattests.hoeffding_statistic(x, y)
    for (xi, yi, d) in zip(x, y, rows):
        assert stattests.hoeffding_statistic(xi, yi) == pytest.approx(d)
        assert d <= 1 / 30


def test_hoeffding_domain():
    with pytest.raises(DomainError):
        stattests.hoeffding_statistic(np.arange(4.0), np.arange(4.0))
    with pytest.raises(DomainError):
        stattests.hoeffding_statistic(np.ones(6), np.arange(6.0))
    with pytest.raises(DomainError):
        stattests.hoeffding_statistic(np.arange(6.0), np.arange(5.0))
    with pytest.warns(TieWarning):
        stattests.hoeffding_statistic(np.array([1.0, 1.0, 2.0, 3.0, 4.0, 5.0]), np.arange(6.0))


def test_right_tail_pvalue():
    table = HoeffdingNullTable(5, 3, 0, np.array([0.1, 0.2, 0.3]))
    assert stattests.right_tail_pvalue(0.2, table) == 0.75
    assert stattests.right_tail_pvalue(0.35, table) == 0.25
    assert stattests.right_tail_pvalue(0.0, table) == 1.0
    np.testing.assert_allclose(stattests.right_tail_pvalue(np.array([0.2, 0.35]), table), [0.75, 0.25])
    assert stattests.hoeffding_pvalue(0.3, table) == 0.5


def test_null_table_must_be_sorted():
    with pytest.raises(DomainError):
        HoeffdingNullTable(5, 2, 0, np.array([0.2, 0.1]))
    with pytest.raises(DomainError):
        HoeffdingNullTable(4, 1, 0, np.array([0.1]))


def test_hoeffding_null_is_reproducible():
    a = stattests.build_hoeffding_null(8, J=1500, seed=1)
    b = stattests.build_hoeffding_null(8, J=1500, seed=1, workers=2)
    c = stattests.build_hoeffding_null(8, J=1500, seed=2)
    assert a.stats.size == 1500
    assert np.all(np.diff(a.stats) >= 0)
    np.testing.assert_array_equal(a.stats, b.stats)
    assert not np.array_equal(a.stats, c.stats)
    with pytest.raises(DomainError):
        stattests.build_hoeffding_null(8, J=999)


def test_hoeffding_test(hoeffding_tables, rng):
    table = hoeffding_tables(30)
    x = rng.uniform(size=30)
    assert stattests.hoeffding_test(x, x ** 2, table) == pytest.approx(1 / 2001)
    assert stattests.hoeffding_test(x, rng.uniform(size=30), table) > 1 / 2001
    with pytest.raises(DomainError):
        stattests.hoeffding_test(x[:20], x[:20], table)


def test_mann_whitney_exact():
    values = np.arange(1, 9) / 10
    group = np.array([True] * 4 + [False] * 4)
    # complete separation of 4 vs 4: 2 / C(8, 4)
    assert stattests.mann_whitney_p(values, group) == pytest.approx(2 / 70)
    with pytest.raises(DomainError):
        stattests.mann_whitney_p(values, np.ones(8, dtype=bool))


def test_kruskal_wallis_matches_scipy(rng):
    values = rng.uniform(size=30)
    group = np.repeat([0, 1, 2], 10)
    expected = sps.kruskal(values[:10], values[10:20], values[20:]).pvalue
    assert stattests.kruskal_wallis_p(values, group) == pytest.approx(expected)
    with pytest.raises(DomainError):
        stattests.kruskal_wallis_p(values, np.zeros(30))


def test_ks():
    grid = np.arange(1, 1000) / 1000
    assert stattests.ks_distance(grid) < 0.002
    assert stattests.ks_pvalue(grid) > 0.99
    assert stattests.ks_pvalue(grid ** 2) < 1e-6


def test_p_extreme_is_symmetric():
    u = np.arange(1, 1024) / 1024
    np.testing.assert_array_equal(stattests.p_extreme(u), stattests.p_extreme(1 - u))


def test_ad_statistic_worked_example():
    assert stattests.ad_statistic(np.array([0.1, 0.5, 0.9])) == pytest.approx(0.272553, abs=1e-6)


def _ad_by_hand(u):
    ordered = sorted(u)
    n = len(ordered)
    total = 0.0
    for i in range(1, n + 1):
        total += (2 * i - 1) * (math.log(ordered[i - 1]) + math.log(1 - ordered[n - i]))
    return -n - total / n


def test_ad_statistic_matches_order_statistic_formula(rng):
    for n in rng.integers(1, 200, size=100):
        u = rng.uniform(size=n)
        np.testing.assert_allclose(stattests.ad_statistic(u), _ad_by_hand(u), rtol=0, atol=1e-10)


def test_ad_statistic_is_permutation_invariant(rng):
    u = rng.uniform(size=40)
    a2 = stattests.ad_statistic(u)
    assert a2 >= 0
    assert stattests.ad_statistic(rng.permutation(u)) == pytest.approx(a2)


def test_hoeffding_reversed_margin():
    x = np.arange(1.0, 11.0)
    comonotone = stattests.hoeffding_statistic(x, x)
    assert stattests.hoeffding_statistic(x, x[::-1]) == pytest.approx(comonotone)
    assert comonotone == pytest.approx(1 / 30)


def test_hoeffding_is_rank_based(rng):
    x = rng.uniform(size=25)
    y = x + rng.normal(scale=0.3, size=25)
    d = stattests.hoeffding_statistic(x, y)
    assert stattests.hoeffding_statistic(np.exp(x), y ** 3) == pytest.approx(d)
    assert stattests.hoeffding_statistic(x, -y) == pytest.approx(d)


def test_hoeffding_pvalue_is_nonincreasing(hoeffding_tables):
    table = hoeffding_tables(20)
    d = np.linspace(-0.02, 1 / 30, 400)
    p = stattests.hoeffding_pvalue(d, table)
    assert np.all(np.diff(p) <= 0)
    assert p[0] == 1.0
    assert p[-1] == pytest.approx(1 / 2001)


def test_mann_whitney_worked_examples():
    group = np.array([False, False, True, True])
    assert stattests.mann_whitney_p(np.array([1.0, 2.0, 3.0, 4.0]), group) == pytest.approx(1 / 3)
    assert stattests.mann_whitney_p(np.array([1.0, 2.0]), np.array([False, True])) == pytest.approx(1.0)


def test_mann_whitney_exact_agrees_with_normal_approximation(rng):
    group = np.repeat([True, False], 8)
    for _ in range(50):
        values = rng.uniform(size=16)
        exact = stattests.mann_whitney_p(values, group)
        normal = sps.mannwhitneyu(
            values[group], values[~group], alternative="two-sided", method="asymptotic"
        ).pvalue
        assert exact == pytest.approx(normal, abs=0.02)


def test_kruskal_wallis_worked_examples():
    values = np.array([1.0, 2.0, 3.0, 4.0])
    assert stattests.kruskal_wallis_p(values, np.array(list("AABB"))) == pytest.approx(0.1213, abs=1e-4)
    assert stattests.kruskal_wallis_p(np.array([1.0, 2.0]), np.array(list("AB"))) == pytest.approx(0.3173, abs=1e-4)


def _null_pvalues(name, rng, hoeffding_tables, reps=2000):
    if name == "p_extreme":
        return stattests.p_extreme(rng.uniform(size=reps))
    if name == "anderson_darling":
        return stattests.ad_test(rng.uniform(size=(reps, 66)))
    if name == "hoeffding":
        table = hoeffding_tables(30, J=20_000)
        return stattests.hoeffding_test(rng.uniform(size=(reps, 30)), rng.uniform(size=(reps, 30)), table)
    if name == "mann_whitney":
        return np.array([
            stattests.mann_whitney_p(rng.uniform(size=100), rng.permutation(np.repeat([True, False], 50)))
            for _ in range(reps)
        ])
    return np.array([
        stattests.kruskal_wallis_p(rng.uniform(size=30), rng.permutation(np.repeat([0, 1, 2], 10)))
        for _ in range(reps)
    ])


@pytest.mark.parametrize("name", ["p_extreme", "anderson_darling", "hoeffding", "mann_whitney", "kruskal_wallis"])
def test_null_pvalues_are_uniform(name, rng, hoeffding_tables):
    p = _null_pvalues(name, rng, hoeffding_tables)
    assert np.all((p >= 0) & (p <= 1))
    assert stattests.ks_distance(p) < 0.05


@pytest.mark.slow
def test_hoeffding_null_calibration_at_full_table_size(rng):
    table = stattests.build_hoeffding_null(30, J=100_000, seed=0)
    reps = 20_000
    p = stattests.hoeffding_test(rng.uniform(size=(reps, 30)), rng.uniform(size=(reps, 30)), table)
    assert stattests.ks_distance(p) < 0.02
