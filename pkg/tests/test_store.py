import numpy as np
import pytest

import store
from errors import DomainError
from stattests import HoeffdingNullTable


def test_cache_dir_from_environment(cache_dir):
    assert store.cache_dir() == str(cache_dir)
    assert store.cache_dir("elsewhere") == "elsewhere"


def test_default_workers(monkeypatch):
    monkeypatch.setenv("UPC_WORKERS", "3")
    assert store.default_workers() == 3


def test_table_is_built_once(cache_dir, monkeypatch):
    assert not store.is_cached(8, 1000, 0)
    table = store.hoeffding_table(8, J=1000, seed=0)
    assert isinstance(table, HoeffdingNullTable)
    assert store.is_cached(8, 1000, 0)
    assert not store.is_cached(8, 1000, 1)

    def fail(*args, **kwargs):
        raise AssertionError("table should come from the cache")

    monkeypatch.setattr(store.stattests, "build_hoeffding_null", fail)
    again = store.hoeffding_table(8, J=1000, seed=0)
    np.testing.assert_array_equal(table.stats, again.stats)
    assert (again.n, again.J, again.seed) == (8, 1000, 0)


def test_tables_by_size(tmp_path):
    tables = store.hoeffding_tables([9, 8, 9], J=1000, directory=str(tmp_path))
    assert list(tables) == [8, 9]
    assert tables[9].n == 9
    assert store.is_cached(9, 1000, 0, directory=str(tmp_path))


def test_unusable_cache_is_a_domain_error(tmp_path):
    blocker = tmp_path / "not-a-directory"
    blocker.write_text("")
    with pytest.raises(DomainError):
        store.is_cached(8, 1000, 0, directory=str(blocker))
