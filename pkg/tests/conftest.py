import numpy as np
import pytest

import stattests


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def hoeffding_tables():
    """Small Hoeffding nulls, built once per session."""
    cache = {}

    def get(n, J=2000, seed=0):
        if (n, J, seed) not in cache:
            cache[(n, J, seed)] = stattests.build_hoeffding_null(n, J, seed)
        return cache[(n, J, seed)]

    return get


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setenv("UPC_CACHE_DIR", str(path))
    return path
