#!/usr/bin/env python


import logging
import os
import sqlite3
from contextlib import contextmanager

from diskcache import Cache
from diskcache import Timeout
from retrying import retry

import stattests
from errors import DomainError


log = logging.getLogger(__name__)


DEFAULT_CACHE_DIR = "upc-cache"


def cache_dir(override=None):
    return override or os.environ.get("UPC_CACHE_DIR", default=DEFAULT_CACHE_DIR)


def default_workers():
    return int(os.environ.get("UPC_WORKERS", default=os.cpu_count() or 1))


@contextmanager
def open_cache(directory=None):
    path = cache_dir(directory)
    log.debug(f"Using null-table cache at: {path}")
    try:
        with Cache(path) as cache:
            yield cache
    except (sqlite3.Error, OSError) as e:
        raise DomainError(f"cannot use the null-table cache at {path}: {e}") from e


def _is_timeout(exc):
    return isinstance(exc, Timeout)


# Several worker processes may share one cache directory
@retry(stop_max_attempt_number=3, wait_fixed=500, retry_on_exception=_is_timeout)
def _get(cache, key):
    return cache.get(key)


@retry(stop_max_attempt_number=3, wait_fixed=500, retry_on_exception=_is_timeout)
def _set(cache, key, value):
    cache.set(key, value)


def table_key(n, J, seed):
    return ("hoeffding", int(n), int(J), int(seed))


def is_cached(n, J, seed, directory=None):
    with open_cache(directory) as cache:
        return table_key(n, J, seed) in cache


def hoeffding_table(n, J=stattests.DEFAULT_NULL_SIZE, seed=0, directory=None, workers=1):
    """Load the (n, J, seed) null table, building and storing it on a miss."""
    key = table_key(n, J, seed)
    with open_cache(directory) as cache:
        table = _get(cache, key)
        if table is not None:
            log.debug(f"Cache hit for {key}")
            return table
        table = stattests.build_hoeffding_null(n, J, seed, workers=workers)
        _set(cache, key, table)
        log.info(f"Stored {key} in {cache_dir(directory)}")
        return table


def hoeffding_tables(sizes, J=stattests.DEFAULT_NULL_SIZE, seed=0, directory=None, workers=1):
    return {
        int(n): hoeffding_table(n, J, seed, directory=directory, workers=workers)
        for n in sorted(set(sizes))
    }
