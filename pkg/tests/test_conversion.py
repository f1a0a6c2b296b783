import json

import numpy as np
import pytest

import conversion
import stattests
from errors import DomainError
from errors import SchemaMismatch
from uvalues import Provenance
from uvalues import UDrawSet
from uvalues import data_label
from uvalues import param_label


def test_read_dataset(tmp_path):
    path = tmp_path / "y.csv"
    conversion.write_dataset([1.5, -2.0, 0.1], path)
    np.testing.assert_array_equal(conversion.read_dataset(path), [1.5, -2.0, 0.1])


def test_read_dataset_errors(tmp_path):
    missing = tmp_path / "x.csv"
    missing.write_text("x\n1\n2\n")
    with pytest.raises(SchemaMismatch):
        conversion.read_dataset(missing)
    bad = tmp_path / "bad.csv"
    bad.write_text("y\n1\nabc\n")
    with pytest.raises(DomainError):
        conversion.read_dataset(bad)
    infinite = tmp_path / "inf.csv"
    infinite.write_text("y\n1\ninf\n")
    with pytest.raises(DomainError):
        conversion.read_dataset(infinite)


def test_null_table_file_is_bit_exact(tmp_path):
    table = stattests.build_hoeffding_null(6, J=1000, seed=3)
    path = tmp_path / "null.csv"
    conversion.write_null_table_csv(table, path)
    loaded = conversion.read_null_table_csv(path)
    assert (loaded.n, loaded.J, loaded.seed) == (6, 1000, 3)
    np.testing.assert_array_equal(loaded.stats, table.stats)


def test_null_table_header_is_checked(tmp_path):
    path = tmp_path / "null.csv"
    path.write_text("n,J\n6,1000\n")
    with pytest.raises(SchemaMismatch):
        conversion.read_null_table_csv(path)
    path.write_text("n,J,seed,statistic_count\n6,3,0,3\n0.1\n0.2\n")
    with pytest.raises(SchemaMismatch):
        conversion.read_null_table_csv(path)


def test_udrawset_file(tmp_path):
    labels = (param_label("phi"), data_label("eps", 0, time=1), data_label("eps", 1, time=2))
    ds = UDrawSet("series", labels, np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 1 / 3]]), Provenance(sampler="test"))
    path = tmp_path / "draws.csv"
    conversion.write_udrawset_csv(ds, path)
    loaded = conversion.read_udrawset_csv(path)
    assert loaded.dataset_id == "draws"
    assert loaded.labels == ds.labels
    assert loaded.labels[2].strata == {"time": 2}
    np.testing.assert_array_equal(loaded.values, ds.values)


def test_dumps_is_deterministic():
    obj = {"b": 0.1, "a": [1, 2.5], "flag": np.bool_(True), "x": np.float64(1 / 3), "name": "weak"}
    text = conversion.dumps(obj)
    assert text == conversion.dumps(obj)
    # insertion order, not sorted keys
    assert text.index('"b"') < text.index('"a"')
    assert "0.33333333333333331" in text
    assert conversion.dumps([0.1]) == "[0.10000000000000001]\n"
    loaded = json.loads(text)
    assert loaded["x"] == 1 / 3
    assert loaded["flag"] is True
    assert loaded["a"] == [1, 2.5]


def test_dumps_rejects_non_finite():
    with pytest.raises(DomainError):
        conversion.dumps({"p": float("nan")})


def test_records_csv(tmp_path):
    records = [
        {"test_name": "p_mu", "p_star": 0.25, "adjusted_p": 0.5},
        {"test_name": "ppc_min", "method": "ppc", "p_star": 1e-5},
    ]
    path = tmp_path / "aggregate.csv"
    conversion.write_records_csv(records, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "test_name,p_star,adjusted_p,method"
    assert lines[1] == "p_mu,0.25,0.5,"
    assert lines[2].startswith("ppc_min,1.0000000000000001e-05,,ppc")
