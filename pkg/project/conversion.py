import csv
import enum
import json
import math
from pathlib import Path

import numpy as np

from errors import DomainError
from errors import SchemaMismatch
from stattests import HoeffdingNullTable
from stattests import NullTable
from uvalues import Provenance
from uvalues import Role
from uvalues import UDrawSet
from uvalues import ULabel


DATA_DIR = Path(__file__).parent / "data"
NULL_TABLE_HEADER = ["n", "J", "seed", "statistic_count"]


def fmt(x):
    """Floats are written with 17 significant digits: exact and reproducible."""
    return format(float(x), ".17g")


def bundled(name):
    return DATA_DIR / name


# -- datasets -------------------------------------------------------------------

def read_dataset(path):
    """The `y` column of a CSV file as a float vector."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "y" not in reader.fieldnames:
            raise SchemaMismatch(f"{path} has no 'y' column")
        raw = [row["y"] for row in reader]
    try:
        values = np.array([float(v) for v in raw])
    except ValueError as e:
        raise DomainError(f"{path}: non-numeric value in 'y' ({e})")
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{path}: 'y' must be finite")
    return values


def write_dataset(values, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["y"])
        writer.writerows([fmt(v)] for v in values)


# -- u-draws and curves ---------------------------------------------------------

def _strata_keys(labels):
    return sorted({k for lab in labels for k in lab.strata})


def write_udrawset_csv(drawset: UDrawSet, path):
    keys = _strata_keys(drawset.labels)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["draw", "role", "name", "index", "u"] + [f"strata_{k}" for k in keys])
        for t in range(drawset.T):
            for (lab, u) in zip(drawset.labels, drawset.values[t]):
                writer.writerow(
                    [t, lab.role.value, lab.name, lab.index, fmt(u)]
                    + [lab.strata.get(k, "") for k in keys]
                )


def _stratum(value):
    try:
        return int(value)
    except ValueError:
        try:
            return float(value)
        except ValueError:
            return value


def read_udrawset_csv(path, dataset_id=None):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        strata_cols = [c for c in reader.fieldnames or [] if c.startswith("strata_")]
    if not rows:
        raise DomainError(f"{path} holds no draws")
    labels = []
    columns = {}
    for row in rows:
        strata = {c[len("strata_"):]: _stratum(row[c]) for c in strata_cols if row[c] != ""}
        label = ULabel(Role(row["role"]), row["name"], int(row["index"]), strata)
        if label.key not in columns:
            columns[label.key] = len(labels)
            labels.append(label)
    T = max(int(row["draw"]) for row in rows) + 1
    values = np.full((T, len(labels)), np.nan)
    for row in rows:
        key = (Role(row["role"]), row["name"], int(row["index"]))
        values[int(row["draw"]), columns[key]] = float(row["u"])
    if np.any(np.isnan(values)):
        raise SchemaMismatch(f"{path}: every draw must carry every label")
    return UDrawSet(
        dataset_id=dataset_id or Path(path).stem,
        labels=tuple(labels),
        values=values,
        provenance=Provenance(sampler="csv"),
    )


def write_tilted_csv(curves, path):
    """`curves` is a sequence of (draw, TiltedCdfCurve)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["u", "tilted_value", "draw"])
        for (draw, curve) in curves:
            for (u, v) in zip(curve.grid, curve.values):
                writer.writerow([fmt(u), fmt(v), draw])


def write_density_csv(densities, path):
    """`densities` maps a name to (grid, density values)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["name", "u", "density"])
        for (name, (grid, values)) in densities.items():
            writer.writerows([name, fmt(u), fmt(v)] for (u, v) in zip(grid, values))


def write_expected_cdfs_csv(cdfs, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["test", "u", "cdf"])
        for (name, cdf) in cdfs.items():
            for (u, c) in zip(cdf.grid, cdf.cdf_values):
                writer.writerow([name, fmt(u), fmt(c)])


# -- null tables ---------------------------------------------------------------------

def write_null_table_csv(table: NullTable, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(NULL_TABLE_HEADER)
        writer.writerow([table.n, table.J, table.seed, table.stats.size])
        writer.writerows([fmt(s)] for s in table.stats)


def read_null_table_csv(path, statistic="hoeffding"):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != NULL_TABLE_HEADER:
            raise SchemaMismatch(f"{path}: expected header {NULL_TABLE_HEADER}, got {header}")
        (n, J, seed, count) = (int(v) for v in next(reader))
        stats = np.array([float(row[0]) for row in reader])
    if stats.size != count:
        raise SchemaMismatch(f"{path}: header promises {count} statistics, found {stats.size}")
    if statistic == "hoeffding":
        return HoeffdingNullTable(n, J, seed, stats)
    return NullTable(statistic, n, J, seed, stats)


# -- result records -------------------------------------------------------------

def plain(obj):
    """numpy scalars/arrays, enums and tuples as JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for (k, v) in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [plain(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj, indent, level):
    """json.dumps writes floats as their shortest repr; the output format fixes
    every float at 17 significant digits, so floats are formatted here."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for (k, v) in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise DomainError(f"cannot write non-finite value {obj} to JSON")
        return fmt(obj)
    return json.dumps(obj)


def dumps(obj, indent=2):
    """Deterministic JSON: insertion-ordered keys, 17-digit floats."""
    return _encode(plain(obj), indent, 0) + "\n"


def write_json(obj, path):
    Path(path).write_text(dumps(obj))


def write_records_csv(records, path):
    columns = []
    for rec in records:
        columns.extend(k for k in rec if k not in columns)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for rec in plain(records):
            writer.writerow([_cell(rec.get(c)) for c in columns])


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return fmt(value)
    if isinstance(value, list):
        return ";".join(_cell(v) for v in value)
    return value
