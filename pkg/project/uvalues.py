"""U-vectors, their labels, empirical CDF helpers and the model contract.

A hypothesized model is written as (theta, Y) = g(U) with U i.i.d.
Uniform(0,1).  The first K coordinates are the parameter u-values, the rest
are the data u-values.  Posterior draws of U are stored as a `UDrawSet`: one
row per draw, with a single shared label vector.
"""

import enum
import logging
import math
from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
from dataclasses import field
from typing import Callable
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
from cytoolz import groupby

from errors import DomainError
from errors import SchemaMismatch


log = logging.getLogger(__name__)


DEFAULT_EPS = 1e-12
DEFAULT_GRID_POINTS = 512


class Role(str, enum.Enum):
    PARAMETER = "param"
    DATA = "data"


@dataclass(frozen=True)
class ULabel:
    role: Role
    name: str
    index: int = 0
    strata: Dict[str, object] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.index < 0:
            raise DomainError(f"label index must be nonnegative, got {self.index}")
        for (key, value) in self.strata.items():
            if isinstance(value, (int, float)) and not math.isfinite(value):
                raise DomainError(f"stratum {key}={value} is not finite")

    @property
    def key(self):
        return (self.role, self.name, self.index)


def param_label(name, index=0, **strata):
    return ULabel(Role.PARAMETER, name, index, strata)


def data_label(name, index, **strata):
    return ULabel(Role.DATA, name, index, strata)


def check_labels(labels):
    """Validate a label vector and return it as a tuple."""
    labels = tuple(labels)
    if not labels:
        raise DomainError("a u-vector needs at least one label")
    dupes = [k for (k, group) in groupby(lambda lab: lab.key, labels).items() if len(group) > 1]
    if dupes:
        raise SchemaMismatch(f"duplicate labels: {dupes}")
    return labels


@dataclass(frozen=True)
class UDraw:
    values: np.ndarray
    labels: Tuple[ULabel, ...]

    def __post_init__(self):
        labels = check_labels(self.labels)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != len(labels):
            raise DomainError(
                f"{values.shape} values do not match {len(labels)} labels"
            )
        if not np.all((values > 0) & (values < 1)):
            raise DomainError("u-values must lie in the open interval (0, 1)")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @property
    def D(self):
        return len(self.labels)


@dataclass(frozen=True)
class Provenance:
    sampler: str
    seed: Optional[int] = None
    burn_in: int = 0
    thinning: int = 1


@dataclass(frozen=True)
class UDrawSet:
    """T posterior draws of the u-vector given one dataset."""

    dataset_id: str
    labels: Tuple[ULabel, ...]
    values: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        labels = check_labels(self.labels)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] < 1:
            raise DomainError("a draw set needs at least one draw")
        if values.shape[1] != len(labels):
            raise DomainError(
                f"draws have {values.shape[1]} columns but there are {len(labels)} labels"
            )
        if not np.all((values > 0) & (values < 1)):
            raise DomainError("u-values must lie in the open interval (0, 1)")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]

    def __len__(self):
        return self.T

    def draw(self, t):
        return UDraw(self.values[t], self.labels)

    def __iter__(self):
        return (self.draw(t) for t in range(self.T))

    def mask(self, predicate):
        return np.array([bool(predicate(lab)) for lab in self.labels])

    def block(self, predicate):
        """Columns whose labels satisfy `predicate`, as a (T, k) array."""
        return self.values[:, self.mask(predicate)]

    def column(self, name, role=Role.PARAMETER, index=0):
        for (j, lab) in enumerate(self.labels):
            if lab.key == (role, name, index):
                return self.values[:, j]
        raise SchemaMismatch(f"no u-value labelled {role.value}:{name}[{index}]")

    def head(self, k):
        return UDrawSet(self.dataset_id, self.labels, self.values[:k], self.provenance)


@dataclass(frozen=True)
class TiltedCdfCurve:
    grid: np.ndarray
    values: np.ndarray


def clamp_unit(x, eps=DEFAULT_EPS):
    """Clamp into [eps, 1 - eps]; works on scalars and arrays."""
    if not 0 < eps < 0.5:
        raise DomainError(f"eps must lie in (0, 0.5), got {eps}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("cannot clamp a non-finite value")
    clamped = np.clip(arr, eps, 1 - eps)
    if clamped.ndim == 0:
        return float(clamped)
    return clamped


def _sorted_values(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DomainError("empirical CDF of an empty sample")
    if not np.all(np.isfinite(values)):
        raise DomainError("empirical CDF needs finite values")
    return np.sort(values.ravel())


def _check_grid(grid):
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(np.diff(grid) < 0):
        raise DomainError("grid must be ascending")
    return grid


def ecdf(values, grid):
    """F(g) = (1/n) #{v <= g} at each grid point."""
    ordered = _sorted_values(values)
    grid = _check_grid(grid)
    return np.searchsorted(ordered, grid, side="right") / ordered.size


def default_grid(points=DEFAULT_GRID_POINTS):
    return np.linspace(0.0, 1.0, points)


def tilted_ecdf(values, grid=None):
    grid = default_grid() if grid is None else _check_grid(grid)
    if np.any((grid < 0) | (grid > 1)):
        raise DomainError("tilted CDF grid must lie in [0, 1]")
    return TiltedCdfCurve(grid=grid, values=ecdf(values, grid) - grid)


def select_uvalues(draw, predicate):
    return [(float(v), lab) for (v, lab) in zip(draw.values, draw.labels) if predicate(lab)]


def is_data(label):
    return label.role is Role.DATA


def is_param(label):
    return label.role is Role.PARAMETER


class GenerativeModel(ABC):
    """theta = g_p(U[:K]) and Y = g_d(U[K:]; theta).

    Array conventions: a single theta is a length-K vector, a batch of
    posterior draws is (T, K).  Recovery methods accept either and return
    u-values with the same leading shape.
    """

    K: int
    deterministic_recovery: bool = True

    def __init__(self, n):
        if n < 0:
            raise DomainError(f"dataset size must be nonnegative, got {n}")
        self.n = int(n)
        self._labels = check_labels(self.label_schema())

    @property
    def D(self):
        return self.K + self.n

    @property
    def labels(self):
        return self._labels

    @abstractmethod
    def label_schema(self) -> Sequence[ULabel]:
        ...

    @abstractmethod
    def sample_theta(self, u_param) -> np.ndarray:
        ...

    @abstractmethod
    def sample_data(self, u_data, theta) -> np.ndarray:
        ...

    @abstractmethod
    def recover_param_uvalues(self, theta, data, rng) -> np.ndarray:
        ...

    @abstractmethod
    def recover_data_uvalues(self, theta, data, rng) -> np.ndarray:
        ...

    @abstractmethod
    def posterior_draws(self, data, T, rng) -> np.ndarray:
        ...

    def check_data(self, data):
        data = np.asarray(data, dtype=float)
        if data.shape != (self.n,):
            raise SchemaMismatch(f"model expects {self.n} observations, got {data.shape}")
        return data

    def forward(self, rng):
        """Draw U ~ Uniform_D(0,1) and map it to (theta, data)."""
        u = rng.uniform(size=self.D)
        theta = self.sample_theta(u[: self.K])
        return (u, theta, self.sample_data(u[self.K:], theta))

    def uvalues(self, theta, data, rng):
        data = self.check_data(data)
        values = np.concatenate(
            [
                np.atleast_1d(self.recover_param_uvalues(theta, data, rng)),
                np.atleast_1d(self.recover_data_uvalues(theta, data, rng)),
            ]
        )
        return UDraw(clamp_unit(values), self.labels)

    def udrawset(self, data, T, seed, dataset_id="dataset", sampler=None):
        """Posterior draws of the whole u-vector: theta | Y, then U | theta, Y."""
        return self.posterior_udrawset(data, T, seed, dataset_id, sampler)[1]

    def posterior_udrawset(self, data, T, seed, dataset_id="dataset", sampler=None):
        """As `udrawset`, also returning the (T, K) posterior draws of theta."""
        if T < 1:
            raise DomainError(f"need at least one draw, got T={T}")
        data = self.check_data(data)
        rng = np.random.default_rng(seed)
        thetas = np.atleast_2d(self.posterior_draws(data, T, rng))
        values = np.concatenate(
            [
                self.recover_param_uvalues(thetas, data, rng),
                self.recover_data_uvalues(thetas, data, rng),
            ],
            axis=1,
        )
        log.debug(f"Recovered {T} u-draws of dimension {self.D} for {dataset_id}")
        drawset = UDrawSet(
            dataset_id=dataset_id,
            labels=self.labels,
            values=clamp_unit(values),
            provenance=Provenance(sampler=sampler or type(self).__name__, seed=seed),
        )
        return (thetas, drawset)


def group_columns(drawset: UDrawSet, key: Callable[[ULabel], object]) -> Dict[object, np.ndarray]:
    """Split the columns of a draw set by a label key, e.g. by stratum."""
    indices = groupby(lambda j: key(drawset.labels[j]), range(drawset.D))
    return {k: drawset.values[:, idx] for (k, idx) in indices.items()}
