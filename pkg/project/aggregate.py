"""Combine per-draw p-values across posterior draws and adjust families.

Per-draw p-values from one dataset are dependent (every draw conditions on
the same Y), so they are combined with the Cauchy combination, which stays
calibrated under arbitrary dependence.  Families of aggregated p-values are
then adjusted with Holm / Bonferroni (FWER) or BH / BY (FDR), or spent
against a pre-registered alpha budget.
"""

import enum
import logging
import warnings
from dataclasses import dataclass
from typing import List
from typing import Tuple

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from scipy import stats as sps

from errors import ClampWarning
from errors import DomainError
from errors import SpendingStateError
from stattests import check_pvalue


log = logging.getLogger(__name__)


P_CLAMP = 1e-15


class Combiner(str, enum.Enum):
    CAUCHY = "cauchy"
    FISHER = "fisher"


class BhMode(str, enum.Enum):
    INDEPENDENT = "independent"
    DEPENDENT = "dependent"


@dataclass(frozen=True)
class TestOutcome:
    test_name: str
    per_draw_p: np.ndarray
    p_star: float
    method: Combiner

    @property
    def T(self):
        return self.per_draw_p.shape[-1]

    def record(self, adjusted_p=None, family_id=None):
        rec = {
            "test_name": self.test_name,
            "T": int(self.T),
            "method": self.method.value,
            "p_star": float(self.p_star),
        }
        if adjusted_p is not None:
            rec["adjusted_p"] = float(adjusted_p)
        if family_id is not None:
            rec["family_id"] = family_id
        return rec


def _as_pvalues(p):
    p = check_pvalue(np.asarray(p, dtype=float))
    if p.ndim == 0:
        p = p[None]
    if p.shape[-1] == 0:
        raise DomainError("cannot combine an empty set of p-values")
    return p


def _clamp(p, lo=P_CLAMP, hi=1 - P_CLAMP):
    outside = (p < lo) | (p > hi)
    if np.any(outside):
        warnings.warn(
            f"{int(outside.sum())} p-value(s) clamped to [{lo:g}, {hi!r}]",
            ClampWarning,
        )
    return np.clip(p, lo, hi)


def cauchy_combine(p):
    """1 - F_Cauchy(mean tan((0.5 - p) pi)) along the last axis."""
    p = _clamp(_as_pvalues(p))
    x = np.mean(np.tan((0.5 - p) * np.pi), axis=-1)
    # for x > 0, 1/2 - arctan(x)/pi = arctan(1/x)/pi without cancellation
    with np.errstate(divide="ignore"):
        upper = np.arctan(1 / x) / np.pi
    p_star = np.where(x > 0, upper, 0.5 - np.arctan(x) / np.pi)
    return float(p_star) if p_star.ndim == 0 else p_star


def fisher_combine(p):
    """Fisher's method; only valid for independent p-values."""
    p = _as_pvalues(p)
    if p.ndim != 1:
        raise DomainError("Fisher combination takes a single vector of p-values")
    p = _clamp(p, hi=1.0)
    return float(sps.combine_pvalues(p, method="fisher").pvalue)


_COMBINERS = {
    Combiner.CAUCHY: cauchy_combine,
    Combiner.FISHER: fisher_combine,
}


def combine(test_name, per_draw_p, method=Combiner.CAUCHY):
    method = Combiner(method)
    per_draw_p = np.atleast_1d(np.asarray(per_draw_p, dtype=float))
    return TestOutcome(
        test_name=test_name,
        per_draw_p=per_draw_p,
        p_star=_COMBINERS[method](per_draw_p),
        method=method,
    )


# -- multiple testing ----------------------------------------------------------

def _family(p):
    return check_pvalue(np.atleast_1d(np.asarray(p, dtype=float)).ravel())


def bonferroni_adjust(p):
    p = _family(p)
    return np.minimum(p * p.size, 1.0)


def holm_adjust(p):
    """Step-down Holm adjusted p-values, in the input order."""
    p = _family(p)
    m = p.size
    if m == 0:
        return p
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * (m - np.arange(m))
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(np.maximum.accumulate(scaled), 1.0)
    return adjusted


def bh_adjust(p, mode=BhMode.INDEPENDENT):
    """Benjamini-Hochberg, or Benjamini-Yekutieli when tests are dependent."""
    p = _family(p)
    if p.size == 0:
        return p
    method = "bh" if BhMode(mode) is BhMode.INDEPENDENT else "by"
    return sps.false_discovery_control(p, method=method)


_ADJUSTERS = {
    "holm": holm_adjust,
    "bonferroni": bonferroni_adjust,
    "bh": lambda p: bh_adjust(p, BhMode.INDEPENDENT),
    "by": lambda p: bh_adjust(p, BhMode.DEPENDENT),
}
PROCEDURES = tuple(_ADJUSTERS)


def adjust_family(outcomes, procedure="holm", family_id=None):
    """Result records for a family of aggregated tests, with adjusted p*."""
    if procedure not in _ADJUSTERS:
        raise DomainError(f"unknown adjustment procedure: {procedure}")
    if not outcomes:
        return []
    adjusted = _ADJUSTERS[procedure]([o.p_star for o in outcomes])
    return [o.record(adjusted_p=a, family_id=family_id) for (o, a) in zip(outcomes, adjusted)]


# -- alpha spending --------------------------------------------------------------

class AlphaSpendingPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    total_alpha: float = Field(gt=0, lt=1)
    rounds: List[Tuple[str, float]]

    @model_validator(mode="after")
    def _check_budget(self):
        labels = [label for (label, _) in self.rounds]
        if len(set(labels)) != len(labels):
            raise ValueError(f"round labels must be unique: {labels}")
        if any(alpha <= 0 for (_, alpha) in self.rounds):
            raise ValueError("every round needs a positive alpha")
        spent = sum(alpha for (_, alpha) in self.rounds)
        if abs(spent - self.total_alpha) > 1e-12:
            raise ValueError(f"rounds sum to {spent}, not {self.total_alpha}")
        return self

    @classmethod
    def even(cls, total_alpha, labels):
        labels = list(labels)
        return cls(
            total_alpha=total_alpha,
            rounds=[(label, total_alpha / len(labels)) for label in labels],
        )


class SpendingLedger:
    """Single-owner record of which rounds of a plan have been consumed."""

    def __init__(self, plan: AlphaSpendingPlan):
        self.plan = plan
        self.entries = []

    @property
    def spent(self):
        return sum(e["alpha"] for e in self.entries)

    @property
    def remaining(self):
        return self.plan.total_alpha - self.spent

    def spend_alpha(self, round_label, p_star_values):
        alphas = dict(self.plan.rounds)
        if round_label not in alphas:
            raise DomainError(f"unknown alpha-spending round: {round_label}")
        consumed = [e["round"] for e in self.entries]
        if round_label in consumed:
            raise SpendingStateError(f"round {round_label} was already spent")
        expected = self.plan.rounds[len(consumed)][0]
        if round_label != expected:
            raise SpendingStateError(
                f"rounds are spent in plan order; next is {expected}, not {round_label}"
            )

        alpha = alphas[round_label]
        adjusted = holm_adjust(p_star_values) if len(p_star_values) else np.array([])
        entry = {
            "round": round_label,
            "alpha": alpha,
            "p_star": [float(p) for p in p_star_values],
            "adjusted_p": [float(a) for a in adjusted],
            "reject": [bool(a <= alpha) for a in adjusted],
        }
        self.entries.append(entry)
        entry = dict(entry, spent=self.spent, remaining=self.remaining)
        log.info(
            f"Round {round_label}: {sum(entry['reject'])} of {len(adjusted)} rejected "
            f"at alpha={alpha:g}, {entry['remaining']:g} left"
        )
        return entry
