"""Random-walk Metropolis on the unit cube, proposing in logit space.

A target over u in (0, 1)^k is sampled through x = logit(u); the density of
x picks up the Jacobian prod u (1 - u).  The proposal scale is tuned by a
Robbins-Monro recursion during burn-in only, so the kept draws come from a
fixed kernel.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from scipy import special as spc

from errors import DomainError
from errors import McmcDiagnosticWarning


log = logging.getLogger(__name__)


HEALTHY_ACCEPTANCE = (0.05, 0.95)

# Acceptance is measured after burn-in, but over at least this many final
# iterations.
ACCEPTANCE_WINDOW = 100


class McmcConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(2000, gt=0)
    burn_in: int = Field(1000, ge=0)
    thin: int = Field(1, ge=1)
    step_sizes: Tuple[float, ...] = (0.15, 0.15)
    seed: int = 0
    adapt: bool = True
    target_accept: float = Field(0.35, gt=0, lt=1)

    @model_validator(mode="after")
    def _check(self):
        if self.iterations <= self.burn_in:
            raise ValueError(f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})")
        if not self.step_sizes or any(s <= 0 for s in self.step_sizes):
            raise ValueError(f"step sizes must be positive: {self.step_sizes}")
        return self

    @property
    def kept(self):
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass(frozen=True)
class McmcResult:
    draws: np.ndarray
    acceptance_rate: float
    step_sizes: np.ndarray
    warnings: Tuple[str, ...] = ()

    def summary(self):
        return {
            "draws": int(self.draws.shape[0]),
            "acceptance_rate": float(self.acceptance_rate),
            "step_sizes": [float(s) for s in self.step_sizes],
            "warnings": list(self.warnings),
        }


def logit(u):
    return np.log(u) - np.log1p(-u)


def _log_jacobian(u):
    return float(np.sum(np.log(u) + np.log1p(-u)))


def rwm_unit_cube(log_target, initial, config: McmcConfig):
    """Sample `log_target(u)` for u in (0, 1)^k; returns u-space draws."""
    u = np.asarray(initial, dtype=float)
    k = u.size
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("initial state must lie inside the unit cube")
    if len(config.step_sizes) not in (1, k):
        raise DomainError(f"{len(config.step_sizes)} step sizes for a {k}-dimensional target")
    step = np.broadcast_to(np.asarray(config.step_sizes, dtype=float), (k,)).copy()

    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal((config.iterations, k))
    log_uniform = np.log(rng.uniform(size=config.iterations))

    x = logit(u)
    lp = log_target(u) + _log_jacobian(u)
    kept = []
    accepted = np.zeros(config.iterations, dtype=bool)
    for it in range(config.iterations):
        x_prop = x + step * noise[it]
        u_prop = spc.expit(x_prop)
        if np.all((u_prop > 0) & (u_prop < 1)):
            lp_prop = log_target(u_prop) + _log_jacobian(u_prop)
        else:
            lp_prop = -np.inf
        accept = log_uniform[it] < lp_prop - lp
        accepted[it] = accept
        if accept:
            (x, u, lp) = (x_prop, u_prop, lp_prop)

        if it < config.burn_in:
            if config.adapt:
                step = step * np.exp((accept - config.target_accept) / np.sqrt(it + 1))
        elif (it - config.burn_in) % config.thin == 0:
            kept.append(u)

    window = max(config.iterations - config.burn_in, min(ACCEPTANCE_WINDOW, config.iterations))
    rate = float(accepted[-window:].mean())
    notes = ()
    (lo, hi) = HEALTHY_ACCEPTANCE
    if not lo <= rate <= hi:
        message = f"acceptance rate {rate:.3f} outside [{lo}, {hi}]"
        warnings.warn(message, McmcDiagnosticWarning)
        notes = (message,)
    log.debug(f"Chain done: acceptance {rate:.3f}, step sizes {step}")
    return McmcResult(draws=np.array(kept), acceptance_rate=rate, step_sizes=step, warnings=notes)
