"""Lower-level optimizer: budget-bounded Bayesian optimization of one
configuration space with a Tree-structured Parzen Estimator. Good/bad
observation densities are per-dimension: truncated Gaussian mixtures for
numeric parameters, Laplace-smoothed frequencies for categorical ones.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

from .space import ConfigSpace, Configuration, space_filling_sample

DEFAULT_GAMMA = 0.25
DEFAULT_N_CANDIDATES = 24
BANDWIDTH_RANGE_FLOOR = 0.01  # fraction of the (transformed) range
LAPLACE_ALPHA = 1.0


class ExhaustionError(RuntimeError):
    """The budget expired before a single evaluation completed."""


@dataclass(frozen=True)
class Observation:
    config: Configuration
    value: float


@dataclass(frozen=True)
class LowerBudget:
    mode: str  # "evaluations" | "seconds"
    amount: float

    def __post_init__(self):
        if self.mode not in ("evaluations", "seconds"):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if self.amount <= 0:
            raise ValueError("budget must be positive")


def _norm_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0)))


def _norm_pdf(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


class _NumericDensity:
    """Equal-weight mixture of Gaussians truncated to [lo, hi], one kernel
    per observed value. Log-scale dimensions are modeled in log space;
    integer dimensions are rounded after sampling.

    Bandwidths are per-kernel: each kernel's width is its largest gap to an
    adjacent center (range edges count as neighbors), clipped to
    [1% of range, range]. A single global bandwidth lets the bad density go
    flat around heavily sampled points, which freezes the good/bad ratio at
    the current mode and stalls the search.

    One extra kernel spanning the whole range represents the uniform prior.
    It keeps a floor of exploration mass everywhere, and because its mixture
    weight is 1/(n+1), unexplored regions score a good/bad ratio of roughly
    (n_bad+1)/(n_good+1) > 1 instead of an arbitrary tiny-density quotient."""

    def __init__(self, spec, values: list[float]):
        self.spec = spec
        if spec.log_scale:
            self.lo, self.hi = math.log(spec.lower), math.log(spec.upper)
            centers = np.log(np.asarray(values, dtype=float))
        else:
            self.lo, self.hi = float(spec.lower), float(spec.upper)
            centers = np.asarray(values, dtype=float)
        centers = np.sort(centers)
        span = self.hi - self.lo
        if span <= 0:
            self.centers = centers
            self.h = np.ones_like(centers)
        else:
            if len(centers) == 1:
                h = np.array([span])
            else:
                padded = np.concatenate(([self.lo], centers, [self.hi]))
                left = centers - padded[:-2]
                right = padded[2:] - centers
                h = np.clip(np.maximum(left, right),
                            BANDWIDTH_RANGE_FLOOR * span, span)
            # the prior kernel: mid-range center, range-wide bandwidth
            self.centers = np.append(centers, (self.lo + self.hi) / 2)
            self.h = np.append(h, span)
        # per-kernel truncation mass for renormalization
        self.mass = _norm_cdf((self.hi - self.centers) / self.h) - _norm_cdf(
            (self.lo - self.centers) / self.h
        )
        self.mass = np.maximum(self.mass, 1e-300)

    def _transform(self, value: float) -> float:
        return math.log(value) if self.spec.log_scale else float(value)

    def pdf(self, value: float) -> float:
        if self.hi <= self.lo:
            return 1.0  # degenerate single-point range
        x = self._transform(value)
        dens = _norm_pdf((x - self.centers) / self.h) / self.h / self.mass
        return float(dens.mean())

    def sample(self, rng: np.random.Generator) -> float:
        if self.hi <= self.lo:
            x = self.lo
        else:
            i = int(rng.integers(len(self.centers)))
            c, h = float(self.centers[i]), float(self.h[i])
            for _ in range(100):
                x = rng.normal(c, h)
                if self.lo <= x <= self.hi:
                    break
            else:
                x = min(max(x, self.lo), self.hi)
        value = math.exp(x) if self.spec.log_scale else x
        if self.spec.kind == "int":
            value = int(min(max(round(value), self.spec.lower), self.spec.upper))
        return value


class _CategoricalDensity:
    """Laplace-smoothed category frequencies."""

    def __init__(self, spec, values: list[str]):
        self.spec = spec
        counts = np.array(
            [sum(v == c for v in values) for c in spec.choices], dtype=float
        )
        self.probs = (counts + LAPLACE_ALPHA) / (counts.sum() + LAPLACE_ALPHA * len(counts))

    def pdf(self, value: str) -> float:
        return float(self.probs[self.spec.choices.index(value)])

    def sample(self, rng: np.random.Generator) -> str:
        i = int(rng.choice(len(self.probs), p=self.probs))
        return self.spec.choices[i]


def _fit_density(space: ConfigSpace, configs: list[Configuration]) -> dict:
    densities = {}
    for spec in space.params:
        values = [cfg[spec.name] for cfg in configs]
        if spec.kind == "cat":
            densities[spec.name] = _CategoricalDensity(spec, values)
        else:
            densities[spec.name] = _NumericDensity(spec, values)
    return densities


@dataclass
class ParzenPair:
    """Good/bad per-dimension density estimators plus the split fraction."""

    space: ConfigSpace
    good: dict
    bad: dict
    gamma: float

    @classmethod
    def fit(
        cls, space: ConfigSpace, observations: list[Observation], gamma: float
    ) -> "ParzenPair":
        good_obs, bad_obs = split_observations(observations, gamma)
        if not bad_obs:  # tiny histories: reuse good for the bad side
            bad_obs = good_obs
        return cls(
            space,
            _fit_density(space, [o.config for o in good_obs]),
            _fit_density(space, [o.config for o in bad_obs]),
            gamma,
        )

    def sample_good(self, rng: np.random.Generator) -> Configuration:
        return {
            spec.name: self.good[spec.name].sample(rng) for spec in self.space.params
        }

    def log_ratio(self, config: Configuration) -> float:
        total = 0.0
        for spec in self.space.params:
            g = self.good[spec.name].pdf(config[spec.name])
            b = self.bad[spec.name].pdf(config[spec.name])
            total += math.log(max(g, 1e-300)) - math.log(max(b, 1e-300))
        return total


def split_observations(
    observations: list[Observation], gamma: float
) -> tuple[list[Observation], list[Observation]]:
    """good = top ceil(gamma * n) by value, ties broken by earlier
    insertion; bad = the rest."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must be in (0, 1)")
    n = len(observations)
    n_good = math.ceil(gamma * n)
    values = np.array([o.value for o in observations])
    order = np.argsort(-values, kind="stable")
    good_idx = set(order[:n_good].tolist())
    good = [o for i, o in enumerate(observations) if i in good_idx]
    bad = [o for i, o in enumerate(observations) if i not in good_idx]
    return good, bad


def propose(
    pair: ParzenPair, n_candidates: int, rng: np.random.Generator
) -> Configuration:
    """Draw candidates from the good density, return the one maximizing the
    good/bad density ratio (equivalent to expected improvement under TPE)."""
    best = None
    best_score = -math.inf
    for _ in range(n_candidates):
        cand = pair.sample_good(rng)
        score = pair.log_ratio(cand)
        if score > best_score:
            best, best_score = cand, score
    return best


def default_n_init(amount: float) -> int:
    return int(min(10, max(2, amount / 4)))


def run_tpe(
    objective: Callable[[Configuration], float],
    space: ConfigSpace,
    budget: LowerBudget,
    rng: np.random.Generator,
    gamma: float = DEFAULT_GAMMA,
    n_candidates: int = DEFAULT_N_CANDIDATES,
    n_init: Optional[int] = None,
) -> tuple[Configuration, float]:
    """Space-filling initialization followed by propose/evaluate rounds
    until the budget is exhausted; returns the best observation."""
    start = time.perf_counter()
    if n_init is None:
        n_init = default_n_init(budget.amount)
    count_mode = budget.mode == "evaluations"
    if count_mode:
        n_init = min(n_init, int(budget.amount))

    def time_left() -> bool:
        return time.perf_counter() - start < budget.amount

    observations: list[Observation] = []
    for config in space_filling_sample(space, n_init, rng):
        if count_mode:
            if len(observations) >= budget.amount:
                break
        elif observations and not time_left():
            break
        observations.append(Observation(config, float(objective(config))))

    while True:
        if count_mode:
            if len(observations) >= budget.amount:
                break
        elif not time_left():  # checked before each surrogate rebuild;
            break              # the in-flight evaluation may overshoot
        if len(observations) < 2:
            break
        pair = ParzenPair.fit(space, observations, gamma)
        config = propose(pair, n_candidates, rng)
        observations.append(Observation(config, float(objective(config))))

    if not observations:
        raise ExhaustionError("budget expired before any evaluation completed")
    best = max(range(len(observations)), key=lambda i: observations[i].value)
    return observations[best].config, observations[best].value
