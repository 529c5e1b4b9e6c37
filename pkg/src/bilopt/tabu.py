"""Upper-level optimizer: Tabu search over the combination space. Each
candidate's objective value is the lower-level optimum returned by a
supplied solver (TPE in production, stubs in tests); results are memoized
so no combination is ever solved twice within one run.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .space import Combination, Configuration, Portfolio, neighborhood
from .tpe import ExhaustionError

STAGNATION_LIMIT = 2  # consecutive self-moves before jumping to unvisited


class UpperBudget(Protocol):
    def exhausted(self) -> bool: ...


@dataclass
class CountBudget:
    """Budget expressed as a number of lower-level runs."""

    limit: int
    used: int = 0

    def exhausted(self) -> bool:
        return self.used >= self.limit

    def charge(self) -> None:
        self.used += 1


@dataclass
class TimeBudget:
    seconds: float
    start: float = field(default_factory=time.perf_counter)

    def exhausted(self) -> bool:
        return time.perf_counter() - self.start >= self.seconds

    def charge(self) -> None:
        pass


class TabuList:
    """Insertion-ordered set of visited combinations; optional max length
    with oldest-first eviction."""

    def __init__(self, max_len: Optional[int] = None):
        self._items: OrderedDict[Combination, None] = OrderedDict()
        self.max_len = max_len

    def add(self, x: Combination) -> None:
        if x in self._items:
            return
        self._items[x] = None
        if self.max_len is not None and len(self._items) > self.max_len:
            self._items.popitem(last=False)

    def __contains__(self, x: Combination) -> bool:
        return x in self._items

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)


# lower_solve(combination, run_index) -> (best configuration, value)
LowerSolver = Callable[[Combination, int], tuple[Configuration, float]]


@dataclass
class UpperState:
    current: Combination
    memo: dict[Combination, tuple[Configuration, float]] = field(default_factory=dict)
    tabu: TabuList = field(default_factory=TabuList)
    runs: int = 0


def _solve(
    state: UpperState,
    x: Combination,
    lower_solve: LowerSolver,
    budget: UpperBudget,
) -> Optional[tuple[Configuration, float]]:
    """Memoized lower-level solve; returns None when the budget is gone
    before a fresh run could start."""
    if x in state.memo:
        return state.memo[x]
    if budget.exhausted():
        return None
    state.runs += 1
    result = lower_solve(x, state.runs)
    if hasattr(budget, "charge"):
        budget.charge()
    state.memo[x] = result
    return result


def search_candidate(
    state: UpperState,
    portfolio: Portfolio,
    lower_solve: LowerSolver,
    budget: UpperBudget,
) -> tuple[Combination, Configuration, float, bool]:
    """One neighborhood sweep: solve the current combination, then every
    non-tabu neighbor in canonical order, keeping the incumbent on strict
    improvement. If every neighbor is tabu the current (possibly worse)
    result is returned - the sanctioned worsening move."""
    partial = False
    current_result = _solve(state, state.current, lower_solve, budget)
    if current_result is None:
        return state.current, {}, float("-inf"), True
    best_x, (best_cfg, best_val) = state.current, current_result
    for nb in neighborhood(portfolio, state.current):
        if nb in state.tabu:
            continue
        result = _solve(state, nb, lower_solve, budget)
        if result is None:
            partial = True
            break
        cfg, val = result
        if val > best_val:
            best_x, best_cfg, best_val = nb, cfg, val
    return best_x, best_cfg, best_val, partial


def run_tabu(
    portfolio: Portfolio,
    lower_solve: LowerSolver,
    budget: UpperBudget,
    rng: np.random.Generator,
    max_tabu_len: Optional[int] = None,
) -> tuple[Combination, Configuration, float]:
    """Tabu search: random start, neighborhood sweeps while budget remains,
    stagnation escape to unvisited combinations, final argmax over every
    combination evaluated."""
    state = UpperState(current=portfolio.sample_combination(rng))
    state.tabu = TabuList(max_tabu_len)
    all_combos = portfolio.combinations()
    stagnation = 0
    while not budget.exhausted() and len(state.memo) < len(all_combos):
        accepted, _, _, partial = search_candidate(
            state, portfolio, lower_solve, budget
        )
        if accepted in state.memo and accepted not in state.tabu:
            state.tabu.add(accepted)
        if partial:
            break
        if accepted == state.current:
            stagnation += 1
        else:
            stagnation = 0
        unvisited = [x for x in all_combos if x not in state.memo]
        if stagnation >= STAGNATION_LIMIT and unvisited:
            state.current = unvisited[int(rng.integers(len(unvisited)))]
            stagnation = 0
        else:
            state.current = accepted
    if not state.memo:
        raise ExhaustionError("budget expired before any lower-level run completed")
    best = max(state.memo, key=lambda x: state.memo[x][1])
    cfg, val = state.memo[best]
    return best, cfg, val
