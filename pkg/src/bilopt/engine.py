"""Run orchestration: binds a task to the portfolio, allocates budget across
the two levels, runs bi-level or single-level search, logs every trial to an
append-only newline-delimited log, and validates the recommendation on the
holdout once, after optimization.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import learners, pipeline, tabu, tpe, transfer
from .pipeline import CpdpTask, TrainView, TestView, derive_seed
from .space import (
    ClassifierSpec,
    Combination,
    ConfigSpace,
    Configuration,
    ParamSpec,
    Portfolio,
    TransferSpec,
    validate_config,
)


class BindingError(ValueError):
    """The portfolio references learners with no registered implementation."""


@dataclass(frozen=True)
class BudgetConfig:
    """Total budget is wall-clock by default; the lower level is either
    seconds per run (mode "h") or an evaluation count per run (mode "l").
    total_evaluations switches the whole run to an evaluation budget for
    desk-scale experiments."""

    total_seconds: float = 3600.0
    lower_mode: str = "seconds"
    lower_amount: float = 20.0
    total_evaluations: Optional[int] = None

    def __post_init__(self):
        if self.total_seconds <= 0 or self.lower_amount <= 0:
            raise ValueError("budgets must be positive")
        if self.lower_mode not in ("seconds", "evaluations"):
            raise ValueError(f"unknown lower budget mode {self.lower_mode!r}")


@dataclass
class ModelRecommendation:
    combination: Combination
    configuration: Configuration
    training_auc: float
    holdout_auc: Optional[float]
    total_trials: int
    elapsed_seconds: float
    holdout_disjoint: Optional[bool] = None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["combination"] = {
            "transfer": self.combination.transfer_id,
            "classifier": self.combination.classifier_id,
        }
        d["flags"] = list(self.flags)
        return d


class TrialLog:
    """Append-only newline-delimited JSON records, flushed per trial."""

    def __init__(self, path: Optional[Path] = None):
        self.path = path
        self.records: list[dict] = []
        self._fh = open(path, "w") if path else None

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def trials(self) -> list[dict]:
        return [r for r in self.records if r.get("type") == "trial"]


def bind_portfolio(portfolio: Portfolio, task: CpdpTask) -> tuple[Portfolio, int, int]:
    """Bind the portfolio to a task: check every id is implemented, prune
    categorical choices with no native implementation, and resolve
    data-dependent bounds (N_s = source instances, N_t = target instances
    available to training, both post-split)."""
    for t in portfolio.transfer_specs:
        if t.id not in transfer.SUPPORTED_TRANSFERS:
            raise BindingError(
                f"transfer learner {t.id!r} has no registered implementation; "
                f"supported: {', '.join(transfer.SUPPORTED_TRANSFERS)}"
            )
    for c in portfolio.classifier_specs:
        if c.id not in learners.SUPPORTED_CLASSIFIERS:
            raise BindingError(
                f"classifier {c.id!r} has no registered implementation; "
                f"supported: {', '.join(learners.SUPPORTED_CLASSIFIERS)}"
            )
    n_source = len(task.source_y)
    hold, _ = pipeline._stratified_holdout(task)
    n_target = len(task.target_y) - len(hold)

    def prune(space: ConfigSpace, keep: dict[str, tuple[str, ...]]) -> ConfigSpace:
        params = []
        for p in space.params:
            if p.kind == "cat" and p.name in keep:
                allowed = tuple(c for c in p.choices if c in keep[p.name])
                if not allowed:
                    raise BindingError(
                        f"no supported choice for {p.name!r}; "
                        f"native support: {keep[p.name]}"
                    )
                p = ParamSpec(p.name, "cat", choices=allowed)
            params.append(p)
        return ConfigSpace(tuple(params))

    transfers = tuple(
        TransferSpec(
            t.id,
            prune(t.space, {"strategy": ("NN",)}) if t.id == "TD" else t.space,
            t.needs_target_data,
        )
        for t in portfolio.transfer_specs
    )
    classifiers = tuple(
        ClassifierSpec(
            c.id,
            prune(c.space, {"NBType": ("gauss",)}) if c.id == "NB" else c.space,
        )
        for c in portfolio.classifier_specs
    )
    bound = Portfolio(transfers, classifiers).resolve(n_source, n_target)
    return bound, n_source, n_target


def flatten_portfolio(portfolio: Portfolio) -> tuple[ConfigSpace, Callable]:
    """Single-level encoding: two categorical dimensions select the
    combination, plus the union of every learner's parameters under
    prefixed names; inactive dimensions are ignored at evaluation.
    Returns (space, decode) where decode(config) -> (Combination, params)."""
    params: list[ParamSpec] = [
        ParamSpec(
            "transfer_id", "cat",
            choices=tuple(t.id for t in portfolio.transfer_specs),
        ),
        ParamSpec(
            "classifier_id", "cat",
            choices=tuple(c.id for c in portfolio.classifier_specs),
        ),
    ]
    prefixes: dict[str, ConfigSpace] = {}
    for t in portfolio.transfer_specs:
        prefixes[t.id] = t.space
    for c in portfolio.classifier_specs:
        prefixes[c.id] = c.space
    for owner, space in prefixes.items():
        for p in space.params:
            params.append(
                ParamSpec(
                    f"{owner}.{p.name}", p.kind, lower=p.lower, upper=p.upper,
                    choices=p.choices, data_dependent=p.data_dependent,
                    log_scale=p.log_scale,
                )
            )
    flat = ConfigSpace(tuple(params))

    def decode(config: Configuration) -> tuple[Combination, Configuration]:
        x_u = Combination(config["transfer_id"], config["classifier_id"])
        active: Configuration = {}
        for owner in (x_u.transfer_id, x_u.classifier_id):
            for p in prefixes[owner].params:
                active[p.name] = config[f"{owner}.{p.name}"]
        return x_u, active

    return flat, decode


@dataclass
class _EvalCounter:
    """Shared evaluation counter for total-evaluation budgets."""

    limit: Optional[int]
    used: int = 0

    def remaining(self) -> Optional[int]:
        return None if self.limit is None else max(0, self.limit - self.used)


def bilevel_search(
    portfolio: Portfolio,
    objective: Callable[[Combination, Configuration], float],
    budget: BudgetConfig,
    seed: int,
    on_trial: Optional[Callable] = None,
    on_lower_run: Optional[Callable] = None,
) -> tuple[Combination, Configuration, float]:
    """Tabu search with TPE as the lower routine over an abstract objective.
    The task-bound optimizers wrap this with the CPDP evaluator."""
    counter = _EvalCounter(budget.total_evaluations)
    if budget.total_evaluations is not None:
        upper: tabu.UpperBudget = _SharedEvalBudget(counter)
    else:
        upper = tabu.TimeBudget(budget.total_seconds)

    def lower_solve(x_u: Combination, run_index: int):
        space = portfolio.joint_space(x_u)
        amount = budget.lower_amount
        if budget.lower_mode == "evaluations":
            rem = counter.remaining()
            if rem is not None:
                amount = min(amount, rem)
            lower = tpe.LowerBudget("evaluations", max(1, int(amount)))
        else:
            if isinstance(upper, tabu.TimeBudget):
                left = budget.total_seconds - (time.perf_counter() - upper.start)
                amount = max(min(amount, left), 1e-3)
            lower = tpe.LowerBudget("seconds", amount)
        rng = np.random.default_rng(derive_seed(seed, "tpe", str(x_u), run_index))
        start = time.perf_counter()
        n_evals = 0

        def wrapped(config: Configuration) -> float:
            nonlocal n_evals
            n_evals += 1
            counter.used += 1
            value = objective(x_u, config)
            if on_trial:
                on_trial(x_u, config, value, "neighbor" if run_index > 1 else "upper-init")
            return value

        cfg, val = tpe.run_tpe(wrapped, space, lower, rng)
        if on_lower_run:
            on_lower_run(x_u, run_index, n_evals, time.perf_counter() - start, val)
        return cfg, val

    rng = np.random.default_rng(derive_seed(seed, "tabu"))
    return tabu.run_tabu(portfolio, lower_solve, upper, rng)


@dataclass
class _SharedEvalBudget:
    counter: _EvalCounter

    def exhausted(self) -> bool:
        rem = self.counter.remaining()
        return rem is not None and rem <= 0


def single_level_search(
    portfolio: Portfolio,
    objective: Callable[[Combination, Configuration], float],
    budget: BudgetConfig,
    seed: int,
    on_trial: Optional[Callable] = None,
) -> tuple[Combination, Configuration, float]:
    """One TPE run over the flattened space consuming the entire budget."""
    flat, decode = flatten_portfolio(portfolio)
    if budget.total_evaluations is not None:
        lower = tpe.LowerBudget("evaluations", budget.total_evaluations)
    else:
        lower = tpe.LowerBudget("seconds", budget.total_seconds)

    def wrapped(config: Configuration) -> float:
        x_u, active = decode(config)
        value = objective(x_u, active)
        if on_trial:
            on_trial(x_u, active, value, "single-level")
        return value

    rng = np.random.default_rng(derive_seed(seed, "single"))
    cfg, val = tpe.run_tpe(wrapped, flat, lower, rng)
    x_u, active = decode(cfg)
    return x_u, active, val


def _run(
    task: CpdpTask,
    portfolio: Portfolio,
    budget: BudgetConfig,
    seed: int,
    mode: str,
    out_dir: Optional[Path],
    manifest_extra: Optional[dict] = None,
) -> ModelRecommendation:
    bound, n_source, n_target = bind_portfolio(portfolio, task)
    views = {
        flag: pipeline.split_task(task, tid)
        for flag, tid in ((True, "NNfilter"), (False, "identity"))
    }

    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    log = TrialLog(out_dir / "trials.ndjson" if out_dir else None)
    seq = 0
    lower_run_id = 0

    def objective(x_u: Combination, x_l: Configuration) -> float:
        nonlocal seq
        seq += 1
        trial_seed = derive_seed(seed, "trial", seq)
        train_view, _ = views[transfer.needs_target(x_u.transfer_id)]
        result = pipeline.evaluate(train_view, x_u, x_l, trial_seed)
        log.append(
            {
                "type": "trial",
                "seq": seq,
                "transfer": x_u.transfer_id,
                "classifier": x_u.classifier_id,
                "config": x_l,
                "value": result.training_auc,
                "flags": list(result.flags),
                "adapt_time": result.adapt_time,
                "train_time": result.train_time,
                "score_time": result.score_time,
                "n_train": result.n_train,
                "seed": trial_seed,
                "lower_run": lower_run_id,
                "level": "single-level" if mode == "single" else "lower",
            }
        )
        return result.training_auc

    manifest = {
        "mode": mode,
        "seed": seed,
        "target": task.target_name,
        "holdout_fraction": task.holdout_fraction,
        "task_seed": task.seed,
        "n_source": n_source,
        "n_target_train": n_target,
        "budget": {
            "total_seconds": budget.total_seconds,
            "lower_mode": budget.lower_mode,
            "lower_amount": budget.lower_amount,
            "total_evaluations": budget.total_evaluations,
        },
        "tpe": {
            "gamma": tpe.DEFAULT_GAMMA,
            "n_candidates": tpe.DEFAULT_N_CANDIDATES,
        },
        "billing": "optimization loop only; data loading and final "
                   "validation excluded",
    }
    if manifest_extra:
        manifest.update(manifest_extra)

    start = time.perf_counter()
    try:
        if mode == "single":
            x_u, x_l, value = single_level_search(bound, objective, budget, seed)
        else:

            def on_lower_run(x_u, run_index, n_evals, duration, best):
                nonlocal lower_run_id
                lower_run_id += 1
                log.append(
                    {
                        "type": "lower_run",
                        "id": lower_run_id,
                        "transfer": x_u.transfer_id,
                        "classifier": x_u.classifier_id,
                        "n_evals": n_evals,
                        "duration": duration,
                        "best_value": best,
                    }
                )

            x_u, x_l, value = bilevel_search(
                bound, objective, budget, seed, on_lower_run=on_lower_run
            )
    finally:
        elapsed = time.perf_counter() - start
        log.close()

    # holdout validation: exactly once, after optimization
    train_view, test_view = views[transfer.needs_target(x_u.transfer_id)]
    trial_seed = derive_seed(seed, "final")
    flags: tuple[str, ...] = ()
    try:
        holdout, _ = pipeline.validate_holdout(train_view, test_view, x_u, x_l, trial_seed)
    except pipeline.UndefinedAucError:
        holdout, flags = 0.5, ("holdout_single_class",)
    disjoint = pipeline.holdout_disjoint(train_view, test_view, x_u, x_l, trial_seed)

    rec = ModelRecommendation(
        combination=x_u,
        configuration=x_l,
        training_auc=value,
        holdout_auc=holdout,
        total_trials=seq,
        elapsed_seconds=elapsed,
        holdout_disjoint=disjoint,
        flags=flags,
    )
    if out_dir:
        manifest["elapsed_seconds"] = elapsed
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        with open(out_dir / "recommendation.json", "w") as fh:
            json.dump(rec.to_dict(), fh, indent=2)
    return rec


def optimize_bilevel(
    task: CpdpTask,
    portfolio: Portfolio,
    budget: BudgetConfig,
    seed: int,
    out_dir: Optional[str | Path] = None,
    manifest_extra: Optional[dict] = None,
) -> ModelRecommendation:
    return _run(task, portfolio, budget, seed, "bilevel", out_dir, manifest_extra)


def optimize_single_level(
    task: CpdpTask,
    portfolio: Portfolio,
    budget: BudgetConfig,
    seed: int,
    out_dir: Optional[str | Path] = None,
    manifest_extra: Optional[dict] = None,
) -> ModelRecommendation:
    return _run(task, portfolio, budget, seed, "single", out_dir, manifest_extra)


def repeat_runs(
    task: CpdpTask,
    portfolio: Portfolio,
    budget: BudgetConfig,
    mode: str,
    n_repeats: int,
    base_seed: int,
    out_root: Optional[str | Path] = None,
) -> list[Optional[ModelRecommendation]]:
    """Independent repeats with derived seeds; per-run failures are
    recorded as None, other runs unaffected."""
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    fn = optimize_single_level if mode == "single" else optimize_bilevel
    results: list[Optional[ModelRecommendation]] = []
    for i in range(n_repeats):
        run_seed = derive_seed(base_seed, "repeat", i)
        out = Path(out_root) / f"rep{i}" if out_root else None
        try:
            results.append(fn(task, portfolio, budget, run_seed, out))
        except Exception:
            results.append(None)
    return results


def replay_trial(
    task: CpdpTask, portfolio: Portfolio, trial: dict
) -> float:
    """Re-run one logged trial; returns the objective, which must match the
    logged value exactly."""
    bound, _, _ = bind_portfolio(portfolio, task)
    x_u = Combination(trial["transfer"], trial["classifier"])
    train_view, _ = pipeline.split_task(task, x_u.transfer_id)
    result = pipeline.evaluate(train_view, x_u, trial["config"], trial["seed"])
    return result.training_auc
