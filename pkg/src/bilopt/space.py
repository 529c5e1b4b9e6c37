"""Search-space definitions: hyper-parameter spaces, the combinatorial
portfolio of (transfer learner, classifier) pairs, and samplers over both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

# Symbols allowed as data-dependent upper bounds. Resolved once per task,
# after the transfer-independent split is fixed.
DATA_SYMBOLS = ("N_s", "N_t", "max(N_s,N_t)", "N_s/10")

# Real ranges spanning at least this many orders of magnitude are sampled
# and modeled in log scale.
LOG_SCALE_SPAN = 1000.0


class UnresolvedBoundError(RuntimeError):
    """A data-dependent bound was used before being bound to a task."""


class PortfolioFormatError(ValueError):
    """A portfolio definition file could not be parsed."""


@dataclass(frozen=True)
class ParamSpec:
    """One hyper-parameter: an integer/real range or a categorical set."""

    name: str
    kind: str  # "int" | "real" | "cat"
    lower: Optional[float] = None
    upper: Optional[float] = None
    choices: Optional[tuple[str, ...]] = None
    data_dependent: Optional[str] = None  # symbol for the upper bound
    log_scale: bool = False

    def __post_init__(self):
        if self.kind not in ("int", "real", "cat"):
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if self.kind == "cat":
            if not self.choices:
                raise ValueError(f"{self.name}: categorical needs choices")
            if len(set(self.choices)) != len(self.choices):
                raise ValueError(f"{self.name}: duplicate choices")
        else:
            if self.lower is None:
                raise ValueError(f"{self.name}: numeric kind needs bounds")
            if self.data_dependent is None:
                if self.upper is None or self.lower > self.upper:
                    raise ValueError(f"{self.name}: requires lower <= upper")
            elif self.data_dependent not in DATA_SYMBOLS:
                raise ValueError(
                    f"{self.name}: unknown bound symbol {self.data_dependent!r}"
                )

    @property
    def resolved(self) -> bool:
        return self.data_dependent is None

    def resolve(self, n_source: int, n_target: int) -> "ParamSpec":
        """Replace a symbolic upper bound with its task-specific value."""
        if self.data_dependent is None:
            return self
        value = {
            "N_s": n_source,
            "N_t": n_target,
            "max(N_s,N_t)": max(n_source, n_target),
            "N_s/10": n_source // 10,
        }[self.data_dependent]
        upper = max(int(self.lower), int(value))
        return replace(self, upper=upper, data_dependent=None)

    def contains(self, value) -> bool:
        if self.kind == "cat":
            return value in self.choices
        if not self.resolved:
            raise UnresolvedBoundError(f"{self.name}: unresolved bound")
        if self.kind == "int":
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                return False
            return self.lower <= value <= self.upper
        if isinstance(value, bool) or not isinstance(
            value, (int, float, np.integer, np.floating)
        ):
            return False
        return self.lower <= value <= self.upper


def _maybe_log(kind: str, lower: Optional[float], upper: Optional[float]) -> bool:
    if kind != "real" or lower is None or upper is None or lower <= 0:
        return False
    return upper / lower >= LOG_SCALE_SPAN


@dataclass(frozen=True)
class ConfigSpace:
    """Ordered collection of ParamSpecs with unique names."""

    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {names}")

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def resolved(self) -> bool:
        return all(p.resolved for p in self.params)

    def resolve(self, n_source: int, n_target: int) -> "ConfigSpace":
        return ConfigSpace(
            tuple(p.resolve(n_source, n_target) for p in self.params)
        )

    def merge(self, other: "ConfigSpace") -> "ConfigSpace":
        return ConfigSpace(self.params + other.params)


# A Configuration is a plain mapping from parameter name to value.
Configuration = dict


def validate_config(space: ConfigSpace, config: Configuration) -> bool:
    """True iff every parameter is present, correctly typed, and in range."""
    if set(config) != {p.name for p in space.params}:
        return False
    return all(p.contains(config[p.name]) for p in space.params)


def _check_resolved(space: ConfigSpace) -> None:
    for p in space.params:
        if not p.resolved:
            raise UnresolvedBoundError(
                f"parameter {p.name!r} has unresolved bound {p.data_dependent!r}"
            )


def sample_uniform(space: ConfigSpace, rng: np.random.Generator) -> Configuration:
    """Draw one configuration uniformly at random."""
    _check_resolved(space)
    config: Configuration = {}
    for p in space.params:
        if p.kind == "cat":
            config[p.name] = p.choices[int(rng.integers(len(p.choices)))]
        elif p.kind == "int":
            config[p.name] = int(rng.integers(int(p.lower), int(p.upper) + 1))
        elif p.log_scale:
            config[p.name] = float(
                math.exp(rng.uniform(math.log(p.lower), math.log(p.upper)))
            )
        else:
            config[p.name] = float(rng.uniform(p.lower, p.upper))
    return config


def space_filling_sample(
    space: ConfigSpace, n: int, rng: np.random.Generator
) -> list[Configuration]:
    """Latin-hypercube sample: one draw per equal-probability bin and
    dimension; categoricals cycle round-robin in a shuffled order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_resolved(space)
    columns: dict[str, list] = {}
    for p in space.params:
        if p.kind == "cat":
            order = [p.choices[i] for i in rng.permutation(len(p.choices))]
            columns[p.name] = [order[i % len(order)] for i in range(n)]
            continue
        # one uniform draw inside each of n strata, in shuffled order
        u = (rng.permutation(n) + rng.random(n)) / n
        if p.kind == "int":
            lo, hi = int(p.lower), int(p.upper)
            vals = np.minimum(np.floor(lo + u * (hi - lo + 1)).astype(int), hi)
            columns[p.name] = [int(v) for v in vals]
        elif p.log_scale:
            lo, hi = math.log(p.lower), math.log(p.upper)
            columns[p.name] = [float(math.exp(lo + ui * (hi - lo))) for ui in u]
        else:
            columns[p.name] = [float(p.lower + ui * (p.upper - p.lower)) for ui in u]
    return [{name: col[i] for name, col in columns.items()} for i in range(n)]


@dataclass(frozen=True, order=True)
class Combination:
    """Upper-level variable: one transfer learner plus one classifier."""

    transfer_id: str
    classifier_id: str

    def __str__(self) -> str:
        return f"{self.transfer_id}+{self.classifier_id}"


@dataclass(frozen=True)
class TransferSpec:
    id: str
    space: ConfigSpace
    needs_target_data: bool


@dataclass(frozen=True)
class ClassifierSpec:
    id: str
    space: ConfigSpace


@dataclass(frozen=True)
class Portfolio:
    """The portfolios of transfer learners and classifiers whose cartesian
    product forms the upper-level search space."""

    transfer_specs: tuple[TransferSpec, ...]
    classifier_specs: tuple[ClassifierSpec, ...]

    def __post_init__(self):
        tids = [t.id for t in self.transfer_specs]
        cids = [c.id for c in self.classifier_specs]
        if len(set(tids)) != len(tids) or len(set(cids)) != len(cids):
            raise ValueError("portfolio ids must be unique")

    @property
    def n_combinations(self) -> int:
        return len(self.transfer_specs) * len(self.classifier_specs)

    def transfer(self, transfer_id: str) -> TransferSpec:
        for t in self.transfer_specs:
            if t.id == transfer_id:
                return t
        raise KeyError(f"unknown transfer learner {transfer_id!r}")

    def classifier(self, classifier_id: str) -> ClassifierSpec:
        for c in self.classifier_specs:
            if c.id == classifier_id:
                return c
        raise KeyError(f"unknown classifier {classifier_id!r}")

    def contains(self, x: Combination) -> bool:
        return any(t.id == x.transfer_id for t in self.transfer_specs) and any(
            c.id == x.classifier_id for c in self.classifier_specs
        )

    def combinations(self) -> list[Combination]:
        return [
            Combination(t.id, c.id)
            for t in self.transfer_specs
            for c in self.classifier_specs
        ]

    def joint_space(self, x: Combination) -> ConfigSpace:
        """Configuration space of a combination: transfer params followed by
        classifier params."""
        return self.transfer(x.transfer_id).space.merge(
            self.classifier(x.classifier_id).space
        )

    def resolve(self, n_source: int, n_target: int) -> "Portfolio":
        return Portfolio(
            tuple(
                TransferSpec(t.id, t.space.resolve(n_source, n_target), t.needs_target_data)
                for t in self.transfer_specs
            ),
            tuple(
                ClassifierSpec(c.id, c.space.resolve(n_source, n_target))
                for c in self.classifier_specs
            ),
        )

    def sample_combination(self, rng: np.random.Generator) -> Combination:
        t = self.transfer_specs[int(rng.integers(len(self.transfer_specs)))]
        c = self.classifier_specs[int(rng.integers(len(self.classifier_specs)))]
        return Combination(t.id, c.id)


def neighborhood(portfolio: Portfolio, x: Combination) -> list[Combination]:
    """All combinations at Hamming distance 1: swap the transfer learner or
    the classifier, never both. Canonical order: transfer swaps in portfolio
    order, then classifier swaps."""
    if not portfolio.contains(x):
        raise KeyError(f"combination {x} not in portfolio")
    out = [
        Combination(t.id, x.classifier_id)
        for t in portfolio.transfer_specs
        if t.id != x.transfer_id
    ]
    out += [
        Combination(x.transfer_id, c.id)
        for c in portfolio.classifier_specs
        if c.id != x.classifier_id
    ]
    return out


def _parse_param_line(tokens: list[str], lineno: int) -> ParamSpec:
    name = tokens[0]
    kind = tokens[1]
    if kind == "cat":
        if len(tokens) != 3:
            raise PortfolioFormatError(
                f"line {lineno}: expected 'name cat choice1,choice2,...'"
            )
        return ParamSpec(name, "cat", choices=tuple(tokens[2].split(",")))
    if kind in ("int", "real"):
        if len(tokens) != 4:
            raise PortfolioFormatError(
                f"line {lineno}: expected 'name {kind} lower upper'"
            )
        lower = float(tokens[2]) if kind == "real" else int(tokens[2])
        if tokens[3] in DATA_SYMBOLS:
            return ParamSpec(name, kind, lower=lower, data_dependent=tokens[3])
        upper = float(tokens[3]) if kind == "real" else int(tokens[3])
        return ParamSpec(
            name, kind, lower=lower, upper=upper,
            log_scale=_maybe_log(kind, lower, upper),
        )
    raise PortfolioFormatError(f"line {lineno}: unknown kind {kind!r}")


def parse_portfolio(text: str) -> Portfolio:
    """Parse the line-based portfolio definition format.

    Sections start with ``transfer <id> [needs_target]`` or
    ``classifier <id>``; subsequent lines declare one parameter each as
    ``name int|real lower upper`` or ``name cat choice1,choice2,...``.
    """
    transfers: list[TransferSpec] = []
    classifiers: list[ClassifierSpec] = []
    section: Optional[tuple[str, str, bool]] = None
    params: list[ParamSpec] = []

    def close_section():
        nonlocal params
        if section is None:
            return
        role, name, needs = section
        space = ConfigSpace(tuple(params))
        if role == "transfer":
            transfers.append(TransferSpec(name, space, needs))
        else:
            classifiers.append(ClassifierSpec(name, space))
        params = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] in ("transfer", "classifier"):
            close_section()
            if len(tokens) < 2:
                raise PortfolioFormatError(f"line {lineno}: missing id")
            needs = "needs_target" in tokens[2:]
            section = (tokens[0], tokens[1], needs)
        else:
            if section is None:
                raise PortfolioFormatError(
                    f"line {lineno}: parameter outside any section"
                )
            params.append(_parse_param_line(tokens, lineno))
    close_section()
    if not transfers or not classifiers:
        raise PortfolioFormatError(
            "portfolio needs at least one transfer learner and one classifier"
        )
    return Portfolio(tuple(transfers), tuple(classifiers))


def load_portfolio(path: Optional[str | Path] = None) -> Portfolio:
    """Load a portfolio file; with no path, the bundled default (the
    natively implemented subset)."""
    if path is None:
        from importlib.resources import files

        text = (files("bilopt") / "data" / "portfolio_default.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_portfolio(text)
