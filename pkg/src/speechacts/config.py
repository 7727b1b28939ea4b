"""Run configuration: optimizer hyperparameters and pipeline settings.

Precedence when wiring a run: command-line flags > config file > the
defaults below. The effective configuration is echoed into every output for
provenance.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

from .featurize import SAME_SPEAKER, SLEN_SCOPES


@dataclass(frozen=True)
class Hyperparams:
    """Settings for one regularized logistic-regression fit."""

    C: float = 1.0  # inverse regularization strength
    learning_rate: float = 0.1
    max_iterations: int = 1000
    tolerance: float = 1e-6
    fit_bias: bool = True

    def __post_init__(self):
        for name in ("C", "learning_rate", "max_iterations", "tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def as_dict(self) -> dict:
        return {
            "C": self.C,
            "learning_rate": self.learning_rate,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
            "fit_bias": self.fit_bias,
        }


DEFAULT_GRID = {
    "C": [0.01, 0.1, 1.0, 10.0],
    "learning_rate": [0.1, 0.5],
    "fit_bias": [True, False],
}


def expand_grid(grid: dict, base: Hyperparams = Hyperparams()) -> list[Hyperparams]:
    """Cartesian product of a {field: [values]} grid, in grid order."""
    if not grid:
        raise ValueError("empty tuning grid")
    names = list(grid.keys())
    for name in names:
        if name not in Hyperparams.__dataclass_fields__:
            raise ValueError(f"unknown hyperparameter {name!r}")
        if not grid[name]:
            raise ValueError(f"no values for hyperparameter {name!r}")
    points = []
    for combo in itertools.product(*(grid[name] for name in names)):
        points.append(replace(base, **dict(zip(names, combo))))
    return points


@dataclass(frozen=True)
class RunConfig:
    smote_k: int = 5
    n_folds: int = 5
    seed: int = 0
    threshold: float = 0.5
    fallback: bool = False
    slen_scope: str = SAME_SPEAKER
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    tune: bool = False
    tuning_grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    inner_folds: int = 3

    def __post_init__(self):
        if self.smote_k < 1:
            raise ValueError("smote_k must be >= 1")
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.inner_folds < 2:
            raise ValueError("inner_folds must be >= 2")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.slen_scope not in SLEN_SCOPES:
            raise ValueError(f"slen_scope must be one of {SLEN_SCOPES}")

    def as_dict(self) -> dict:
        return {
            "smote_k": self.smote_k,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "threshold": self.threshold,
            "fallback": self.fallback,
            "slen_scope": self.slen_scope,
            "hyperparams": self.hyperparams.as_dict(),
            "tune": self.tune,
            "tuning_grid": self.tuning_grid,
            "inner_folds": self.inner_folds,
        }


def config_from_dict(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(obj)
    if "hyperparams" in kwargs:
        kwargs["hyperparams"] = Hyperparams(**kwargs["hyperparams"])
    return RunConfig(**kwargs)


def load_config(path: Union[str, Path]) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(obj)
