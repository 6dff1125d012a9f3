"""Seeded random hyperparameter search scored by stratified k-fold macro-F1.

Sixty uniform draws land in the best 5% of a search space with
probability 1 - 0.95**60 > 0.95; the default trial count doubles that.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import forest
from .data import FeatureMatrix
from .errors import InvalidTrials
from .evalharness import CVPlan, cross_validate

DEFAULT_TRIALS = 120


@dataclass(frozen=True)
class SearchSpace:
    n_estimators: tuple = (50, 100, 200, 400, 800)
    criterion: tuple = ("gini", "entropy")
    max_depth: tuple = (8, 16, 32, 64, None)
    max_features: tuple = ("sqrt", "log2", 0.25, 0.5, "all")
    bootstrap: tuple = (True, False)
    class_weight: tuple = ("none", "balanced", "gamma(0.3)", "gamma(0.5)", "gamma(1)")

    def __post_init__(self):
        for name in self.names():
            if not getattr(self, name):
                raise ValueError(f"search space for {name} is empty")

    @staticmethod
    def names() -> tuple[str, ...]:
        return ("n_estimators", "criterion", "max_depth", "max_features", "bootstrap", "class_weight")

    def sample(self, rng: np.random.Generator) -> forest.HyperParams:
        kw = {}
        for name in self.names():
            values = getattr(self, name)
            kw[name] = values[int(rng.integers(len(values)))]
        return forest.HyperParams(**kw)


@dataclass
class TrialResult:
    hyperparams: forest.HyperParams
    mean_f1: float
    fold_f1: list[float]
    wall_time: float


@dataclass
class SearchResult:
    best: TrialResult
    best_index: int
    trials: list[TrialResult] = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            n_folds = max((len(t.fold_f1) for t in self.trials), default=0)
            w.writerow(["trial", *SearchSpace.names(), *(f"f1_fold{i}" for i in range(n_folds)),
                        "mean_f1", "wall_time_s"])
            for i, t in enumerate(self.trials):
                hp = t.hyperparams
                w.writerow([i, hp.n_estimators, hp.criterion,
                            "none" if hp.max_depth is None else hp.max_depth,
                            hp.max_features, int(hp.bootstrap), hp.class_weight,
                            *(f"{s:.6f}" for s in t.fold_f1), f"{t.mean_f1:.6f}", f"{t.wall_time:.3f}"])


def _run_trial(m, hp, folds, mode, seed):
    t0 = time.perf_counter()
    report = cross_validate(m, hp=hp, mode=mode, plan=CVPlan(repetitions=1, folds=folds, seed=seed))
    return TrialResult(hp, float(np.mean(report.fold_f1)), report.fold_f1, time.perf_counter() - t0)


def random_search(m: FeatureMatrix, space: SearchSpace | None = None, trials: int = DEFAULT_TRIALS,
                  folds: int = 5, seed: int = 0, mode: str = forest.OVR, n_jobs: int = 1) -> SearchResult:
    """Evaluate ``trials`` uniform draws (duplicates allowed); earliest best wins.

    All trials share one fold assignment so their scores are comparable.
    """
    if trials < 1:
        raise InvalidTrials(f"trials must be >= 1, got {trials}")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    space = space or SearchSpace()
    rng = np.random.default_rng(seed)
    draws = [space.sample(rng) for _ in range(trials)]
    if n_jobs == 1:
        results = [_run_trial(m, hp, folds, mode, seed) for hp in draws]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_run_trial)(m, hp, folds, mode, seed) for hp in draws)
    best_index = max(range(len(results)), key=lambda i: (results[i].mean_f1, -i))
    return SearchResult(results[best_index], best_index, results)
