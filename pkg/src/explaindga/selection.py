"""Feature selection: degenerate-feature filter, Relief-family rankers,
recursive elimination with MDI or permutation importance, set combination
and Spearman-based multicollinearity collapse.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from scipy.stats import rankdata

from . import forest
from .data import FeatureMatrix
from .errors import AllDegenerate, ClassTooSmall, EmptyIntersection, UntrainedModel
from .evalharness import CVPlan, macro_metrics, stratified_folds
from .features import CATALOG_INDEX, FeatureSetSelection

MI_BINS = 32
RELIEFF_K = 10
_BLOCK = 256


@dataclass
class SelectionReport:
    method: str
    selected_ids: list[str]
    feature_ids: list[str]
    scores: list[float]
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.selected_ids:
            raise ValueError(f"{self.method}: empty selection")
        unknown = set(self.selected_ids) - set(self.feature_ids)
        if unknown:
            raise ValueError(f"{self.method}: selected ids not in feature_ids: {sorted(unknown)}")
        if len(self.scores) != len(self.feature_ids):
            raise ValueError("scores must align with feature_ids")

    def to_selection(self, name: str | None = None) -> FeatureSetSelection:
        return FeatureSetSelection(name or self.method, tuple(self.selected_ids))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "parameters": self.parameters,
            "selected_ids": list(self.selected_ids),
            "feature_ids": list(self.feature_ids),
            "scores": [float(s) for s in self.scores],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "SelectionReport":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["method"], d["selected_ids"], d["feature_ids"], d["scores"], d.get("parameters", {}))


def _above_mean(ids, weights) -> list[str]:
    w = np.asarray(weights)
    return [f for f, s in zip(ids, w) if s > w.mean()]


# -- filters -----------------------------------------------------------------


def equal_frequency_bins(x: np.ndarray, n_bins: int = MI_BINS) -> np.ndarray:
    """Bin index per value using at most ``n_bins`` quantile bins."""
    edges = np.unique(np.quantile(x, np.linspace(0, 1, n_bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="right")


def mutual_information(x: np.ndarray, y: np.ndarray, n_bins: int = MI_BINS) -> float:
    """Plug-in mutual information (bits) between a binned feature and labels."""
    bx = equal_frequency_bins(x, n_bins)
    _, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((bx.max() + 1, yi.max() + 1))
    np.add.at(joint, (bx, yi), 1.0)
    joint /= joint.sum()
    px = joint.sum(1, keepdims=True)
    py = joint.sum(0, keepdims=True)
    nz = joint > 0
    return float(max((joint[nz] * np.log2(joint[nz] / (px @ py)[nz])).sum(), 0.0))


def drop_degenerate(m: FeatureMatrix, n_bins: int = MI_BINS) -> SelectionReport:
    if m.X.shape[0] < 2 or len(np.unique(m.y)) < 2:
        raise ValueError("need at least 2 rows and 2 classes")
    var = m.X.var(axis=0, ddof=1)
    mi = np.array([mutual_information(m.X[:, j], m.y, n_bins) if var[j] > 0 else 0.0
                   for j in range(m.X.shape[1])])
    keep = [f for f, v, s in zip(m.feature_ids, var, mi) if v > 0 and s > 1e-12]
    if not keep:
        raise AllDegenerate("every feature has zero variance or zero mutual information")
    return SelectionReport("drop-degenerate", keep, list(m.feature_ids), mi.tolist(), {"mi_bins": n_bins})


# -- Relief family -----------------------------------------------------------


def _minmax(X: np.ndarray) -> np.ndarray:
    lo, hi = X.min(0), X.max(0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (X - lo) / span


def _distance_rows(Xs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # Manhattan distance over min-max scaled features
    return np.abs(Xs[rows, None, :] - Xs[None, :, :]).sum(-1)


def _class_priors(y: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(y, minlength=n_classes) / len(y)


def relieff(m: FeatureMatrix, k_neighbors: int = RELIEFF_K) -> SelectionReport:
    """ReliefF weights over all instances with ``k`` nearest hits and misses per class."""
    X = _minmax(m.X)
    y = m.y
    n, p = X.shape
    classes = np.unique(y)
    counts = np.bincount(y)
    if np.any(counts[classes] <= k_neighbors):
        raise ClassTooSmall(f"every class needs more than k={k_neighbors} members")
    prior = _class_priors(y, counts.size)
    W = np.zeros(p)
    for start in range(0, n, _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, n))
        D = _distance_rows(X, rows)
        D[np.arange(rows.size), rows] = np.inf
        for r, i in enumerate(rows):
            ci = y[i]
            for c in classes:
                members = np.flatnonzero(y == c)
                near = members[np.argsort(D[r, members], kind="stable")[:k_neighbors]]
                diff = np.abs(X[near] - X[i]).mean(0)
                if c == ci:
                    W -= diff
                else:
                    W += prior[c] / (1.0 - prior[ci]) * diff
    W /= n
    return SelectionReport("ReliefF", _above_mean(m.feature_ids, W), list(m.feature_ids), W.tolist(),
                           {"k_neighbors": k_neighbors})


def multisurf(m: FeatureMatrix) -> SelectionReport:
    """Parameter-free MultiSURF: each instance's neighbourhood is every
    instance closer than its mean distance minus half a standard deviation.
    """
    X = _minmax(m.X)
    y = m.y
    n, p = X.shape
    counts = np.bincount(y)
    classes = np.unique(y)
    if np.any(counts[classes] < 3):
        raise ClassTooSmall("every class needs at least 3 members")
    prior = _class_priors(y, counts.size)
    W = np.zeros(p)
    for start in range(0, n, _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, n))
        D = _distance_rows(X, rows)
        for r, i in enumerate(rows):
            d = np.delete(D[r], i)
            others = np.delete(np.arange(n), i)
            thresh = d.mean() - d.std() / 2.0
            near = others[d < thresh]
            if near.size == 0:
                continue
            ci = y[i]
            hits = near[y[near] == ci]
            if hits.size:
                W -= np.abs(X[hits] - X[i]).mean(0)
            miss_term = np.zeros(p)
            norm = 0.0
            for c in classes:
                if c == ci:
                    continue
                misses = near[y[near] == c]
                if misses.size:
                    wc = prior[c] / (1.0 - prior[ci])
                    miss_term += wc * np.abs(X[misses] - X[i]).mean(0)
                    norm += wc
            if norm > 0:
                W += miss_term / norm
    W /= n
    return SelectionReport("MultiSURF", _above_mean(m.feature_ids, W), list(m.feature_ids), W.tolist(), {})


# -- model-based importances -------------------------------------------------


def mdi(model: forest.ForestModel) -> np.ndarray:
    return forest.mdi(model)


def _macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return macro_metrics(cm).macro_f1


def permutation_importance(model: forest.ForestModel, holdout: FeatureMatrix, repeats: int = 5,
                           seed: int = 0) -> np.ndarray:
    """Mean macro-F1 drop after shuffling each holdout column."""
    if model is None or not model.forests:
        raise UntrainedModel("permutation importance needs a trained model")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = holdout.X
    k = model.n_classes
    base = _macro_f1(holdout.y, model.predict(X), k)
    scores = np.zeros(X.shape[1])
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(repeats)]
    for j in range(X.shape[1]):
        drops = []
        for rng in rngs:
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            drops.append(base - _macro_f1(holdout.y, model.predict(Xp), k))
        scores[j] = float(np.mean(drops))
    return scores


# -- recursive feature elimination -------------------------------------------

MDI = "MDI"
PI = "PI"
SELECTION_HP = forest.HyperParams(n_estimators=50)


def rfe(m: FeatureMatrix, ranker: str = MDI, folds: int = 3, hp: forest.HyperParams | None = None,
        mode: str = forest.DIRECT, seed: int = 0, pi_repeats: int = 3) -> SelectionReport:
    """Cross-validated recursive elimination, one feature per iteration.

    At each iteration a forest is trained per fold; importances (MDI of
    the fold models, or permutation importance on the held-out fold) are
    averaged across folds and the lowest-ranked feature is dropped. The
    returned set is the one with the best mean held-out macro-F1, the
    largest set winning ties.
    """
    if m.X.shape[1] < 2:
        raise ValueError("rfe needs at least 2 features")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if ranker not in (MDI, PI):
        raise ValueError(f"ranker must be {MDI!r} or {PI!r}")
    hp = hp or SELECTION_HP
    assign = stratified_folds(m.y, CVPlan(repetitions=1, folds=folds, seed=seed))[0]
    current = list(m.feature_ids)
    history: list[tuple[list[str], float]] = []
    eliminated: list[str] = []
    while True:
        sub = m.subset(columns=current)
        importance = np.zeros(len(current))
        f1s = []
        for f in range(folds):
            tr, te = np.flatnonzero(assign != f), np.flatnonzero(assign == f)
            model = forest.train(sub.subset(tr), hp, mode, seed + f)
            hold = sub.subset(te)
            f1s.append(_macro_f1(hold.y, model.predict(hold.X), model.n_classes))
            if ranker == MDI:
                importance += forest.mdi(model)
            else:
                importance += permutation_importance(model, hold, pi_repeats, seed + f)
        history.append((list(current), float(np.mean(f1s))))
        if len(current) == 1:
            break
        # lowest importance goes; among ties the later feature
        worst = max(range(len(current)), key=lambda j: (-importance[j], j))
        eliminated.append(current.pop(worst))
    best = max(range(len(history)), key=lambda i: (history[i][1], -i))
    selected = history[best][0]
    # score = iteration at which the feature was eliminated (survivors rank highest)
    rank = {f: i for i, f in enumerate(eliminated)}
    scores = [float(rank.get(f, len(eliminated))) for f in m.feature_ids]
    return SelectionReport(
        f"RFE-{ranker}", selected, list(m.feature_ids), scores,
        {"ranker": ranker, "folds": folds, "seed": seed, "hyperparams": hp.to_dict(),
         "cv_scores": [s for _, s in history], "elimination_order": eliminated},
    )


# -- set operations and collapse ---------------------------------------------


def _ordered(ids: set[str], reference: Sequence[str]) -> list[str]:
    if all(i in CATALOG_INDEX for i in ids):
        return sorted(ids, key=CATALOG_INDEX.__getitem__)
    pos = {f: i for i, f in enumerate(reference)}
    return sorted(ids, key=lambda f: pos.get(f, len(pos)))


def combine(reports: Sequence[SelectionReport], mode: str = "union") -> SelectionReport:
    if len(reports) < 2:
        raise ValueError("combine needs at least two reports")
    sets = [set(r.selected_ids) for r in reports]
    if mode == "union":
        chosen = set().union(*sets)
    elif mode == "intersection":
        chosen = set.intersection(*sets)
        if not chosen:
            raise EmptyIntersection("selector outputs share no feature")
    else:
        raise ValueError(f"mode must be union or intersection, got {mode!r}")
    reference: list[str] = []
    for r in reports:
        reference.extend(f for f in r.feature_ids if f not in reference)
    membership = [float(sum(f in s for s in sets)) for f in reference]
    return SelectionReport(mode.capitalize(), _ordered(chosen, reference), reference, membership,
                           {"sources": [r.method for r in reports]})


def spearman_distance(X: np.ndarray) -> np.ndarray:
    """``1 - |rho|`` between columns; constant columns are uncorrelated with everything."""
    R = rankdata(X, axis=0)
    R = R - R.mean(0)
    norms = np.sqrt((R * R).sum(0))
    ok = norms > 0
    Rn = np.divide(R, norms, out=np.zeros_like(R), where=ok)
    rho = np.clip(Rn.T @ Rn, -1.0, 1.0)
    D = 1.0 - np.abs(rho)
    np.fill_diagonal(D, 0.0)
    return D


def spearman_collapse(m: FeatureMatrix, target_clusters: int, mdi_scores=None,
                      hp: forest.HyperParams | None = None, seed: int = 0) -> SelectionReport:
    """Average-linkage clustering on Spearman distance, keeping the highest-MDI member per cluster.

    ``mdi_scores`` align with ``m.feature_ids``; when omitted a forest is
    trained on ``m`` to obtain them.
    """
    p = m.X.shape[1]
    if p < 2:
        raise ValueError("need at least 2 features")
    target = int(min(max(target_clusters, 1), p))
    if mdi_scores is None:
        mdi_scores = forest.mdi(forest.train(m, hp or SELECTION_HP, forest.DIRECT, seed))
    mdi_scores = np.asarray(mdi_scores, dtype=np.float64)
    D = spearman_distance(m.X)
    Z = linkage(squareform(D, checks=False), method="average")
    labels = fcluster(Z, t=target, criterion="maxclust")
    heights = Z[:, 2]
    lo = heights[p - target - 1] if target < p else 0.0
    hi = heights[p - target] if target > 1 else lo
    threshold = float((lo + hi) / 2.0)
    keep = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        keep.append(members[np.argmax(mdi_scores[members])])
    ids = [m.feature_ids[j] for j in sorted(keep)]
    return SelectionReport(
        "Spearman-collapse", ids, list(m.feature_ids), mdi_scores.tolist(),
        {"target_clusters": target, "threshold": threshold, "n_clusters": int(len(np.unique(labels))),
         "clusters": [[m.feature_ids[j] for j in np.flatnonzero(labels == c)] for c in np.unique(labels)]},
    )


def run_pipeline(m: FeatureMatrix, seed: int = 0, hp: forest.HyperParams | None = None, folds: int = 3,
                 k_neighbors: int = RELIEFF_K, collapse_ratio: float = 64 / 76,
                 relief_rows: int | None = 1000) -> dict[str, SelectionReport]:
    """Filter, four selectors, union/intersection and Spearman collapse of the union.

    ``relief_rows`` caps the stratified sample handed to the quadratic
    Relief rankers.
    """
    reports: dict[str, SelectionReport] = {}
    reports["drop-degenerate"] = dd = drop_degenerate(m)
    base = m.subset(columns=dd.selected_ids)
    relief_m = base
    if relief_rows is not None and base.X.shape[0] > relief_rows:
        rng = np.random.default_rng(seed)
        idx = np.sort(np.concatenate([
            rng.choice(np.flatnonzero(base.y == c),
                       size=max(int(round(relief_rows * np.mean(base.y == c))), k_neighbors + 1), replace=False)
            for c in np.unique(base.y)]))
        relief_m = base.subset(idx)
    reports["ReliefF"] = relieff(relief_m, k_neighbors)
    reports["MultiSURF"] = multisurf(relief_m)
    reports["RFE-MDI"] = rfe(base, MDI, folds, hp, seed=seed)
    reports["RFE-PI"] = rfe(base, PI, folds, hp, seed=seed)
    four = [reports[k] for k in ("ReliefF", "MultiSURF", "RFE-MDI", "RFE-PI")]
    reports["Union"] = union = combine(four, "union")
    try:
        reports["Intersection"] = combine(four, "intersection")
    except EmptyIntersection:
        pass
    um = base.subset(columns=union.selected_ids)
    if len(union.selected_ids) >= 2:
        target = max(1, int(round(collapse_ratio * len(union.selected_ids))))
        rep = spearman_collapse(um, target, hp=hp, seed=seed)
        rep.method = "Union-Spearman"
        reports["Union-Spearman"] = rep
    return reports
