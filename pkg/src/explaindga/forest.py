"""CART trees, bagged random forests and a one-vs-rest wrapper.

Trees are stored as flat node arrays. Class weights enter as per-sample
weights, so they shape both the split impurity and the leaf
distributions. Prediction walks all trees of a model simultaneously with
vectorized numpy indexing.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from .data import FeatureMatrix
from .errors import DegenerateClass, DimensionMismatch, EmptyClass, EmptyTraining, UntrainedModel

FORMAT_VERSION = 1
DIRECT = "direct_multiclass"
OVR = "one_vs_rest"
_GAIN_EPS = 1e-12


# -- hyperparameters and class weights --------------------------------------


def parse_class_weight(spec) -> tuple[str, float]:
    """Normalize ``none`` / ``balanced`` / ``gamma(g)`` / bare float into (kind, gamma)."""
    if spec is None:
        return "none", 0.0
    if isinstance(spec, (int, float)):
        return "gamma", float(spec)
    s = str(spec).strip().lower()
    if s in ("none", ""):
        return "none", 0.0
    if s == "balanced":
        return "balanced", 1.0
    m = re.fullmatch(r"gamma\(?\s*([0-9.eE+-]+)\s*\)?", s)
    if m:
        return "gamma", float(m.group(1))
    raise ValueError(f"invalid class_weight {spec!r}")


def format_class_weight(spec) -> str:
    kind, g = parse_class_weight(spec)
    return f"gamma({g:g})" if kind == "gamma" else kind


@dataclass(frozen=True)
class HyperParams:
    n_estimators: int = 100
    criterion: str = "gini"
    max_depth: int | None = None
    max_features: str | float = "sqrt"
    bootstrap: bool = True
    class_weight: str = "none"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"criterion must be gini or entropy, got {self.criterion!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("sqrt", "log2", "all"):
                try:
                    mf = float(mf)
                except ValueError:
                    raise ValueError(f"invalid max_features {self.max_features!r}") from None
                object.__setattr__(self, "max_features", mf)
        if isinstance(mf, float) and not 0.0 < mf <= 1.0:
            raise ValueError("fractional max_features must lie in (0, 1]")
        kind, g = parse_class_weight(self.class_weight)
        if kind == "gamma" and not 0.0 <= g <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        object.__setattr__(self, "class_weight", format_class_weight(self.class_weight))

    def n_candidate_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "all":
            return n_features
        if mf == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if mf == "log2":
            return max(1, int(math.log2(n_features))) if n_features > 1 else 1
        return max(1, int(float(mf) * n_features))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**d)


def class_weights(counts: Sequence[int], gamma: float) -> np.ndarray:
    """Per-class cost ``(total / count_i) ** gamma``."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0 or np.any(counts < 1):
        raise EmptyClass("every class needs at least one sample")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return (counts.sum() / counts) ** gamma


def _weights_for(y: np.ndarray, n_classes: int, spec: str) -> np.ndarray:
    kind, g = parse_class_weight(spec)
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    if kind == "none":
        return np.ones(n_classes)
    present = counts > 0
    w = np.ones(n_classes)
    if kind == "balanced":
        w[present] = counts.sum() / (present.sum() * counts[present])
    else:
        w[present] = class_weights(counts[present], g)
    return w


# -- single tree -------------------------------------------------------------


def node_impurity(dist: np.ndarray, criterion: str) -> float:
    """Impurity of a (possibly unnormalized) class-weight vector."""
    tot = dist.sum()
    if tot <= 0:
        return 0.0
    p = dist / tot
    if criterion == "gini":
        return float(1.0 - np.dot(p, p))
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


@dataclass
class DecisionTree:
    """Flat binary tree; ``feature[i] == -1`` marks a leaf.

    ``value`` rows are normalized class distributions for every node and
    ``weight`` is the fraction of (weighted) training mass reaching it.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def node_gain(self) -> np.ndarray:
        """Weighted impurity decrease at each internal node (0 at leaves)."""
        gain = np.zeros(self.n_nodes)
        internal = np.flatnonzero(self.feature >= 0)
        if internal.size:
            l, r = self.left[internal], self.right[internal]
            gain[internal] = np.maximum(self.weight[internal] * self.impurity[internal]
                                        - self.weight[l] * self.impurity[l]
                                        - self.weight[r] * self.impurity[r], 0.0)
        return gain

    def apply(self, X: np.ndarray) -> np.ndarray:
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[nodes]
            active = f >= 0
            if not active.any():
                return nodes
            fa = np.where(active, f, 0)
            go_left = X[rows, fa] <= self.threshold[nodes]
            nxt = np.where(go_left, self.left[nodes], self.right[nodes])
            nodes = np.where(active, nxt, nodes)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(np.atleast_2d(X))]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "weight": self.weight.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=np.float64).reshape(len(d["feature"]), -1),
            impurity=np.array(d["impurity"], dtype=np.float64),
            weight=np.array(d["weight"], dtype=np.float64),
        )


def _child_impurity_sums(cl: np.ndarray, cr: np.ndarray, wl: np.ndarray, wr: np.ndarray, criterion: str):
    """Weighted child impurity ``wl*I(L) + wr*I(R)`` at every split position."""
    if criterion == "gini":
        return wl - (cl * cl).sum(1) / wl + wr - (cr * cr).sum(1) / wr
    with np.errstate(divide="ignore", invalid="ignore"):
        hl = np.where(cl > 0, cl * np.log2(cl), 0.0).sum(1)
        hr = np.where(cr > 0, cr * np.log2(cr), 0.0).sum(1)
    return wl * np.log2(wl) - hl + wr * np.log2(wr) - hr


def _best_split(X, idx, y, w, n_classes, feat_order, k, criterion, parent_imp):
    ys = y[idx]
    ws = w[idx]
    n = idx.size
    wt = ws.sum()
    onehot = np.zeros((n, n_classes))
    node_tot = np.bincount(ys, weights=ws, minlength=n_classes)
    # zero-gain splits are accepted on impure nodes (XOR needs one at the root)
    best = (-_GAIN_EPS * wt, -1, 0.0)
    tried = 0
    for f in feat_order:
        xs = X[idx, f]
        o = np.argsort(xs, kind="stable")
        xs = xs[o]
        if xs[0] == xs[-1]:
            continue
        onehot[:] = 0.0
        onehot[np.arange(n), ys[o]] = ws[o]
        cl = np.cumsum(onehot, axis=0)[:-1]
        valid = np.flatnonzero(xs[1:] > xs[:-1])
        cl = cl[valid]
        cr = node_tot - cl
        wl = cl.sum(1)
        wr = wt - wl
        child = _child_impurity_sums(cl, cr, wl, wr, criterion)
        j = int(np.argmin(child))
        gain = wt * parent_imp - child[j]
        if gain > best[0]:
            lo, hi = xs[valid[j]], xs[valid[j] + 1]
            thr = (lo + hi) / 2.0
            if thr >= hi:
                thr = lo
            best = (gain, int(f), float(thr))
        tried += 1
        if tried >= k:
            break
    return best[1], best[2]


def train_tree(X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, n_classes: int,
               hp: HyperParams, seed) -> DecisionTree:
    """Grow one CART tree on rows with positive weight."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(sample_weight, dtype=np.float64)
    root_idx = np.flatnonzero(w > 0)
    if root_idx.size == 0:
        raise EmptyTraining("no training rows with positive weight")
    rng = np.random.default_rng(seed)
    p = X.shape[1]
    k = hp.n_candidate_features(p)
    total_w = w[root_idx].sum()
    max_depth = hp.max_depth if hp.max_depth is not None else np.iinfo(np.int64).max

    feature, threshold, left, right, values, imps, weights = [], [], [], [], [], [], []

    def new_node(idx):
        dist = np.bincount(y[idx], weights=w[idx], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        values.append(dist / dist.sum())
        imps.append(node_impurity(dist, hp.criterion))
        weights.append(dist.sum() / total_w)
        return len(feature) - 1

    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < 2 or imps[node] <= 0.0:
            continue
        order = np.arange(p) if k >= p else rng.permutation(p)
        f, thr = _best_split(X, idx, y, w, n_classes, order, k, hp.criterion, imps[node])
        if f < 0:
            continue
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        ln, rn = new_node(li), new_node(ri)
        left[node], right[node] = ln, rn
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(values, dtype=np.float64).reshape(len(feature), n_classes),
        impurity=np.array(imps, dtype=np.float64),
        weight=np.array(weights, dtype=np.float64),
    )


# -- forests -----------------------------------------------------------------


def _grow_forest(X, y, n_classes, hp: HyperParams, seed_seq: np.random.SeedSequence, n_jobs: int):
    cw = _weights_for(y, n_classes, hp.class_weight)
    base_w = cw[y]
    children = seed_seq.spawn(hp.n_estimators)

    def one(child):
        rng = np.random.default_rng(child)
        if hp.bootstrap:
            counts = np.bincount(rng.integers(0, len(y), len(y)), minlength=len(y))
            sw = base_w * counts
        else:
            sw = base_w
        return train_tree(X, y, sw, n_classes, hp, rng.integers(0, 2**63 - 1))

    if n_jobs == 1:
        return [one(c) for c in children]
    return Parallel(n_jobs=n_jobs)(delayed(one)(c) for c in children)


class _Pack:
    """All trees of a model concatenated into one node array set."""

    def __init__(self, trees: list[DecisionTree]):
        offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
        self.roots = offsets.astype(np.int64)
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
        self.right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
        self.value = np.concatenate([t.value for t in trees])
        self.gain = np.concatenate([t.node_gain() for t in trees])
        self.is_leaf = self.feature < 0
        self.safe_feature = np.where(self.is_leaf, 0, self.feature)
        # leaves loop to themselves so the walk needs no masking
        ids = np.arange(len(self.feature))
        self.left = np.where(self.is_leaf, ids, self.left)
        self.right = np.where(self.is_leaf, ids, self.right)

    def apply(self, X: np.ndarray, record_path: bool = False):
        """Leaf index per (row, tree); optionally the visited internal nodes."""
        m = X.shape[0]
        if not record_path:
            return self._leaves(X)
        nodes = np.broadcast_to(self.roots, (m, len(self.roots))).copy()
        rows = np.arange(m)[:, None]
        path = []
        while True:
            leaf = self.is_leaf[nodes]
            if leaf.all():
                return (nodes, path) if record_path else nodes
            if record_path:
                path.append(np.where(leaf, -1, nodes))
            go_left = X[rows, self.safe_feature[nodes]] <= self.threshold[nodes]
            nodes = np.where(go_left, self.left[nodes], self.right[nodes])

    def _leaves(self, X: np.ndarray) -> np.ndarray:
        # only (row, tree) pairs still at an internal node are stepped
        m, t = X.shape[0], len(self.roots)
        nodes = np.tile(self.roots, m)
        rows = np.repeat(np.arange(m), t)
        flat = X.ravel()
        width = X.shape[1]
        active = np.flatnonzero(~self.is_leaf[nodes])
        while active.size:
            cur = nodes[active]
            go_left = flat[rows[active] * width + self.feature[cur]] <= self.threshold[cur]
            nxt = np.where(go_left, self.left[cur], self.right[cur])
            nodes[active] = nxt
            active = active[~self.is_leaf[nxt]]
        return nodes.reshape(m, t)


@dataclass
class ForestModel:
    """Trained classifier in either direct multiclass or one-vs-rest mode.

    For ``one_vs_rest`` ``forests[c]`` is the binary forest of class ``c``
    (leaf column 1 is the positive class); for direct mode ``forests`` has
    a single entry.
    """

    mode: str
    classes: tuple[str, ...]
    feature_ids: tuple[str, ...]
    hyperparams: HyperParams
    seed: int
    forests: list[list[DecisionTree]]
    selection_id: str = ""
    _packs: list = field(default_factory=list, repr=False, compare=False)
    _all: object = field(default=None, repr=False, compare=False)
    _segments: object = field(default=None, repr=False, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def trees(self) -> list[DecisionTree]:
        return [t for forest in self.forests for t in forest]

    def _ensure_packs(self):
        if not self.forests or not all(self.forests):
            raise UntrainedModel("model has no trees")
        if not self._packs:
            self._packs = [_Pack(forest) for forest in self.forests]
            # one walk over every tree; per-forest segments start at these tree offsets
            self._all = _Pack(self.trees)
            self._segments = np.cumsum([0] + [len(f) for f in self.forests[:-1]])
        return self._packs

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        X2 = X.reshape(1, -1) if X.ndim == 1 else X
        if X2.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X2.shape[1]}")
        return X2

    def class_scores(self, X) -> np.ndarray:
        """Direct mode: mean leaf distribution. OvR: mean positive score per class."""
        X = self._check(X)
        self._ensure_packs()
        leaves = self._all.apply(X)
        if self.mode == DIRECT:
            return self._all.value[leaves].mean(axis=1)
        sizes = np.array([len(f) for f in self.forests])
        return np.add.reduceat(self._all.value[leaves, 1], self._segments, axis=1) / sizes

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        scores = self.class_scores(X)
        if self.mode == OVR:
            tot = scores.sum(axis=1, keepdims=True)
            uniform = np.full_like(scores, 1.0 / self.n_classes)
            with np.errstate(invalid="ignore", divide="ignore"):
                scores = np.where(tot > 0, scores / np.where(tot > 0, tot, 1.0), uniform)
        return scores[0] if X.ndim == 1 else scores

    def predict(self, X) -> np.ndarray | int:
        X = np.asarray(X, dtype=np.float64)
        out = np.argmax(np.atleast_2d(self.predict_proba(X)), axis=1)
        return int(out[0]) if X.ndim == 1 else out

    # -- persistence --

    def to_dict(self) -> dict:
        return {
            "format": "explaindga-forest",
            "format_version": FORMAT_VERSION,
            "mode": self.mode,
            "classes": list(self.classes),
            "feature_ids": list(self.feature_ids),
            "selection_id": self.selection_id,
            "hyperparams": self.hyperparams.to_dict(),
            "seed": self.seed,
            "forests": [[t.to_dict() for t in forest] for forest in self.forests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
        return cls(
            mode=d["mode"],
            classes=tuple(d["classes"]),
            feature_ids=tuple(d["feature_ids"]),
            hyperparams=HyperParams.from_dict(d["hyperparams"]),
            seed=d["seed"],
            forests=[[DecisionTree.from_dict(t) for t in forest] for forest in d["forests"]],
            selection_id=d.get("selection_id", ""),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(m: FeatureMatrix, hp: HyperParams | None = None, mode: str = OVR, seed: int = 0,
          n_jobs: int = 1, selection_id: str = "") -> ForestModel:
    """Fit a forest model; deterministic for a given seed regardless of ``n_jobs``."""
    hp = hp or HyperParams()
    if m.X.shape[0] == 0:
        raise EmptyTraining("empty feature matrix")
    n_classes = max(m.n_classes, int(m.y.max()) + 1)
    root = np.random.SeedSequence(seed)
    if mode == DIRECT:
        forests = [_grow_forest(m.X, m.y, n_classes, hp, root, n_jobs)]
    elif mode == OVR:
        counts = np.bincount(m.y, minlength=n_classes)
        for c in range(n_classes):
            if counts[c] == 0 or counts[c] == len(m.y):
                raise DegenerateClass(f"class {m.classes[c] if c < len(m.classes) else c} has no "
                                      f"{'positives' if counts[c] == 0 else 'negatives'}")
        forests = [_grow_forest(m.X, (m.y == c).astype(np.int64), 2, hp, s, n_jobs)
                   for c, s in enumerate(root.spawn(n_classes))]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    classes = m.classes if len(m.classes) == n_classes else tuple(str(i) for i in range(n_classes))
    return ForestModel(mode, tuple(classes), m.feature_ids, hp, seed, forests, selection_id)


# -- importances and explanations -------------------------------------------


def mdi(model: ForestModel) -> np.ndarray:
    """Mean decrease in impurity per feature, normalized to sum to 1."""
    if model is None or not model.forests or not model.trees:
        raise UntrainedModel("mdi needs a trained model")
    trees = model.trees
    scores = np.zeros(model.n_features)
    for t in trees:
        internal = t.feature >= 0
        scores += np.bincount(t.feature[internal], weights=t.node_gain()[internal], minlength=model.n_features)
    scores /= len(trees)
    total = scores.sum()
    return scores / total if total > 0 else scores


@dataclass
class Explanation:
    predicted: str
    predicted_index: int
    probabilities: dict[str, float]
    values: dict[str, float]
    attributions: dict[str, float]
    top: list[tuple[str, float, float]]

    @property
    def probability(self) -> float:
        return self.probabilities[self.predicted]


def path_attribution(model: ForestModel, v, forest_index: int | None = None) -> np.ndarray:
    """Impurity decrease credited to split features along the decision paths of ``v``."""
    x = model._check(v)
    packs = model._ensure_packs()
    if model.mode == DIRECT:
        pack = packs[0]
    else:
        if forest_index is None:
            forest_index = int(model.predict(x[0]))
        pack = packs[forest_index]
    _, path = pack.apply(x, record_path=True)
    credit = np.zeros(model.n_features)
    for step in path:
        nodes = step[0]
        nodes = nodes[nodes >= 0]
        credit += np.bincount(pack.feature[nodes], weights=pack.gain[nodes], minlength=model.n_features)
    return credit


def explain_prediction(model: ForestModel, v, top_k: int = 5) -> Explanation:
    x = model._check(v)[0]
    proba = model.predict_proba(x)
    cls = int(np.argmax(proba))
    credit = path_attribution(model, x, cls if model.mode == OVR else None)
    order = sorted(range(model.n_features), key=lambda j: (-credit[j], j))
    top = [(model.feature_ids[j], float(x[j]), float(credit[j])) for j in order[:top_k] if credit[j] > 0]
    return Explanation(
        predicted=model.classes[cls],
        predicted_index=cls,
        probabilities={c: float(p) for c, p in zip(model.classes, proba)},
        values=dict(zip(model.feature_ids, map(float, x))),
        attributions=dict(zip(model.feature_ids, map(float, credit))),
        top=top,
    )
