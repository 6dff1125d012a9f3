"""Repeated stratified cross-validation, macro metrics and throughput benchmarks."""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import forest
from .data import FeatureMatrix, LabeledDataset, parse_all
from .domains import SuffixDatabase, parse, sanitize
from .errors import ClassTooSmall, NonSquare
from .features import Extractor, FeatureSetSelection, UNION

LATENCY_BUDGET_US = 430.0
PEAK_RATE = 2325.0


@dataclass(frozen=True)
class CVPlan:
    repetitions: int = 5
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


def stratified_folds(labels, plan: CVPlan) -> list[np.ndarray]:
    """Fold index per sample, one array per repetition.

    Within each class the per-fold counts differ by at most one; the
    starting fold rotates across classes so fold totals stay balanced.
    """
    y = np.asarray(labels)
    classes, inv, counts = np.unique(y, return_inverse=True, return_counts=True)
    if counts.min() < plan.folds:
        small = classes[counts < plan.folds]
        raise ClassTooSmall(f"classes with fewer than {plan.folds} samples: {list(small)}")
    out = []
    for child in np.random.SeedSequence(plan.seed).spawn(plan.repetitions):
        rng = np.random.default_rng(child)
        assign = np.empty(len(y), dtype=np.int64)
        offset = 0
        for c in range(len(classes)):
            members = rng.permutation(np.flatnonzero(inv == c))
            assign[members] = (offset + np.arange(members.size)) % plan.folds
            offset += members.size
        out.append(assign)
    return out


@dataclass
class Metrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    defined: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float


def macro_metrics(confusion) -> Metrics:
    """Per-class and macro precision/recall/F1 from a true x predicted count matrix.

    Classes without support are excluded from the macro means.
    """
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise NonSquare(f"confusion matrix must be square, got shape {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be nonnegative")
    diag = np.diag(cm)
    rows, cols = cm.sum(1), cm.sum(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(cols > 0, diag / np.where(cols > 0, cols, 1), 0.0)
        recall = np.where(rows > 0, diag / np.where(rows > 0, rows, 1), 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1), 0.0)
    defined = rows > 0
    if not defined.all():
        warnings.warn(f"classes {np.flatnonzero(~defined).tolist()} have no support; excluded from macro average",
                      stacklevel=2)
    if defined.any():
        mp, mr, mf = (float(a[defined].mean()) for a in (precision, recall, f1))
    else:
        mp = mr = mf = 0.0
    return Metrics(precision, recall, f1, rows.astype(np.int64), defined, mp, mr, mf)


@dataclass
class EvaluationReport:
    classes: tuple[str, ...]
    confusion: np.ndarray
    metrics: Metrics
    timing: dict[str, float] = field(default_factory=dict)
    plan: CVPlan | None = None
    fold_f1: list[float] = field(default_factory=list)

    @property
    def macro_f1(self) -> float:
        return self.metrics.macro_f1

    def write_metrics_csv(self, path) -> None:
        m = self.metrics
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class", "precision", "recall", "f1", "support"])
            for i, c in enumerate(self.classes):
                w.writerow([c, f"{m.precision[i]:.6f}", f"{m.recall[i]:.6f}", f"{m.f1[i]:.6f}", int(m.support[i])])
            w.writerow(["macro", f"{m.macro_precision:.6f}", f"{m.macro_recall:.6f}", f"{m.macro_f1:.6f}",
                        int(m.support.sum())])

    def write_confusion_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\predicted", *self.classes])
            for c, row in zip(self.classes, self.confusion):
                w.writerow([c, *(int(v) for v in row)])

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["measure", "value"])
            for k in sorted(self.timing):
                w.writerow([k, f"{self.timing[k]:.3f}"])


def read_confusion_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    classes = tuple(rows[0][1:])
    return classes, np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)


def write_combined_confusion(path, classes, confusion_a, confusion_b) -> None:
    """Long-format merge of two confusion matrices as row-normalized shares."""

    def shares(cm):
        cm = np.asarray(cm, dtype=np.float64)
        rs = cm.sum(1, keepdims=True)
        return np.divide(cm, rs, out=np.zeros_like(cm), where=rs > 0)

    a, b = shares(confusion_a), shares(confusion_b)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true", "predicted", "share_model_a", "share_model_b"])
        for i, t in enumerate(classes):
            for j, p in enumerate(classes):
                w.writerow([t, p, f"{a[i, j]:.6f}", f"{b[i, j]:.6f}"])


def _fit_fold(m: FeatureMatrix, train_idx, test_idx, hp, mode, seed):
    t0 = time.perf_counter()
    model = forest.train(m.subset(train_idx), hp, mode, seed)
    t1 = time.perf_counter()
    pred = model.predict(m.X[test_idx])
    t2 = time.perf_counter()
    return pred, t1 - t0, (t2 - t1) / max(len(test_idx), 1)


def cross_validate(dataset, selection: FeatureSetSelection = UNION, hp: forest.HyperParams | None = None,
                   mode: str = forest.OVR, plan: CVPlan | None = None, n_jobs: int = 1,
                   suffix_db: SuffixDatabase | None = None) -> EvaluationReport:
    """Pooled confusion over ``plan.repetitions x plan.folds`` train/test rounds.

    ``dataset`` may be a :class:`LabeledDataset` (features are extracted
    here and timed) or an already extracted :class:`FeatureMatrix`.
    """
    plan = plan or CVPlan()
    hp = hp or forest.HyperParams()
    timing: dict[str, float] = {}
    if isinstance(dataset, LabeledDataset):
        ex = Extractor(selection)
        per_sample: list[float] = []
        X = ex.matrix(parse_all(dataset.domains, suffix_db), timings=per_sample)
        m = FeatureMatrix(X, dataset.y, selection.member_ids, dataset.classes)
        timing["extraction_us_per_sample"] = 1e6 * float(np.mean(per_sample))
    else:
        m = dataset
    assignments = stratified_folds(m.y, plan)
    jobs = []
    for r, assign in enumerate(assignments):
        for f in range(plan.folds):
            jobs.append((np.flatnonzero(assign != f), np.flatnonzero(assign == f), plan.seed * 1000 + r * plan.folds + f))
    run = delayed(_fit_fold)
    if n_jobs == 1:
        results = [_fit_fold(m, tr, te, hp, mode, s) for tr, te, s in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(run(m, tr, te, hp, mode, s) for tr, te, s in jobs)
    k = m.n_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    fold_f1 = []
    for (tr, te, _), (pred, _, _) in zip(jobs, results):
        cm = np.zeros((k, k), dtype=np.int64)
        np.add.at(cm, (m.y[te], pred), 1)
        confusion += cm
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fold_f1.append(macro_metrics(cm).macro_f1)
    timing["training_s_per_classifier"] = float(np.mean([r[1] for r in results]))
    timing["inference_us_per_sample"] = 1e6 * float(np.mean([r[2] for r in results]))
    return EvaluationReport(m.classes, confusion, macro_metrics(confusion), timing, plan, fold_f1)


@dataclass
class BenchResult:
    n_samples: int
    batch: int
    n_jobs: int
    total_s: float
    samples_per_s: float
    mean_us: float
    max_us: float
    inference_mean_us: float
    errors: int = 0

    @property
    def meets_latency(self) -> bool:
        return self.mean_us < LATENCY_BUDGET_US

    @property
    def meets_rate(self) -> bool:
        return self.samples_per_s > PEAK_RATE

    @property
    def passed(self) -> bool:
        return self.meets_latency and self.meets_rate

    def as_rows(self) -> list[tuple[str, str]]:
        return [
            ("n_samples", str(self.n_samples)),
            ("batch", str(self.batch)),
            ("n_jobs", str(self.n_jobs)),
            ("total_s", f"{self.total_s:.6f}"),
            ("samples_per_s", f"{self.samples_per_s:.1f}"),
            ("mean_us_per_sample", f"{self.mean_us:.2f}"),
            ("max_us_per_sample", f"{self.max_us:.2f}"),
            ("inference_mean_us_per_sample", f"{self.inference_mean_us:.2f}"),
            ("latency_budget_us", f"{LATENCY_BUDGET_US:.0f}"),
            ("peak_rate_per_s", f"{PEAK_RATE:.0f}"),
            ("errors", str(self.errors)),
            ("pass", "1" if self.passed else "0"),
        ]


def _classify_chunk(model: forest.ForestModel, ex: Extractor, chunk, suffix_db):
    t0 = time.perf_counter()
    rows, errors = [], 0
    for d in chunk:
        try:
            rows.append(ex.values(parse(sanitize(d), suffix_db)))
        except Exception:
            errors += 1
    t1 = time.perf_counter()
    if rows:
        model.predict(np.array(rows))
    t2 = time.perf_counter()
    return t2 - t0, t2 - t1, errors


def bench_throughput(model: forest.ForestModel, domains, batch: int = 256, n_jobs: int = 1,
                     suffix_db: SuffixDatabase | None = None, min_samples: int = 1000) -> BenchResult:
    """End-to-end parse + extract + predict timing over ``domains`` in chunks of ``batch``.

    ``mean_us`` is wall time divided by sample count; ``max_us`` is the
    worst per-sample time of any chunk.
    """
    domains = list(domains)
    if len(domains) < min_samples:
        raise ValueError(f"need at least {min_samples} domains, got {len(domains)}")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    ex = Extractor(FeatureSetSelection(model.selection_id or "model", model.feature_ids))
    model._ensure_packs()
    chunks = [domains[i:i + batch] for i in range(0, len(domains), batch)]
    # warm caches (suffix db, packed trees) outside the measurement
    _classify_chunk(model, ex, chunks[0][:1], suffix_db)
    t0 = time.perf_counter()
    if n_jobs == 1:
        results = [_classify_chunk(model, ex, c, suffix_db) for c in chunks]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_classify_chunk)(model, ex, c, suffix_db) for c in chunks)
    total = time.perf_counter() - t0
    n = len(domains)
    return BenchResult(
        n_samples=n,
        batch=batch,
        n_jobs=n_jobs,
        total_s=total,
        samples_per_s=n / total,
        mean_us=1e6 * total / n,
        max_us=1e6 * max(r[0] / len(c) for r, c in zip(results, chunks)),
        inference_mean_us=1e6 * sum(r[1] for r in results) / n,
        errors=sum(r[2] for r in results),
    )
