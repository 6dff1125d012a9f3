"""Labeled datasets and feature matrices shared across the pipeline."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domains import ParsedDomain, SuffixDatabase, parse, sanitize
from .features import Extractor, FeatureSetSelection, UNION


@dataclass
class LabeledDataset:
    """Domains with string labels and a stable, sorted class index."""

    domains: list[str]
    labels: list[str]
    classes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.domains) != len(self.labels):
            raise ValueError("domains and labels differ in length")
        if not self.classes:
            self.classes = tuple(sorted(set(self.labels)))

    def __len__(self) -> int:
        return len(self.domains)

    @property
    def y(self) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.classes)}
        return np.array([index[l] for l in self.labels], dtype=np.int64)

    def class_counts(self) -> dict[str, int]:
        out = {c: 0 for c in self.classes}
        for l in self.labels:
            out[l] += 1
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["domain", "label"])
            w.writerows(zip(self.domains, self.labels))

    @classmethod
    def from_csv(cls, path) -> "LabeledDataset":
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.DictReader(fh)
            rows = [(row["domain"], row["label"]) for row in r]
        return cls([d for d, _ in rows], [l for _, l in rows])


@dataclass
class FeatureMatrix:
    """Rectangular numeric matrix with aligned class indices."""

    X: np.ndarray
    y: np.ndarray
    feature_ids: tuple[str, ...]
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.feature_ids = tuple(self.feature_ids)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"shape mismatch: X {self.X.shape}, y {self.y.shape}")
        if self.X.shape[1] != len(self.feature_ids):
            raise ValueError("feature_ids length differs from matrix width")
        if not self.classes:
            self.classes = tuple(str(c) for c in range(int(self.y.max()) + 1 if len(self.y) else 0))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def subset(self, rows=None, columns: Sequence[str] | None = None) -> "FeatureMatrix":
        X, y, ids = self.X, self.y, self.feature_ids
        if rows is not None:
            X, y = X[rows], y[rows]
        if columns is not None:
            pos = {f: i for i, f in enumerate(ids)}
            cols = [pos[c] for c in columns]
            X, ids = X[:, cols], tuple(columns)
        return FeatureMatrix(X, y, ids, self.classes)


def parse_all(domains: Sequence[str], suffix_db: SuffixDatabase | None = None) -> list[ParsedDomain]:
    return [parse(sanitize(d), suffix_db) for d in domains]


def featurize(dataset: LabeledDataset, selection: FeatureSetSelection = UNION,
              suffix_db: SuffixDatabase | None = None) -> FeatureMatrix:
    ex = Extractor(selection)
    X = ex.matrix(parse_all(dataset.domains, suffix_db))
    return FeatureMatrix(X, dataset.y, selection.member_ids, dataset.classes)
