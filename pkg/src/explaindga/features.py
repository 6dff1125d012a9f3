"""Contextless feature catalog and per-domain extraction.

Every feature is a function of one domain name. Linguistic features read
``subdomains_concat`` (the suffix is excluded), n-gram and bit-level
features read ``second_level``, structural and suffix features read the
parsed parts, and ``first-character-pair`` reads the raw name.

Two features do not reproduce the published example values because their
exact definitions were never published: ``first-character-pair`` (encoded
here as ``256*c1 + c2``) and ``weighted-streaks`` (sum of squared
consonant/digit run lengths over the string length). ``syllable-count``
counts vowel groups and therefore yields 0 for vowel-free names. The four
randomness-test verdicts, ``bits-entropy`` and
``zlib-bits-compression-ratio`` use documented reconstructions as well;
see :mod:`explaindga.randtests`.
"""

from __future__ import annotations

import csv
import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import randtests
from .domains import ParsedDomain
from .errors import EmptyInput, TooShort, UnknownFeature

LINGUISTIC = "linguistic"
STRUCTURAL = "structural"
STATISTICAL = "statistical"

BINARY = "binary"
INTEGER = "integer"
RATIONAL = "rational"


@dataclass(frozen=True)
class FeatureSpec:
    id: str
    group: str
    output_kind: str


# id, group, output kind, membership flags: RFE-MDI RFE-PI ReliefF MultiSURF Union-Spearman
_CATALOG_TABLE = """
adjacent-duplicates-ratio           L R 10011
alphabet-a                          L I 11111
alphabet-b                          L I 01011
alphabet-c                          L I 00011
alphabet-d                          L I 00111
alphabet-e                          L I 00111
alphabet-f                          L I 00011
alphabet-g                          L I 00011
alphabet-h                          L I 00011
alphabet-i                          L I 00011
alphabet-j                          L I 11011
alphabet-k                          L I 01011
alphabet-l                          L I 10011
alphabet-m                          L I 11011
alphabet-n                          L I 11011
alphabet-o                          L I 00111
alphabet-p                          L I 00011
alphabet-q                          L I 10011
alphabet-r                          L I 10011
alphabet-s                          L I 11011
alphabet-t                          L I 10011
alphabet-u                          L I 00011
alphabet-v                          L I 00011
alphabet-w                          L I 10011
alphabet-x                          L I 10011
alphabet-y                          L I 11011
alphabet-z                          L I 11001
consecutive-consonant-ratio         L R 11101
consecutive-digit-ratio             L R 00101
consonant-to-vowel-ratio            L R 10101
consonants-character-ratio          L R 11101
consonants-max-streak-length        L I 11001
contains-digits                     L B 00100
decimaldigits-character-ratio       L R 11101
decimaldigits-max-streak-length     L I 10100
end-digit-edge-distance             L I 10110
first-character-pair                L I 11011
hexadecimaldigits-character-ratio   L R 11101
hexadecimaldigits-max-streak-length L I 01101
inverse-hamming-distance            L R 10011
primedigits-character-ratio         L R 10011
primedigits-max-streak-length       L I 11001
repeated-characters-ratio           L R 00110
start-digit-edge-distance           L I 11111
subdomain-digit-sum                 L I 11011
suffix-digit-sum                    L I 11111
suffix-standard-deviation           L R 11111
syllable-count                      L I 10111
vowels-character-ratio              L R 10111
vowels-max-streak-length            L I 11111
weighted-streaks                    L R 10001
domain-name-length                  S I 11111
hex-exclusive-subdomains-ratio      S R 10111
second-level-length                 S I 11111
subdomains-length                   S I 11111
subdomains-mean-length              S R 11111
suffix-length                       S I 11111
1-gram-alphabet-diversity           T R 10111
1-gram-alphabet-size                T I 10110
1-gram-arithmetic-mean              T R 10000
1-gram-harmonic-mean                T R 10101
1-gram-kurtosis                     T R 00011
1-gram-max                          T I 00111
1-gram-shannon-entropy              T R 10111
1-gram-skewness                     T R 00011
1-gram-standard-deviation           T R 10001
2-gram-alphabet-size                T I 10110
2-gram-shannon-entropy              T R 11110
3-gram-alphabet-size                T I 10110
3-gram-shannon-entropy              T R 10110
binary-matrix-rank-test             T B 00111
binary-matrix-rank-test-unicode     T B 00111
bits-entropy                        T R 10110
longest-run-of-ones-test            T B 00111
longest-run-of-ones-test-unicode    T B 00011
zlib-bits-compression-ratio         T R 10100
"""

_GROUPS = {"L": LINGUISTIC, "S": STRUCTURAL, "T": STATISTICAL}
_KINDS = {"B": BINARY, "I": INTEGER, "R": RATIONAL}
_SELECTOR_COLUMNS = ("RFE-MDI", "RFE-PI", "ReliefF", "MultiSURF", "Union-Spearman")


def _load_table():
    specs, members = [], {name: [] for name in _SELECTOR_COLUMNS}
    for line in _CATALOG_TABLE.strip().splitlines():
        fid, group, kind, flags = line.split()
        specs.append(FeatureSpec(fid, _GROUPS[group], _KINDS[kind]))
        for name, flag in zip(_SELECTOR_COLUMNS, flags):
            if flag == "1":
                members[name].append(fid)
    return tuple(specs), members


CATALOG, _MEMBERS = _load_table()
CATALOG_IDS: tuple[str, ...] = tuple(s.id for s in CATALOG)
CATALOG_INDEX = {fid: i for i, fid in enumerate(CATALOG_IDS)}
SPECS = {s.id: s for s in CATALOG}


@dataclass(frozen=True)
class FeatureSetSelection:
    """Named subset of the catalog; ``member_ids`` are kept in catalog order."""

    name: str
    member_ids: tuple[str, ...]

    def __post_init__(self):
        ids = tuple(self.member_ids)
        if not ids:
            raise ValueError(f"selection {self.name!r} is empty")
        unknown = [i for i in ids if i not in CATALOG_INDEX]
        if unknown:
            raise UnknownFeature(f"unknown feature ids: {unknown}")
        if len(set(ids)) != len(ids):
            raise ValueError(f"selection {self.name!r} has duplicate ids")
        object.__setattr__(self, "member_ids", tuple(sorted(ids, key=CATALOG_INDEX.__getitem__)))

    def __len__(self) -> int:
        return len(self.member_ids)

    @property
    def indices(self) -> list[int]:
        return [CATALOG_INDEX[i] for i in self.member_ids]


def _build_named():
    sel = {name: FeatureSetSelection(name, ids) for name, ids in _MEMBERS.items()}
    four = [set(_MEMBERS[n]) for n in ("RFE-MDI", "RFE-PI", "ReliefF", "MultiSURF")]
    sel["Union"] = FeatureSetSelection("Union", set().union(*four))
    sel["Intersection"] = FeatureSetSelection("Intersection", set.intersection(*four))
    return sel


NAMED_SELECTIONS: dict[str, FeatureSetSelection] = _build_named()
UNION = NAMED_SELECTIONS["Union"]


def named_selection(name: str) -> FeatureSetSelection:
    """Case-insensitive lookup of a predefined selection ("rfe-pi", "union", ...)."""
    for key, sel in NAMED_SELECTIONS.items():
        if key.lower() == name.lower():
            return sel
    raise KeyError(f"unknown selection {name!r}; known: {sorted(NAMED_SELECTIONS)}")


# -- character classes -------------------------------------------------------

VOWELS = frozenset("aeiou")
CONSONANTS = frozenset("bcdfghjklmnpqrstvwxyz")
DIGITS = frozenset("0123456789")
HEXCHARS = frozenset("0123456789abcdef")


def base36_value(c: str) -> int:
    if "0" <= c <= "9":
        return ord(c) - 48
    if "a" <= c <= "z":
        return ord(c) - 87
    return 0


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % d for d in range(2, int(n ** 0.5) + 1))


PRIMECHARS = frozenset(c for c in "0123456789abcdefghijklmnopqrstuvwxyz" if _is_prime(base36_value(c)))

CHAR_CLASSES = {
    "vowels": VOWELS,
    "consonants": CONSONANTS,
    "decimaldigits": DIGITS,
    "hexadecimaldigits": HEXCHARS,
    "primedigits": PRIMECHARS,
}
_BASE36 = {c: base36_value(c) for c in "0123456789abcdefghijklmnopqrstuvwxyz"}


def _require(s: str, what: str):
    if not s:
        raise EmptyInput(f"{what} of empty string")


def digit_sum(s: str) -> int:
    return sum(_BASE36.get(c, 0) for c in s)


def char_class_profile(s: str) -> dict[str, float]:
    _require(s, "char_class_profile")
    n = len(s)
    v = sum(c in VOWELS for c in s)
    k = sum(c in CONSONANTS for c in s)
    d = sum(c in DIGITS for c in s)
    return {
        "vowels-character-ratio": v / n,
        "consonants-character-ratio": k / n,
        "decimaldigits-character-ratio": d / n,
        "hexadecimaldigits-character-ratio": sum(c in HEXCHARS for c in s) / n,
        "primedigits-character-ratio": sum(c in PRIMECHARS for c in s) / n,
        "contains-digits": 1 if d else 0,
        "consonant-to-vowel-ratio": k / v if v else float(k),
    }


def _runs(s: str, cls) -> list[int]:
    runs, cur = [], 0
    for c in s:
        if c in cls:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return runs


def max_streaks(s: str) -> dict[str, int]:
    _require(s, "max_streaks")
    return {f"{name}-max-streak-length": max(_runs(s, cls), default=0) for name, cls in CHAR_CLASSES.items()}


def consecutive_class_ratio(s: str, cls) -> float:
    """Share of characters sitting in same-class runs of length >= 2."""
    _require(s, "consecutive_class_ratio")
    if isinstance(cls, str):
        cls = CHAR_CLASSES[cls]
    return sum(r for r in _runs(s, cls) if r >= 2) / len(s)


def duplication_profile(s: str) -> dict[str, float]:
    _require(s, "duplication_profile")
    adjacent = sum(a == b for a, b in zip(s, s[1:]))
    counts = Counter(s)
    return {
        "adjacent-duplicates-ratio": adjacent / len(s),
        "repeated-characters-ratio": sum(c >= 2 for c in counts.values()) / len(counts),
    }


ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def alphabet_counts(s: str) -> dict[str, int]:
    counts = Counter(s)
    return {f"alphabet-{c}": counts.get(c, 0) for c in ALPHABET}


def digit_edge_distances(s: str) -> tuple[int, int]:
    _require(s, "digit_edge_distances")
    idx = [i for i, c in enumerate(s) if c in DIGITS]
    if not idx:
        return -1, -1
    return idx[0], len(s) - 1 - idx[-1]


def first_character_pair(domain: ParsedDomain) -> int:
    raw = domain.raw
    c1 = ord(raw[0]) & 0xFF
    c2 = ord(raw[1]) & 0xFF if len(raw) > 1 else 0
    return 256 * c1 + c2


def inverse_hamming_distance(domain: ParsedDomain) -> float:
    labels = domain.subdomain_labels
    best = None
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            a, b = labels[i], labels[j]
            if len(a) == len(b):
                h = sum(x != y for x, y in zip(a, b))
                best = h if best is None else min(best, h)
    return 1.0 / (1.0 + (best or 0))


def syllable_count(s: str) -> int:
    _require(s, "syllable_count")
    return len(_runs(s, VOWELS))


def weighted_streaks(s: str) -> float:
    _require(s, "weighted_streaks")
    mass = sum(r * r for r in _runs(s, CONSONANTS)) + sum(r * r for r in _runs(s, DIGITS))
    return mass / len(s)


NGRAM_STATS = (
    "alphabet-size",
    "alphabet-diversity",
    "max",
    "arithmetic-mean",
    "harmonic-mean",
    "standard-deviation",
    "skewness",
    "kurtosis",
    "shannon-entropy",
)


def ngram_stats(s: str, n: int) -> dict[str, float]:
    """Distribution statistics of the sliding length-``n`` windows of ``s``.

    Moments are population moments of the per-window-type count multiset;
    kurtosis is excess kurtosis. Skewness and kurtosis are 0 for a
    constant multiset.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(s) < n:
        raise TooShort(f"{n}-gram statistics need len >= {n}, got {len(s)}")
    total = len(s) - n + 1
    counts = list(Counter(s[i:i + n] for i in range(total)).values())
    k = len(counts)
    mean = total / k
    m2 = m3 = m4 = 0.0
    for c in counts:
        d = c - mean
        d2 = d * d
        m2 += d2
        m3 += d2 * d
        m4 += d2 * d2
    m2 /= k
    m3 /= k
    m4 /= k
    skew = m3 / m2 ** 1.5 if m2 > 0 else 0.0
    kurt = m4 / (m2 * m2) - 3.0 if m2 > 0 else 0.0
    entropy = math.log2(total) - sum(c * math.log2(c) for c in counts) / total
    p = f"{n}-gram-"
    return {
        p + "alphabet-size": k,
        p + "alphabet-diversity": k / total,
        p + "max": max(counts),
        p + "arithmetic-mean": mean,
        p + "harmonic-mean": k / sum(1.0 / c for c in counts),
        p + "standard-deviation": math.sqrt(m2),
        p + "skewness": skew,
        p + "kurtosis": kurt,
        p + "shannon-entropy": entropy,
    }


def _is_hex_label(label: str) -> bool:
    return all(c in HEXCHARS for c in label)


def structural_profile(domain: ParsedDomain) -> dict[str, float]:
    labels = domain.subdomain_labels
    total = sum(len(x) for x in labels)
    return {
        "domain-name-length": len(domain.raw),
        "hex-exclusive-subdomains-ratio": sum(_is_hex_label(x) for x in labels) / len(labels),
        "second-level-length": len(domain.second_level),
        "subdomains-length": total,
        "subdomains-mean-length": total / len(labels),
        "suffix-length": len(domain.suffix),
    }


def suffix_stats(domain: ParsedDomain) -> dict[str, float]:
    s = domain.suffix.replace(".", "")
    codes = [ord(c) for c in s]
    if codes:
        mu = sum(codes) / len(codes)
        std = math.sqrt(sum((c - mu) ** 2 for c in codes) / len(codes))
    else:
        std = 0.0
    return {"suffix-digit-sum": digit_sum(s), "suffix-standard-deviation": std}


# -- extraction blocks -------------------------------------------------------
# Each block computes a group of features sharing intermediate work; extract()
# only runs the blocks its selection touches.


def _block_chars(d: ParsedDomain) -> dict:
    s = d.subdomains_concat
    out = char_class_profile(s)
    out.update(max_streaks(s))
    out["consecutive-consonant-ratio"] = consecutive_class_ratio(s, CONSONANTS)
    out["consecutive-digit-ratio"] = consecutive_class_ratio(s, DIGITS)
    out["syllable-count"] = syllable_count(s)
    out["weighted-streaks"] = weighted_streaks(s)
    start, end = digit_edge_distances(s)
    out["start-digit-edge-distance"] = start
    out["end-digit-edge-distance"] = end
    return out


def _block_alphabet(d: ParsedDomain) -> dict:
    s = d.subdomains_concat
    out = alphabet_counts(s)
    out.update(duplication_profile(s))
    out["subdomain-digit-sum"] = digit_sum(s)
    return out


def _block_domain(d: ParsedDomain) -> dict:
    out = structural_profile(d)
    out.update(suffix_stats(d))
    out["first-character-pair"] = first_character_pair(d)
    out["inverse-hamming-distance"] = inverse_hamming_distance(d)
    return out


def _ngram_block(n: int) -> Callable[[ParsedDomain], dict]:
    zeros = {f"{n}-gram-{k}": 0.0 for k in NGRAM_STATS}

    def block(d: ParsedDomain) -> dict:
        if len(d.second_level) < n:
            return zeros
        return ngram_stats(d.second_level, n)

    return block


def _block_bits(d: ParsedDomain) -> dict:
    s = d.second_level
    b8 = randtests.bit_sequence(s, randtests.ASCII8)
    b16 = randtests.bit_sequence(s, randtests.WIDE16)
    return {
        "binary-matrix-rank-test": randtests.binary_matrix_rank_test(b8) if b8.length >= 9 else 0,
        "binary-matrix-rank-test-unicode": randtests.binary_matrix_rank_test(b16),
        "longest-run-of-ones-test": randtests.longest_run_of_ones_test(b8),
        "longest-run-of-ones-test-unicode": randtests.longest_run_of_ones_test(b16),
        "bits-entropy": randtests.bits_entropy(b8),
        "zlib-bits-compression-ratio": randtests.deflate_bits_compression_ratio(s),
    }


_BLOCKS: list[tuple[Callable[[ParsedDomain], dict], frozenset]] = []


def _register_blocks():
    probe_single = ParsedDomain("ab1-x.co", "co", "ab1-x", ("ab1-x",), "ab1-x")
    for fn in (_block_chars, _block_alphabet, _block_domain, _ngram_block(1), _ngram_block(2),
               _ngram_block(3), _block_bits):
        keys = frozenset(k for k in fn(probe_single) if k in CATALOG_INDEX)
        _BLOCKS.append((fn, keys))
    covered = set().union(*(k for _, k in _BLOCKS))
    assert covered == set(CATALOG_IDS), set(CATALOG_IDS) - covered


_register_blocks()


class Extractor:
    """Compiled extraction plan for one selection.

    Calling the extractor on a :class:`ParsedDomain` returns a float64
    vector in catalog order restricted to the selection.
    """

    def __init__(self, selection: FeatureSetSelection = UNION):
        self.selection = selection
        wanted = set(selection.member_ids)
        self._blocks = [fn for fn, keys in _BLOCKS if keys & wanted]
        self._ids = selection.member_ids

    def __len__(self) -> int:
        return len(self._ids)

    def values(self, domain: ParsedDomain) -> list[float]:
        merged: dict = {}
        for fn in self._blocks:
            merged.update(fn(domain))
        return [float(merged[i]) for i in self._ids]

    def __call__(self, domain: ParsedDomain) -> np.ndarray:
        return np.array(self.values(domain), dtype=np.float64)

    def matrix(self, domains: Sequence[ParsedDomain], timings: list | None = None) -> np.ndarray:
        """Stack vectors for many domains; optionally append per-sample seconds to ``timings``."""
        rows = []
        if timings is None:
            for d in domains:
                rows.append(self.values(d))
        else:
            clock = time.perf_counter
            for d in domains:
                t0 = clock()
                rows.append(self.values(d))
                timings.append(clock() - t0)
        return np.array(rows, dtype=np.float64).reshape(len(rows), len(self._ids))


def extract(domain: ParsedDomain, selection: FeatureSetSelection = UNION) -> np.ndarray:
    return Extractor(selection)(domain)


def extract_dict(domain: ParsedDomain, selection: FeatureSetSelection = UNION) -> dict[str, float]:
    ex = Extractor(selection)
    return dict(zip(selection.member_ids, ex.values(domain)))


def write_feature_csv(path_or_fh, ids: Sequence[str], matrix: np.ndarray, labels: Iterable[str] | None = None):
    """Write a feature dump: header of ids, 6-decimal values, optional ``label`` column."""
    close = False
    if isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__"):
        fh = open(path_or_fh, "w", newline="", encoding="utf-8")
        close = True
    else:
        fh = path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        labels = list(labels) if labels is not None else None
        w.writerow(list(ids) + (["label"] if labels is not None else []))
        for i, row in enumerate(matrix):
            cells = [f"{v:.6f}" for v in row]
            if labels is not None:
                cells.append(labels[i])
            w.writerow(cells)
    finally:
        if close:
            fh.close()


def read_feature_csv(path) -> tuple[list[str], np.ndarray, list[str] | None]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        has_label = header[-1] == "label"
        ids = header[:-1] if has_label else header
        rows, labels = [], []
        for row in r:
            if has_label:
                labels.append(row[-1])
                row = row[:-1]
            rows.append([float(x) for x in row])
    return ids, np.array(rows, dtype=np.float64).reshape(len(rows), len(ids)), (labels if has_label else None)
