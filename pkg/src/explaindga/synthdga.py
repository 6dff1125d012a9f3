"""Deterministic synthetic DGA families and a benign typo class.

Families are caricatures of common generator styles (arithmetic, hex,
wordlist, fixed prefix) plus mistyped benign names. Every domain is a pure
function of ``(spec, index)``; duplicates are skipped by moving on to the
next index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

from .data import LabeledDataset
from .domains import parse, validate
from .errors import ExhaustedSpace, NoSubdomain

ARITHMETIC = "arithmetic"
HEX = "hex"
WORDLIST = "wordlist"
FIXED_PREFIX = "fixed_prefix"
BENIGN_TYPO = "benign_typo"
KINDS = (ARITHMETIC, HEX, WORDLIST, FIXED_PREFIX, BENIGN_TYPO)

LOWER = "abcdefghijklmnopqrstuvwxyz"
HEXDIGITS = "0123456789abcdef"
CONSONANTS = "bcdfghjklmnpqrstvwxz"

_MASK32 = 0xFFFFFFFF


@dataclass(frozen=True)
class FamilySpec:
    """Parameters of one synthetic family.

    ``suffixes`` may be empty for ``benign_typo``, which then keeps the
    suffix of the seed domain.
    """

    name: str
    kind: str
    min_length: int = 8
    max_length: int = 12
    alphabet: str = LOWER
    suffixes: tuple[str, ...] = ("com",)
    prefix: str = ""
    wordlist: str = "words"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("length range must satisfy 1 <= min <= max")
        if self.kind != BENIGN_TYPO and not self.suffixes:
            raise ValueError("suffix set must be non-empty")


def _mix(x: int) -> int:
    # splitmix64 finalizer; decorrelates neighbouring (seed, index) pairs
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


class _LCG:
    """32-bit linear congruential stream (Numerical Recipes constants)."""

    def __init__(self, seed: int, index: int):
        self.state = _mix((seed & _MASK32) << 32 | (index & _MASK32)) & _MASK32

    def next(self) -> int:
        self.state = (1664525 * self.state + 1013904223) & _MASK32
        return self.state

    def below(self, n: int) -> int:
        return (self.next() >> 8) % n

    def choice(self, seq):
        return seq[self.below(len(seq))]


def _asset_lines(name: str) -> tuple[str, ...]:
    text = resources.files("explaindga").joinpath(f"data/{name}").read_text("utf-8")
    return tuple(l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#"))


@lru_cache(maxsize=None)
def wordlist(name: str = "words") -> tuple[str, ...]:
    return _asset_lines(f"{name}.txt")


@lru_cache(maxsize=1)
def benign_seeds() -> tuple[str, ...]:
    return _asset_lines("benign_domains.txt")


def _random_label(rng: _LCG, spec: FamilySpec, alphabet: str) -> str:
    n = spec.min_length + rng.below(spec.max_length - spec.min_length + 1)
    return "".join(alphabet[rng.below(len(alphabet))] for _ in range(n))


def _typo(rng: _LCG) -> str:
    base = rng.choice(benign_seeds())
    labels = parse(base).subdomain_labels
    suffix = base[len(".".join(labels)) + 1:]
    label = labels[-1]
    pos = rng.below(len(label))
    op = rng.below(3)
    if op == 0 and len(label) > 1:
        label = label[:pos] + label[pos + 1:]
    elif op == 1 or len(label) < 2:
        label = label[:pos] + label[pos] + label[pos:]
    else:
        pos = min(pos, len(label) - 2)
        label = label[:pos] + label[pos + 1] + label[pos] + label[pos + 2:]
    return ".".join((*labels[:-1], label, suffix))


def domain_at(spec: FamilySpec, index: int) -> str:
    """The candidate domain of ``spec`` at ``index`` (may be invalid or a duplicate)."""
    rng = _LCG(spec.seed, index)
    if spec.kind == BENIGN_TYPO:
        d = _typo(rng)
        if spec.suffixes:
            d = d.rsplit(".", 1)[0] + "." + rng.choice(spec.suffixes)
        return d
    if spec.kind == ARITHMETIC:
        label = _random_label(rng, spec, spec.alphabet)
    elif spec.kind == HEX:
        label = _random_label(rng, spec, HEXDIGITS)
    elif spec.kind == FIXED_PREFIX:
        label = spec.prefix + _random_label(rng, spec, HEXDIGITS)
    else:
        words = wordlist(spec.wordlist)
        label = "".join(rng.choice(words) for _ in range(2 + rng.below(2)))
    return f"{label}.{rng.choice(spec.suffixes)}"


def generate(spec: FamilySpec, count: int, exclude=frozenset(), max_attempts: int | None = None) -> list[str]:
    """``count`` unique valid domains of one family, skipping anything in ``exclude``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    limit = max_attempts if max_attempts is not None else 50 * count + 1000
    out, seen = [], set()
    index = 0
    while len(out) < count:
        if index >= limit:
            raise ExhaustedSpace(f"{spec.name}: only {len(out)} of {count} unique domains after {index} draws")
        d = domain_at(spec, index)
        index += 1
        if d in seen or d in exclude or not validate(d):
            continue
        try:
            parse(d)
        except NoSubdomain:
            continue
        seen.add(d)
        out.append(d)
    return out


DEFAULT_FAMILIES: tuple[FamilySpec, ...] = (
    FamilySpec("conso", ARITHMETIC, 8, 12, alphabet=CONSONANTS, suffixes=("info", "biz", "org", "ws")),
    FamilySpec("hexa", HEX, 16, 24, suffixes=("com", "net", "org")),
    FamilySpec("wordy", WORDLIST, suffixes=("net", "com")),
    FamilySpec("xxhex", FIXED_PREFIX, 8, 12, prefix="xx", suffixes=("com", "net", "biz")),
    FamilySpec("benign", BENIGN_TYPO, suffixes=()),
)
DEFAULT_SEED = 20240501
MIN_PER_FAMILY = 10


def build_corpus(specs=DEFAULT_FAMILIES, per_family: int = 500, seed: int = DEFAULT_SEED) -> LabeledDataset:
    """Labeled dataset with one class per family, globally deduplicated.

    Benign-typo families are generated last so that a typo can never
    collide with a domain claimed by a malicious family.
    """
    if per_family < MIN_PER_FAMILY:
        raise ValueError(f"per_family must be >= {MIN_PER_FAMILY}")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("family names must be unique")
    ordered = sorted(range(len(specs)), key=lambda i: specs[i].kind == BENIGN_TYPO)
    taken: set[str] = set()
    per_spec: dict[int, list[str]] = {}
    for i in ordered:
        s = replace(specs[i], seed=(specs[i].seed * 1_000_003 + seed + 7919 * i) & _MASK32)
        doms = generate(s, per_family, exclude=taken)
        taken.update(doms)
        per_spec[i] = doms
    domains, labels = [], []
    for i, s in enumerate(specs):
        domains.extend(per_spec[i])
        labels.extend([s.name] * per_family)
    return LabeledDataset(domains, labels)
