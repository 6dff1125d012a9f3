"""Domain-name sanitization, validation and suffix-aware decomposition."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import InvalidDomain, NoSubdomain

MAX_DOMAIN_LENGTH = 253
MAX_LABEL_LENGTH = 63

_LABEL_RE = re.compile(r"^[a-z0-9_](?:[a-z0-9_-]{0,61}[a-z0-9_])?$")


@dataclass(frozen=True)
class ParsedDomain:
    """A sanitized domain split around its public suffix.

    ``subdomain_labels`` lists every label left of the suffix, leftmost
    first; its last element is the second-level label.
    """

    raw: str
    suffix: str
    second_level: str
    subdomain_labels: tuple[str, ...]
    subdomains_concat: str

    def reassemble(self) -> str:
        return ".".join((*self.subdomain_labels, self.suffix))


class SuffixDatabase:
    """Immutable set of public suffixes with longest-match lookup.

    Parameters
    ----------
    suffixes : iterable of str
        Lowercase suffixes without leading dot.
    """

    def __init__(self, suffixes):
        self._suffixes = frozenset(s.strip().lower().lstrip(".") for s in suffixes if s.strip())
        self._max_labels = max((s.count(".") + 1 for s in self._suffixes), default=1)

    @classmethod
    def from_file(cls, path) -> "SuffixDatabase":
        with open(path, encoding="utf-8") as fh:
            return cls(_suffix_lines(fh))

    @classmethod
    def bundled(cls) -> "SuffixDatabase":
        return _bundled_db()

    def __contains__(self, suffix: str) -> bool:
        return suffix in self._suffixes

    def __len__(self) -> int:
        return len(self._suffixes)

    def split(self, labels: list[str]) -> int:
        """Return the number of trailing labels that form the suffix.

        Longest match wins; falls back to the last label when nothing matches.
        """
        n = len(labels)
        for k in range(min(self._max_labels, n), 0, -1):
            if ".".join(labels[n - k:]) in self._suffixes:
                return k
        return 1


def _suffix_lines(lines):
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            yield line


@lru_cache(maxsize=1)
def _bundled_db() -> SuffixDatabase:
    text = resources.files("explaindga").joinpath("data/public_suffixes.txt").read_text("utf-8")
    return SuffixDatabase(_suffix_lines(text.splitlines()))


def sanitize(raw: str) -> str:
    """Lowercase, trim whitespace and strip a single trailing dot.

    A dot preceded by another dot or whitespace is kept (the input is
    invalid either way) so that sanitizing twice changes nothing.
    """
    s = raw.strip().lower()
    if s.endswith(".") and not (len(s) > 1 and (s[-2] == "." or s[-2].isspace())):
        s = s[:-1]
    return s


def validate(s: str) -> bool:
    if not s or len(s) > MAX_DOMAIN_LENGTH:
        return False
    labels = s.split(".")
    if len(labels) < 2:
        return False
    return all(_LABEL_RE.match(label) for label in labels)


def parse(s: str, suffix_db: SuffixDatabase | None = None) -> ParsedDomain:
    """Decompose a valid sanitized domain.

    Raises
    ------
    InvalidDomain
        If ``s`` does not pass :func:`validate`.
    NoSubdomain
        If ``s`` is itself a public suffix.
    """
    if not validate(s):
        raise InvalidDomain(s)
    db = suffix_db if suffix_db is not None else _bundled_db()
    labels = s.split(".")
    k = db.split(labels)
    if k >= len(labels):
        raise NoSubdomain(s)
    subs = tuple(labels[: len(labels) - k])
    return ParsedDomain(
        raw=s,
        suffix=".".join(labels[len(labels) - k:]),
        second_level=subs[-1],
        subdomain_labels=subs,
        subdomains_concat="".join(subs),
    )


def parse_raw(raw: str, suffix_db: SuffixDatabase | None = None) -> ParsedDomain:
    return parse(sanitize(raw), suffix_db)


def load_suffix_db(path: str | Path | None = None) -> SuffixDatabase:
    if path is None:
        return _bundled_db()
    return SuffixDatabase.from_file(path)
