"""Bit-level randomness features over short strings.

Domain labels only yield 80-200 bits, so the two block tests are scaled
down: 3x3 GF(2) matrices for the rank test and a 128-bit cyclic window for
the longest-run test. Both return a binary verdict at ``ALPHA``.
"""

from __future__ import annotations

import math
import zlib
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyInput, TooShort

ALPHA = 0.01

ASCII8 = "ascii8"
WIDE16 = "wide16"
_WIDTH = {ASCII8: 8, WIDE16: 16}


@dataclass(frozen=True)
class BitSequence:
    """Fixed-width big-endian bit encoding of a string.

    ``value`` holds the bits as a Python integer (most significant bit
    first); ``length`` keeps leading zeros meaningful.
    """

    value: int
    length: int
    source_encoding: str = ASCII8

    @classmethod
    def from_bits(cls, bits, source_encoding: str = ASCII8) -> "BitSequence":
        v = 0
        n = 0
        for b in bits:
            v = (v << 1) | (1 if b else 0)
            n += 1
        return cls(v, n, source_encoding)

    @property
    def bits(self) -> list[int]:
        return [(self.value >> (self.length - 1 - i)) & 1 for i in range(self.length)]

    def __len__(self) -> int:
        return self.length

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""


def bit_sequence(s: str, encoding: str = ASCII8) -> BitSequence:
    if not s:
        raise EmptyInput("bit_sequence of empty string")
    width = _WIDTH[encoding]
    v = 0
    for ch in s:
        v = (v << width) | ord(ch)
    return BitSequence(v, width * len(s), encoding)


def _gf2_rank(rows: list[int], ncols: int) -> int:
    rank = 0
    rows = list(rows)
    for col in reversed(range(ncols)):
        mask = 1 << col
        pivot = next((i for i in range(rank, len(rows)) if rows[i] & mask), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] & mask:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


# rank of every 3x3 matrix, indexed by its 9 bits read row-major
_RANK3 = tuple(_gf2_rank([(m >> 6) & 7, (m >> 3) & 7, m & 7], 3) for m in range(512))
# P(rank=3), P(rank=2), P(rank<=1) for a uniformly random 3x3 matrix over GF(2)
RANK3_PROBS = (168 / 512, 294 / 512, 50 / 512)

# longest run of ones in an 8-bit block: <=1, 2, 3, >=4
LONGEST_RUN_PROBS = (0.2148, 0.3672, 0.2305, 0.1875)
_LONGEST_RUN_BLOCK = 8
_LONGEST_RUN_BLOCKS = 16


def _longest_run_byte(b: int) -> int:
    best = cur = 0
    for i in range(8):
        if (b >> i) & 1:
            cur += 1
            best = max(best, cur)
        else:
            cur = 0
    return best


_LONGEST_RUN = tuple(_longest_run_byte(b) for b in range(256))


def chi2_sf_df2(x: float) -> float:
    return math.exp(-x / 2.0)


def chi2_sf_df3(x: float) -> float:
    # closed-form survival function of chi-square with 3 degrees of freedom
    if x <= 0.0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0)) + math.sqrt(2.0 * x / math.pi) * math.exp(-x / 2.0)


def _chi2(observed, probs, total) -> float:
    return sum((o - total * p) ** 2 / (total * p) for o, p in zip(observed, probs))


def binary_matrix_rank_pvalue(b: BitSequence) -> float:
    n_mat = b.length // 9
    if n_mat < 1:
        raise TooShort(f"binary matrix rank test needs >= 9 bits, got {b.length}")
    counts = [0, 0, 0]
    v, n = b.value, b.length
    for i in range(n_mat):
        r = _RANK3[(v >> (n - 9 * (i + 1))) & 0x1FF]
        counts[0 if r == 3 else 1 if r == 2 else 2] += 1
    return chi2_sf_df2(_chi2(counts, RANK3_PROBS, n_mat))


def binary_matrix_rank_test(b: BitSequence) -> int:
    return int(binary_matrix_rank_pvalue(b) >= ALPHA)


def _cyclic_prefix(b: BitSequence, nbits: int) -> int:
    if b.length == 0:
        raise TooShort("longest run test needs at least one bit")
    reps = -(-nbits // b.length)
    v = 0
    for _ in range(reps):
        v = (v << b.length) | b.value
    return v >> (reps * b.length - nbits)


def longest_run_of_ones_pvalue(b: BitSequence) -> float:
    total_bits = _LONGEST_RUN_BLOCK * _LONGEST_RUN_BLOCKS
    v = _cyclic_prefix(b, total_bits)
    counts = [0, 0, 0, 0]
    for i in range(_LONGEST_RUN_BLOCKS):
        run = _LONGEST_RUN[(v >> (total_bits - 8 * (i + 1))) & 0xFF]
        counts[min(max(run, 1), 4) - 1] += 1
    return chi2_sf_df3(_chi2(counts, LONGEST_RUN_PROBS, _LONGEST_RUN_BLOCKS))


def longest_run_of_ones_test(b: BitSequence) -> int:
    return int(longest_run_of_ones_pvalue(b) >= ALPHA)


def bits_entropy(b: BitSequence) -> float:
    """Shannon entropy (bits) of all overlapping 8-bit windows."""
    n = b.length
    if n < 8:
        raise TooShort(f"bits_entropy needs >= 8 bits, got {n}")
    v = b.value
    windows = Counter((v >> shift) & 0xFF for shift in range(n - 8, -1, -1))
    total = n - 7
    acc = sum(c * math.log2(c) for c in windows.values())
    return math.log2(total) - acc / total


def deflate_bits_compression_ratio(s: str) -> float:
    """Uncompressed over compressed size, raw DEFLATE at level 9."""
    if not s:
        raise EmptyInput("compression ratio of empty string")
    data = s.encode("latin-1", errors="replace")
    comp = zlib.compressobj(9, zlib.DEFLATED, -15)
    out = comp.compress(data) + comp.flush()
    return (8 * len(data)) / (8 * len(out))
