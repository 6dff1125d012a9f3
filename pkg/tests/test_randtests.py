import itertools
import math
import zlib
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from explaindga import randtests as R
from explaindga.errors import EmptyInput, TooShort


def _span_rank(rows):
    # rank over GF(2) = log2 of the row-space size, found by brute-force span
    span = {0}
    for r in rows:
        span |= {s ^ r for s in span}
    return int(math.log2(len(span)))


def _bits(seed, n):
    return R.BitSequence.from_bits(np.random.default_rng(seed).integers(0, 2, n).tolist())


def test_bit_sequence_encodings():
    assert str(R.bit_sequence("a")) == "01100001"
    assert str(R.bit_sequence("a", R.WIDE16)) == "0000000001100001"
    assert len(R.bit_sequence("abc")) == 24
    assert R.bit_sequence("abc", R.WIDE16).length == 48
    with pytest.raises(EmptyInput):
        R.bit_sequence("")


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1, max_size=30))
def test_wide16_mostly_zero(s):
    b = R.bit_sequence(s, R.WIDE16).bits
    assert b.count(0) >= len(b) / 2
    assert str(R.bit_sequence(s)) != str(R.bit_sequence(s, R.WIDE16))


def test_rank_probabilities_by_enumeration():
    counts = Counter()
    for rows in itertools.product(range(8), repeat=3):
        counts[max(_span_rank(rows), 1)] += 1
    assert (counts[3] / 512, counts[2] / 512, counts[1] / 512) == R.RANK3_PROBS
    assert sum(R.RANK3_PROBS) == 1.0


def test_chi2_closed_forms_match_scipy():
    for x in (0.0, 0.1, 1.0, 3.7, 9.21, 11.34, 40.0):
        assert R.chi2_sf_df2(x) == pytest.approx(stats.chi2.sf(x, 2), rel=1e-12, abs=1e-300)
        assert R.chi2_sf_df3(x) == pytest.approx(stats.chi2.sf(x, 3), rel=1e-10, abs=1e-300)


def test_rank_pvalue_oracle():
    b = _bits(7, 900)
    blocks = [b.value >> (b.length - 9 * (i + 1)) & 0x1FF for i in range(100)]
    ranks = Counter(_span_rank([(m >> 6) & 7, (m >> 3) & 7, m & 7]) for m in blocks)
    obs = np.array([ranks[3], ranks[2], ranks[1] + ranks[0]], dtype=float)
    exp = 100 * np.array(R.RANK3_PROBS)
    ref = stats.chi2.sf(((obs - exp) ** 2 / exp).sum(), 2)
    assert R.binary_matrix_rank_pvalue(b) == pytest.approx(ref, rel=1e-9)


def test_rank_test_examples():
    assert R.binary_matrix_rank_test(R.BitSequence(0, 90)) == 0
    assert R.binary_matrix_rank_test(R.BitSequence((1 << 900) - 1, 900)) == 0
    assert R.binary_matrix_rank_test(_bits(2024, 9000)) == 1
    with pytest.raises(TooShort):
        R.binary_matrix_rank_test(R.BitSequence(0, 8))


def _longest_run_oracle(bits):
    padded = (bits * (128 // len(bits) + 1))[:128]
    cats = Counter()
    for i in range(16):
        block = "".join(map(str, padded[8 * i:8 * i + 8]))
        run = max((len(r) for r in block.split("0")), default=0)
        cats[min(max(run, 1), 4)] += 1
    obs = np.array([cats[1], cats[2], cats[3], cats[4]], dtype=float)
    exp = 16 * np.array(R.LONGEST_RUN_PROBS)
    return stats.chi2.sf(((obs - exp) ** 2 / exp).sum(), 3)


@pytest.mark.parametrize("seed, n", [(1, 30), (2, 96), (3, 128), (4, 300)])
def test_longest_run_pvalue_oracle(seed, n):
    b = _bits(seed, n)
    assert R.longest_run_of_ones_pvalue(b) == pytest.approx(_longest_run_oracle(b.bits), rel=1e-9)


def test_longest_run_examples():
    alt = R.BitSequence.from_bits([0, 1] * 64)
    assert R.longest_run_of_ones_test(alt) == 0
    assert R.longest_run_of_ones_test(_bits(11, 256)) == 1
    assert R.longest_run_of_ones_test(R.bit_sequence("iee-security")) == 1
    assert R.longest_run_of_ones_test(R.BitSequence(1, 1)) in (0, 1)


def _entropy_oracle(bits):
    windows = Counter(tuple(bits[i:i + 8]) for i in range(len(bits) - 7))
    n = sum(windows.values())
    return -sum(c / n * math.log2(c / n) for c in windows.values())


def test_bits_entropy():
    b = R.bit_sequence("mwkwhvkdpp")
    assert R.bits_entropy(b) == pytest.approx(_entropy_oracle(b.bits), abs=1e-12)
    assert R.bits_entropy(R.BitSequence(0, 64)) == 0.0
    with pytest.raises(TooShort):
        R.bits_entropy(R.BitSequence(0, 7))


@given(st.lists(st.integers(0, 1), min_size=8, max_size=200))
def test_bits_entropy_bound_and_complement(bits):
    b = R.BitSequence.from_bits(bits)
    h = R.bits_entropy(b)
    assert h <= min(8.0, math.log2(len(bits) - 7)) + 1e-12
    comp = R.BitSequence.from_bits([1 - x for x in bits])
    assert R.bits_entropy(comp) == pytest.approx(h, abs=1e-12)


def test_compression_ratio():
    def raw_len(s):
        c = zlib.compressobj(9, zlib.DEFLATED, -15)
        return len(c.compress(s.encode()) + c.flush())

    assert R.deflate_bits_compression_ratio("iee-security") == len("iee-security") / raw_len("iee-security")
    assert R.deflate_bits_compression_ratio("iee-security") == 0.8571428571428571
    rng = np.random.default_rng(5)
    hexs = "".join(rng.choice(list("0123456789abcdef"), 24))
    assert R.deflate_bits_compression_ratio("a" * 24) > R.deflate_bits_compression_ratio(hexs)
    with pytest.raises(EmptyInput):
        R.deflate_bits_compression_ratio("")
