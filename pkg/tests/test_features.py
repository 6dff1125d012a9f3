import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from explaindga import features as F
from explaindga.domains import SuffixDatabase, parse
from explaindga.errors import EmptyInput, TooShort, UnknownFeature

D0, D1 = "iee-security", "mwkwhvkdpp"
_chars = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_", min_size=1, max_size=40)


def test_catalog_shape():
    assert len(F.CATALOG) == 76
    assert len(set(F.CATALOG_IDS)) == 76
    assert F.SPECS["alphabet-e"].group == F.LINGUISTIC
    assert F.SPECS["suffix-length"].group == F.STRUCTURAL
    assert F.SPECS["bits-entropy"].output_kind == F.RATIONAL
    assert F.SPECS["contains-digits"].output_kind == F.BINARY


@pytest.mark.parametrize("name, size", [
    ("RFE-MDI", 52), ("RFE-PI", 28), ("ReliefF", 41), ("MultiSURF", 59),
    ("Union-Spearman", 64), ("Union", 76), ("Intersection", 11),
])
def test_named_selection_sizes(name, size):
    assert len(F.named_selection(name).member_ids) == size


def test_named_selection_case_insensitive():
    assert F.named_selection("rfe-pi") == F.named_selection("RFE-PI")
    with pytest.raises(KeyError):
        F.named_selection("nope")


def test_selection_validation():
    sel = F.FeatureSetSelection("x", ("suffix-length", "alphabet-a"))
    assert sel.member_ids == ("alphabet-a", "suffix-length")
    with pytest.raises(UnknownFeature):
        F.FeatureSetSelection("x", ("not-a-feature",))
    with pytest.raises(ValueError):
        F.FeatureSetSelection("x", ())


def test_base36():
    assert [F.base36_value(c) for c in "org"] == [24, 27, 16]
    assert F.base36_value("7") == 7
    assert F.base36_value("-") == 0
    assert F.base36_value("z") == 35


def test_digit_sum():
    assert F.digit_sum(D0) == 238
    assert F.digit_sum(D1) == 237
    assert F.digit_sum("") == 0


@given(_chars, _chars)
def test_digit_sum_additive(a, b):
    assert F.digit_sum(a + b) == F.digit_sum(a) + F.digit_sum(b)


def test_char_class_profile():
    p = F.char_class_profile(D0)
    assert p["vowels-character-ratio"] == 0.5
    assert p["consonants-character-ratio"] == pytest.approx(5 / 12)
    assert p["hexadecimaldigits-character-ratio"] == pytest.approx(4 / 12)
    assert p["primedigits-character-ratio"] == pytest.approx(1 / 12)
    assert p["consonant-to-vowel-ratio"] == pytest.approx(5 / 6)
    p = F.char_class_profile(D1)
    assert p["primedigits-character-ratio"] == pytest.approx(0.3)
    assert p["consonant-to-vowel-ratio"] == 10.0
    p = F.char_class_profile("12345")
    assert (p["decimaldigits-character-ratio"], p["contains-digits"], p["vowels-character-ratio"]) == (1.0, 1, 0.0)
    with pytest.raises(EmptyInput):
        F.char_class_profile("")


@given(_chars)
def test_class_ratios_partition(s):
    p = F.char_class_profile(s)
    total = p["vowels-character-ratio"] + p["consonants-character-ratio"] + p["decimaldigits-character-ratio"]
    for k, v in p.items():
        if k.endswith("character-ratio"):
            assert 0.0 <= v <= 1.0
    if "-" not in s and "_" not in s:
        assert total == pytest.approx(1.0)
    else:
        assert total <= 1.0 + 1e-12


def test_max_streaks():
    m = F.max_streaks(D0)
    assert (m["vowels-max-streak-length"], m["consonants-max-streak-length"], m["hexadecimaldigits-max-streak-length"],
            m["primedigits-max-streak-length"], m["decimaldigits-max-streak-length"]) == (3, 2, 2, 1, 0)
    m = F.max_streaks(D1)
    assert (m["consonants-max-streak-length"], m["primedigits-max-streak-length"],
            m["hexadecimaldigits-max-streak-length"]) == (10, 2, 1)
    m = F.max_streaks("aaa")
    assert (m["vowels-max-streak-length"], m["consonants-max-streak-length"]) == (3, 0)


def test_consecutive_class_ratio():
    assert F.consecutive_class_ratio(D0, "consonants") == pytest.approx(2 / 12)
    assert F.consecutive_class_ratio(D1, F.CONSONANTS) == 1.0
    assert F.consecutive_class_ratio(D0, F.DIGITS) == 0.0
    with pytest.raises(EmptyInput):
        F.consecutive_class_ratio("", F.DIGITS)


def test_duplication_profile():
    assert F.duplication_profile(D0) == pytest.approx({"adjacent-duplicates-ratio": 1 / 12,
                                                       "repeated-characters-ratio": 2 / 9})
    assert F.duplication_profile(D1) == pytest.approx({"adjacent-duplicates-ratio": 0.1,
                                                       "repeated-characters-ratio": 3 / 7})
    assert F.duplication_profile("abc") == {"adjacent-duplicates-ratio": 0.0, "repeated-characters-ratio": 0.0}


def test_alphabet_counts():
    a = F.alphabet_counts(D0)
    assert (a["alphabet-e"], a["alphabet-i"], a["alphabet-r"], a["alphabet-o"]) == (3, 2, 1, 0)
    assert all(v == 0 for v in F.alphabet_counts("").values())


@given(_chars)
def test_alphabet_counts_sum_to_letters(s):
    assert sum(F.alphabet_counts(s).values()) == sum(c.isalpha() for c in s)


def test_digit_edge_distances():
    assert F.digit_edge_distances(D0) == (-1, -1)
    assert F.digit_edge_distances("ab1cd") == (2, 2)
    assert F.digit_edge_distances("7abc") == (0, 3)


def test_first_character_pair():
    assert F.first_character_pair(parse("iee-security.org")) == 105 * 256 + 101
    assert F.first_character_pair(parse("mwkwhvkdpp.info")) == 109 * 256 + 119
    assert F.first_character_pair(parse("xxabc.com")) == F.first_character_pair(parse("xx0123.net"))


def test_inverse_hamming_distance():
    assert F.inverse_hamming_distance(parse("iee-security.org")) == 1.0
    assert F.inverse_hamming_distance(parse("abc.abd.com")) == 0.5
    assert F.inverse_hamming_distance(parse("abc.xyz.abcd.com")) == 0.25


def test_syllable_count():
    assert F.syllable_count(D0) == 4
    assert F.syllable_count("banana") == 3
    assert F.syllable_count("bcd") == 0
    with pytest.raises(EmptyInput):
        F.syllable_count("")


def test_weighted_streaks():
    assert F.weighted_streaks(D1) == 10.0
    assert F.weighted_streaks(D0) == pytest.approx(7 / 12)
    assert F.weighted_streaks("aeiou") == 0.0
    assert F.weighted_streaks("ab12") == pytest.approx((1 + 4) / 4)


def test_ngram_stats_examples():
    s = F.ngram_stats(D0, 1)
    assert s["1-gram-alphabet-size"] == 9
    assert s["1-gram-skewness"] == pytest.approx(1.75)
    assert s["1-gram-kurtosis"] == pytest.approx(1.5)
    s = F.ngram_stats(D1, 2)
    assert s["2-gram-alphabet-size"] == 9
    assert s["2-gram-shannon-entropy"] == pytest.approx(math.log2(9))
    s = F.ngram_stats(D0, 3)
    assert s["3-gram-shannon-entropy"] == pytest.approx(math.log2(10))
    with pytest.raises(TooShort):
        F.ngram_stats("ab", 3)


def test_ngram_constant_multiset():
    s = F.ngram_stats("abc", 1)
    assert s["1-gram-skewness"] == 0.0 and s["1-gram-kurtosis"] == 0.0


@given(_chars, st.integers(1, 3))
def test_ngram_entropy_bound(s, n):
    if len(s) < n:
        return
    st_ = F.ngram_stats(s, n)
    k = st_[f"{n}-gram-alphabet-size"]
    h = st_[f"{n}-gram-shannon-entropy"]
    assert h <= math.log2(k) + 1e-12
    if st_[f"{n}-gram-max"] == 1:
        assert h == pytest.approx(math.log2(k), abs=1e-12)


def test_structural_profile():
    assert F.structural_profile(parse("iee-security.org")) == {
        "domain-name-length": 16, "hex-exclusive-subdomains-ratio": 0.0, "second-level-length": 12,
        "subdomains-length": 12, "subdomains-mean-length": 12.0, "suffix-length": 3}
    assert F.structural_profile(parse("deadbeef.example.com"))["hex-exclusive-subdomains-ratio"] == 0.5
    assert F.structural_profile(parse("a.b.example.co.uk"))["suffix-length"] == 5


def test_suffix_stats():
    assert F.suffix_stats(parse("x.org")) == pytest.approx({"suffix-digit-sum": 67,
                                                            "suffix-standard-deviation": 4.64280}, abs=1e-5)
    assert F.suffix_stats(parse("x.info")) == pytest.approx({"suffix-digit-sum": 80,
                                                             "suffix-standard-deviation": 3.67423}, abs=1e-5)
    assert F.suffix_stats(parse("x.aa", SuffixDatabase(["aa"]))) == {
        "suffix-digit-sum": 20, "suffix-standard-deviation": 0.0}


def test_extract_projection_and_determinism():
    d = parse("iee-security.org")
    one = F.FeatureSetSelection("one", ("domain-name-length",))
    assert F.extract(d, one).tolist() == [16.0]
    a, b = F.extract(d), F.extract(d)
    assert a.shape == (76,)
    assert a.tobytes() == b.tobytes()


def test_extract_short_second_level_defined_away():
    v = F.extract_dict(parse("a.com"))
    assert v["2-gram-alphabet-size"] == 0.0
    assert v["3-gram-shannon-entropy"] == 0.0
    assert v["binary-matrix-rank-test"] == 0.0
    assert v["1-gram-alphabet-size"] == 1.0


_domain = st.from_regex(r"[a-z0-9](?:[a-z0-9_-]{0,20}[a-z0-9])?(\.[a-z0-9]{1,8}){0,2}\.(com|info|co\.uk|xyz)",
                        fullmatch=True)


@given(_domain)
def test_vector_invariants(s):
    v = F.extract_dict(parse(s))
    for fid, x in v.items():
        assert math.isfinite(x), fid
        kind = F.SPECS[fid].output_kind
        if kind == F.BINARY:
            assert x in (0.0, 1.0), fid
        elif kind == F.INTEGER:
            assert x == int(x), fid


def test_feature_csv_roundtrip(tmp_path):
    doms = [parse(d) for d in ("iee-security.org", "mwkwhvkdpp.info")]
    X = F.Extractor().matrix(doms)
    p = tmp_path / "f.csv"
    F.write_feature_csv(p, F.CATALOG_IDS, X, ["benign", "conficker"])
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [*F.CATALOG_IDS, "label"]
    assert rows[1][F.CATALOG_INDEX["suffix-standard-deviation"]] == "4.642796"
    ids, M, labels = F.read_feature_csv(p)
    assert list(ids) == list(F.CATALOG_IDS)
    assert labels == ["benign", "conficker"]
    assert np.allclose(M, X, atol=5e-7)


def test_matrix_timings():
    t = []
    X = F.Extractor().matrix([parse("abc.com")] * 3, timings=t)
    assert X.shape == (3, 76) and len(t) == 3 and all(x > 0 for x in t)
