import pytest
from hypothesis import assume, given, strategies as st

from explaindga.domains import SuffixDatabase, load_suffix_db, parse, parse_raw, sanitize, validate
from explaindga.errors import InvalidDomain, NoSubdomain


@pytest.mark.parametrize("raw, expected", [
    ("IEE-Security.ORG", "iee-security.org"),
    ("example.com.", "example.com"),
    ("abc.def", "abc.def"),
    ("  Mixed.Case.Net.\n", "mixed.case.net"),
])
def test_sanitize(raw, expected):
    assert sanitize(raw) == expected


@given(st.text(alphabet="abcXYZ019.-_ ", max_size=40))
def test_sanitize_idempotent(raw):
    assert sanitize(sanitize(raw)) == sanitize(raw)


@pytest.mark.parametrize("s, ok", [
    ("iee-security.org", True),
    ("a..b", False),
    ("a" * 64 + ".com", False),
    ("a" * 63 + ".com", True),
    ("com", False),
    ("-abc.com", False),
    ("abc-.com", False),
    ("_srv.example.com", True),
    ("Upper.com", False),
    ("sp ace.com", False),
    (".".join(["a" * 60] * 4) + ".com", True),
    (".".join(["a" * 62] * 4) + ".com", False),
])
def test_validate(s, ok):
    assert validate(s) is ok


def test_parse_table_examples():
    d0 = parse("iee-security.org")
    assert (d0.suffix, d0.second_level, d0.subdomains_concat) == ("org", "iee-security", "iee-security")
    d1 = parse("mwkwhvkdpp.info")
    assert (d1.suffix, d1.second_level) == ("info", "mwkwhvkdpp")


def test_parse_longest_suffix_match():
    d = parse("a.b.example.co.uk")
    assert d.suffix == "co.uk"
    assert d.second_level == "example"
    assert d.subdomain_labels == ("a", "b", "example")
    assert d.subdomains_concat == "abexample"


def test_parse_unknown_suffix_falls_back_to_last_label():
    d = parse("foo.bar.notatld", SuffixDatabase(frozenset({"com"})))
    assert d.suffix == "notatld"
    assert d.second_level == "bar"


def test_parse_errors():
    with pytest.raises(NoSubdomain):
        parse("co.uk")
    with pytest.raises(InvalidDomain):
        parse("bad..domain")


def test_parse_raw_sanitizes():
    assert parse_raw("WWW.Example.COM.").reassemble() == "www.example.com"


def test_custom_suffix_file(tmp_path):
    p = tmp_path / "suffixes.txt"
    p.write_text("# comment\nexample\nco.example\n", encoding="utf-8")
    db = load_suffix_db(p)
    d = parse("x.y.co.example", db)
    assert d.suffix == "co.example"
    assert d.second_level == "y"


def test_bundled_db_contents():
    db = load_suffix_db()
    for s in ("com", "org", "info", "co.uk", "com.au"):
        assert s in db


_label = st.from_regex(r"[a-z0-9](?:[a-z0-9-]{0,10}[a-z0-9])?", fullmatch=True)


@given(st.lists(_label, min_size=1, max_size=4), st.sampled_from(["com", "co.uk", "info", "xyz", "zz"]))
def test_reassemble_roundtrip(labels, suffix):
    s = ".".join([*labels, suffix])
    assume(validate(s))
    try:
        d = parse(s)
    except NoSubdomain:
        assume(False)
    assert d.reassemble() == s
    assert d.second_level == d.subdomain_labels[-1]
    assert parse(s) == d
