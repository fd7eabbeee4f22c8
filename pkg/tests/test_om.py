import itertools
import math
import random

import pytest
from hypothesis import given, strategies as st

from omfmea import om
from omfmea.om import QuantitySpace, fin, inf, zero, amb

IDX = range(-4, 5)


# Reference rows, for every index pair.

def current_row(e, r):
    """Current assignment: (effort, resistance) -> flow."""
    if e == "0":
        return {"0": "?", "inf": "0"}.get(r, "0")
    sign, n = e
    if r == "0":
        return "short"
    if r == "inf":
        return "0"
    return (sign, n - r)


def product_row(a, b):
    """Multiplication of non-negative resistances."""
    if a == "0" and b == "0":
        return "0"
    if "0" in (a, b) and "inf" in (a, b):
        return "?"
    if "0" in (a, b):
        return "0"
    if "inf" in (a, b):
        return "inf"
    return a + b


def sum_row(a, b):
    """Addition of signed powers."""
    if "?" in (a, b):
        return "?"
    if "inf" in (a, b):
        return "inf"
    if a == "0":
        return b
    if b == "0":
        return a
    (sa, m), (sb, n) = a, b
    if sa == sb:
        return (sa, min(m, n))
    if n < m:
        return (sb, n)
    if m < n:
        return (sa, m)
    return "?"


def qv(x, q):
    if x == "0":
        return zero(q)
    if x == "inf":
        return inf(q)
    if x == "?":
        return amb(q)
    if x == "short":
        return om.short()
    if isinstance(x, tuple):
        return fin(q, x[1], x[0])
    return fin(q, x)


def test_current_assignment_rows():
    efforts = ["0"] + [(s, n) for s in (1, -1) for n in IDX]
    resist = ["0", "inf"] + list(IDX)
    for e, r in itertools.product(efforts, resist):
        assert om.flow_from(qv(e, "u"), qv(r, "r")) == qv(current_row(e, r), "f"), (e, r)


def test_multiplication_rows():
    vals = ["0", "inf"] + list(IDX)
    for a, b in itertools.product(vals, vals):
        assert om.om_mul(qv(a, "r"), qv(b, "r")) == qv(product_row(a, b), "r"), (a, b)


def test_addition_rows():
    vals = ["0", "inf", "?"] + [(s, n) for s in (1, -1) for n in IDX]
    for a, b in itertools.product(vals, vals):
        assert om.om_add(qv(a, "p"), qv(b, "p")) == qv(sum_row(a, b), "p"), (a, b)


def test_product_kinds():
    assert om.om_mul(fin("f", 1), fin("r", 2)) == fin("u", 3)
    assert om.om_mul(fin("u"), fin("f", 1, -1)) == fin("p", 1, -1)
    assert om.om_mul(fin("f", 2), fin("t", -1)) == fin("d", 1)


def test_signs_multiply():
    assert om.om_mul(fin("f", 0, -1), fin("r", 1)) == fin("u", 1, -1)
    assert om.om_mul(fin("u", 0, -1), fin("f", 0, -1)) == fin("p", 0, 1)


def test_zero_times_ambiguous_is_zero():
    assert om.om_mul(zero("f"), amb("r")) == zero("u")


def test_add_kind_mismatch():
    with pytest.raises(om.OMError):
        om.om_add(fin("f"), fin("u"))


@pytest.mark.parametrize(
    "terms, expected",
    [
        (["-f>1", "-f>4"], "-f>1"),
        (["f>4", "f>3"], "f>3"),
        (["f", "-f>2"], "f"),
        (["f", "-f"], "?"),
        (["f>1", "f", "-f>1"], "f"),
        ([], "0"),
        (["0", "0"], "0"),
    ],
)
def test_om_sum_examples(terms, expected):
    vals = [om.parse_value(t, "f") for t in terms]
    assert om.render(om.om_sum(vals, "f")) == expected


def test_om_sum_is_not_a_pairwise_fold():
    terms = [fin("f", 1), fin("f", 1, -1), fin("f")]
    # folding left would meet f>1 - f>1 = ? first
    assert om.om_add(om.om_add(terms[0], terms[1]), terms[2]).is_amb
    assert om.om_sum(terms) == fin("f")


def test_om_sum_absorbing_values():
    assert om.om_sum([fin("f"), amb("f"), inf("f")]).is_amb
    assert om.om_sum([fin("f"), inf("f")]).is_inf
    assert om.om_sum([om.floating(), om.short()]) == om.short()


@pytest.mark.parametrize(
    "a, b, lo, hi",
    [
        ("r", "inf", "r", "inf"),
        ("r>1", "r", "r>1", "r"),
        ("0", "r>3", "0", "r>3"),
    ],
)
def test_min_max(a, b, lo, hi):
    a, b = om.parse_value(a, "r"), om.parse_value(b, "r")
    assert om.render(om.om_min(a, b)) == lo
    assert om.render(om.om_max(a, b)) == hi
    assert om.om_min(a, amb("r")).is_amb


def test_flow_from_examples():
    assert om.flow_from(fin("u"), zero("r")) == om.short()
    assert om.flow_from(fin("u", 1), fin("r", 2)) == fin("f", -1)
    assert om.flow_from(zero("u"), zero("r")).is_amb


@pytest.mark.parametrize("n", IDX)
@pytest.mark.parametrize("m", IDX)
def test_flow_then_effort_roundtrip(n, m):
    r = fin("r", m)
    assert om.om_mul(om.flow_from(fin("u", n), r), r) == fin("u", n)


def test_duration():
    assert om.duration_from(fin("d", -1), fin("f")) == fin("t", -1)
    assert om.duration_from(fin("d", -1), zero("f")) is None
    assert om.duration_from(fin("d", -1), fin("f", 1)) == fin("t", -2)
    assert om.duration_from(fin("d"), amb("f")) is None


def test_negation():
    assert -fin("f", 1) == fin("f", 1, -1)
    assert -zero("f") == zero("f")
    assert (-amb("f")).is_amb


@pytest.mark.parametrize(
    "text",
    ["0", "r", "r>2", "r<1", "inf", "?", "short", "float", "mid", "-f>1", "u<3", "-p"],
)
def test_text_roundtrip(text):
    assert om.render(om.parse_value(text)) == text


def test_unicode_symbols_parse():
    assert om.parse_value("∞").is_inf
    assert om.parse_value("⊔") == om.short()
    assert om.parse_value("∅") == om.floating()
    assert om.parse_value("~") == om.mid()


@pytest.mark.parametrize("bad", ["", "x>", "r>>1", "rr", "1", "r>-1"])
def test_parse_rejects(bad):
    with pytest.raises(om.OMError):
        om.parse_value(bad)


def test_mid_takes_no_arithmetic():
    with pytest.raises(om.OMError):
        om.om_add(om.mid(), fin("u"))


def test_signed_order():
    order = ["-f", "-f>1", "0", "f>1", "f"]
    vals = [om.parse_value(v, "f") for v in order] + [inf("f")]
    assert sorted(vals, key=om.signed_key) == vals


def test_quantity_space():
    time = QuantitySpace("t", ("mS", "Sec", "hour", "day"), "Sec")
    assert time.value("Sec") == fin("t")
    assert time.value("mS") == fin("t", 1)
    assert time.value("day") == fin("t", -2)
    for label in time.labels:
        assert time.label(time.value(label)) == label
    assert time.label(fin("t", 5)) is None
    with pytest.raises(om.OMError):
        QuantitySpace("t", ("a", "b"), "c")


# --- properties -------------------------------------------------------------

def _values(q):
    signs = st.sampled_from([1, -1])
    finite = st.builds(lambda s, n: fin(q, n, s), signs, st.integers(-6, 6))
    return st.one_of(finite, st.just(zero(q)), st.just(inf(q)), st.just(amb(q)))


@given(_values("p"), _values("p"))
def test_add_commutes(a, b):
    assert om.om_add(a, b) == om.om_add(b, a)


@given(_values("r"), _values("r"))
def test_mul_commutes(a, b):
    assert om.om_mul(a, b) == om.om_mul(b, a)


@given(st.lists(_values("f"), max_size=8), st.randoms(use_true_random=False))
def test_om_sum_permutation_invariant(terms, rnd):
    shuffled = list(terms)
    rnd.shuffle(shuffled)
    assert om.om_sum(terms, "f") == om.om_sum(shuffled, "f")


def _numeric(v, rng):
    return v.sign * 10.0 ** (-3 * v.n) * 2 ** rng.uniform(-1, 1)


def _quantize(x, q):
    if x == 0:
        return zero(q)
    return fin(q, round(-math.log10(abs(x)) / 3), 1 if x > 0 else -1)


def _finite(q):
    return st.builds(lambda s, n: fin(q, n, s), st.sampled_from([1, -1]), st.integers(-4, 4))


@given(st.lists(_finite("f"), min_size=1, max_size=6), st.integers(0, 2**32))
def test_sum_numerically_sound(terms, seed):
    rng = random.Random(seed)
    qual = om.om_sum(terms, "f")
    x = sum(_numeric(t, rng) for t in terms)
    if qual.is_definite:
        assert _quantize(x, "f") == qual


@given(_finite("f"), _finite("r"), st.integers(0, 2**32))
def test_mul_numerically_sound(a, b, seed):
    rng = random.Random(seed)
    assert _quantize(_numeric(a, rng) * _numeric(b, rng), "u") == om.om_mul(a, b)
