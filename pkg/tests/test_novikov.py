from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.novikov import (
    INF,
    NovikovScalar,
    T,
    TruncationLevel,
    add,
    format_scalar,
    invert,
    mul,
    neg,
    parse,
    truncate,
    val,
)

exps = st.fractions(min_value=-2, max_value=3, max_denominator=4)
coefs = st.integers(-3, 3).map(F)
scalars = st.lists(st.tuples(coefs, exps), max_size=4).map(NovikovScalar)
nonneg = st.lists(st.tuples(coefs, st.fractions(min_value=0, max_value=3, max_denominator=4)), max_size=4).map(
    NovikovScalar
)
levels = st.fractions(min_value=F(1, 4), max_value=4, max_denominator=4)


def test_val_examples():
    assert val(parse("2*T^(1/2) + T^2")) == F(1, 2)
    assert val(NovikovScalar()) == INF
    prod = parse("1 - T") * parse("1 + T")
    assert prod == parse("1 - T^2") and val(prod) == 0


def test_ring_examples():
    assert parse("T^(1/2) + 2*T") + parse("-T^(1/2)") == parse("2*T")
    assert parse("1 - T") * parse("1 + T + T^2") == parse("1 - T^3")
    x = parse("1 + T (mod T^1)")
    assert (x * T(2)).precision == 3


def test_invert_examples():
    y = invert(parse("1 - T"), 3)
    assert y == parse("1 + T + T^2 (mod T^3)")
    assert invert(T(), 2) == T(-1) and invert(T(), 2).is_exact()
    assert invert(parse("2"), 1) == parse("1/2")
    with pytest.raises(ZeroDivisionError):
        invert(NovikovScalar(), 1)


def test_truncate_examples():
    t = truncate(parse("1 + T + T^(5/2)"), 2)
    assert t.terms == ((1, 0), (1, 1)) and t.precision == 2
    assert truncate(NovikovScalar(), 1).is_zero()
    assert truncate(T(F(3, 10)), F(3, 10)).is_zero()


def test_truncation_level_rejects_nonpositive():
    with pytest.raises(ValueError):
        TruncationLevel(0)
    with pytest.raises(TypeError):
        NovikovScalar([(1.5, 0)])


def test_canonical_form():
    x = NovikovScalar([(1, 2), (2, 0), (-1, 2), (0, 1)])
    assert x.terms == ((2, 0),)
    y = NovikovScalar([(1, 0), (1, 5)], precision=3)
    assert y.terms == ((1, 0),)


@settings(max_examples=60, deadline=None)
@given(scalars, scalars, scalars)
def test_ring_axioms(x, y, z):
    assert (x + y) + z == x + (y + z)
    assert (x * y) * z == x * (y * z)
    assert x * (y + z) == x * y + x * z
    assert x + y == y + x and x * y == y * x
    assert add(x, neg(x)).is_zero()
    assert mul(x, T(0)) == x


@settings(max_examples=60, deadline=None)
@given(scalars, scalars)
def test_valuation(x, y):
    if not x.is_zero() and not y.is_zero():
        assert val(x * y) == val(x) + val(y)
    assert val(x + y) >= min(val(x), val(y))


@settings(max_examples=60, deadline=None)
@given(scalars, levels)
def test_invert_is_inverse_mod_r(x, r):
    if x.is_zero():
        return
    assert truncate(x * invert(x, r), r) == truncate(T(0), r)


@settings(max_examples=60, deadline=None)
@given(nonneg, nonneg, levels)
def test_truncate_is_quotient_map(x, y, r):
    assert truncate(truncate(x, r), r) == truncate(x, r)
    assert truncate(x + y, r) == truncate(truncate(x, r) + truncate(y, r), r)
    assert truncate(x * y, r) == truncate(truncate(x, r) * truncate(y, r), r)


@settings(max_examples=80, deadline=None)
@given(scalars, st.none() | levels)
def test_text_round_trip(x, r):
    if r is not None:
        x = truncate(x, r)
    assert parse(format_scalar(x)) == x
    assert parse(format_scalar(x)).precision == x.precision


def test_parse_rejects_garbage():
    for bad in ["", "T^(", "2*X", "1 + + T"]:
        with pytest.raises(ValueError):
            parse(bad)
