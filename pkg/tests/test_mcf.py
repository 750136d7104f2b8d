from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewrat.errors import InsufficientDigits, PrecisionExhausted
from skewrat.mcf import (
    DigitSequence,
    badness,
    bracket,
    canonical_subsequence,
    certified_floors,
    evaluate,
    expand,
    parse_beta,
)


def minus_cf_digits(beta: Fraction, k: int) -> list[int]:
    """Reference digit map on exact rationals."""
    out = []
    for _ in range(k):
        n = -((-1) // beta) if beta else 0
        n = -(-1 // beta) if False else int(-(-Fraction(1) // beta))
        out.append(n)
        beta = n - 1 / beta
        if beta == 0:
            break
    return out


def test_golden_ratio_conjugate():
    ds = expand("(sqrt(5)-1)/2", 30)
    assert ds.head(30) == [2] + [3] * 29


def test_tail_three():
    assert expand("(3-sqrt(5))/2", 40).head(40) == [3] * 40


def test_rational_half_exhausts_after_one_digit():
    with pytest.raises(PrecisionExhausted) as info:
        expand("1/2", 10)
    assert info.value.digits == [2]


def test_truncated_decimal_stops_early():
    with pytest.raises(PrecisionExhausted) as info:
        expand("0.6180339887…", 20)
    assert info.value.digits[:3] == [2, 3, 3]
    assert len(info.value.digits) < 20


@pytest.mark.parametrize(
    "digits,k,value",
    [((2,), 1, Fraction(1, 2)), ((2, 3), 2, Fraction(3, 5)), ((3, 3), 2, Fraction(3, 8))],
)
def test_evaluate(digits, k, value):
    assert evaluate(DigitSequence(digits), k) == value


def test_badness_examples():
    b = badness(DigitSequence((2,), (3,)))
    assert (b.max_digit, b.max_run_of_2s) == (3, 1)
    b = badness(DigitSequence((), (3,)))
    assert (b.max_digit, b.max_run_of_2s) == (3, 0)
    b = badness(DigitSequence((5, 2, 2, 2, 3)), window=5)
    assert (b.max_digit, b.max_run_of_2s) == (5, 3)


def test_canonical_subsequence_examples():
    assert canonical_subsequence(DigitSequence((), (3,)), 2).indices == (4, 8)
    assert canonical_subsequence(DigitSequence((3, 2, 3, 2, 3, 3, 2, 3, 3, 3, 3)), 1).indices == (6,)
    assert canonical_subsequence(DigitSequence((), (2, 3)), 1).indices == (8,)
    with pytest.raises(InsufficientDigits):
        canonical_subsequence(DigitSequence((3, 3, 3)), 1)


def test_digit_validation():
    with pytest.raises(ValueError):
        DigitSequence((), (2,))
    with pytest.raises(ValueError):
        DigitSequence((1, 3))
    with pytest.raises(ValueError):
        DigitSequence((), ())


def test_json_round_trip():
    ds = DigitSequence((5, 2), (4, 3))
    assert DigitSequence.from_json(ds.to_json()) == ds
    assert DigitSequence.from_json('{"tail":[3]}') == DigitSequence((), (3,))


periodic = st.builds(
    DigitSequence,
    st.lists(st.integers(2, 6), max_size=4).map(tuple),
    st.lists(st.integers(2, 6), min_size=1, max_size=3).filter(lambda t: any(d > 2 for d in t)).map(tuple),
)


@settings(max_examples=30, deadline=None)
@given(periodic)
def test_round_trip_through_high_precision_value(ds):
    lo, hi = bracket(ds, 120)
    mid = (lo + hi) / 2
    got = expand(mid, 50, precision=1024)
    assert got.head(50) == ds.head(50)


@settings(max_examples=30, deadline=None)
@given(periodic)
def test_convergents_contract(ds):
    vals = [evaluate(ds, k) for k in range(1, 42)]
    gaps = [abs(a - b) for a, b in zip(vals, vals[1:])]
    assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))
    dens = [v.denominator for v in vals]
    assert all(a < b for a, b in zip(dens, dens[1:]))


@settings(max_examples=20, deadline=None)
@given(periodic)
def test_digit_bound_and_syndetic_grouping(ds):
    k = 20
    assert all(d >= 2 for d in ds.head(k))
    gaps = canonical_subsequence(ds, 6).gaps()
    per = len(ds.tail)
    big = sum(1 for d in ds.tail if d > 2)
    bound = len(ds.prefix) + per * (-(-4 // big) + 1)
    assert max(gaps) <= bound


def test_certified_floors_match_exact_rational_reference():
    ds = DigitSequence((), (3,))
    lo, _hi = bracket(ds, 60)
    fl = certified_floors(ds, 2000)
    assert all(int(fl[j]) == (j * lo.numerator) // lo.denominator for j in range(2001))


def test_parse_beta_interval_contains_value():
    lo, hi = parse_beta("(sqrt(5)-1)/2")
    assert lo < hi and lo * lo + lo < 1 < hi * hi + hi
