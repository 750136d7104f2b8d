from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewrat.cocycle import renorm_states
from skewrat.errors import InvariantViolation
from skewrat.mcf import DigitSequence
from skewrat.visits import (
    VisitDistribution,
    VisitFrame,
    frame_at,
    frames,
    simplified_step,
    simplify,
    unsimplify,
    visits_direct,
    visits_step,
)


def test_direct_examples(tail3):
    assert visits_direct(tail3, 2).counts == {1: 1, 2: 1}
    assert visits_direct(tail3, 3).counts == {1: 1, 2: 1, 3: 1}
    assert visits_direct(DigitSequence((), (2, 3)), 1).counts == {1: 1}


def test_simplify_examples():
    V = simplify(VisitDistribution({1: 1, 2: 1}), -1)
    assert V.counts == {1: 1, 3: 1} and V.mass == 2
    assert simplify(VisitDistribution({0: 5}), 0).counts == {0: 5}
    assert unsimplify(V) == VisitDistribution({1: 1, 2: 1})


def test_simplified_parity_is_enforced():
    with pytest.raises(InvariantViolation):
        VisitDistribution({0: 1}, kind="simplified", T=1)


def test_first_level_simplified_flavor_one(tail3):
    f = frame_at(tail3, 1)
    assert f.state.T == -3
    assert f.V1.counts == {-1: 1, 1: 1}


def test_recursion_matches_direct_at_level_two(tail3):
    f = frame_at(tail3, 2)
    assert f.state.l0 == 8
    assert f.U0 == visits_direct(tail3, 8)


def test_recursion_matches_direct(corpus):
    for f in frames(corpus, 12):
        if f.state.l0 > 10**5:
            break
        assert f.U0 == visits_direct(corpus, f.state.l0)
        assert f.U1 == visits_direct(corpus, f.state.l1)
        assert f.V0.mass == f.state.l0
        assert all((j - f.state.T) % 2 == 0 for j in f.V0.counts)


def test_digit_two_keeps_flavor_one():
    U0 = VisitDistribution({0: 2, 1: 1}, 3, 0)
    U1 = VisitDistribution({4: 2}, 3, 1)
    for eps in (0, 1):
        _a, b = visits_step(U0, U1, 2, eps, 5)
        assert b == U1


def test_even_reflection_doubles_symmetric_counts():
    s0 = 4
    U0 = VisitDistribution({1: 2, 2: 1, 3: 2})  # symmetric about s0/2
    U1 = VisitDistribution({0: 1})
    a, _b = visits_step(U0, U1, 3, 1, s0)  # N = 2
    assert a.counts == {0: 1, 1: 4, 2: 2, 3: 4}


def test_simplified_digit_two_shift():
    V0 = VisitDistribution({1: 1}, kind="simplified", T=1)
    V1 = VisitDistribution({-1: 2, 3: 1}, kind="simplified", T=1)
    _a, b = simplified_step(V0, V1, 2, 1)
    assert b.counts == {0: 2, 4: 1}


def test_frame_json_round_trip(corpus):
    f = frame_at(corpus, 6)
    g = VisitFrame.from_json(f.to_json())
    assert g.state == f.state and g.U0 == f.U0 and g.V1 == f.V1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(2, 6), min_size=8, max_size=8), st.integers(0, 7), st.integers(0, 10**6))
def test_simplified_step_commutes_with_raw_step(digits, k, seed):
    ds = DigitSequence(tuple(digits), (3,))
    states = renorm_states(ds, k + 1)
    st0, st1 = states[k], states[k + 1]
    rng = random.Random(seed)
    U0 = VisitDistribution({rng.randint(-5, 5): rng.randint(1, 4) for _ in range(4)}, k, 0)
    U1 = VisitDistribution({rng.randint(-5, 5): rng.randint(1, 4) for _ in range(3)}, k, 1)
    n = ds.digit(k + 1)
    raw = visits_step(U0, U1, n, st0.e0, st0.s0)
    simp = simplified_step(simplify(U0, st0.T), simplify(U1, st0.T), n, st0.e0)
    for r, s in zip(raw, simp):
        assert simplify(r, st1.T) == s
        assert s.T == st1.T
