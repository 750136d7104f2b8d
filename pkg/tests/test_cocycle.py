from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewrat.cocycle import (
    RenormState,
    SymbolBlock,
    cocycle_sum,
    jump,
    orbit_block,
    orbit_sums,
    psi_direct,
    renorm_advance,
    renorm_states,
    sign_blocks,
    state_from_blocks,
    substitution_blocks,
)
from skewrat.errors import BlockTooLarge, BoundaryAmbiguity, InvariantViolation
from skewrat.mcf import DigitSequence, bracket

ALPHA = (3 - 5**0.5) / 4


def test_jump_values():
    assert jump(0) == 1
    assert jump(Fraction(1, 2)) == -1
    assert jump(Fraction(3, 4)) == -1
    with pytest.raises(BoundaryAmbiguity):
        jump(0.5 + 1e-15)


def test_cocycle_sum_examples(tail3):
    assert cocycle_sum(ALPHA, 0, 0.3) == 0
    assert cocycle_sum(tail3, 6) == 0
    assert cocycle_sum(tail3, 3) == 3
    assert cocycle_sum(ALPHA, 6, 1e-3) == 0


def test_psi_direct_examples(tail3):
    assert psi_direct(tail3, 1) == 0
    assert psi_direct(tail3, 2) == 0
    assert psi_direct(tail3, 3) == 1


def test_substitution_block_examples():
    b0, b1 = substitution_blocks(DigitSequence((), (3,)), 0)
    assert b0.tolist() == [0] and b1.tolist() == [1]
    b0, b1 = substitution_blocks(DigitSequence((), (3,)), 1)
    assert b0.tolist() == [0, 0, 1] and b1.tolist() == [0, 1]
    b0, b1 = substitution_blocks(DigitSequence((), (2, 3)), 1)
    assert b0.tolist() == [0, 1] and b1.tolist() == [1]


def test_sign_block_examples(tail3):
    B0, B1, e0, e1 = sign_blocks(tail3, 0)
    assert B0.tolist() == [1] and B1.tolist() == [-1] and (e0, e1) == (0, 1)
    B0, _B1, e0, _e1 = sign_blocks(tail3, 1)
    assert B0.tolist() == [1, 1, -1]
    assert e0 == 1


def test_sign_blocks_start_at_first_step(corpus):
    # B_k(0) lists phi({j alpha}) for j = 1..l_k(0)
    B0, *_ = sign_blocks(corpus, 6)
    L = len(B0)
    alpha = bracket(corpus, 40)[0] / 2
    ref = [jump(j * alpha) for j in range(1, L + 1)]
    assert B0.tolist() == ref


def test_orbit_block_examples(tail3):
    S0, S1 = orbit_block(tail3, 1)
    assert S0.tolist() == [1, 2, 3]
    assert S1.tolist() == [1, 2]
    st = renorm_states(tail3, 1)[1]
    assert S0.tolist()[-1] == st.s0


def test_orbit_block_unchanged_flavor_one_on_digit_two():
    ds = DigitSequence((3, 2), (3,))
    a = orbit_block(ds, 1)[1].tolist()
    b = orbit_block(ds, 2)[1].tolist()
    assert a == b


def test_orbit_block_matches_rational_cocycle(corpus):
    S0, S1 = orbit_block(corpus, 5)
    alpha = bracket(corpus, 40)[0] / 2
    for S in (S0, S1):
        vals = S.tolist()
        assert vals == [cocycle_sum(alpha, m) for m in range(1, len(vals) + 1)]


def test_block_cap():
    with pytest.raises(BlockTooLarge):
        substitution_blocks(DigitSequence((), (3,)), 12, cap=1000)


def test_rle_round_trip():
    blk = SymbolBlock("bits", np.array([0, 0, 1, 0, 1, 1]))
    assert SymbolBlock.from_rle("bits", blk.to_rle()).tolist() == blk.tolist()
    with pytest.raises(InvariantViolation):
        SymbolBlock("bits", np.array([0, 2])).validate()


def test_parity_consistency(corpus):
    for k in range(8):
        b0, b1 = substitution_blocks(corpus, k)
        _B0, _B1, e0, e1 = sign_blocks(corpus, k)
        assert (int(b0.data.sum()) % 2, int(b1.data.sum()) % 2) == (e0, e1)


def test_states_match_blocks(corpus):
    for k, st in enumerate(renorm_states(corpus, 9)):
        assert st == state_from_blocks(corpus, k)


def _reachable(eps):
    rng = random.Random(5)
    for _ in range(500):
        ds = DigitSequence(tuple(rng.randint(2, 6) for _ in range(8)), (3,))
        for st in renorm_states(ds, 8):
            if st.eps == eps:
                return st
    raise AssertionError(eps)


def test_transition_examples():
    st = _reachable((0, 1))
    nxt = renorm_advance(st, 4)
    assert nxt.eps == (1, 1)
    assert nxt.T - st.T == -3
    st = _reachable((1, 0))
    nxt = renorm_advance(st, 4)  # even digit: self-loop
    assert nxt.eps == (1, 0)
    assert nxt.T - st.T == 1
    assert renorm_advance(st, 5).eps != (1, 0)


def test_first_level_offset_for_tail_three(tail3):
    st = renorm_states(tail3, 1)[1]
    assert (st.l0, st.l1, st.e0, st.e1, st.s0, st.s1, st.T) == (3, 2, 1, 1, 3, 2, -3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(2, 7), min_size=30, max_size=30).filter(lambda d: any(x > 2 for x in d[-3:])))
def test_increment_identities_on_random_streams(digits):
    ds = DigitSequence(tuple(digits[:-3]), tuple(digits[-3:]))
    # renorm_advance checks the trichotomy and every increment identity internally
    states = renorm_states(ds, 30)
    for a, b in zip(states, states[1:]):
        b.check()
        assert b.l0 == (ds.digit(b.k) - 1) * a.l0 + a.l1


def test_orbit_sums_random_rationals():
    rng = random.Random(3)
    ds = DigitSequence((), (2, 3))
    alpha = bracket(ds, 40)[0] / 2
    sums = orbit_sums(ds, 500).tolist()
    for n in rng.sample(range(1, 501), 40):
        assert sums[n - 1] == cocycle_sum(alpha, n)
