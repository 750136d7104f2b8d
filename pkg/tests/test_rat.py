from __future__ import annotations

import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewrat.checks import BALANCED_ADAPTED, CORPORA, random_flip_rat
from skewrat.cocycle import renorm_states
from skewrat.errors import CenteringViolation, MassMismatch, NotAperiodic, StateBlowup
from skewrat.genfun import LaurentPoly, fejer
from skewrat.mcf import DigitSequence, canonical_subsequence
from skewrat.rat import (
    Atom,
    FlipRat,
    alpha_rat_sequence,
    arw_laws,
    center,
    cf_norm,
    cf_norm_rows,
    compactness_report,
    compose,
    compose_all,
    dump_corpus,
    exact_arw_law,
    group,
    law_vector,
    load_corpus,
    periodicity_group,
    predicates,
    push_law,
    r_trajectory,
    rat_cf,
    simulate,
    spec_rat,
    spec_rat_sequence,
    spectral,
    variance_check,
    walk_means,
)
from skewrat.visits import frames

COIN = FlipRat.from_rows([{(0, 1, 1): Fraction(1, 2), (0, 1, -1): Fraction(1, 2)}])

seeds = st.integers(0, 2**32 - 1)


def rand_rat(seed, d=None):
    return random_flip_rat(random.Random(seed), d)


def test_mass_is_checked():
    with pytest.raises(MassMismatch):
        FlipRat(1, (Atom(((0, 1),), (0,), Fraction(1, 2)),))


def test_atoms_merge():
    F = FlipRat(1, (Atom(((0, 1),), (2,), Fraction(1, 2)), Atom(((0, 1),), (2,), Fraction(1, 2))))
    assert len(F.atoms) == 1


def test_corpus_round_trip():
    rats = [BALANCED_ADAPTED, COIN, FlipRat.deterministic([(0, -1)], (Fraction(1, 3),))]
    assert load_corpus(dump_corpus(rats)) == rats


def test_trivial_spec_rat():
    F = spec_rat(2, 1, 3, 2)
    assert F.row_law(1) == {(1, 1, 1): 1}
    assert all(at.b == (1, 1) for at in F.atoms)
    assert {at.a[0] for at in F.atoms} <= {(0, 1), (1, -1)}


def test_spec_rat_probability():
    F = spec_rat(3, 0, 1, 1)
    assert F.target_law(0)[0] == Fraction(2, 3)
    assert sum(at.p for at in F.atoms) == 1


def test_uniform_offsets_match_fejer_kernel():
    for n in (3, 4, 7):
        F = spec_rat(n, 0, 1, 1)
        for i in (0, 1):
            law = F.conditional_offsets(i, 0, 1)
            assert LaurentPoly(law) == fejer(n - 1 - i).compose_power(2).shift(-(n - 1))


def test_identity_composition():
    F = BALANCED_ADAPTED
    assert compose(FlipRat.identity(2), F) == F
    assert compose(F, FlipRat.identity(2)) == F


def test_state_cap():
    with pytest.raises(StateBlowup):
        compose(BALANCED_ADAPTED, BALANCED_ADAPTED, state_cap=10)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_composition_offsets_bounded(seed):
    rng = random.Random(seed)
    d = rng.randint(1, 3)
    F, G = random_flip_rat(rng, d), random_flip_rat(rng, d)
    assert compose(G, F).max_offset() <= G.max_offset() + F.max_offset()


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_characteristic_matrix_is_multiplicative(seed):
    rng = random.Random(seed)
    d = rng.randint(1, 2)
    F, G = random_flip_rat(rng, d), random_flip_rat(rng, d)
    assert rat_cf(compose(G, F)) == rat_cf(G) @ rat_cf(F)


def test_translation_characteristic_matrix():
    F = FlipRat.deterministic([(0, 1)], (3,))
    M = rat_cf(F).eval(0.7)
    assert np.allclose(M, np.diag([np.exp(3j * 0.7), np.exp(-3j * 0.7)]))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_law_vector_recursion(seed):
    rng = random.Random(seed)
    F = random_flip_rat(rng, 2)
    x = (rng.randint(-3, 3), rng.randint(-3, 3))
    law = {x: Fraction(1)}
    lhs = law_vector(push_law(F, law), 2)
    rhs = rat_cf(F).apply(law_vector(law, 2))
    assert lhs == rhs


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_norm_bounds_and_symmetry(seed):
    F = rand_rat(seed)
    cf = rat_cf(F)
    th = np.linspace(-math.pi, math.pi, 257)
    n = cf_norm(cf, th)
    assert n.max() <= 1 + 1e-12
    assert abs(cf_norm(cf, 0.0) - 1) < 1e-12
    assert np.allclose(n, cf_norm_rows(F, th), atol=1e-12)
    M = cf.eval(0.9)
    assert np.allclose(cf.eval(-0.9), M.conj())
    d = F.d
    assert np.allclose(M[:d, :d], M[d:, d:].conj())
    assert np.allclose(M[:d, d:], M[d:, :d].conj())


def test_norm_on_periodicity_group():
    F = BALANCED_ADAPTED
    pg = periodicity_group(F)
    assert pg.kind == "trivial"
    assert abs(cf_norm(F, 2 * math.pi) - 1) < 1e-12
    assert cf_norm(F, 1.0) < 1


def test_even_spec_rat_norm_at_quarter_and_half_turn():
    F = spec_rat(4, 0, 3, 2)
    assert predicates(F).adapted
    # every conditional offset law lives on one parity class, so theta = pi is in the group
    assert abs(cf_norm(F, math.pi) - 1) < 1e-12
    assert cf_norm(F, math.pi / 2) < 1


def test_periodicity_examples():
    const = FlipRat.from_rows([{(0, 1, 2): Fraction(1)}, {(0, 1, 0): Fraction(1, 2), (0, 1, 1): Fraction(1, 2)}])
    assert periodicity_group(const).kind == "full_line"
    unit = FlipRat.from_rows([{(0, 1, 0): Fraction(1, 2), (0, 1, 1): Fraction(1, 2)}])
    pg = periodicity_group(unit)
    assert pg.kind == "trivial" and pg.contains(2 * math.pi) and not pg.contains(math.pi)
    even = FlipRat.from_rows([{(0, 1, 0): Fraction(1, 2), (0, 1, 2): Fraction(1, 2)}])
    assert periodicity_group(even).generator == pytest.approx(math.pi)


@pytest.mark.parametrize("name", sorted(CORPORA))
def test_spec_rat_classification(name):
    for F in spec_rat_sequence(CORPORA[name], 30):
        pr = predicates(F)
        n = F.coefficient
        if n == 2:
            assert not pr.irreducible
            continue
        assert pr.irreducible
        if F.parity == "odd":
            assert not pr.partially_adapted
            if n >= 4:
                assert pr.mean_contractive
        else:
            assert not pr.mean_contractive
            assert pr.adapted == (n >= 4)
            assert pr.partially_adapted


def test_odd_coefficient_three_is_not_mean_contractive():
    # row 1 sees q_1 = 1: no reflected copy, so the mean flip keeps unit norm
    F = spec_rat(3, 1, 3, 2)
    assert predicates(F).mean_a_norm == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 6), min_size=6, max_size=6), st.integers(0, 4), st.integers(0, 4))
def test_closure_under_composition(digits, j, k):
    ds = DigitSequence(tuple(digits), (3,))
    seq = spec_rat_sequence(ds, 6)
    F, G = seq[j], seq[k]
    pf, pg = predicates(F), predicates(G)
    pc = predicates(compose(G, F))
    for prop in ("irreducible", "mean_contractive", "balanced"):
        if getattr(pf, prop) or getattr(pg, prop):
            assert getattr(pc, prop), prop
    if pf.irreducible and pg.mean_contractive:
        assert pc.balanced


def test_mixed_composition_is_not_symmetric():
    # F is irreducible, G is mean contractive; G o F is balanced but F o G never reaches column 1
    F = FlipRat(2, (Atom(((0, 1), (1, 1)), (0, 0), Fraction(1, 2)), Atom(((1, 1), (0, 1)), (0, 0), Fraction(1, 2))))
    half = {(0, 1, 0): Fraction(1, 2), (0, -1, 0): Fraction(1, 2)}
    G = FlipRat.from_rows([half, half])
    assert predicates(F).irreducible and predicates(G).mean_contractive
    assert predicates(compose(G, F)).balanced
    assert not predicates(compose(F, G)).balanced


def test_exact_law_examples():
    assert exact_arw_law([COIN], 0).law == {(0,): 1}
    law = exact_arw_law([COIN] * 4).law
    assert law == {(x,): Fraction(math.comb(4, (x + 4) // 2), 16) for x in (-4, -2, 0, 2, 4)}


def test_exact_law_against_monte_carlo():
    seq = alpha_rat_sequence(CORPORA["tail3"], 4)
    exact = exact_arw_law(seq)
    trials = 10**6
    emp = simulate(seq, 4, trials, seed=5)
    for k in (0, 1):
        em = emp.marginal(k)
        for x, p in exact.marginal(k).items():
            sd = math.sqrt(float(p * (1 - p)) / trials)
            assert abs(em.get(x, 0) / trials - float(p)) <= 4 * sd + 1e-12


def test_simulate_determinism_and_identity():
    seq = alpha_rat_sequence(CORPORA["tail23"], 5)
    a = simulate(seq, 5, 25000, seed=9, shard_size=7000)
    b = simulate(seq, 5, 25000, seed=9, shard_size=7000)
    assert a.counts == b.counts
    T = FlipRat.deterministic([(0, 1), (1, 1)], (2, -1))
    assert simulate([T] * 3, 3, 100, seed=1).counts == {(6, -3): 100}


def test_alpha_sequence_first_level(tail3):
    seq = alpha_rat_sequence(tail3, 1)
    law = exact_arw_law(seq)
    f = frames(tail3, 1)[1]
    assert law.marginal(1) == {j: Fraction(c, f.state.l1) for j, c in f.V1.counts.items()}
    assert arw_laws(seq)[0].law == {(0, 0): 1}


def test_coordinate_laws_tail23():
    ds = CORPORA["tail23"]
    laws = arw_laws(alpha_rat_sequence(ds, 6))
    for k, f in enumerate(frames(ds, 6)):
        if k == 0:
            continue
        assert laws[k].marginal(0) == {j: Fraction(c, f.state.l0) for j, c in f.V0.counts.items()}
        assert laws[k].marginal(1) == {j: Fraction(c, f.state.l1) for j, c in f.V1.counts.items()}


def test_centering_examples():
    cs, means = center([COIN] * 3)
    assert cs == [COIN] * 3 and all(m == (0,) for m in means)
    seq = alpha_rat_sequence(CORPORA["tail3"], 5)
    cs, means = center(seq)
    assert all(c == (0, 0) for c in walk_means(cs))
    orig, cent = exact_arw_law(seq), exact_arw_law(cs)
    for k in (0, 1):
        assert orig.variance(k) == cent.second_moment(k)
    sup_mean = max(max(abs(x) for x in c) for c in means)
    for F, G in zip(seq, cs):
        for a, b in zip(F.atoms, G.atoms):
            assert max(abs(x - y) for x, y in zip(a.b, b.b)) <= 2 * sup_mean


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_centering_preserves_adaptedness(seed):
    rng = random.Random(seed)
    d = rng.randint(1, 2)
    seq = [random_flip_rat(rng, d) for _ in range(3)]
    cs, _ = center(seq)
    for F, G in zip(seq, cs):
        assert predicates(F).adapted_rows == predicates(G).adapted_rows
        from skewrat.rat import row_moduli

        assert row_moduli(F) == row_moduli(G)


def test_grouping_tail3(tail3):
    nu = canonical_subsequence(tail3, 6)
    assert nu.indices == tuple(4 * (j + 1) for j in range(6))
    cs, _ = center(alpha_rat_sequence(tail3, nu.indices[-1]))
    groups = group(cs, nu)
    for G in groups:
        pr = predicates(G)
        assert pr.adapted and pr.mean_contractive


def test_grouping_shifted_indices():
    ds = CORPORA["prefix5_tail4"]
    idx = [1 + 4 * k for k in range(1, 6)]
    cs, _ = center(alpha_rat_sequence(ds, idx[-1]))
    groups = group(cs, idx, start=1)
    assert all(predicates(G).mean_a_norm < 1 for G in groups)


def test_compactness(tail3):
    traj = r_trajectory(tail3, 25)
    assert min(traj) >= Fraction(1, 2)
    assert abs(float(traj[-1]) - (math.sqrt(5) - 1) / 2) < 1e-9
    for a, b in zip(traj, traj[1:]):
        assert b == 1 - 1 / (3 - 1 + a)
    rep = compactness_report([FlipRat.deterministic([(0, 1)], (5,))])
    assert rep.min_atom == 1 and rep.max_offset == 5


def test_runs_of_two_lower_inverse_ratio():
    ds = DigitSequence((3, 2, 2, 2, 2), (3,))
    traj = r_trajectory(ds, 5)
    for j in range(1, 5):
        assert 1 / traj[j] == 1 / traj[0] + j


def test_variance_fair_coin():
    rep = variance_check([COIN] * 5)
    assert rep.lower == rep.upper == 5 and rep.observed == (5,)
    with pytest.raises(CenteringViolation):
        variance_check([FlipRat.deterministic([(0, 1)], (1,))])


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_variance_sandwich_random(seed):
    rng = random.Random(seed)
    d = rng.randint(1, 2)
    seq = [random_flip_rat(rng, d, rng.randint(1, 3), 2) for _ in range(rng.randint(1, 5))]
    cs, _ = center(seq)
    rep = variance_check(cs)
    assert rep.sandwich and rep.orthogonal and rep.decomposition_matches


def test_spectral_translation():
    F = FlipRat.deterministic([(0, 1)], (3,))
    with pytest.raises(NotAperiodic):
        spectral(F)
    assert spectral(F, require_aperiodic=False).gamma == pytest.approx(9.0, rel=1e-6)


def test_spectral_adapted_has_positive_gamma():
    sp = spectral(BALANCED_ADAPTED)
    assert sp.gamma > 0 and sp.kappa > 0
    assert sp.gamma == pytest.approx(sp.gamma_closed, rel=1e-6)
    assert sp.gamma_closed == pytest.approx(0.71875, rel=1e-9)


def test_coupling_hook_keeps_marginals(tail3):
    # a coupling that perfectly correlates the two rows' atom order
    def comonotone(rows):
        from skewrat.rat import independent_coupling

        return independent_coupling(rows)

    a = alpha_rat_sequence(tail3, 3)
    b = alpha_rat_sequence(tail3, 3, coupling=comonotone)
    assert [F.row_law(k) for F in a for k in (0, 1)] == [F.row_law(k) for F in b for k in (0, 1)]
