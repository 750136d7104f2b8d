"""Verification suites shared by the CLI and the test-suite.

Each check compares a computed object against an independent route (direct
orbit evaluation, brute-force counting, exact law pushforward, Monte Carlo)
and returns a :class:`CheckResult` instead of raising, so a run reports every
failure it finds.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .analysis import clt_report, railways_report, log_spaced, wrllt_report, normal_cdf
from .cocycle import (
    block_lengths,
    orbit_block,
    orbit_signs,
    orbit_sums,
    psi_bits,
    sign_blocks,
    substitution_blocks,
)
from .mcf import DigitSequence
from .rat import (
    Atom,
    FlipRat,
    alpha_rat_sequence,
    arw_laws,
    center,
    cf_norm,
    char_poly_coeffs,
    periodicity_group,
    predicates,
    rat_cf,
    simulate,
    spec_rat_sequence,
    spectral,
    variance_check,
)
from .visits import frames, simplify, visits_direct

CORPORA = {
    "tail3": DigitSequence((), (3,)),
    "tail23": DigitSequence((), (2, 3)),
    "prefix5223_tail3": DigitSequence((5, 2, 2, 3), (3,)),
    "prefix5_tail4": DigitSequence((5,), (4,)),
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _levels_upto(digits: DigitSequence, max_len: int) -> int:
    k = 0
    while block_lengths(digits, k + 1)[-1][0] <= max_len:
        k += 1
    return k


# --------------------------------------------------------------------------
# blocks and visits


def check_blocks(digits: DigitSequence, max_len: int = 10**5) -> CheckResult:
    """Substitution and sign blocks against direct orbit evaluation."""
    K = _levels_upto(digits, max_len)
    L = block_lengths(digits, K)[-1][0]
    psi = psi_bits(digits, L)
    signs = orbit_signs(digits, L + 1)
    sums = orbit_sums(digits, L)
    bad = []
    blocks = [(substitution_blocks(digits, k), sign_blocks(digits, k), orbit_block(digits, k)) for k in range(K + 1)]
    for k, ((b0, b1), (B0, B1, e0, _e1), (S0, S1)) in enumerate(blocks):
        for name, blk, ref in (
            ("b0", b0.data, psi), ("B0", B0.data, signs[1:]), ("S0", S0.data, sums), ("S1", S1.data, sums),
        ):
            if not np.array_equal(blk, ref[: len(blk)]):
                bad.append((k, name))
        if k == K:
            continue
        # flavor 1 closes the next flavor-0 block, with sign (-1)^(eps_k(0) (n_{k+1} - 1))
        end = len(blocks[k + 1][0][0].data)
        sgn = -1 if (e0 * (digits.digit(k + 1) - 1)) % 2 else 1
        if not np.array_equal(b1.data, psi[end - len(b1.data) : end]):
            bad.append((k, "b1"))
        if not np.array_equal(sgn * B1.data, signs[1:][end - len(B1.data) : end]):
            bad.append((k, "B1"))
    return CheckResult(
        "blocks",
        not bad,
        f"levels 0..{K}, length {L}, mismatches {len(bad)}",
        {"levels": K, "length": L, "mismatches": bad},
    )


def check_visits(digits: DigitSequence, max_len: int = 10**5) -> CheckResult:
    """Raw and simplified recursions against brute-force visit counts."""
    K = _levels_upto(digits, max_len)
    fr = frames(digits, K)
    bad = []
    for f in fr:
        st = f.state
        for i, U, V, ell in ((0, f.U0, f.V0, st.l0), (1, f.U1, f.V1, st.l1)):
            direct = visits_direct(digits, ell)
            if U != direct:
                bad.append((st.k, i, "raw"))
            if V != simplify(direct, st.T):
                bad.append((st.k, i, "simplified"))
    return CheckResult("visits", not bad, f"levels 0..{K}, mismatches {len(bad)}", {"mismatches": bad})


def check_coordinate_laws(digits: DigitSequence, K: int = 8) -> CheckResult:
    """Coordinate laws of the alpha-ARW against the temporal probabilities."""
    laws = arw_laws(alpha_rat_sequence(digits, K))
    fr = frames(digits, K)
    bad = []
    for k in range(1, K + 1):
        for i, V, ell in ((0, fr[k].V0, fr[k].state.l0), (1, fr[k].V1, fr[k].state.l1)):
            target = {j: Fraction(c, ell) for j, c in V.counts.items()}
            if laws[k].marginal(i) != target:
                bad.append((k, i))
    return CheckResult("coordinate_laws", not bad, f"levels 1..{K}, mismatches {len(bad)}", {"mismatches": bad})


# --------------------------------------------------------------------------
# classification


def classify_expected(n: int, parity: str) -> dict:
    if n == 2:
        return {"irreducible": False}
    if parity == "odd":
        return {"irreducible": True, "mean_contractive": True, "partially_adapted": False}
    return {
        "irreducible": True,
        "mean_contractive": False,
        "adapted": n >= 4,
        "partially_adapted": True,
    }


def check_classification(corpora: dict | None = None, K: int = 40) -> CheckResult:
    corpora = corpora or CORPORA
    exceptions = []
    seen = set()
    total = 0
    for name, ds in corpora.items():
        for k, F in enumerate(spec_rat_sequence(ds, K), 1):
            pr = predicates(F)
            total += 1
            for prop, want in classify_expected(F.coefficient, F.parity).items():
                if getattr(pr, prop) != want:
                    key = (F.coefficient, F.parity, prop)
                    exceptions.append((name, k) + key)
                    seen.add(key)
    kinds = ", ".join(f"n={n} {p}: {prop}" for n, p, prop in sorted(seen))
    return CheckResult(
        "classification",
        not exceptions,
        f"{total} spec-RATs, {len(exceptions)} exceptions" + (f" ({kinds})" if kinds else ""),
        {"exceptions": exceptions},
    )


# --------------------------------------------------------------------------
# random RATs


def random_flip_rat(rng: random.Random, d: int | None = None, n_atoms: int | None = None, B: int = 3) -> FlipRat:
    d = d or rng.randint(1, 3)
    n_atoms = n_atoms or rng.randint(1, 5)
    ws = [rng.randint(1, 6) for _ in range(n_atoms)]
    S = sum(ws)
    atoms = tuple(
        Atom(
            tuple((rng.randrange(d), rng.choice((1, -1))) for _ in range(d)),
            tuple(rng.randint(-B, B) for _ in range(d)),
            Fraction(w, S),
        )
        for w in ws
    )
    return FlipRat(d, atoms)


def check_variance(instances: int = 100, seed: int = 7, max_n: int = 6) -> CheckResult:
    rng = random.Random(seed)
    bad = []
    for t in range(instances):
        d = rng.randint(1, 2)
        n = rng.randint(1, max_n)
        seq = [random_flip_rat(rng, d, rng.randint(1, 3), 2) for _ in range(n)]
        cs, _means = center(seq)
        rep = variance_check(cs)
        if not (rep.sandwich and rep.orthogonal and rep.decomposition_matches):
            bad.append(t)
    return CheckResult("variance", not bad, f"{instances} instances, violations {len(bad)}", {"violations": bad})


def check_norms(instances: int = 1000, seed: int = 11, grid: int = 4096) -> CheckResult:
    rng = random.Random(seed)
    theta = 2 * math.pi * np.arange(grid) / grid - math.pi
    worst_norm = 0.0
    worst_shift = 0.0
    worst_even = 0.0
    worst_lattice = 0.0
    for _ in range(instances):
        F = random_flip_rat(rng)
        cf = rat_cf(F)
        norms = cf_norm(cf, theta)
        worst_norm = max(worst_norm, float(norms.max()) - 1)
        pg = periodicity_group(F)
        g = pg.invariance_generator
        if g is not None:
            shifted = cf_norm(cf, theta + g)
            worst_shift = max(worst_shift, float(np.abs(shifted - norms).max()))
            worst_lattice = max(worst_lattice, abs(cf_norm(cf, g) - 1))
        else:
            worst_shift = max(worst_shift, float(np.abs(norms - 1).max()))
        for t in (0.3, 1.1, 2.5):
            c1 = char_poly_coeffs(cf, t)
            c2 = char_poly_coeffs(cf, -t)
            worst_even = max(worst_even, float(np.abs(c1 - c2).max()), float(np.abs(c1.imag).max()))
    ok = worst_norm <= 1e-12 and worst_shift <= 1e-12 and worst_even <= 1e-10 and worst_lattice <= 1e-12
    return CheckResult(
        "norms",
        ok,
        f"max(norm-1)={worst_norm:.2e}, shift={worst_shift:.2e}, lattice={worst_lattice:.2e}, "
        f"charpoly={worst_even:.2e}",
    )


# --------------------------------------------------------------------------
# experiments


def check_wrllt(digits: DigitSequence | None = None, K: int = 30, k_min: int = 5, band: float = 3.0) -> CheckResult:
    digits = digits or CORPORA["tail3"]
    worst = 0.0
    for p in (1, 2):
        rep = wrllt_report(digits, K, p)
        for col in ("scaled_0", "scaled_1"):
            vals = [r[rep.columns.index(col)] for r in rep.rows if r[0] >= k_min]
            worst = max(worst, max(vals) / min(vals))
    return CheckResult("wrllt", worst <= band, f"worst band {worst:.4f} (target <= {band})", {"band": worst})


def check_railways(nmax: int = 10**4, ratio1_max: float = 10.0, band: float = 3.0) -> CheckResult:
    rep = railways_report(CORPORA["tail3"], log_spaced(100, nmax))
    r1 = max(rep.column("ratio1"))
    r2 = rep.band("ratio2")
    ok = r1 <= ratio1_max and r2 <= band
    return CheckResult("railways", ok, f"max ratio1 {r1:.4f}, ratio2 band {r2:.4f}", {"ratio1": r1, "band": r2})


BALANCED_ADAPTED = FlipRat.from_rows(
    [
        {(0, 1, 0): Fraction(1, 8), (0, 1, 1): Fraction(1, 8), (0, -1, 1): Fraction(1, 4),
         (1, 1, -1): Fraction(1, 4), (1, -1, 0): Fraction(1, 8), (1, -1, 2): Fraction(1, 8)},
        {(0, 1, 1): Fraction(1, 4), (0, -1, 0): Fraction(1, 8), (0, -1, -1): Fraction(1, 8),
         (1, 1, 0): Fraction(1, 4), (1, -1, 1): Fraction(1, 8), (1, -1, 2): Fraction(1, 8)},
    ]
)


def ks_sample_normal(values: np.ndarray, var: float) -> float:
    x = np.sort(values)
    n = len(x)
    uniq, idx = np.unique(x, return_index=True)
    right = np.append(idx[1:], n) / n
    left = idx / n
    G = normal_cdf(uniq / math.sqrt(var))
    return float(max(np.abs(right - G).max(), np.abs(left - G).max()))


def check_iid_clt(
    n: int = 10**4, trials: int = 10**5, seed: int = 2024, tol: float = 0.02, F: FlipRat | None = None
) -> CheckResult:
    F = F or BALANCED_ADAPTED
    pr = predicates(F)
    sp = spectral(F)
    emp = simulate(F, n, trials, seed)
    ks = [ks_sample_normal(emp.values(k) / math.sqrt(n), sp.gamma) for k in range(F.d)]
    ok = pr.balanced and pr.adapted and max(ks) < tol
    return CheckResult(
        "iid_clt",
        ok,
        f"gamma={sp.gamma:.8f} (closed form {sp.gamma_closed:.8f}), KS={', '.join(f'{v:.4f}' for v in ks)}",
        {"ks": ks, "gamma": sp.gamma},
    )


def check_quadratic_clt(n_list: Sequence[int] = (20, 40, 60, 80, 100, 120), tol: float = 0.05) -> CheckResult:
    rep = clt_report(CORPORA["tail3"], 0, 1, list(n_list))
    ks = rep.column("ks")
    last = ks[-3:]
    ok = last[0] > last[1] > last[2] and last[2] < tol
    return CheckResult("quadratic_clt", ok, "KS " + ", ".join(f"{v:.4f}" for v in ks), {"ks": ks})


SUITES = {
    "blocks": lambda a: [check_blocks(d, a.max_len) for d in _corpus(a)],
    "visits": lambda a: [check_visits(d, a.max_len) for d in _corpus(a)],
    "coordinate_laws": lambda a: [check_coordinate_laws(d, a.levels or 8) for d in _corpus(a)],
    "classification": lambda a: [check_classification(_corpus_dict(a), a.levels or 40)],
    "variance": lambda a: [check_variance(a.instances or 100, a.seed)],
    "norms": lambda a: [check_norms(a.instances or 1000, a.seed)],
    "wrllt": lambda a: [check_wrllt(*_corpus(a)[:1], K=a.levels or 30)],
    "railways": lambda a: [check_railways(a.nmax or 10**4)],
    "iid_clt": lambda a: [check_iid_clt(trials=a.trials or 10**5, seed=a.seed)],
    "quadratic_clt": lambda a: [check_quadratic_clt()],
}
# short names kept for existing scripts
SUITES["thm21"] = SUITES["blocks"]
SUITES["thm22"] = SUITES["blocks"]
SUITES["biohazard"] = SUITES["coordinate_laws"]


def _corpus(a) -> list[DigitSequence]:
    return list(_corpus_dict(a).values())


def _corpus_dict(a) -> dict:
    if getattr(a, "digits", None):
        return {"given": a.digits}
    return dict(CORPORA)
