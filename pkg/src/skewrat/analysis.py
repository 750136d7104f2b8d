"""Occupation counts ``Psi_n`` and the scaling experiments built on the exact laws.

``Psi_n(x) = #{0 <= k < n : phi_k(x) = 0}`` is computed on the common
refinement of the breakpoints ``-j alpha`` and ``1/2 - j alpha`` (``j < n``).
The rotation is replaced by a convergent ``alpha' = p / (2q)`` with ``q > n``
whose floors ``floor(j beta')`` agree with the irrational ones for ``j <= n``;
the cyclic order of all breakpoints is then the same for ``alpha`` and
``alpha'``, so ``Psi_n`` takes the same values on corresponding arcs and the
sup is exact.  The integral is exact for ``alpha'`` and carries an explicit
bound on the arc-length drift.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .cocycle import renorm_states
from .errors import BlockTooLarge, InsufficientDigits
from .genfun import LaurentPoly, l1_integral, l2_integral, p_weight
from .mcf import DigitSequence, bracket, canonical_subsequence, certified_order, evaluate
from .visits import frames

PSI_CAP = 10**5


# --------------------------------------------------------------------------
# Psi_n


@dataclass(frozen=True)
class StepFunction:
    """Integer step function on the circle ``[0, 1)``.

    Arc ``j`` is ``[starts[j], starts[j+1])`` in units of ``1/denom`` (the last
    arc wraps to ``starts[0] + denom``).
    """

    starts: np.ndarray
    values: np.ndarray
    denom: int
    drift_bound: Fraction = Fraction(0)

    def __post_init__(self):
        if len(self.starts) != len(self.values):
            raise ValueError("one value per arc")
        if len(self.starts) > 1 and np.any(np.diff(self.starts) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def breakpoints(self) -> list[Fraction]:
        return [Fraction(int(s), self.denom) for s in self.starts]

    def lengths(self) -> np.ndarray:
        nxt = np.append(self.starts[1:], self.starts[0] + self.denom)
        return nxt - self.starts

    def integral(self) -> Fraction:
        tot = sum(int(v) * int(w) for v, w in zip(self.values, self.lengths()))
        return Fraction(tot, self.denom)

    def sup(self) -> int:
        return int(self.values.max())

    def __call__(self, x) -> int:
        u = Fraction(x) % 1 * self.denom
        j = int(np.searchsorted(self.starts, math.floor(u), side="right")) - 1
        return int(self.values[j % len(self.values)])

    def simplified(self) -> "StepFunction":
        """Merge adjacent arcs with equal values."""
        keep = np.ones(len(self.values), dtype=bool)
        keep[1:] = self.values[1:] != self.values[:-1]
        if len(self.values) > 1 and keep.sum() > 1 and self.values[0] == self.values[-1]:
            keep[0] = False
        if not keep.any():
            keep[0] = True
        return StepFunction(self.starts[keep], self.values[keep], self.denom, self.drift_bound)


@dataclass(frozen=True)
class PsiLattice:
    """The rational rotation used to evaluate ``Psi_n`` for ``n <= n_max``."""

    p: int
    q: int
    n_max: int
    drift: Fraction  # bound on |alpha - alpha'|

    @property
    def alpha(self) -> Fraction:
        return Fraction(self.p, 2 * self.q)


def psi_lattice(digits: DigitSequence, n_max: int) -> PsiLattice:
    """A convergent ``p/q`` of ``beta`` with ``q > n_max^3`` and certified floors."""
    order = certified_order(digits, max(n_max, 1))
    target = max(n_max, 2) ** 3
    while evaluate(digits, order).denominator <= target and order + 1 <= digits.available:
        order += 1
    lo, hi = bracket(digits, order)
    beta = evaluate(digits, order)
    return PsiLattice(beta.numerator, beta.denominator, n_max, abs(hi - lo) / 2)


def _psi_sweep(lat: PsiLattice, checkpoints: Sequence[int]):
    """Yield ``(n, starts, counts)`` for each checkpoint ``n`` (ascending)."""
    n_max = lat.n_max
    q4 = 4 * lat.q
    step = 2 * lat.p  # alpha' = 2p / 4q
    pts = set()
    for jj in range(max(n_max - 1, 1)):
        pts.add((-jj * step) % q4)
        pts.add((2 * lat.q - jj * step) % q4)
    starts = np.array(sorted(pts), dtype=object)
    if q4 < (1 << 62):
        starts = starts.astype(np.int64)
        reps = starts + 1
        S = np.zeros(len(starts), dtype=np.int64)
        count = np.zeros(len(starts), dtype=np.int64)
        half = 2 * lat.q
        cps = sorted(set(checkpoints))
        ci = 0
        pos = reps % q4
        st64 = step % q4
        for k in range(n_max):
            count += S == 0
            if k + 1 == cps[ci]:
                yield k + 1, starts, count.copy()
                ci += 1
                if ci == len(cps):
                    return
            S += np.where(pos < half, 1, -1)
            pos = (pos + st64) % q4
    else:  # pragma: no cover - lattice too fine for int64
        raise BlockTooLarge("convergent denominator exceeds the int64 sweep range")


def psi_exact(digits: DigitSequence, n: int, cap: int = PSI_CAP) -> StepFunction:
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > cap:
        raise BlockTooLarge(f"Psi_{n} exceeds the cap {cap}")
    lat = psi_lattice(digits, n)
    for _n, starts, count in _psi_sweep(lat, [n]):
        return StepFunction(starts, count, 4 * lat.q, _drift(lat, n))
    raise AssertionError("unreachable")


def _drift(lat: PsiLattice, n: int) -> Fraction:
    # endpoints move by < n |alpha - alpha'|, so each of the <= 2n arcs changes
    # length by < 2n |alpha - alpha'| and carries a value <= n
    return 4 * Fraction(n) ** 3 * lat.drift


def psi_many(digits: DigitSequence, n_list: Sequence[int], cap: int = PSI_CAP) -> dict[int, StepFunction]:
    """``Psi_n`` for every ``n`` in ``n_list`` from one sweep."""
    n_max = max(n_list)
    if n_max > cap:
        raise BlockTooLarge(f"Psi_{n_max} exceeds the cap {cap}")
    lat = psi_lattice(digits, n_max)
    return {
        n: StepFunction(starts, count, 4 * lat.q, _drift(lat, n))
        for n, starts, count in _psi_sweep(lat, n_list)
    }


def psi_lattice_alpha(digits: DigitSequence, n: int) -> Fraction:
    """The rational rotation used by ``psi_exact(digits, n)``."""
    return psi_lattice(digits, n).alpha


# --------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    name: str
    columns: tuple
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "columns": list(self.columns),
                "rows": [[_fmt(x) for x in r] for r in self.rows],
                "metadata": self.metadata,
            },
            sort_keys=True,
            indent=1,
        )

    def band(self, name: str) -> float:
        vals = [float(v) for v in self.column(name)]
        return max(vals) / min(vals)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    if isinstance(x, Fraction):
        return str(x)
    return x


def log_spaced(lo: int, hi: int, per_decade: int = 8) -> list[int]:
    m = math.log10(hi / lo) * per_decade
    vals = {int(round(lo * 10 ** (j / per_decade))) for j in range(int(round(m)) + 1)}
    vals.add(hi)
    return sorted(v for v in vals if lo <= v <= hi)


def railways_report(digits: DigitSequence, n_list: Sequence[int], cap: int = PSI_CAP) -> ExperimentReport:
    psis = psi_many(digits, n_list, cap)
    rep = ExperimentReport(
        "railways",
        ("n", "sup_psi", "int_psi", "ratio1", "ratio2", "drift_bound"),
        metadata={"digits": str(digits), "log": "natural"},
    )
    for n in sorted(psis):
        P = psis[n]
        integ = P.integral()
        sup = P.sup()
        r2 = float(integ) * math.sqrt(math.log(n)) / n if n > 1 else float("nan")
        rep.rows.append((n, sup, float(integ), sup / float(integ), r2, float(P.drift_bound)))
    return rep


def _grouping_levels(digits: DigitSequence, K: int, nu: Sequence[int] | None) -> list[int]:
    if nu is None:
        return list(canonical_subsequence(digits, K).indices)
    return list(nu[:K])


def wrllt_report(
    digits: DigitSequence, K: int, p: int, nu: Sequence[int] | None = None
) -> ExperimentReport:
    """``I_p(k) = int |Phi_{nu_k}^(i)|^p`` and ``I_p(k) sqrt(k)`` for ``i = 0, 1``.

    ``p = 2`` is exact (sum of squared probabilities); ``p = 1`` is a grid
    quadrature with a certified error bound.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    levels = _grouping_levels(digits, K, nu)
    fr = frames(digits, levels[-1])
    cols = ("k", "nu_k", "I_0", "I_1", "scaled_0", "scaled_1", "bound_0", "bound_1")
    rep = ExperimentReport(f"wrllt_p{p}", cols, metadata={"digits": str(digits), "p": p})
    for k, v in enumerate(levels, 1):
        f = fr[v]
        vals, bounds = [], []
        for V, ell in ((f.V0, f.state.l0), (f.V1, f.state.l1)):
            poly = LaurentPoly({j: Fraction(c, ell) for j, c in V.counts.items()})
            if p == 2:
                vals.append(float(l2_integral(poly)))
                bounds.append(0.0)
            else:
                est = l1_integral(poly)
                vals.append(est.value)
                bounds.append(est.bound)
        rk = math.sqrt(k)
        rep.rows.append((k, v, vals[0], vals[1], vals[0] * rk, vals[1] * rk, bounds[0], bounds[1]))
    return rep


def normal_cdf(x):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x, dtype=float) / math.sqrt(2.0)))


def ks_to_normal(law: dict) -> tuple[float, float, float]:
    """KS distance of the standardized lattice law ``law`` to ``N(0, 1)``.

    Returns ``(ks, mean, sd)``; the sup is attained at a jump, so both the
    left and right limits of the empirical CDF are compared there.
    """
    xs = sorted(law)
    ps = np.array([float(law[x]) for x in xs])
    mean = sum(Fraction(law[x]) * x for x in xs)
    var = sum(Fraction(law[x]) * (x - mean) ** 2 for x in xs)
    sd = math.sqrt(var)
    z = (np.array([float(x - mean) for x in xs])) / sd
    G = normal_cdf(z)
    right = np.cumsum(ps)
    left = right - ps
    ks = float(max(np.max(np.abs(right - G)), np.max(np.abs(left - G))))
    return ks, float(mean), sd


def clt_report(
    digits: DigitSequence, K_offset: int, L_period: int, n_list: Sequence[int]
) -> ExperimentReport:
    """KS distance of the exact temporal law at scale ``l_{K + L n}(0)`` to the normal."""
    if not digits.periodic:
        raise ValueError("the CLT experiment needs periodic digits")
    top = K_offset + L_period * max(n_list)
    fr = frames(digits, top)
    rep = ExperimentReport(
        "clt",
        ("n", "level", "length", "mu_hat", "c_hat", "ks"),
        metadata={"digits": str(digits), "K_offset": K_offset, "L_period": L_period},
    )
    for n in n_list:
        lev = K_offset + L_period * n
        f = fr[lev]
        # back to phi_j(0) = (J - T) / 2 so that mu and c refer to the cocycle
        law = {Fraction(j - f.state.T, 2): Fraction(c, f.state.l0) for j, c in f.V0.counts.items()}
        ks, mean, sd = ks_to_normal(law)
        rep.rows.append((n, lev, f.state.l0, mean / n, sd / math.sqrt(n), ks))
    return rep


@dataclass(frozen=True)
class OddsWindowRow:
    k: int
    r: Fraction
    ratios: tuple  # p_{k+1}(i) / (1 - p_{k+1}(i)), i = 0, 1
    intervals: tuple
    holds: bool


def odds_window_report(digits: DigitSequence, K: int) -> tuple[Fraction, list[OddsWindowRow]]:
    """Lower bound ``Delta = min r_k`` and the odds window check at each level."""
    states = renorm_states(digits, K + 1)
    delta = min(Fraction(s.l1, s.l0) for s in states[1 : K + 1])
    rows = []
    for k in range(1, K + 1):
        st = states[k]
        n = digits.digit(k + 1)
        r = Fraction(st.l1, st.l0)
        ratios, ivs = [], []
        ok = True
        for i in (0, 1):
            p = p_weight(n, st.l0, st.l1, i)
            N = n - 1 - i
            odds = p / (1 - p)
            lo, hi = Fraction(N), Fraction(N) / delta
            ratios.append(odds)
            ivs.append((lo, hi))
            ok &= lo <= odds <= hi
        rows.append(OddsWindowRow(k, r, tuple(ratios), tuple(ivs), ok))
    return delta, rows


def proof_chain_report(
    digits: DigitSequence, K: int, nu: Sequence[int] | None = None, psi_cap: int = 20_000
) -> ExperimentReport:
    """The four links from the WRLLT to the occupation-count bounds, per level ``nu_k``.

    ``c_lower = int Psi_{l(0)} sqrt(k) / l(1)`` and ``c_upper = sup Psi_{l(1)} sqrt(k) / l(0)``
    use ``psi_exact`` while the lengths stay under ``psi_cap``; the Fourier
    sides ``l(1)^2 I_2 / (4 l(0))`` and ``2 l(1) I_1`` are always reported.
    """
    levels = _grouping_levels(digits, K + 1, nu)
    fr = frames(digits, levels[-1])
    cols = (
        "k", "nu_k", "l0", "l1", "int_psi", "fourier_lower", "holds_lower",
        "sup_psi", "fourier_upper", "holds_upper", "c_lower", "c_upper",
        "ratio_min", "ratio_max", "log_l0_over_k",
    )
    rep = ExperimentReport("proof_chain", cols, metadata={"digits": str(digits), "psi_cap": psi_cap})
    need = sorted({fr[v].state.l0 for v in levels[:K]} | {fr[v].state.l1 for v in levels[:K]})
    need = [n for n in need if n <= psi_cap]
    psis = psi_many(digits, need, psi_cap) if need else {}
    for k, v in enumerate(levels[:K], 1):
        st = fr[v].state
        U1 = LaurentPoly(fr[v].U1.counts)
        lower = Fraction(l2_integral(U1)) / (4 * st.l0)
        upper_est = l1_integral(U1)
        upper = 2 * upper_est.value
        nxt = fr[levels[k]].state
        ratios = [Fraction(a, b) for a in (nxt.l0, nxt.l1) for b in (st.l0, st.l1)]
        int_psi = psis[st.l0].integral() if st.l0 in psis else None
        sup_psi = psis[st.l1].sup() if st.l1 in psis else None
        rk = math.sqrt(k)
        rep.rows.append(
            (
                k, v, st.l0, st.l1,
                "" if int_psi is None else float(int_psi),
                float(lower),
                "" if int_psi is None else bool(int_psi >= lower),
                "" if sup_psi is None else sup_psi,
                upper,
                "" if sup_psi is None else bool(sup_psi <= upper + 2 * upper_est.bound),
                "" if int_psi is None else float(int_psi) * rk / st.l1,
                "" if sup_psi is None else sup_psi * rk / st.l0,
                float(min(ratios)),
                float(max(ratios)),
                math.log(st.l0) / k,
            )
        )
    return rep


def require_levels(digits: DigitSequence, K: int) -> None:
    if K > digits.available:
        raise InsufficientDigits(f"{K} levels requested, {digits.available} digits available")
