"""Laurent polynomials on the unit circle and temporal probability laws.

Exponents are integers for everything coming from visit counts; centered RAT
offsets can be rational, so exponents are allowed to be any exact rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .errors import GridTooCoarse, MassMismatch
from .visits import VisitDistribution, VisitFrame


class LaurentPoly:
    """Sparse ``sum c_nu Z^nu``; exact (Fraction/int) or complex coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Mapping | Iterable = ()):
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        acc: dict = {}
        for e, c in items:
            e = _norm_exp(e)
            acc[e] = acc.get(e, 0) + c
        self.coeffs = {e: c for e, c in sorted(acc.items()) if c != 0}

    # construction helpers
    @classmethod
    def monomial(cls, e, c=1) -> "LaurentPoly":
        return cls({e: c})

    @classmethod
    def one(cls) -> "LaurentPoly":
        return cls({0: 1})

    @classmethod
    def zero(cls) -> "LaurentPoly":
        return cls()

    # algebra
    def __add__(self, other: "LaurentPoly") -> "LaurentPoly":
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) + c
        return LaurentPoly(out)

    def __sub__(self, other: "LaurentPoly") -> "LaurentPoly":
        return self + other.scale(-1)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, c) -> "LaurentPoly":
        return LaurentPoly({e: c * v for e, v in self.coeffs.items()})

    def __mul__(self, other):
        if not isinstance(other, LaurentPoly):
            return self.scale(other)
        out: dict = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = e1 + e2
                out[e] = out.get(e, 0) + c1 * c2
        return LaurentPoly(out)

    __rmul__ = __mul__

    def shift(self, m) -> "LaurentPoly":
        """Multiply by ``Z**m``."""
        return LaurentPoly({e + m: c for e, c in self.coeffs.items()})

    def reflect(self) -> "LaurentPoly":
        """``Z -> 1/Z``."""
        return LaurentPoly({-e: c for e, c in self.coeffs.items()})

    def conj(self) -> "LaurentPoly":
        """Complex conjugate on the circle: reflect and conjugate coefficients."""
        return LaurentPoly({-e: _conj(c) for e, c in self.coeffs.items()})

    def compose_power(self, m: int) -> "LaurentPoly":
        """``p(Z**m)``."""
        return LaurentPoly({e * m: c for e, c in self.coeffs.items()})

    def __eq__(self, other):
        if isinstance(other, LaurentPoly):
            return self.coeffs == other.coeffs
        if other == 0:
            return not self.coeffs
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self.coeffs.items()))

    def __repr__(self):
        body = " + ".join(f"{c}*Z^{e}" for e, c in self.coeffs.items()) or "0"
        return f"LaurentPoly({body})"

    # evaluation
    def at_one(self):
        return sum(self.coeffs.values(), 0)

    def exps_coefs(self) -> tuple[np.ndarray, np.ndarray]:
        exps = np.array([float(e) for e in self.coeffs], dtype=float)
        coefs = np.array([complex(c) for c in self.coeffs.values()], dtype=complex)
        return exps, coefs

    def eval(self, theta):
        """Value at ``Z = exp(i theta)``; ``theta`` may be an array."""
        exps, coefs = self.exps_coefs()
        th = np.asarray(theta, dtype=float)
        if exps.size == 0:
            return np.zeros_like(th, dtype=complex) if th.ndim else 0j
        vals = np.exp(1j * np.multiply.outer(th, exps)) @ coefs
        return vals if th.ndim else complex(vals)

    def derivative_at_zero(self, order: int):
        """``d^order/dtheta^order`` at ``theta = 0``: ``sum (i nu)^order c_nu``."""
        return sum(((1j * e) ** order) * c for e, c in self.coeffs.items()) if order else self.at_one()

    @property
    def is_integral(self) -> bool:
        return all(isinstance(e, int) for e in self.coeffs)

    def span(self) -> int:
        if not self.coeffs:
            return 0
        keys = list(self.coeffs)
        return int(math.ceil(keys[-1] - keys[0]))

    def to_csv(self) -> str:
        rows = ["exponent,numerator,denominator"]
        for e, c in self.coeffs.items():
            f = Fraction(c)
            rows.append(f"{e},{f.numerator},{f.denominator}")
        return "\n".join(rows) + "\n"


def _norm_exp(e):
    if isinstance(e, Fraction) and e.denominator == 1:
        return int(e)
    if isinstance(e, (int, np.integer)):
        return int(e)
    if isinstance(e, Fraction):
        return e
    raise TypeError(f"exponent {e!r} must be an integer or Fraction")


def _conj(c):
    return c.conjugate() if isinstance(c, complex) else c


def fejer(N: int) -> LaurentPoly:
    """``phi_N(Z) = (1/N) sum_{k<N} Z^k``; zero for N <= 0."""
    if N <= 0:
        return LaurentPoly()
    return LaurentPoly({k: Fraction(1, N) for k in range(N)})


def q_weight(N: int) -> Fraction:
    """``q_N = 1 - floor(N/2)/N`` with ``q_0 = 0``."""
    if N == 0:
        return Fraction(0)
    return 1 - Fraction(N // 2, N)


def p_weight(n_next: int, l0: int, l1: int, i: int) -> Fraction:
    """``p_{k+1}(i) = (n-1-i) l_k(0) / l_{k+1}(i)``."""
    N = n_next - 1 - i
    return Fraction(N * l0, N * l0 + l1)


@dataclass(frozen=True)
class TemporalLaw:
    poly: LaurentPoly
    level: int = 0
    flavor: int = 0

    def __post_init__(self):
        if any(c < 0 for c in self.poly.coeffs.values()):
            raise MassMismatch("negative probability")
        if self.poly.at_one() != 1:
            raise MassMismatch(f"temporal law has mass {self.poly.at_one()}")

    @property
    def probabilities(self) -> dict:
        return self.poly.coeffs

    def mean(self) -> Fraction:
        return sum((Fraction(e) * c for e, c in self.poly.coeffs.items()), Fraction(0))

    def variance(self) -> Fraction:
        m = self.mean()
        return sum(((e - m) ** 2 * c for e, c in self.poly.coeffs.items()), Fraction(0))


def genfun(U: VisitDistribution) -> LaurentPoly:
    """``sum U(nu) Z^nu``."""
    return LaurentPoly(U.counts)


def temporal_law(V: VisitDistribution) -> TemporalLaw:
    mass = V.mass
    return TemporalLaw(
        LaurentPoly({j: Fraction(c, mass) for j, c in V.counts.items()}), V.level, V.flavor
    )


def phi_step(
    Phi0: LaurentPoly, Phi1: LaurentPoly, n_next: int, eps: int, i: int, l0: int, l1: int
) -> LaurentPoly:
    """One generating-function transition for flavor ``i``; ``l0, l1`` are level-k lengths."""
    n = n_next
    N = n - 1 - i
    p = p_weight(n, l0, l1, i)
    if eps == 0:
        out = (fejer(N).compose_power(2).shift(-(n - 1)) * Phi0).scale(p) + Phi1.shift(
            n - 2 * i - 1
        ).scale(1 - p)
    elif N % 2 == 0:
        out = (Phi0.shift(1) + Phi0.reflect().shift(1)).scale(p / 2) + Phi1.shift(1).scale(1 - p)
    else:
        q = q_weight(N)
        out = (
            Phi0.shift(1).scale(p * q)
            + Phi0.reflect().shift(1).scale(p * (1 - q))
            + Phi1.reflect().shift(1).scale(1 - p)
        )
    if out.at_one() != 1:
        raise MassMismatch(f"phi_step lost mass: {out.at_one()}")
    return out


def phi_sequence(digits, K: int) -> list[tuple[LaurentPoly, LaurentPoly]]:
    """``(Phi_k^(0), Phi_k^(1))`` for ``k = 0..K`` by the transitions alone."""
    from .cocycle import renorm_states

    states = renorm_states(digits, K)
    out = [(LaurentPoly({1: Fraction(1)}), LaurentPoly({1: Fraction(1)}))]
    for k in range(K):
        st = states[k]
        n = digits.digit(k + 1)
        P0, P1 = out[-1]
        out.append(
            (
                phi_step(P0, P1, n, st.e0, 0, st.l0, st.l1),
                phi_step(P0, P1, n, st.e0, 1, st.l0, st.l1),
            )
        )
    return out


# --------------------------------------------------------------------------
# circle integrals, normalized so that the integral of 1 is 1


def l2_integral(p: LaurentPoly):
    """``int |p|^2`` by Parseval (exact in rational mode)."""
    return sum((c * _conj(c) for c in p.coeffs.values()), 0) if p.coeffs else 0


def _centered(p: LaurentPoly) -> LaurentPoly:
    """Shift so the exponent range is centered at 0 (|p| is unchanged)."""
    if not p.coeffs:
        return p
    keys = list(p.coeffs)
    return p.shift(-((keys[0] + keys[-1]) // 2))


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    bound: float
    grid: int


def grid_values(p: LaurentPoly, grid: int) -> np.ndarray:
    """``p(exp(2 pi i j / grid))`` for ``j < grid`` (FFT when exponents are integers)."""
    if p.is_integral and p.coeffs:
        buf = np.zeros(grid, dtype=complex)
        for e, c in p.coeffs.items():
            buf[e % grid] += complex(c)
        return np.fft.ifft(buf) * grid
    th = 2 * np.pi * np.arange(grid) / grid
    return np.asarray(p.eval(th))


def l1_integral(p: LaurentPoly, grid: int | None = None) -> IntegralEstimate:
    """``int |p|`` by the trapezoid rule with a certified error bound.

    The bound is ``L h / 4`` with ``L = sum |nu| |c_nu|`` (after centering the
    exponents), a Lipschitz constant of ``|p|`` in theta, and ``h`` the step.
    """
    q = _centered(p)
    span = max(q.span(), 1)
    if grid is None:
        grid = max(16 * span, 64)
    if grid < 8 * span:
        raise GridTooCoarse(f"grid {grid} < 8 * span {span}")
    if not q.is_integral:
        raise ValueError("the certified L1 rule needs integer exponents")
    vals = np.abs(grid_values(q, grid))
    est = float(vals.mean())
    lip = float(sum(abs(float(e)) * abs(complex(c)) for e, c in q.coeffs.items()))
    bound = lip * (2 * np.pi / grid) / 4
    return IntegralEstimate(est, bound, grid)


def lp_integral(p: LaurentPoly, power: int, grid: int | None = None):
    if power == 2:
        return l2_integral(p)
    if power == 1:
        return l1_integral(p, grid)
    raise ValueError("only p in {1, 2}")


# --------------------------------------------------------------------------
# visit bounds


@dataclass(frozen=True)
class VisitBoundReport:
    k: int
    int_psi_l0: Fraction
    rhs_41: Fraction
    holds_41: bool
    sup_psi_l1: int
    rhs_42_flavor0: float
    rhs_42_flavor1: float
    holds_42_flavor0: bool
    holds_42_flavor1: bool
    l2_via_U: Fraction
    l2_via_V: Fraction

    @property
    def holds_42(self) -> bool:
        return self.holds_42_flavor0 or self.holds_42_flavor1


def visit_bound_report(digits, frame: VisitFrame) -> VisitBoundReport:
    """Both sides of the lower bound on ``int Psi_{l_k(0)}`` and the sup bound on ``Psi_{l_k(1)}``."""
    from .analysis import psi_exact

    st = frame.state
    U0, U1 = genfun(frame.U0), genfun(frame.U1)
    V1 = LaurentPoly(frame.V1.counts)
    int_psi_l0 = psi_exact(digits, st.l0).integral()
    rhs41 = Fraction(l2_integral(U1)) / (4 * st.l0)
    sup_psi_l1 = psi_exact(digits, st.l1).sup()
    e0 = l1_integral(U0)
    e1 = l1_integral(U1)
    r0 = 2 * e0.value
    r1 = 2 * e1.value
    return VisitBoundReport(
        st.k,
        int_psi_l0,
        rhs41,
        int_psi_l0 >= rhs41,
        sup_psi_l1,
        r0,
        r1,
        sup_psi_l1 <= r0 - 2 * e0.bound,
        sup_psi_l1 <= r1 - 2 * e1.bound,
        Fraction(l2_integral(U1)),
        Fraction(l2_integral(V1)),
    )


def eval_trace(p: LaurentPoly, grid: int = 512) -> str:
    th = 2 * np.pi * np.arange(grid) / grid
    vals = np.abs(np.asarray(p.eval(th)))
    return "theta,abs_value\n" + "".join(f"{t:.12g},{v:.12g}\n" for t, v in zip(th, vals))
