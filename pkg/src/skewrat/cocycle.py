"""Jump function, discrepancy cocycle, substitution blocks and renormalization state.

Orbit facts about ``alpha`` reduce to integer parts of multiples of
``beta = 2*alpha``:

* ``phi({j alpha}) = (-1)**floor(j*beta)``, since ``{j alpha} < 1/2`` exactly
  when ``floor(2 j alpha)`` is even;
* ``psi_n = floor(n*beta) - floor((n-1)*beta)``.

Those integer parts come certified from :func:`skewrat.mcf.certified_floors`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BlockTooLarge, BoundaryAmbiguity, InvariantViolation, ParityViolation
from .mcf import DigitSequence, certified_floors

DEFAULT_BLOCK_CAP = 10**7
FLOAT_TOL = 1e-12

KINDS = ("bits", "signs", "integers")


@dataclass(frozen=True)
class SymbolBlock:
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        arr = np.asarray(self.data, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __len__(self):
        return len(self.data)

    def tolist(self) -> list[int]:
        return self.data.tolist()

    def validate(self) -> None:
        d = self.data
        if self.kind == "bits" and not np.isin(d, (0, 1)).all():
            raise InvariantViolation("bit block holds a value outside {0,1}")
        if self.kind == "signs" and not np.isin(d, (-1, 1)).all():
            raise InvariantViolation("sign block holds a value outside {-1,+1}")
        if self.kind == "integers" and len(d) > 1 and not (np.abs(np.diff(d)) == 1).all():
            raise InvariantViolation("orbit block has a step other than +-1")

    def to_rle(self) -> str:
        """Run-length text, e.g. ``"0x2 1 0x3"``."""
        d = self.data
        if len(d) == 0:
            return ""
        cuts = np.flatnonzero(np.diff(d)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [len(d)]))
        parts = []
        for s, e in zip(starts.tolist(), ends.tolist()):
            v = int(d[s])
            parts.append(f"{v}x{e - s}" if e - s > 1 else f"{v}")
        return " ".join(parts)

    @classmethod
    def from_rle(cls, kind: str, text: str) -> "SymbolBlock":
        out: list[int] = []
        for tok in text.split():
            v, _, r = tok.partition("x")
            out.extend([int(v)] * (int(r) if r else 1))
        return cls(kind, np.array(out, dtype=np.int64))

    def to_csv(self) -> str:
        return "symbol\n" + "".join(f"{v}\n" for v in self.data.tolist())


# --------------------------------------------------------------------------
# pointwise objects


def jump(x) -> int:
    """phi(x) = +1 on [0, 1/2), -1 on [1/2, 1); ``x`` is reduced mod 1."""
    if isinstance(x, (int, Fraction)):
        y = Fraction(x) % 1
        return 1 if y < Fraction(1, 2) else -1
    y = float(x) % 1.0
    if min(y, 1.0 - y, abs(y - 0.5)) < FLOAT_TOL:
        raise BoundaryAmbiguity(f"float point {x!r} too close to a discontinuity")
    return 1 if y < 0.5 else -1


def cocycle_sum(alpha, n: int, x=0) -> int:
    """phi_n(x) = sum_{k<n} phi(x + k*alpha).

    ``alpha`` may be a DigitSequence (then ``x`` must be 0 and the sum is
    certified for the irrational value), an exact rational or a float.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 0
    if isinstance(alpha, DigitSequence):
        if x != 0:
            raise ValueError("digit-sequence orbits are only defined from x = 0")
        return int(orbit_signs(alpha, n).sum())
    if isinstance(alpha, (int, Fraction)) and isinstance(x, (int, Fraction)):
        a, y = Fraction(alpha), Fraction(x)
        return sum(jump(y + k * a) for k in range(n))
    return sum(jump(float(x) + k * float(alpha)) for k in range(n))


def orbit_signs(digits: DigitSequence, L: int) -> np.ndarray:
    """``phi({j alpha})`` for ``j = 0..L-1`` as an int64 array."""
    fl = certified_floors(digits, max(L - 1, 0))
    return np.where(fl[:L] % 2 == 0, 1, -1).astype(np.int64)


def orbit_sums(digits: DigitSequence, L: int) -> np.ndarray:
    """``phi_n(0)`` for ``n = 1..L``."""
    return np.cumsum(orbit_signs(digits, L))


def psi_bits(digits: DigitSequence, L: int) -> np.ndarray:
    """``psi_n`` for ``n = 1..L``."""
    fl = certified_floors(digits, L)
    return np.diff(fl).astype(np.int64)


def psi_direct(digits: DigitSequence, n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return int(psi_bits(digits, n)[-1])


# --------------------------------------------------------------------------
# blocks


def _check_cap(length: int, cap: int) -> None:
    if length > cap:
        raise BlockTooLarge(f"block length {length} exceeds cap {cap}")


def block_lengths(digits: DigitSequence, k: int) -> list[tuple[int, int]]:
    """``(l_j(0), l_j(1))`` for ``j = 0..k``."""
    out = [(1, 1)]
    for j in range(1, k + 1):
        n = digits.digit(j)
        l0, l1 = out[-1]
        out.append(((n - 1) * l0 + l1, (n - 2) * l0 + l1))
    return out


def substitution_blocks(
    digits: DigitSequence, k: int, cap: int = DEFAULT_BLOCK_CAP
) -> tuple[SymbolBlock, SymbolBlock]:
    """``b_k(0), b_k(1)`` from ``b_{j+1}(0) = b_j(0)^(n-1) b_j(1)``, ``b_{j+1}(1) = b_j(0)^(n-2) b_j(1)``."""
    _check_cap(block_lengths(digits, k)[-1][0], cap)
    b0 = np.array([0], dtype=np.int64)
    b1 = np.array([1], dtype=np.int64)
    for j in range(1, k + 1):
        n = digits.digit(j)
        b0, b1 = (
            np.concatenate([np.tile(b0, n - 1), b1]),
            np.concatenate([np.tile(b0, n - 2), b1]),
        )
    return SymbolBlock("bits", b0), SymbolBlock("bits", b1)


def sign_blocks(
    digits: DigitSequence, k: int, cap: int = DEFAULT_BLOCK_CAP
) -> tuple[SymbolBlock, SymbolBlock, int, int]:
    """``B_k(0), B_k(1)`` and the parities ``eps_k(0), eps_k(1)``.

    The sign of the j-th copy of ``B_k(0)`` is ``(-1)**((j-1) eps_k(0))``; the
    closing ``B_k(1)`` carries ``(-1)**(eps_k(0) (n-1-i))``.  With the seed
    ``B_0(i) = [(-1)**i]`` the result is ``phi({j alpha})`` for
    ``j = 1..l_k(0)`` (one step later than the ``j = 0`` start one might expect).
    """
    _check_cap(block_lengths(digits, k)[-1][0], cap)
    B0 = np.array([1], dtype=np.int64)
    B1 = np.array([-1], dtype=np.int64)
    e0, e1 = 0, 1
    for j in range(1, k + 1):
        n = digits.digit(j)
        new = []
        for i in (0, 1):
            N = n - 1 - i
            if N == 0 and i == 1:
                new.append(B1)
                continue
            parts = [B0 if (m * e0) % 2 == 0 else -B0 for m in range(N)]
            parts.append(B1 if (e0 * N) % 2 == 0 else -B1)
            new.append(np.concatenate(parts))
        B0, B1 = new
        e0, e1 = ((n - 1) * e0 + e1) % 2, ((n - 2) * e0 + e1) % 2
    return SymbolBlock("signs", B0), SymbolBlock("signs", B1), e0, e1


def orbit_block(
    digits: DigitSequence, k: int, cap: int = DEFAULT_BLOCK_CAP
) -> tuple[SymbolBlock, SymbolBlock]:
    """``Sigma_k(i) = (phi_1(0), ..., phi_{l_k(i)}(0))`` via the shift/reflection rules.

    The recursion starts from ``Sigma_0(i) = [1]`` (``l_0 = (1,1)``, ``s_0 = (1,1)``).
    """
    _check_cap(block_lengths(digits, k)[-1][0], cap)
    S0 = np.array([1], dtype=np.int64)
    S1 = np.array([1], dtype=np.int64)
    state = RenormState.initial()
    for j in range(1, k + 1):
        n = digits.digit(j)
        s0 = state.s0
        new = []
        for i in (0, 1):
            N = n - 1 - i
            if state.e0 == 0:
                parts = [S0 + m * s0 for m in range(N)] + [S1 + N * s0]
            elif N % 2 == 0:
                parts = [S0, s0 - S0] * (N // 2) + [S1]
            else:
                parts = [S0, s0 - S0] * ((N - 1) // 2) + [S0, s0 - S1]
            new.append(np.concatenate(parts))
        S0, S1 = new
        state = renorm_advance(state, n)
        if S0[-1] != state.s0 or S1[-1] != state.s1:
            raise InvariantViolation(f"orbit block end disagrees with s_{j}")
    return SymbolBlock("integers", S0), SymbolBlock("integers", S1)


# --------------------------------------------------------------------------
# renormalization scalars

A_MATRICES = {0: ((1, -1), (0, 1)), 1: ((0, 1), (1, -1))}
REACHABLE = {(0, 1), (1, 0), (1, 1)}


def B_matrix(n: int) -> tuple[tuple[int, int], tuple[int, int]]:
    return ((n - 1, 1), (n - 2, 1))


def _apply(m, v0: int, v1: int) -> tuple[int, int]:
    return m[0][0] * v0 + m[0][1] * v1, m[1][0] * v0 + m[1][1] * v1


def offset_of(e0: int, s0: int, s1: int) -> int:
    return -s0 if e0 == 1 else -s1


# expected T_{k+1} - T_k for each reachable parity edge; None marks the
# n-dependent edge (0,1) -> (1,1)
T_INCREMENTS = {
    ((1, 0), (0, 1)): 1,
    ((1, 0), (1, 0)): 1,
    ((1, 1), (1, 0)): 1,
    ((1, 1), (0, 1)): 1,
    ((0, 1), (1, 1)): None,
}


@dataclass(frozen=True)
class RenormState:
    k: int
    l0: int
    l1: int
    e0: int
    e1: int
    s0: int
    s1: int
    T: int

    @classmethod
    def initial(cls) -> "RenormState":
        return cls(k=0, l0=1, l1=1, e0=0, e1=1, s0=1, s1=1, T=-1)

    @property
    def eps(self) -> tuple[int, int]:
        return (self.e0, self.e1)

    def lengths(self) -> tuple[int, int]:
        return (self.l0, self.l1)

    def check(self) -> None:
        if self.eps not in REACHABLE:
            raise ParityViolation(f"parity {self.eps} at level {self.k} is unreachable")
        trich = {(0, 1): self.s0 == 1, (1, 0): self.s1 == 1, (1, 1): self.s0 - self.s1 == 1}
        if not trich[self.eps]:
            raise InvariantViolation(f"position trichotomy fails at level {self.k}: {self}")
        if self.T != offset_of(self.e0, self.s0, self.s1):
            raise InvariantViolation(f"offset T_{self.k} inconsistent with positions")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in ("k", "l0", "l1", "e0", "e1", "s0", "s1", "T")}

    @classmethod
    def from_dict(cls, d: dict) -> "RenormState":
        return cls(**{f: int(d[f]) for f in ("k", "l0", "l1", "e0", "e1", "s0", "s1", "T")})


def renorm_advance(state: RenormState, n_next: int) -> RenormState:
    """Advance lengths, parities, positions and offset by one digit."""
    if n_next < 2:
        raise ValueError("digits are >= 2")
    n = n_next
    l0 = (n - 1) * state.l0 + state.l1
    l1 = (n - 2) * state.l0 + state.l1
    e0 = ((n - 1) * state.e0 + state.e1) % 2
    e1 = ((n - 2) * state.e0 + state.e1) % 2
    if (e0, e1) not in REACHABLE:
        raise ParityViolation(f"parity ({e0},{e1}) after digit {n} is unreachable")
    M = B_matrix(n) if state.e0 == 0 else A_MATRICES[n % 2]
    s0, s1 = _apply(M, state.s0, state.s1)
    T = offset_of(e0, s0, s1)
    new = RenormState(state.k + 1, l0, l1, e0, e1, s0, s1, T)
    new.check()
    expected = T_INCREMENTS.get((state.eps, new.eps), "missing")
    if expected == "missing":
        raise ParityViolation(f"parity edge {state.eps} -> {new.eps} is not in the diagram")
    if expected is None:
        expected = -(n - 1)
    if T - state.T != expected:
        raise InvariantViolation(
            f"offset increment {T - state.T} != {expected} on edge {state.eps}->{new.eps}"
        )
    return new


def renorm_states(digits: DigitSequence, K: int) -> list[RenormState]:
    """States for levels ``0..K``."""
    out = [RenormState.initial()]
    for j in range(1, K + 1):
        out.append(renorm_advance(out[-1], digits.digit(j)))
    return out


def state_from_blocks(digits: DigitSequence, k: int) -> RenormState:
    """Level-k scalars read off materialized blocks and the direct orbit."""
    b0, b1 = substitution_blocks(digits, k)
    l0, l1 = len(b0), len(b1)
    e0, e1 = int(b0.data.sum() % 2), int(b1.data.sum() % 2)
    signs = orbit_signs(digits, max(l0, l1))
    s0, s1 = int(signs[:l0].sum()), int(signs[:l1].sum())
    return RenormState(k, l0, l1, e0, e1, s0, s1, offset_of(e0, s0, s1))


__all__ = [
    "SymbolBlock",
    "RenormState",
    "jump",
    "cocycle_sum",
    "orbit_signs",
    "orbit_sums",
    "psi_bits",
    "psi_direct",
    "block_lengths",
    "substitution_blocks",
    "sign_blocks",
    "orbit_block",
    "renorm_advance",
    "renorm_states",
    "state_from_blocks",
]
