"""Visit distributions of the cocycle at 0 and their renormalization recursions.

``U_k^(i)(nu)`` counts ``1 <= n <= l_k(i)`` with ``phi_n(0) = nu``.  The raw
recursion needs the position ``s_k(0)``; the simplified distributions
``V_k^(i)(2 nu + T_k) = U_k^(i)(nu)`` advance without it.  Counts are Python
integers, so lengths of any size stay exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cocycle import RenormState, orbit_sums, renorm_advance
from .errors import BlockTooLarge, HalfIntegerWeight, InvariantViolation, MassMismatch
from .mcf import DigitSequence

DIRECT_CAP = 10**7


@dataclass(frozen=True)
class VisitDistribution:
    counts: dict
    level: int = 0
    flavor: int = 0
    kind: str = "raw"
    T: int | None = None

    def __post_init__(self):
        clean = {int(k): int(v) for k, v in self.counts.items() if v}
        if any(v < 0 for v in clean.values()):
            raise InvariantViolation("negative visit count")
        object.__setattr__(self, "counts", dict(sorted(clean.items())))
        if self.kind not in ("raw", "simplified"):
            raise ValueError(self.kind)
        if self.kind == "simplified":
            if self.T is None:
                raise ValueError("simplified distributions carry their offset T")
            if any((j - self.T) % 2 for j in self.counts):
                raise InvariantViolation("simplified support leaves 2Z + T")

    @property
    def mass(self) -> int:
        return sum(self.counts.values())

    def __eq__(self, other):
        if not isinstance(other, VisitDistribution):
            return NotImplemented
        return self.counts == other.counts

    def __hash__(self):
        return hash(tuple(self.counts.items()))

    def support(self) -> tuple[int, int]:
        keys = list(self.counts)
        return keys[0], keys[-1]

    def to_csv(self) -> str:
        head = "J,count\n" if self.kind == "simplified" else "nu,count\n"
        return head + "".join(f"{k},{v}\n" for k, v in self.counts.items())

    def to_dict(self) -> dict:
        return {
            "counts": {str(k): str(v) for k, v in self.counts.items()},
            "level": self.level,
            "flavor": self.flavor,
            "kind": self.kind,
            "T": self.T,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VisitDistribution":
        return cls(
            {int(k): int(v) for k, v in d["counts"].items()},
            int(d["level"]),
            int(d["flavor"]),
            d["kind"],
            None if d["T"] is None else int(d["T"]),
        )


def _shift(c: dict, m: int, mult: int = 1) -> dict:
    return {k + m: mult * v for k, v in c.items()}


def _reflect(c: dict, about: int = 0) -> dict:
    """nu -> about - nu."""
    return {about - k: v for k, v in c.items()}


def _add(*parts: dict) -> dict:
    out: dict = {}
    for p in parts:
        for k, v in p.items():
            out[k] = out.get(k, 0) + v
    return out


def visits_direct(digits: DigitSequence, L: int) -> VisitDistribution:
    """Brute-force counts of ``phi_n(0)`` over ``1 <= n <= L``."""
    if L > DIRECT_CAP:
        raise BlockTooLarge(f"direct visit count over {L} > {DIRECT_CAP} times")
    vals, cnt = np.unique(orbit_sums(digits, L), return_counts=True)
    return VisitDistribution(dict(zip(vals.tolist(), cnt.tolist())))


def visits_step(
    U0: VisitDistribution, U1: VisitDistribution, n_next: int, eps: int, s0: int
) -> tuple[VisitDistribution, VisitDistribution]:
    """Raw transition ``U_k -> U_{k+1}`` driven by ``eps = eps_k(0)`` and ``s0 = s_k(0)``."""
    n = n_next
    a, b = U0.counts, U1.counts
    out = []
    for i in (0, 1):
        N = n - 1 - i
        if eps == 0:
            c = _add(*[_shift(a, m * s0) for m in range(N)], _shift(b, N * s0))
        elif N % 2 == 0:
            c = _add(_shift(a, 0, N // 2), _shift(_reflect(a, s0), 0, N // 2), b)
        else:
            c = _add(
                _shift(a, 0, (N + 1) // 2),
                _shift(_reflect(a, s0), 0, (N - 1) // 2),
                _reflect(b, s0),
            )
        mass = N * U0.mass + U1.mass
        res = VisitDistribution(c, U0.level + 1, i, "raw")
        if res.mass != mass:
            raise MassMismatch(f"raw step level {U0.level + 1}, flavor {i}: {res.mass} != {mass}")
        out.append(res)
    return out[0], out[1]


def simplify(U: VisitDistribution, T: int) -> VisitDistribution:
    """Relabel ``nu -> 2 nu + T``."""
    return VisitDistribution(
        {2 * k + T: v for k, v in U.counts.items()}, U.level, U.flavor, "simplified", T
    )


def unsimplify(V: VisitDistribution) -> VisitDistribution:
    return VisitDistribution(
        {(j - V.T) // 2: v for j, v in V.counts.items()}, V.level, V.flavor, "raw"
    )


def _half(mult_num: int, what: str) -> int:
    if mult_num % 2:
        raise HalfIntegerWeight(f"half-integer multiplicity in {what}")
    return mult_num // 2


def simplified_step(
    V0: VisitDistribution, V1: VisitDistribution, n_next: int, eps: int
) -> tuple[VisitDistribution, VisitDistribution]:
    """Position-free transition ``V_k -> V_{k+1}``.

    eps = 0: ``sum_j Z^(2(j-1)-(n-1)) V0 + Z^(n-2i-1) V1``;
    eps = 1 with N = n-1-i even: ``N/2 (Z V0(Z) + Z V0(1/Z)) + Z V1(Z)``;
    eps = 1 with N odd: ``(N+1)/2 Z V0(Z) + (N-1)/2 Z V0(1/Z) + Z V1(1/Z)``.
    """
    n = n_next
    a, b = V0.counts, V1.counts
    T_old = V0.T
    T_new = T_old - (n - 1) if eps == 0 else T_old + 1
    out = []
    for i in (0, 1):
        N = n - 1 - i
        if eps == 0:
            c = _add(*[_shift(a, 2 * m - (n - 1)) for m in range(N)], _shift(b, n - 2 * i - 1))
        elif N % 2 == 0:
            w = _half(N, "even branch")
            c = _add(_shift(a, 1, w), _shift(_reflect(a), 1, w), _shift(b, 1))
        else:
            c = _add(
                _shift(a, 1, _half(N + 1, "odd branch")),
                _shift(_reflect(a), 1, _half(N - 1, "odd branch")),
                _shift(_reflect(b), 1),
            )
        res = VisitDistribution(c, V0.level + 1, i, "simplified", T_new)
        mass = N * V0.mass + V1.mass
        if res.mass != mass:
            raise MassMismatch(f"simplified step level {V0.level + 1}, flavor {i}")
        out.append(res)
    return out[0], out[1]


@dataclass(frozen=True)
class VisitFrame:
    """Synchronized renormalization data at one level."""

    state: RenormState
    U0: VisitDistribution
    U1: VisitDistribution
    V0: VisitDistribution
    V1: VisitDistribution
    digit_index: int = field(default=0)

    @classmethod
    def initial(cls) -> "VisitFrame":
        st = RenormState.initial()
        U = VisitDistribution({1: 1}, 0, 0, "raw")
        U1 = VisitDistribution({1: 1}, 0, 1, "raw")
        return cls(st, U, U1, simplify(U, st.T), simplify(U1, st.T), 0)

    @property
    def k(self) -> int:
        return self.state.k

    def check(self) -> None:
        st = self.state
        for U, V, ell in ((self.U0, self.V0, st.l0), (self.U1, self.V1, st.l1)):
            if U.mass != ell or V.mass != ell:
                raise MassMismatch(f"level {st.k}: mass != l_k")
            if simplify(U, st.T) != V:
                raise InvariantViolation(f"level {st.k}: raw and simplified routes disagree")

    def to_json(self) -> str:
        return json.dumps(
            {
                "state": self.state.to_dict(),
                "U0": self.U0.to_dict(),
                "U1": self.U1.to_dict(),
                "V0": self.V0.to_dict(),
                "V1": self.V1.to_dict(),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "VisitFrame":
        d = json.loads(text)
        st = RenormState.from_dict(d["state"])
        f = cls(
            st,
            VisitDistribution.from_dict(d["U0"]),
            VisitDistribution.from_dict(d["U1"]),
            VisitDistribution.from_dict(d["V0"]),
            VisitDistribution.from_dict(d["V1"]),
            st.k,
        )
        f.check()
        return f


def advance_frame(frame: VisitFrame, n_next: int, check: bool = True) -> VisitFrame:
    st = frame.state
    U0, U1 = visits_step(frame.U0, frame.U1, n_next, st.e0, st.s0)
    V0, V1 = simplified_step(frame.V0, frame.V1, n_next, st.e0)
    new_state = renorm_advance(st, n_next)
    if V0.T != new_state.T:
        raise InvariantViolation(f"offset drift at level {new_state.k}")
    f = VisitFrame(new_state, U0, U1, V0, V1, frame.digit_index + 1)
    if check:
        f.check()
    return f


def frames(digits: DigitSequence, K: int, start: VisitFrame | None = None) -> list[VisitFrame]:
    """Frames for levels ``start.k .. K`` (default from level 0)."""
    out = [start or VisitFrame.initial()]
    while out[-1].k < K:
        out.append(advance_frame(out[-1], digits.digit(out[-1].k + 1)))
    return out


def frame_at(digits: DigitSequence, K: int) -> VisitFrame:
    f = VisitFrame.initial()
    while f.k < K:
        f = advance_frame(f, digits.digit(f.k + 1))
    return f
