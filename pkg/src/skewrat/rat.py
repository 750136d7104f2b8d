"""Flip-type random affine transformations (RATs) ``x -> a x + b``.

A flip matrix has exactly one nonzero entry, ``+1`` or ``-1``, in each row, so
row ``k`` of ``a`` is stored as ``(target column, sign)``.  A RAT is a finite
list of atoms ``(a, b, probability)``; independent rows are realized as the
product of their row laws.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .cocycle import RenormState, renorm_states
from .errors import (
    CenteringViolation,
    EigenGapTooSmall,
    GroupingAssertionFailed,
    InvariantViolation,
    MassMismatch,
    NotAperiodic,
    StateBlowup,
)
from .genfun import LaurentPoly, p_weight, q_weight
from .mcf import CanonicalSubsequence, DigitSequence

DEFAULT_STATE_CAP = 10**7


def _num(x):
    """Canonical exact scalar: int when integral, else Fraction."""
    x = Fraction(x)
    return int(x) if x.denominator == 1 else x


Row = tuple  # (target column, sign)


@dataclass(frozen=True)
class Atom:
    a: tuple  # tuple of (col, sign) per row
    b: tuple  # offsets, int or Fraction
    p: Fraction


@dataclass(frozen=True)
class FlipRat:
    d: int
    atoms: tuple
    parity: str | None = None  # "even", "odd" or None
    coefficient: int | None = None

    def __post_init__(self):
        merged: dict = {}
        for at in self.atoms:
            if len(at.a) != self.d or len(at.b) != self.d:
                raise ValueError("atom dimension mismatch")
            for col, sg in at.a:
                if not (0 <= col < self.d) or sg not in (1, -1):
                    raise ValueError(f"bad flip row {(col, sg)}")
            if at.p < 0:
                raise ValueError("negative atom probability")
            if at.p == 0:
                continue
            key = (tuple(at.a), tuple(_num(x) for x in at.b))
            merged[key] = merged.get(key, Fraction(0)) + Fraction(at.p)
        atoms = tuple(Atom(a, b, p) for (a, b), p in sorted(merged.items(), key=_atom_key))
        if sum((at.p for at in atoms), Fraction(0)) != 1:
            raise MassMismatch("atom probabilities do not sum to 1")
        object.__setattr__(self, "atoms", atoms)

    # --- constructors
    @classmethod
    def identity(cls, d: int = 2) -> "FlipRat":
        return cls(d, (Atom(tuple((k, 1) for k in range(d)), (0,) * d, Fraction(1)),))

    @classmethod
    def deterministic(cls, a, b) -> "FlipRat":
        a = tuple(tuple(r) for r in a)
        return cls(len(a), (Atom(a, tuple(b), Fraction(1)),))

    @classmethod
    def from_rows(cls, rows: Sequence[dict], parity=None, coefficient=None) -> "FlipRat":
        """Independent rows; ``rows[k]`` maps ``(col, sign, offset) -> prob``."""
        d = len(rows)
        atoms = []
        for combo in itertools.product(*[list(r.items()) for r in rows]):
            p = Fraction(1)
            a, b = [], []
            for (col, sg, off), pr in combo:
                p *= Fraction(pr)
                a.append((col, sg))
                b.append(off)
            atoms.append(Atom(tuple(a), tuple(b), p))
        return cls(d, tuple(atoms), parity, coefficient)

    # --- views
    @property
    def is_discrete(self) -> bool:
        return all(isinstance(x, int) for at in self.atoms for x in at.b)

    def matrix(self, at: Atom) -> np.ndarray:
        m = np.zeros((self.d, self.d), dtype=np.int64)
        for k, (col, sg) in enumerate(at.a):
            m[k, col] = sg
        return m

    def row_law(self, k: int) -> dict:
        """``(L, sign, b_k) -> probability``."""
        out: dict = {}
        for at in self.atoms:
            col, sg = at.a[k]
            key = (col, sg, at.b[k])
            out[key] = out.get(key, Fraction(0)) + at.p
        return out

    def target_law(self, k: int) -> dict:
        """``P(L(k, a) = L)``."""
        out: dict = {}
        for (col, _sg, _b), p in self.row_law(k).items():
            out[col] = out.get(col, Fraction(0)) + p
        return out

    def sign_law(self, k: int, L: int) -> dict:
        """``P(a~(k, L) = sign | L(k, a) = L)``."""
        tl = self.target_law(k).get(L, Fraction(0))
        out: dict = {}
        if tl == 0:
            return out
        for (col, sg, _b), p in self.row_law(k).items():
            if col == L:
                out[sg] = out.get(sg, Fraction(0)) + p / tl
        return out

    def joint(self, k: int) -> dict:
        """``(L, sign) -> (P(L, sign), {offset: P(offset, L, sign)})`` (unnormalized offsets)."""
        out: dict = {}
        for (col, sg, b), p in self.row_law(k).items():
            w, law = out.setdefault((col, sg), [Fraction(0), {}])
            out[(col, sg)][0] = w + p
            law[b] = law.get(b, Fraction(0)) + p
        return {key: (v[0], v[1]) for key, v in sorted(out.items())}

    def conditional_offsets(self, k: int, L: int, sign: int) -> dict:
        """Law of ``b_{k,L,sign}``: ``b_k`` given ``a_{k,L} = sign``."""
        j = self.joint(k).get((L, sign))
        if j is None:
            return {}
        w, law = j
        return {b: p / w for b, p in law.items()}

    def mean_a(self) -> list[list[Fraction]]:
        m = [[Fraction(0)] * self.d for _ in range(self.d)]
        for at in self.atoms:
            for k, (col, sg) in enumerate(at.a):
                m[k][col] += sg * at.p
        return m

    def mean_b(self) -> list[Fraction]:
        out = [Fraction(0)] * self.d
        for at in self.atoms:
            for k in range(self.d):
                out[k] += at.p * at.b[k]
        return out

    def max_offset(self):
        return max(abs(x) for at in self.atoms for x in at.b)

    # --- serialization
    def to_json_obj(self) -> list:
        return [
            {
                "a": self.matrix(at).tolist(),
                "b": [str(x) for x in at.b] if not self.is_discrete else list(at.b),
                "p": f"{at.p.numerator}/{at.p.denominator}",
            }
            for at in self.atoms
        ]

    @classmethod
    def from_json_obj(cls, obj: list) -> "FlipRat":
        atoms = []
        d = None
        for item in obj:
            m = item["a"]
            d = len(m)
            rows = []
            for r in m:
                nz = [(c, v) for c, v in enumerate(r) if v]
                if len(nz) != 1 or nz[0][1] not in (1, -1):
                    raise ValueError("corpus atom is not of flip type")
                rows.append(nz[0])
            atoms.append(Atom(tuple(rows), tuple(_num(Fraction(str(x))) for x in item["b"]), Fraction(item["p"])))
        return cls(d, tuple(atoms))


def _atom_key(item):
    (a, b), _p = item
    return (a, tuple(Fraction(x) for x in b))


def dump_corpus(rats: Sequence[FlipRat]) -> str:
    return json.dumps([F.to_json_obj() for F in rats], separators=(",", ":"))


def load_corpus(text: str) -> list[FlipRat]:
    data = json.loads(text)
    if data and isinstance(data[0], dict):
        data = [data]
    return [FlipRat.from_json_obj(x) for x in data]


# --------------------------------------------------------------------------
# composition


def compose(outer: FlipRat, inner: FlipRat, state_cap: int = DEFAULT_STATE_CAP) -> FlipRat:
    """``outer o inner = (a' a, a' b + b')`` for independent outer/inner."""
    if outer.d != inner.d:
        raise ValueError("dimension mismatch")
    if len(outer.atoms) * len(inner.atoms) > state_cap:
        raise StateBlowup("composition exceeds the atom cap")
    d = outer.d
    atoms = []
    for ao in outer.atoms:
        for ai in inner.atoms:
            a, b = [], []
            for k in range(d):
                L, s1 = ao.a[k]
                M, s2 = ai.a[L]
                a.append((M, s1 * s2))
                b.append(s1 * ai.b[L] + ao.b[k])
            atoms.append(Atom(tuple(a), tuple(b), ao.p * ai.p))
    return FlipRat(d, tuple(atoms))


def compose_all(seq: Sequence[FlipRat]) -> FlipRat:
    """``F_n o ... o F_1`` for ``seq = [F_1, ..., F_n]``."""
    out = FlipRat.identity(seq[0].d)
    for F in seq:
        out = compose(F, out)
    return out


# --------------------------------------------------------------------------
# characteristic matrices


@dataclass(frozen=True)
class RatCf:
    """``2d x 2d`` matrix of Laurent polynomials in ``Z = exp(i theta)``."""

    entries: tuple  # tuple of tuples of LaurentPoly

    @property
    def size(self) -> int:
        return len(self.entries)

    def P0(self) -> list[list[Fraction]]:
        return [[Fraction(e.at_one()) for e in row] for row in self.entries]

    def __matmul__(self, other: "RatCf") -> "RatCf":
        n = self.size
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = LaurentPoly()
                for m in range(n):
                    if self.entries[i][m].coeffs and other.entries[m][j].coeffs:
                        acc = acc + self.entries[i][m] * other.entries[m][j]
                row.append(acc)
            out.append(tuple(row))
        return RatCf(tuple(out))

    def apply(self, vec: Sequence[LaurentPoly]) -> list[LaurentPoly]:
        n = self.size
        out = []
        for i in range(n):
            acc = LaurentPoly()
            for j in range(n):
                acc = acc + self.entries[i][j] * vec[j]
            out.append(acc)
        return out

    def eval(self, theta) -> np.ndarray:
        """Numeric matrices, shape ``(..., 2d, 2d)``."""
        th = np.asarray(theta, dtype=float)
        n = self.size
        out = np.zeros(th.shape + (n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                e = self.entries[i][j]
                if e.coeffs:
                    out[..., i, j] = e.eval(th)
        return out

    def derivative(self, order: int) -> np.ndarray:
        n = self.size
        return np.array(
            [[complex(self.entries[i][j].derivative_at_zero(order)) for j in range(n)] for i in range(n)]
        )


def rat_cf(F: FlipRat) -> RatCf:
    """Entries ``P_{i d + k, j d + L} = P(L, sign = delta) Phi_{eps b_{k,L,delta}}`` with
    ``eps = 1 - 2i``, ``delta = eps (1 - 2j)``."""
    d = F.d
    ent = [[LaurentPoly() for _ in range(2 * d)] for _ in range(2 * d)]
    for k in range(d):
        for (L, sg), (_w, law) in F.joint(k).items():
            for i in (0, 1):
                eps = 1 - 2 * i
                j = 0 if sg * eps == 1 else 1
                poly = LaurentPoly({eps * b: p for b, p in law.items()})
                ent[i * d + k][j * d + L] = ent[i * d + k][j * d + L] + poly
    return RatCf(tuple(tuple(r) for r in ent))


def law_vector(law: dict, d: int) -> list[LaurentPoly]:
    """``V_X`` for an exact law ``{vector: prob}``: char. functions at theta then -theta."""
    up = []
    for k in range(d):
        marg: dict = {}
        for x, p in law.items():
            marg[x[k]] = marg.get(x[k], Fraction(0)) + p
        up.append(LaurentPoly(marg))
    return up + [u.reflect() for u in up]


def push_law(F: FlipRat, law: dict) -> dict:
    out: dict = {}
    for x, px in law.items():
        for at in F.atoms:
            y = tuple(_num(sg * x[col] + at.b[k]) for k, (col, sg) in enumerate(at.a))
            out[y] = out.get(y, Fraction(0)) + px * at.p
    return out


def cf_norm(F: FlipRat | RatCf, theta) -> np.ndarray | float:
    """Max absolute row sum of ``P_F(theta)``."""
    cf = F if isinstance(F, RatCf) else rat_cf(F)
    M = cf.eval(theta)
    vals = np.abs(M).sum(axis=-1).max(axis=-1)
    return vals if np.ndim(theta) else float(vals)


def row_norms(F: FlipRat, theta) -> np.ndarray:
    """Row sums ``sum_{L, sign} |E(exp(i theta b_k); L, sign)|``, shape ``(..., d)``."""
    th = np.asarray(theta, dtype=float)
    out = np.zeros(th.shape + (F.d,))
    for k in range(F.d):
        for (_L, _sg), (_w, law) in F.joint(k).items():
            poly = LaurentPoly(law)
            out[..., k] += np.abs(poly.eval(th))
    return out


def cf_norm_rows(F: FlipRat, theta):
    """The same norm computed from the row decomposition (second route)."""
    v = row_norms(F, theta).max(axis=-1)
    return v if np.ndim(theta) else float(v)


def char_poly_coeffs(cf: RatCf, theta: float) -> np.ndarray:
    """Coefficients ``c_0..c_{2d}`` of ``det(P(theta) - lambda I)``.

    ``np.poly`` returns ``det(lambda I - P)``; the sign ``(-1)^{2d} = 1`` makes
    the two agree, and the order is reversed to index by power of lambda.
    """
    M = cf.eval(theta)
    return np.poly(M)[::-1]


# --------------------------------------------------------------------------
# structural predicates


def _variance(law: dict) -> Fraction:
    w = sum(law.values(), Fraction(0))
    m = sum((p * b for b, p in law.items()), Fraction(0)) / w
    return sum((p * (b - m) ** 2 for b, p in law.items()), Fraction(0)) / w


def kappa(F: FlipRat) -> Fraction:
    """``min_k sum_{L,sign} P(L, sign) Var(b_{k,L,sign})``."""
    vals = []
    for k in range(F.d):
        s = Fraction(0)
        for (_L, _sg), (w, law) in F.joint(k).items():
            s += w * _variance(law)
        vals.append(s)
    return min(vals)


def adapted_rows(F: FlipRat) -> frozenset:
    rows = set()
    for k in range(F.d):
        if any(len(law) > 1 for (_w, law) in F.joint(k).values()):
            rows.add(k)
    return frozenset(rows)


def _gcd_fraction(values) -> Fraction:
    g = Fraction(0)
    for v in values:
        v = abs(Fraction(v))
        if v == 0:
            continue
        if g == 0:
            g = v
        else:
            den = g.denominator * v.denominator // math.gcd(g.denominator, v.denominator)
            g = Fraction(math.gcd(int(g * den), int(v * den)), den)
    return g


def row_moduli(F: FlipRat) -> tuple:
    """Per row, the gcd ``G_k`` of offset differences inside each conditional law.

    Row ``k`` contributes ``|Phi| = 1`` exactly on ``(2 pi / G_k) Z`` (all of
    the line when ``G_k = 0``).
    """
    out = []
    for k in range(F.d):
        diffs = []
        for (_w, law) in F.joint(k).values():
            bs = sorted(law)
            diffs.extend(b - bs[0] for b in bs[1:])
        out.append(_gcd_fraction(diffs))
    return tuple(out)


@dataclass(frozen=True)
class PeriodicityGroup:
    kind: str  # "full_line", "lattice", "trivial" or "union"
    moduli: tuple  # per-row G_k
    N: Fraction | None = None  # generator 2 pi / N when kind is lattice/trivial

    @property
    def generator(self) -> float | None:
        return None if self.N is None else float(2 * math.pi / self.N)

    @property
    def invariance_modulus(self) -> Fraction:
        """``gcd G_k``: the norm is invariant under translation by ``2 pi / gcd``."""
        return _gcd_fraction(self.moduli)

    @property
    def invariance_generator(self) -> float | None:
        g = self.invariance_modulus
        return None if g == 0 else float(2 * math.pi / g)

    def contains(self, theta: float, tol: float = 1e-9) -> bool:
        for G in self.moduli:
            if G == 0:
                return True
            x = theta * float(G) / (2 * math.pi)
            if abs(x - round(x)) < tol:
                return True
        return False


def periodicity_group(F: FlipRat) -> PeriodicityGroup:
    """The set where ``||P_F(theta)|| = 1``: the union over rows of row lattices."""
    G = row_moduli(F)
    if any(g == 0 for g in G):
        return PeriodicityGroup("full_line", G)
    top = max(G)
    if all((top / g).denominator == 1 for g in G):
        return PeriodicityGroup("trivial" if top == 1 else "lattice", G, top)
    return PeriodicityGroup("union", G)


@dataclass(frozen=True)
class Predicates:
    irreducible: bool
    mean_contractive: bool
    balanced: bool
    adapted: bool
    strongly_adapted: bool
    partially_adapted: bool
    adapted_rows: frozenset
    kappa: Fraction
    mean_a_norm: Fraction


def predicates(F: FlipRat) -> Predicates:
    d = F.d
    nonzero = set()
    signed = set()
    for at in F.atoms:
        for k, (col, sg) in enumerate(at.a):
            nonzero.add((k, col))
            signed.add((k, col, sg))
    irreducible = len(nonzero) == d * d
    balanced = len(signed) == 2 * d * d
    Ea = F.mean_a()
    norm = max(sum(abs(x) for x in row) for row in Ea)
    mc = norm < 1
    rows = adapted_rows(F)
    kap = kappa(F)
    adapted = len(rows) == d
    pg = periodicity_group(F)
    # Gamma_F meets (0, 2 pi) iff some row lattice (2 pi / G_k) Z does
    strongly = all(g != 0 and g <= 1 for g in pg.moduli)
    res = Predicates(irreducible, mc, balanced, adapted, strongly, bool(rows), rows, kap, norm)
    if balanced and not (irreducible and mc):
        raise InvariantViolation("balanced RAT that is not irreducible and mean contractive")
    if adapted != (kap > 0):
        raise InvariantViolation("adaptedness disagrees with kappa")
    return res


# --------------------------------------------------------------------------
# spec-RATs and alpha-RAT sequences


Coupling = Callable[[list], FlipRat]


def independent_coupling(rows: list, parity=None, coefficient=None) -> FlipRat:
    return FlipRat.from_rows(rows, parity, coefficient)


def spec_rows(n: int, eps_prev: int, l0: int, l1: int) -> list[dict]:
    """Row laws ``(col, sign, offset) -> prob`` of the spec-RAT with coefficient ``n``.

    ``l0, l1`` are the lengths at the previous level.  The offsets are read
    off the generating-function transitions: eps = 0 uses the centered
    uniform law on ``{2m - (n-1)}`` for the ``X(0)`` branch and ``n - 2i - 1``
    for the ``X(1)`` branch; eps = 1 adds 1 after the (possibly reflected) copy.
    """
    rows = []
    for i in (0, 1):
        N = n - 1 - i
        p = p_weight(n, l0, l1, i)
        r: dict = {}

        def put(key, w):
            if w:
                r[key] = r.get(key, Fraction(0)) + w

        if eps_prev == 0:
            for m in range(N):
                put((0, 1, 2 * m - (n - 1)), p / N)
            put((1, 1, n - 2 * i - 1), 1 - p)
        elif N % 2 == 0:
            put((0, 1, 1), p / 2)
            put((0, -1, 1), p / 2)
            put((1, 1, 1), 1 - p)
        else:
            q = q_weight(N)
            put((0, 1, 1), p * q)
            put((0, -1, 1), p * (1 - q))
            put((1, -1, 1), 1 - p)
        rows.append(r)
    return rows


def spec_rat(
    n: int, eps_prev: int, l0: int, l1: int, coupling: Coupling | None = None
) -> FlipRat:
    rows = spec_rows(n, eps_prev, l0, l1)
    parity = "even" if eps_prev == 0 else "odd"
    if coupling is None:
        return independent_coupling(rows, parity, n)
    F = coupling(rows)
    return FlipRat(F.d, F.atoms, parity, n)


def _absorb_seed(rows: list[dict], seed: tuple) -> list[dict]:
    """Fold a deterministic start ``seed`` into the offsets: ``b -> b + sign * seed[col]``."""
    out = []
    for r in rows:
        nr: dict = {}
        for (col, sg, b), p in r.items():
            key = (col, sg, b + sg * seed[col])
            nr[key] = nr.get(key, Fraction(0)) + p
        out.append(nr)
    return out


def alpha_rat_sequence(
    digits: DigitSequence, K: int, coupling: Coupling | None = None
) -> list[FlipRat]:
    """``[F_1, ..., F_K]`` whose walk from 0 has coordinate laws ``P_k^(i)``.

    The level-0 laws are point masses at 1 while the walk starts at 0, so
    ``F_1`` carries that unit start in its offsets.
    """
    states = renorm_states(digits, K)
    seq = []
    for k in range(1, K + 1):
        st: RenormState = states[k - 1]
        n = digits.digit(k)
        rows = spec_rows(n, st.e0, st.l0, st.l1)
        if k == 1:
            rows = _absorb_seed(rows, (1, 1))
        parity = "even" if st.e0 == 0 else "odd"
        F = independent_coupling(rows, parity, n) if coupling is None else coupling(rows)
        seq.append(FlipRat(F.d, F.atoms, parity, n))
    return seq


def spec_rat_sequence(digits: DigitSequence, K: int) -> list[FlipRat]:
    """Unmodified spec-RATs ``F_1..F_K`` (no absorbed start), for classification."""
    states = renorm_states(digits, K)
    return [
        spec_rat(digits.digit(k), states[k - 1].e0, states[k - 1].l0, states[k - 1].l1)
        for k in range(1, K + 1)
    ]


# --------------------------------------------------------------------------
# exact laws


@dataclass(frozen=True)
class ArwDistribution:
    law: dict
    n: int
    mean: tuple

    def marginal(self, k: int) -> dict:
        out: dict = {}
        for x, p in self.law.items():
            out[x[k]] = out.get(x[k], Fraction(0)) + p
        return dict(sorted(out.items()))

    def second_moment(self, k: int) -> Fraction:
        return sum((p * Fraction(x[k]) ** 2 for x, p in self.law.items()), Fraction(0))

    def variance(self, k: int) -> Fraction:
        return self.second_moment(k) - Fraction(self.mean[k]) ** 2


def exact_arw_law(
    seq: Sequence[FlipRat], n: int | None = None, state_cap: int = DEFAULT_STATE_CAP, start=None
) -> ArwDistribution:
    """Exact law of ``X^(n) = F_n o ... o F_1 (start)`` by pushing the sparse law."""
    if n is None:
        n = len(seq)
    d = seq[0].d if seq else 2
    law = {tuple(start) if start is not None else (0,) * d: Fraction(1)}
    for F in seq[:n]:
        law = push_law(F, law)
        if len(law) > state_cap:
            raise StateBlowup(f"exact law exceeds {state_cap} states")
    mean = tuple(sum((p * Fraction(x[k]) for x, p in law.items()), Fraction(0)) for k in range(d))
    return ArwDistribution(law, n, tuple(_num(m) for m in mean))


def arw_laws(seq: Sequence[FlipRat], state_cap: int = DEFAULT_STATE_CAP) -> list[ArwDistribution]:
    """Laws of ``X^(0..n)`` in one pass."""
    d = seq[0].d
    law = {(0,) * d: Fraction(1)}
    out = [ArwDistribution(dict(law), 0, (0,) * d)]
    for j, F in enumerate(seq, 1):
        law = push_law(F, law)
        if len(law) > state_cap:
            raise StateBlowup(f"exact law exceeds {state_cap} states")
        mean = tuple(sum((p * Fraction(x[k]) for x, p in law.items()), Fraction(0)) for k in range(d))
        out.append(ArwDistribution(law, j, tuple(_num(m) for m in mean)))
    return out


# --------------------------------------------------------------------------
# centering and grouping


def walk_means(seq: Sequence[FlipRat]) -> list[tuple]:
    """``c_0 = 0``, ``c_n = E(a^(n)) c_{n-1} + E(b^(n))``."""
    d = seq[0].d
    c = [Fraction(0)] * d
    out = [tuple(c)]
    for F in seq:
        Ea, Eb = F.mean_a(), F.mean_b()
        c = [sum((Ea[k][j] * c[j] for j in range(d)), Fraction(0)) + Eb[k] for k in range(d)]
        out.append(tuple(c))
    return out


def center(seq: Sequence[FlipRat]) -> tuple[list[FlipRat], list[tuple]]:
    """Centerings ``b~ = b - c_n + a c_{n-1}`` and the means ``c_0..c_n``."""
    means = walk_means(seq)
    out = []
    for j, F in enumerate(seq, 1):
        cn, cp = means[j], means[j - 1]
        atoms = []
        for at in F.atoms:
            nb = tuple(at.b[k] - cn[k] + sg * cp[col] for k, (col, sg) in enumerate(at.a))
            atoms.append(Atom(at.a, nb, at.p))
        out.append(FlipRat(F.d, tuple(atoms), F.parity, F.coefficient))
    return out, means


def group(
    seq: Sequence[FlipRat],
    nu: CanonicalSubsequence | Sequence[int],
    check: bool = True,
    start: int = 0,
) -> list[FlipRat]:
    """``G_{k+1} = F_{nu_{k+1}} o ... o F_{nu_k + 1}`` with ``nu_0 = start``.

    With ``check`` every ``G_k`` must be adapted and mean contractive.
    """
    idx = list(nu.indices if isinstance(nu, CanonicalSubsequence) else nu)
    out = []
    prev = start
    for j, v in enumerate(idx, 1):
        if v > len(seq):
            raise ValueError(f"sequence too short for nu_{j} = {v}")
        G = compose_all(list(seq[prev:v]))
        if check:
            pr = predicates(G)
            if not pr.adapted:
                raise GroupingAssertionFailed(f"G_{j} is not adapted", j, "adapted")
            if not pr.mean_contractive:
                raise GroupingAssertionFailed(f"G_{j} is not mean contractive", j, "mean_contractive")
            pg = periodicity_group(G)
            M = int(math.ceil(G.max_offset()))
            if pg.kind != "full_line" and any(
                (math.factorial(2 * M) / g).denominator != 1 for g in pg.moduli
            ):
                raise GroupingAssertionFailed(f"G_{j} has a period not dividing (2M)!", j, "lattice")
        out.append(G)
        prev = v
    return out


def bmf_report(seq: Sequence[FlipRat]) -> dict:
    """Sup of ``||E(X^(n))||`` against the geometric bound from mean boundedness/contractivity."""
    means = walk_means(seq)
    sup_mean = max(max(abs(x) for x in c) for c in means)
    rho = max(max(sum(abs(x) for x in row) for row in F.mean_a()) for F in seq)
    Mb = max(max(abs(x) for x in F.mean_b()) for F in seq)
    bound = Mb * rho / (1 - rho) + Mb if rho < 1 else None
    return {"sup_mean": sup_mean, "rho": rho, "mean_b_bound": Mb, "geometric_bound": bound}


@dataclass(frozen=True)
class CompactnessReport:
    min_atom: Fraction
    M_inverse: Fraction
    max_offset: Fraction
    r_trajectory: tuple = field(default=())
    min_r: Fraction | None = None


def r_trajectory(digits: DigitSequence, K: int) -> list[Fraction]:
    """``r_k = l_k(1) / l_k(0)`` for ``k = 1..K``."""
    return [Fraction(s.l1, s.l0) for s in renorm_states(digits, K)[1:]]


def compactness_report(
    collection: Sequence[FlipRat], digits: DigitSequence | None = None, K: int = 0
) -> CompactnessReport:
    """Smallest positive ``P(a_{k,l} = eps, b_k = nu)`` and largest ``|b|``."""
    mins = []
    for F in collection:
        for k in range(F.d):
            mins.extend(F.row_law(k).values())
    m = min(mins)
    mb = max(Fraction(F.max_offset()) for F in collection)
    traj: tuple = ()
    min_r = None
    if digits is not None and K:
        traj = tuple(r_trajectory(digits, K))
        min_r = min(traj)
    return CompactnessReport(m, 1 / m, mb, traj, min_r)


# --------------------------------------------------------------------------
# Monte Carlo


SHARD_SIZE = 10_000


@dataclass
class _Sampler:
    thresholds: np.ndarray | None
    probs: np.ndarray
    cols: np.ndarray  # (atoms, d)
    signs: np.ndarray  # (atoms, d)
    offs: np.ndarray  # (atoms, d)
    denom: int

    @classmethod
    def of(cls, F: FlipRat) -> "_Sampler":
        den = 1
        for at in F.atoms:
            den = den * at.p.denominator // math.gcd(den, at.p.denominator)
        nums = np.array([int(at.p * den) for at in F.atoms], dtype=object)
        if den < (1 << 62):
            thr = np.cumsum(nums.astype(np.int64))
        else:
            thr = None
        probs = np.array([float(at.p) for at in F.atoms])
        cols = np.array([[c for c, _ in at.a] for at in F.atoms], dtype=np.int64)
        signs = np.array([[s for _, s in at.a] for at in F.atoms], dtype=np.int64)
        dtype = np.int64 if F.is_discrete else float
        offs = np.array([[x for x in at.b] for at in F.atoms], dtype=dtype)
        return cls(thr, probs, cols, signs, offs, den)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.thresholds is not None:
            u = rng.integers(0, self.denom, size=size)
            return np.searchsorted(self.thresholds, u, side="right")
        return rng.choice(len(self.probs), size=size, p=self.probs)


@dataclass(frozen=True)
class EmpiricalLaw:
    counts: dict  # vector -> count
    trials: int

    def marginal(self, k: int) -> dict:
        out: dict = {}
        for x, c in self.counts.items():
            out[x[k]] = out.get(x[k], 0) + c
        return dict(sorted(out.items()))

    def values(self, k: int) -> np.ndarray:
        m = self.marginal(k)
        return np.repeat(np.array(list(m.keys()), dtype=float), list(m.values()))


def _run_shard(samplers: list[_Sampler], order: Sequence[int], d: int, size: int, rng) -> np.ndarray:
    X = np.zeros((size, d), dtype=samplers[0].offs.dtype)
    base = (np.arange(size, dtype=np.int64) * d)[:, None]
    for idx in order:
        s = samplers[idx]
        at = s.draw(rng, size)
        X = s.signs[at] * X.ravel()[base + s.cols[at]] + s.offs[at]
    return X


def simulate(
    seq: Sequence[FlipRat] | FlipRat,
    n: int,
    trials: int,
    seed: int,
    shard_size: int = SHARD_SIZE,
) -> EmpiricalLaw:
    """Empirical law of ``X^(n)``.

    ``seq`` is a list (``F_1..F_n`` used in order) or a single RAT iterated iid.
    Shard ``j`` uses the ``j``-th child of ``SeedSequence(seed)``; shards are
    merged by adding integer counts, so the result does not depend on order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(seq, FlipRat):
        samplers = [_Sampler.of(seq)]
        order = [0] * n
        d = seq.d
    else:
        uniq: dict = {}
        samplers = []
        order = []
        for F in seq[:n]:
            key = id(F)
            if key not in uniq:
                uniq[key] = len(samplers)
                samplers.append(_Sampler.of(F))
            order.append(uniq[key])
        d = seq[0].d
    n_shards = -(-trials // shard_size)
    children = np.random.SeedSequence(seed).spawn(n_shards)
    total: dict = {}
    for j, child in enumerate(children):
        size = min(shard_size, trials - j * shard_size)
        rng = np.random.default_rng(child)
        X = _run_shard(samplers, order, d, size, rng)
        vals, cnt = np.unique(X, axis=0, return_counts=True)
        for v, c in zip(map(tuple, vals.tolist()), cnt.tolist()):
            total[v] = total.get(v, 0) + c
    return EmpiricalLaw(dict(sorted(total.items())), trials)


# --------------------------------------------------------------------------
# variance sandwich


@dataclass(frozen=True)
class VarianceReport:
    lower: Fraction
    observed: tuple
    upper: Fraction
    sandwich: bool
    cross_moments: tuple  # max |E(Y_K^nu Y_K^mu)| per coordinate
    orthogonal: bool
    decomposition_matches: bool


def variance_check(seq: Sequence[FlipRat], n: int | None = None, path_cap: int = 200_000) -> VarianceReport:
    """Variance sandwich, and orthogonality of ``Y^(n,nu) = a_{nu+1}^n b^(nu)``."""
    if n is None:
        n = len(seq)
    seq = list(seq[:n])
    d = seq[0].d
    means = walk_means(seq)
    for c in means[1:]:
        if any(x != 0 for x in c):
            raise CenteringViolation("sequence is not centered: E(X^(n)) != 0")
    lower = Fraction(0)
    upper = Fraction(0)
    for F in seq:
        second = [sum((at.p * Fraction(at.b[L]) ** 2 for at in F.atoms), Fraction(0)) for L in range(d)]
        lower += min(second)
        upper += max(second)
    law = exact_arw_law(seq, n)
    observed = tuple(law.second_moment(k) for k in range(d))
    sandwich = all(lower <= o <= upper for o in observed)

    n_paths = math.prod(len(F.atoms) for F in seq)
    if n_paths > path_cap:
        raise StateBlowup(f"{n_paths} atom paths exceed the cap {path_cap}")
    cross = [[[Fraction(0)] * n for _ in range(n)] for _ in range(d)]
    for path in itertools.product(*[F.atoms for F in seq]):
        p = math.prod((at.p for at in path), start=Fraction(1))
        # Y^(n,nu)_K: follow row K back through a^(n) ... a^(nu+1)
        Y = [[Fraction(0)] * n for _ in range(d)]
        for K in range(d):
            row, sign = K, 1
            for nu in range(n - 1, -1, -1):
                Y[K][nu] = sign * Fraction(path[nu].b[row])
                col, sg = path[nu].a[row]
                row, sign = col, sign * sg
        for K in range(d):
            for a_ in range(n):
                for b_ in range(n):
                    cross[K][a_][b_] += p * Y[K][a_] * Y[K][b_]
    max_cross = tuple(max((abs(cross[K][i][j]) for i in range(n) for j in range(n) if i != j), default=Fraction(0)) for K in range(d))
    decomp = all(sum((cross[K][i][i] for i in range(n)), Fraction(0)) == observed[K] for K in range(d))
    return VarianceReport(lower, observed, upper, sandwich, max_cross, all(m == 0 for m in max_cross), decomp)


# --------------------------------------------------------------------------
# spectral quantities


@dataclass(frozen=True)
class SpectralReport:
    thetas: tuple
    lambdas: tuple
    gamma: float
    gamma_closed: float
    kappa: Fraction
    gap: float


def _is_aperiodic(P0: np.ndarray) -> bool:
    B = (P0 > 0).astype(np.int64)
    M = B.copy()
    for _ in range(2 * P0.shape[0] ** 2):
        if (M > 0).all():
            return True
        M = ((M @ B) > 0).astype(np.int64)
    return bool((M > 0).all())


def _stationary(P0: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(P0.T)
    i = int(np.argmin(np.abs(w - 1)))
    pi = np.real(v[:, i])
    return pi / pi.sum()


def dominant_eigenvalue(M: np.ndarray, pi: np.ndarray, tol: float = 1e-15, max_iter: int = 100_000) -> complex:
    """Power iteration, normalized by the stationary functional."""
    v = np.ones(M.shape[0], dtype=complex)
    lam = 1.0 + 0j
    for _ in range(max_iter):
        w = M @ v
        new = (pi @ w) / (pi @ v)
        v = w / (pi @ w)
        if abs(new - lam) < tol:
            return new
        lam = new
    return lam


def _branch_eigenvalue(M: np.ndarray) -> complex:
    w = np.linalg.eigvals(M)
    return complex(w[int(np.argmin(np.abs(w - 1)))])


def spectral(
    F: FlipRat,
    h: float = 1e-4,
    samples: Sequence[float] = (0.0, 1e-3, 1e-2, 0.1),
    require_aperiodic: bool = True,
) -> SpectralReport:
    """Leading eigenvalue of ``P_F(theta)`` near 0 and ``gamma_F = -lambda''(0)``.

    With ``require_aperiodic=False`` a non-aperiodic ``P_F(0)`` is accepted
    and the eigenvalue branch through 1 is followed by direct diagonalization
    (real part); there is no closed-form cross-check in that case.
    """
    cf = rat_cf(F)
    P0 = np.array([[float(x) for x in row] for row in cf.P0()])
    aperiodic = _is_aperiodic(P0)
    if not aperiodic and require_aperiodic:
        raise NotAperiodic("P_F(0) has no positive power")
    if not aperiodic:
        def lam(t: float) -> float:
            return float(np.real(_branch_eigenvalue(cf.eval(t))))

        g_h = 2 * (1 - lam(h)) / h**2
        g_h2 = 2 * (1 - lam(h / 2)) / (h / 2) ** 2
        gamma = (4 * g_h2 - g_h) / 3
        return SpectralReport(tuple(samples), tuple(lam(t) for t in samples), gamma, float("nan"), kappa(F), 0.0)

    ev = np.sort(np.abs(np.linalg.eigvals(P0)))[::-1]
    gap = float(1 - ev[1]) if len(ev) > 1 else 1.0
    if gap < 1e-6:
        raise EigenGapTooSmall(f"spectral gap {gap:.3g}")
    pi = _stationary(P0)

    def lam(t: float) -> float:
        return float(np.real(dominant_eigenvalue(cf.eval(t), pi)))

    g_h = 2 * (1 - lam(h)) / h**2
    g_h2 = 2 * (1 - lam(h / 2)) / (h / 2) ** 2
    gamma = (4 * g_h2 - g_h) / 3

    # closed form: lambda'' = pi P'' 1 + 2 pi P' eta', (I - P0) eta' = P' 1, pi eta' = 0
    D1 = cf.derivative(1)
    D2 = cf.derivative(2)
    one = np.ones(P0.shape[0])
    rhs = D1 @ one
    A = np.vstack([np.eye(P0.shape[0]) - P0, pi[None, :]])
    eta1 = np.linalg.lstsq(A.astype(complex), np.concatenate([rhs, [0]]), rcond=None)[0]
    lam2 = pi @ (D2 @ one) + 2 * pi @ (D1 @ eta1)
    gamma_closed = float(-np.real(lam2))
    lams = tuple(lam(t) for t in samples)
    return SpectralReport(tuple(samples), lams, float(gamma), gamma_closed, kappa(F), gap)
