"""Minus continued fractions ``beta = 1/(n1 - 1/(n2 - ...))`` with digits >= 2.

The expansion runs on outward-rounded rational intervals, so every emitted
digit is certified for every real number the input could denote.  Orbit
computations downstream never use floating point: they work with the
rational bracket ``[lo, hi]`` obtained by truncating the digit stream with
tail 0 and tail 1 (the map ``x -> 1/(n - x)`` is increasing, so these two
truncations enclose the true value).
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import InsufficientDigits, PrecisionExhausted

DEFAULT_PRECISION = 256
MAX_PRECISION = 4096


@dataclass(frozen=True)
class DigitSequence:
    """Digits ``n_1, n_2, ...`` of beta = 2*alpha, optionally eventually periodic."""

    prefix: tuple[int, ...] = ()
    tail: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(int(d) for d in self.prefix))
        if self.tail is not None:
            object.__setattr__(self, "tail", tuple(int(d) for d in self.tail))
            if not self.tail:
                raise ValueError("periodic tail must be nonempty")
            if all(d == 2 for d in self.tail):
                raise ValueError("an all-2 tail encodes a rational beta")
        for d in self.digits_iter(len(self.prefix) + len(self.tail or ())):
            if d < 2:
                raise ValueError(f"digit {d} < 2")
        if not self.prefix and self.tail is None:
            raise ValueError("empty digit sequence")

    @property
    def periodic(self) -> bool:
        return self.tail is not None

    @property
    def available(self) -> float:
        return math.inf if self.periodic else len(self.prefix)

    def digit(self, k: int) -> int:
        """The 1-indexed digit ``n_k``."""
        if k < 1:
            raise IndexError(k)
        if k <= len(self.prefix):
            return self.prefix[k - 1]
        if self.tail is None:
            raise InsufficientDigits(f"digit {k} requested, only {len(self.prefix)} available")
        return self.tail[(k - 1 - len(self.prefix)) % len(self.tail)]

    def head(self, k: int) -> list[int]:
        return [self.digit(j) for j in range(1, k + 1)]

    def digits_iter(self, k: int | None = None) -> Iterator[int]:
        j = 1
        while k is None or j <= k:
            if j > self.available:
                return
            yield self.digit(j)
            j += 1

    def to_json(self) -> str:
        obj: dict = {"prefix": list(self.prefix)}
        if self.tail is not None:
            obj["tail"] = list(self.tail)
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str | dict) -> "DigitSequence":
        obj = json.loads(text) if isinstance(text, str) else text
        tail = obj.get("tail")
        return cls(tuple(obj.get("prefix", ())), tuple(tail) if tail else None)

    def __str__(self) -> str:
        head = ",".join(map(str, self.prefix))
        if self.tail is None:
            return f"[{head}]"
        per = ",".join(map(str, self.tail))
        return f"[{head}{';' if head else ''}({per})]"


@dataclass(frozen=True)
class BadnessCertificate:
    max_digit: int
    max_run_of_2s: int
    window: float  # math.inf for an exact (periodic) certificate


@dataclass(frozen=True)
class CanonicalSubsequence:
    indices: tuple[int, ...]

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, k):
        return self.indices[k]

    def gaps(self) -> list[int]:
        prev = 0
        out = []
        for v in self.indices:
            out.append(v - prev)
            prev = v
        return out


# --------------------------------------------------------------------------
# interval input


def _outward(lo: Fraction, hi: Fraction, prec: int) -> tuple[Fraction, Fraction]:
    scale = 1 << prec
    return (
        Fraction(math.floor(lo * scale), scale),
        Fraction(math.ceil(hi * scale), scale),
    )


def _isqrt_interval(lo: Fraction, hi: Fraction, prec: int) -> tuple[Fraction, Fraction]:
    if lo < 0:
        raise ValueError("sqrt of a negative interval")
    s = 1 << prec
    a = math.isqrt(math.floor(lo * s * s))
    b = math.isqrt(math.ceil(hi * s * s))
    if b * b < hi * s * s:
        b += 1
    return Fraction(a, s), Fraction(b, s)


_BINOPS = {ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow}


def _eval_interval(node, prec: int) -> tuple[Fraction, Fraction]:
    if isinstance(node, ast.Expression):
        return _eval_interval(node.body, prec)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        v = Fraction(str(node.value)) if isinstance(node.value, float) else Fraction(node.value)
        return v, v
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        lo, hi = _eval_interval(node.operand, prec)
        return (-hi, -lo) if isinstance(node.op, ast.USub) else (lo, hi)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "sqrt":
        if len(node.args) != 1:
            raise ValueError("sqrt takes one argument")
        return _isqrt_interval(*_eval_interval(node.args[0], prec), prec)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a = _eval_interval(node.left, prec)
        b = _eval_interval(node.right, prec)
        if isinstance(node.op, ast.Add):
            return a[0] + b[0], a[1] + b[1]
        if isinstance(node.op, ast.Sub):
            return a[0] - b[1], a[1] - b[0]
        if isinstance(node.op, ast.Pow):
            if b[0] != b[1] or b[0].denominator != 1 or b[0] < 0:
                raise ValueError("only nonnegative integer powers are supported")
            e = int(b[0])
            cands = [a[0] ** e, a[1] ** e]
            lo, hi = min(cands), max(cands)
            if e % 2 == 0 and a[0] <= 0 <= a[1]:
                lo = Fraction(0)
            return lo, hi
        if isinstance(node.op, ast.Div):
            if b[0] <= 0 <= b[1]:
                raise ZeroDivisionError("interval division by an interval containing 0")
            b = (1 / b[1], 1 / b[0])
        prods = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
        return min(prods), max(prods)
    raise ValueError(f"unsupported expression element: {ast.dump(node)}")


def parse_beta(beta, prec: int = DEFAULT_PRECISION) -> tuple[Fraction, Fraction]:
    """Turn ``beta`` into an enclosing rational interval.

    Accepts a Fraction/int (exact), a float (its exact binary value), a pair
    ``(lo, hi)``, or a string: a decimal/``p/q`` literal or an arithmetic
    expression with ``sqrt``, e.g. ``"(sqrt(5)-1)/2"``.  A decimal ending in
    an ellipsis stands for every real with that decimal prefix.
    """
    if isinstance(beta, tuple):
        lo, hi = Fraction(beta[0]), Fraction(beta[1])
    elif isinstance(beta, (Fraction, int)):
        lo = hi = Fraction(beta)
    elif isinstance(beta, float):
        lo = hi = Fraction(beta)
    elif isinstance(beta, str):
        text = beta.strip()
        truncated = text.endswith("…") or text.endswith("...")
        text = text.rstrip(".…") if truncated else text
        try:
            lo = hi = Fraction(text)
        except ValueError:
            lo, hi = _eval_interval(ast.parse(text, mode="eval"), prec + 32)
        else:
            if truncated and "." in text:
                # a decimal written with an ellipsis denotes [x, x + one ulp]
                ulp = Fraction(1, 10 ** len(text.split(".")[1]))
                hi = lo + ulp
    else:
        raise TypeError(f"cannot interpret beta of type {type(beta).__name__}")
    if lo > hi:
        raise ValueError("empty interval")
    return lo, hi


# --------------------------------------------------------------------------
# expansion / evaluation


def _expand_at(lo: Fraction, hi: Fraction, k_max: int, prec: int) -> list[int]:
    digits: list[int] = []
    guard = Fraction(1, 1 << (prec // 2))
    for _ in range(k_max):
        if lo <= guard or hi >= 1 - guard:
            raise PrecisionExhausted(
                f"residual indistinguishable from 0 or 1 after {len(digits)} digits at {prec} bits",
                digits,
            )
        n_lo = math.ceil(1 / hi)
        n_hi = math.ceil(1 / lo)
        if n_lo != n_hi:
            raise PrecisionExhausted(
                f"digit {len(digits) + 1} not certified at {prec} bits", digits
            )
        n = n_lo
        digits.append(n)
        lo, hi = n - 1 / lo, n - 1 / hi
        lo, hi = _outward(lo, hi, prec)
    return digits


def expand(beta, k_max: int, precision: int = DEFAULT_PRECISION) -> DigitSequence:
    """First ``k_max`` minus-CF digits of ``beta`` in (0, 1).

    Precision doubles on failure up to 4096 bits; a rational input always ends
    in PrecisionExhausted carrying the digits emitted before termination.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    prec = precision
    while True:
        lo, hi = parse_beta(beta, prec)
        if not (0 < lo and hi < 1):
            raise ValueError("beta must lie in (0, 1)")
        try:
            return DigitSequence(tuple(_expand_at(lo, hi, k_max, prec)))
        except PrecisionExhausted:
            if prec >= MAX_PRECISION:
                raise
            prec *= 2


def _fold(digits: Sequence[int], tail_value: Fraction) -> Fraction:
    x = tail_value
    for n in reversed(digits):
        x = 1 / (n - x)
    return x


def evaluate(digits: DigitSequence, k: int) -> Fraction:
    """The k-th convergent ``1/(n1 - 1/(... - 1/n_k))``."""
    if k > digits.available:
        raise InsufficientDigits(f"{k} digits requested, {digits.available} available")
    return _fold(digits.head(k), Fraction(0))


def bracket(digits: DigitSequence, k: int) -> tuple[Fraction, Fraction]:
    """Rational interval ``(lo, hi)`` containing every beta with these first k digits."""
    head = digits.head(k)
    return _fold(head, Fraction(0)), _fold(head, Fraction(1))


def convergent_denominators(digits: DigitSequence, k: int) -> list[int]:
    return [evaluate(digits, j).denominator for j in range(1, k + 1)]


def _floors_numpy(p: int, q: int, L: int, ceil_minus_one: bool) -> np.ndarray:
    j = np.arange(L + 1, dtype=np.int64)
    if ceil_minus_one:
        return (j * p - 1) // q
    return (j * p) // q


def _floors_python(p: int, q: int, L: int, ceil_minus_one: bool) -> np.ndarray:
    if ceil_minus_one:
        vals = [(j * p - 1) // q for j in range(L + 1)]
    else:
        vals = [(j * p) // q for j in range(L + 1)]
    return np.array(vals, dtype=np.int64)


def _floors(p: int, q: int, L: int, ceil_minus_one: bool) -> np.ndarray:
    if L * max(p, q) < (1 << 62):
        return _floors_numpy(p, q, L, ceil_minus_one)
    return _floors_python(p, q, L, ceil_minus_one)


def certified_order(digits: DigitSequence, L: int, start: int | None = None) -> int:
    """Smallest tested truncation order whose bracket fixes ``floor(j*beta)`` for all j <= L."""
    order = start or 1
    # lengths grow at least linearly; begin where the denominator exceeds L
    while order < digits.available and evaluate(digits, order).denominator <= L:
        order += 1
    while True:
        if order > digits.available:
            raise PrecisionExhausted(
                f"digits exhausted before floor(j*beta), j <= {L}, could be certified"
            )
        lo, hi = bracket(digits, order)
        a = _floors(lo.numerator, lo.denominator, L, False)
        b = _floors(hi.numerator, hi.denominator, L, True)
        b[0] = 0
        if np.array_equal(a, b):
            return order
        order += 2


def certified_floors(digits: DigitSequence, L: int) -> np.ndarray:
    """``floor(j*beta)`` for ``j = 0..L``, exact for the true (irrational) beta."""
    order = certified_order(digits, L)
    lo, _ = bracket(digits, order)
    return _floors(lo.numerator, lo.denominator, L, False)


def badness(digits: DigitSequence, window: int | None = None) -> BadnessCertificate:
    """Largest digit and longest run of 2s, exact over prefix+period when periodic."""
    if digits.periodic and window is None:
        seq = list(digits.prefix) + list(digits.tail) * 3
        win = math.inf
    else:
        if window is None or window < 1:
            raise ValueError("window >= 1 required for non-periodic digits")
        seq = digits.head(int(min(window, digits.available)))
        win = window
    best = run = 0
    for d in seq:
        run = run + 1 if d == 2 else 0
        best = max(best, run)
    return BadnessCertificate(max(seq), best, win)


def canonical_subsequence(digits: DigitSequence, K: int) -> CanonicalSubsequence:
    """Levels ``nu_1 < ... < nu_K``; each window ``(nu_k, nu_{k+1}]`` holds four digits > 2."""
    out: list[int] = []
    pos = 0
    for _ in range(K):
        big = 0
        while big < 4:
            pos += 1
            if pos > digits.available:
                raise InsufficientDigits(
                    f"only {len(out)} canonical levels available, {K} requested"
                )
            if digits.digit(pos) > 2:
                big += 1
        out.append(pos)
    return CanonicalSubsequence(tuple(out))


def alpha_of(beta: Fraction) -> Fraction:
    alpha = beta / 2
    if not (0 < alpha < Fraction(1, 2)):
        raise ValueError("alpha must lie in (0, 1/2)")
    return alpha

