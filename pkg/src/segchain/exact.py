"""Exact rational helpers and the integer-scaled evolution engine.

Long horizons make ``Fraction`` arithmetic impractical: every operation runs a
gcd over numerators that grow linearly with the step count.  Hot loops here
keep probability vectors as integer numerators over an implicit common
denominator ``D**t`` and only build ``Fraction`` objects at the end.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2

from .errors import ChainError

Prob = Fraction


def as_fraction(value) -> Fraction:
    """Coerce ints, Fractions, and ``"num/den"`` strings to a Fraction.

    Floats are converted exactly (binary value); callers wanting a short
    rational should snap first, see :func:`snap`.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ChainError(f"not a probability: {value!r}")
    if isinstance(value, (int, float)) or hasattr(value, "numerator"):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ChainError(f"cannot parse rational {value!r}") from exc
    raise ChainError(f"cannot interpret {value!r} as a rational")


def as_prob(value) -> Fraction:
    p = as_fraction(value)
    if not 0 <= p <= 1:
        raise ChainError(f"probability out of range: {p}")
    return p


def fmt(q: Fraction) -> str:
    """Rational string that round-trips through :func:`as_fraction`."""
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def snap(x: float, rel_tol: float = 1e-12) -> Fraction:
    """Shortest-denominator rational found within ``rel_tol`` of ``x``."""
    if x == 0:
        return Fraction(0)
    exact = Fraction(x)
    bound = 10
    while True:
        q = exact.limit_denominator(bound)
        if abs(q - exact) <= abs(exact) * Fraction(rel_tol):
            return q
        bound *= 10


def ratio(num, den) -> Fraction:
    """Reduce ``num/den`` with GMP's gcd and wrap it as a Fraction."""
    num, den = gmpy2.mpz(num), gmpy2.mpz(den)
    g = gmpy2.gcd(num, den)
    n, d = int(num // g), int(den // g)
    try:
        # already coprime: skip CPython's quadratic gcd on huge operands
        return Fraction(n, d, _normalize=False)
    except TypeError:  # keyword removed in Python 3.12
        return Fraction(n, d)


def lcm_of_denominators(values: Iterable[Fraction]) -> int:
    d = 1
    for v in values:
        d = math.lcm(d, v.denominator)
    return d


class ScaledKernel:
    """A row-stochastic kernel stored as integer numerators over ``den``.

    ``rows[i]`` is a list of ``(j, numerator)`` with positive numerators.
    """

    __slots__ = ("n", "den", "rows")

    def __init__(self, rows: Sequence[dict[int, Fraction]]):
        self.n = len(rows)
        self.den = lcm_of_denominators(p for row in rows for p in row.values())
        self.rows = [
            [(j, int(p * self.den)) for j, p in sorted(row.items()) if p]
            for row in rows
        ]

    def step(self, vec: Sequence[int], allowed: Sequence[bool] | None = None) -> list[int]:
        """One kernel application; entries outside ``allowed`` are dropped first."""
        out = [0] * self.n
        rows = self.rows
        for i, v in enumerate(vec):
            if not v or (allowed is not None and not allowed[i]):
                continue
            for j, a in rows[i]:
                out[j] += v * a
        return out

    def dense(self, block: Sequence[int] | None = None) -> list[list]:
        """Dense mpz matrix, optionally restricted to an index block."""
        idx = list(range(self.n)) if block is None else list(block)
        pos = {s: k for k, s in enumerate(idx)}
        m = [[gmpy2.mpz(0)] * len(idx) for _ in idx]
        for a, i in enumerate(idx):
            for j, num in self.rows[i]:
                b = pos.get(j)
                if b is not None:
                    m[a][b] = gmpy2.mpz(num)
        return m


def _matmul(a: list[list], b: list[list]) -> list[list]:
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    cols = [[b[r][c] for r in range(k)] for c in range(m)]
    out = []
    for i in range(n):
        ai = a[i]
        nz = [(r, x) for r, x in enumerate(ai) if x]
        out.append([sum((x * col[r] for r, x in nz), gmpy2.mpz(0)) for col in cols])
    return out


def _vecmat(v: list, m: list[list]) -> list:
    size = len(m[0]) if m else 0
    out = [gmpy2.mpz(0)] * size
    for i, x in enumerate(v):
        if not x:
            continue
        row = m[i]
        for j in range(size):
            if row[j]:
                out[j] += x * row[j]
    return out


def power_apply(vec: Sequence[int], matrix: list[list], n: int) -> list:
    """Numerators of ``vec @ matrix**n`` by binary powering (no reduction)."""
    v = [gmpy2.mpz(x) for x in vec]
    sq = matrix
    while n:
        if n & 1:
            v = _vecmat(v, sq)
        n >>= 1
        if n:
            sq = _matmul(sq, sq)
    return v


def evolve_scaled(kernel: ScaledKernel, vec: Sequence[int], n: int,
                  block: Sequence[int] | None = None) -> list:
    """Numerators of ``vec`` pushed ``n`` steps, over ``kernel.den**n``.

    With ``block`` the kernel is the substochastic restriction to those
    indices and ``vec`` is indexed by position within the block.
    """
    size = kernel.n if block is None else len(block)
    if n <= 4 * size or n <= 64:
        if block is None:
            v = list(vec)
            for _ in range(n):
                v = kernel.step(v)
            return v
        allowed = [False] * kernel.n
        for i in block:
            allowed[i] = True
        v = [0] * kernel.n
        for k, i in enumerate(block):
            v[i] = vec[k]
        for _ in range(n):
            v = kernel.step(v, allowed)
        return [v[i] if allowed[i] else 0 for i in block]
    return power_apply(vec, kernel.dense(block), n)
