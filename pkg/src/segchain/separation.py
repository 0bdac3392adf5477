"""Separating sequences and their separation values.

A separating sequence is a list of state subsets ``A_0..A_T``.  Its
separation from ``(x, y)`` is the probability that the copy from ``x`` stays
inside ``A_t`` at every time plus the probability that the copy from ``y``
stays outside at every time.  Optimal separation is 2 minus the optimal
meeting probability, which :mod:`segchain.meetflow` computes independently.

Internally subsets are bitmasks (bit ``i`` is state index ``i``) and
probability vectors are integer numerators over ``den**t``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .chain import MarkovChain
from .errors import BudgetExceeded, ChainError, InvariantViolation
from .exact import evolve_scaled, fmt, ratio

DEFAULT_BUDGET = int(os.environ.get("SEGCHAIN_ENUM_BUDGET", 2 ** 26))


@dataclass(frozen=True)
class SeparatingSequence:
    sets: tuple[frozenset[str], ...]

    def __post_init__(self):
        if not self.sets:
            raise ChainError("a separating sequence has at least one set")
        object.__setattr__(self, "sets", tuple(frozenset(s) for s in self.sets))

    @classmethod
    def constant(cls, subset: Iterable[str], T: int) -> "SeparatingSequence":
        s = frozenset(subset)
        return cls(tuple(s for _ in range(T + 1)))

    @property
    def horizon(self) -> int:
        return len(self.sets) - 1

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, t: int) -> frozenset[str]:
        return self.sets[t]

    def masks(self, chain: MarkovChain) -> list[int]:
        out = []
        for a in self.sets:
            m = 0
            for s in a:
                m |= 1 << chain.idx(s)
            out.append(m)
        return out

    @classmethod
    def from_masks(cls, chain: MarkovChain, masks: Sequence[int]) -> "SeparatingSequence":
        return cls(tuple(frozenset(s for i, s in enumerate(chain.states) if m >> i & 1)
                         for m in masks))

    def to_json(self, chain: MarkovChain | None = None) -> list[list[str]]:
        order = (lambda s: chain.idx(s)) if chain is not None else str
        return [sorted(a, key=order) for a in self.sets]


@dataclass(frozen=True)
class SeparationReport:
    value: Fraction
    summand_x: Fraction
    summand_y: Fraction

    @property
    def nontrivial(self) -> bool:
        return self.summand_x > 0 and self.summand_y > 0

    def __str__(self) -> str:
        kind = "non-trivial" if self.nontrivial else "trivial"
        return (f"S = {fmt(self.value)} ({float(self.value):.10g}) = "
                f"{fmt(self.summand_x)} + {fmt(self.summand_y)} [{kind}]")


def _restrict(vec: Sequence[int], mask: int, inside: bool = True) -> list[int]:
    return [v if ((mask >> i & 1) == inside) else 0 for i, v in enumerate(vec)]


def _summand_numerators(chain: MarkovChain, x: int, y: int, masks: Sequence[int]) -> tuple[int, int]:
    k = chain.scaled
    n = len(chain)
    v = [0] * n
    w = [0] * n
    v[x] = 1
    w[y] = 1
    v = _restrict(v, masks[0], True)
    w = _restrict(w, masks[0], False)
    for m in masks[1:]:
        v = _restrict(k.step(v), m, True)
        w = _restrict(k.step(w), m, False)
    return sum(v), sum(w)


def _report(num_x: int, num_y: int, den: int) -> SeparationReport:
    return SeparationReport(ratio(num_x + num_y, den), ratio(num_x, den), ratio(num_y, den))


def separation_value(chain: MarkovChain, x: str, y: str, seq: SeparatingSequence) -> SeparationReport:
    """Exact separation of ``seq`` for copies started at ``x`` and ``y``."""
    unknown = set().union(*seq.sets) - set(chain.states)
    if unknown:
        raise ChainError(f"sequence mentions unknown states {sorted(unknown)}")
    nx_, ny_ = _summand_numerators(chain, chain.idx(x), chain.idx(y), seq.masks(chain))
    return _report(nx_, ny_, chain.scaled.den ** seq.horizon)


def _submasks(mask: int) -> Iterator[int]:
    """Submasks of ``mask`` in increasing numeric order, 0 first."""
    sub = 0
    while True:
        yield sub
        if sub == mask:
            return
        sub = (sub - mask) & mask


def brute_force_optimal_separation(chain: MarkovChain, x: str, y: str, T: int,
                                   restrict_nontrivial: bool = False,
                                   budget: int = DEFAULT_BUDGET):
    """Maximize separation over all sequences of horizon ``T``.

    Depth-first over ``A_0, A_1, ...`` carrying both restricted vectors.
    Subsets only range over states either copy can occupy (other states
    never affect the value and are left out), children are visited in
    increasing bitmask order, and a branch is cut when its total remaining
    mass cannot beat the incumbent strictly.  The result is therefore the
    lexicographically smallest maximizing bitmask sequence.  The final set
    is chosen greedily (state kept iff the x-mass strictly exceeds the
    y-mass) unless only non-trivial sequences are allowed.

    Returns ``(report, sequence)``, or ``None`` when ``restrict_nontrivial``
    is set and no non-trivial sequence exists.  ``budget`` caps the number
    of evaluated final sets.
    """
    if T < 0:
        raise ChainError("horizon must be non-negative")
    k = chain.scaled
    n = len(chain)
    scale = [k.den ** (T - t) for t in range(T + 1)]
    best_val = -1
    best_masks: list[int] | None = None
    leaves = 0
    prefix: list[int] = []

    def leaf(pv, pw):
        nonlocal best_val, best_masks, leaves
        if not restrict_nontrivial:
            leaves += 1
            m, val = 0, 0
            for i in range(n):
                if pv[i] > pw[i]:
                    m |= 1 << i
                    val += pv[i]
                else:
                    val += pw[i]
            if val > best_val:
                best_val, best_masks = val, prefix + [m]
            return
        relevant = sum(1 << i for i in range(n) if pv[i] or pw[i])
        for m in _submasks(relevant):
            leaves += 1
            sv = sum(pv[i] for i in range(n) if m >> i & 1)
            sw = sum(pw[i] for i in range(n) if not m >> i & 1)
            if sv and sw and sv + sw > best_val:
                best_val, best_masks = sv + sw, prefix + [m]
        if leaves > budget:
            raise BudgetExceeded(f"separation search exceeded {budget} leaves")

    def visit(t, pv, pw):
        if t == T:
            leaf(pv, pw)
            if leaves > budget:
                raise BudgetExceeded(f"separation search exceeded {budget} leaves")
            return
        relevant = sum(1 << i for i in range(n) if pv[i] or pw[i])
        for m in _submasks(relevant):
            v = _restrict(pv, m, True)
            w = _restrict(pw, m, False)
            sv, sw = sum(v), sum(w)
            if restrict_nontrivial and not (sv and sw):
                continue
            if (sv + sw) * scale[t] <= best_val:
                continue
            prefix.append(m)
            visit(t + 1, k.step(v), k.step(w))
            prefix.pop()

    e_x = [0] * n
    e_y = [0] * n
    e_x[chain.idx(x)] = 1
    e_y[chain.idx(y)] = 1
    visit(0, e_x, e_y)
    if best_masks is None:
        return None
    seq = SeparatingSequence.from_masks(chain, best_masks)
    report = separation_value(chain, x, y, seq)
    if report.value != ratio(best_val, k.den ** T):
        raise InvariantViolation("search value disagrees with direct evaluation", seq)
    return report, seq


def optimal_separation(chain: MarkovChain, x: str, y: str, T: int,
                       budget: int = DEFAULT_BUDGET) -> Fraction:
    report, _ = brute_force_optimal_separation(chain, x, y, T, budget=budget)
    return report.value


def cyclic_shift(seq: SeparatingSequence, a: int) -> SeparatingSequence:
    """``A^a_t = A_{(t + a) mod (T + 1)}``."""
    T = seq.horizon
    if not 0 <= a <= T:
        raise ChainError(f"shift {a} outside 0..{T}")
    return SeparatingSequence(tuple(seq.sets[(t + a) % (T + 1)] for t in range(T + 1)))


def constant_separation(chain: MarkovChain, x: str, y: str, T: int, subset: Iterable[str]) -> SeparationReport:
    """Separation of the constant sequence ``A_t = subset`` via substochastic powers."""
    inside = sorted(chain.idx(s) for s in set(subset))
    outside = sorted(set(range(len(chain))) - set(inside))
    k = chain.scaled
    ix, iy = chain.idx(x), chain.idx(y)

    def confined(block, start):
        if start not in block:
            return 0
        e = [0] * len(block)
        e[block.index(start)] = 1
        return sum(evolve_scaled(k, e, T, block=block))

    return _report(confined(inside, ix), confined(outside, iy), k.den ** T)


def _bd_length(chain: MarkovChain) -> int:
    L = len(chain) - 1
    if L < 1 or chain.states != tuple(str(i) for i in range(L + 1)):
        raise ChainError("expected a birth-and-death chain on states '0'..'L'")
    return L


def constant_threshold_separation(chain: MarkovChain, L: int, T: int, k: int) -> SeparationReport:
    """Separation of 0 and L by the constant sequence ``{0, ..., k}``."""
    if _bd_length(chain) != L:
        raise ChainError(f"chain does not have L = {L}")
    if not 0 <= k < L:
        raise ChainError(f"threshold {k} outside 0..{L - 1}")
    return constant_separation(chain, "0", str(L), T, [str(i) for i in range(k + 1)])


def best_constant_threshold(chain: MarkovChain, L: int, T: int) -> tuple[int, SeparationReport]:
    """Best of the thresholds 0..L; k = L is the trivial sequence (value 1)."""
    best = (L, SeparationReport(Fraction(1), Fraction(1), Fraction(0)))
    for k in range(L):
        r = constant_threshold_separation(chain, L, T, k)
        if r.value > best[1].value:
            best = (k, r)
    return best


def boundary_structure_check(chain: MarkovChain, seq: SeparatingSequence, x: str, y: str) -> bool:
    """True iff ``x`` lies in every ``A_t`` and ``y`` in none."""
    for s in (x, y):
        chain.idx(s)
    return all(x in a and y not in a for a in seq.sets)


def enumerate_separations(chain: MarkovChain, x: str, y: str, T: int,
                          choices: Sequence[int] | None = None,
                          budget: int = DEFAULT_BUDGET) -> Iterator[tuple[tuple[int, ...], int, int]]:
    """Yield ``(masks, num_x, num_y)`` for every sequence over ``choices``.

    Numerators are over ``den**T``.  ``choices`` defaults to all subsets.
    """
    k = chain.scaled
    n = len(chain)
    if choices is None:
        choices = range(1 << n)
    choices = list(choices)
    if len(choices) ** (T + 1) > budget:
        raise BudgetExceeded(f"{len(choices)}**{T + 1} sequences exceed budget {budget}")
    e_x = [0] * n
    e_y = [0] * n
    e_x[chain.idx(x)] = 1
    e_y[chain.idx(y)] = 1
    prefix: list[int] = []

    def visit(t, pv, pw):
        for m in choices:
            v = _restrict(pv, m, True)
            w = _restrict(pw, m, False)
            prefix.append(m)
            if t == T:
                yield tuple(prefix), sum(v), sum(w)
            else:
                yield from visit(t + 1, k.step(v), k.step(w))
            prefix.pop()

    yield from visit(0, e_x, e_y)


@dataclass
class SweepReport:
    """Worst observed slacks of the cyclic-shift and constant-family bounds."""

    L: int
    T: int
    alpha: Fraction
    sequences: int
    max_shift_change: Fraction
    max_excess_over_constant: Fraction
    best_constant: Fraction
    bound: Fraction

    @property
    def violations(self) -> bool:
        return self.max_shift_change > self.bound or self.max_excess_over_constant > self.bound


def boundary_sweep(chain: MarkovChain, L: int, T: int, alpha) -> SweepReport:
    """Check the two 12*L*alpha inequalities over every boundary-respecting sequence.

    Every sequence with ``0 in A_t`` and ``L not in A_t`` is evaluated
    exactly.  Reports the largest ``|S^A - S^{A^a}|`` over all shifts and
    the largest ``S^A - max_k S^{k}`` over the constant thresholds.
    """
    _bd_length(chain)
    alpha = Fraction(alpha)
    free = [i for i in range(1, L)]
    choices = []
    for m in range(1 << len(free)):
        mask = 1  # state 0
        for b, i in enumerate(free):
            if m >> b & 1:
                mask |= 1 << i
        choices.append(mask)
    values = {masks: a + b for masks, a, b in enumerate_separations(chain, "0", str(L), T, choices)}
    den = chain.scaled.den ** T
    shift = 0
    for masks, v in values.items():
        for a in range(1, T + 1):
            shifted = masks[a:] + masks[:a]
            shift = max(shift, abs(v - values[shifted]))
    _, best = best_constant_threshold(chain, L, T)
    top = max(values.values())
    excess = Fraction(top, den) - best.value
    return SweepReport(L, T, alpha, len(values), ratio(shift, den), excess, best.value, 12 * L * alpha)


def load_sequence(path: str | Path) -> SeparatingSequence:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list) or not all(isinstance(a, list) for a in doc):
        raise ChainError("a sequence file is a list of per-time arrays of labels")
    return SeparatingSequence(tuple(frozenset(map(str, a)) for a in doc))


def save_sequence(seq: SeparatingSequence, path: str | Path, chain: MarkovChain | None = None) -> None:
    Path(path).write_text(json.dumps(seq.to_json(chain)) + "\n")
