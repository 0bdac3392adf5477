"""Couplings of two copies of a chain.

Two representations: ``MarkovianCouplingKernel`` (a joint kernel on pair
states, optionally one per step) and ``TrajectoryCoupling`` (a finite table
of masses on pairs of whole paths).  Kernels convert to trajectory tables for
a finite horizon; the reverse direction loses information and is not offered.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

import mpmath

from .chain import MarkovChain, pair_tv, path_probabilities
from .errors import ChainError, InvariantViolation
from .exact import as_fraction, as_prob, fmt

Pair = tuple[str, str]
Trajectory = tuple[str, ...]


class MarkovianCouplingKernel:
    """Joint kernel on pair states ``(x, y)``.

    ``rows`` maps a pair to ``{successor_pair: mass}``.  Pass a list of such
    mappings as ``steps`` for a time-inhomogeneous coupling; step ``n`` then
    drives the move from time ``n`` to ``n + 1``.
    """

    def __init__(self, chain: MarkovChain, rows: Mapping[Pair, Mapping[Pair, object]] | None = None,
                 steps: Sequence[Mapping[Pair, Mapping[Pair, object]]] | None = None):
        if (rows is None) == (steps is None):
            raise ChainError("give exactly one of rows= or steps=")
        self.chain = chain
        tables = [rows] if rows is not None else list(steps)
        self._tables = tuple(self._clean(t) for t in tables)
        self.homogeneous = rows is not None

    def _clean(self, table) -> dict[Pair, dict[Pair, Fraction]]:
        known = set(self.chain.states)
        out = {}
        for pair, row in table.items():
            pair = tuple(pair)
            clean = {}
            for succ, p in row.items():
                succ = tuple(succ)
                if not set(pair) | set(succ) <= known:
                    raise ChainError(f"unknown state in row {pair} -> {succ}")
                p = as_prob(p)
                if p:
                    clean[succ] = clean.get(succ, Fraction(0)) + p
            if sum(clean.values(), Fraction(0)) != 1:
                raise ChainError(f"coupling row {pair} does not sum to 1")
            out[pair] = clean
        return out

    @property
    def steps(self) -> int | None:
        """Number of per-step tables, or None for a homogeneous kernel."""
        return None if self.homogeneous else len(self._tables)

    def row(self, n: int, pair: Pair) -> dict[Pair, Fraction]:
        if self.homogeneous:
            table = self._tables[0]
        elif n < len(self._tables):
            table = self._tables[n]
        else:
            raise ChainError(f"time-dependent kernel has no step {n}")
        try:
            return table[tuple(pair)]
        except KeyError:
            raise ChainError(f"coupling kernel has no row for {tuple(pair)} at step {n}") from None

    def pairs(self, n: int = 0) -> list[Pair]:
        table = self._tables[0 if self.homogeneous else n]
        return list(table)

    def tables(self):
        return self._tables


def independent_coupling(chain: MarkovChain) -> MarkovianCouplingKernel:
    """Product coupling: the two copies move independently."""
    rows = {}
    for a, b in product(chain.states, repeat=2):
        sa, sb = chain.successors(a), chain.successors(b)
        rows[(a, b)] = {(u, v): p * q for u, p in sa.items() for v, q in sb.items()}
    return MarkovianCouplingKernel(chain, rows)


def _reachable(kernel: MarkovianCouplingKernel, start: Pair, horizon: int | None):
    """Yield (step, pair) for every pair state reachable with positive probability."""
    if kernel.homogeneous:
        seen, stack = {tuple(start)}, [tuple(start)]
        while stack:
            pair = stack.pop()
            yield 0, pair
            for succ in kernel.row(0, pair):
                if succ not in seen:
                    seen.add(succ)
                    stack.append(succ)
        return
    last = kernel.steps if horizon is None else min(horizon, kernel.steps)
    frontier = {tuple(start)}
    for n in range(last):
        nxt = set()
        for pair in sorted(frontier):
            yield n, pair
            nxt.update(kernel.row(n, pair))
        frontier = nxt


@dataclass
class FaithfulnessResult:
    faithful: bool
    witness: tuple | None = None  # (step, pair, coordinate, successor, coupled prob, chain prob)

    def __bool__(self) -> bool:
        return self.faithful


def _row_faithful(chain: MarkovChain, n: int, pair: Pair, row: Mapping[Pair, Fraction]):
    mx: dict[str, Fraction] = defaultdict(Fraction)
    my: dict[str, Fraction] = defaultdict(Fraction)
    for (u, v), p in row.items():
        mx[u] += p
        my[v] += p
    for coord, marg, src in (("x", mx, pair[0]), ("y", my, pair[1])):
        want = chain.successors(src)
        for s in sorted(set(want) | set(marg)):
            if marg.get(s, Fraction(0)) != want.get(s, Fraction(0)):
                return (n, pair, coord, s, marg.get(s, Fraction(0)), want.get(s, Fraction(0)))
    return None


def check_faithful(kernel: MarkovianCouplingKernel, start: Pair | None = None,
                   horizon: int | None = None) -> FaithfulnessResult:
    """Does every row move each coordinate by the chain's own kernel?

    With ``start`` only pair states reachable from it are checked; otherwise
    every row present in the kernel is.
    """
    chain = kernel.chain
    if start is None:
        for n, table in enumerate(kernel.tables()):
            for pair, row in table.items():
                w = _row_faithful(chain, n, pair, row)
                if w:
                    return FaithfulnessResult(False, w)
        return FaithfulnessResult(True)
    for n, pair in _reachable(kernel, start, horizon):
        w = _row_faithful(chain, n, pair, kernel.row(n, pair))
        if w:
            return FaithfulnessResult(False, w)
    return FaithfulnessResult(True)


def make_sticky(kernel: MarkovianCouplingKernel, start: Pair | None = None) -> MarkovianCouplingKernel:
    """Glue the copies together from their first meeting on.

    Diagonal rows ``(s, s)`` are replaced by the synchronized move
    ``(s, s) -> (t, t)`` with probability ``P(s, t)``.  Only sound for
    faithful kernels; a non-faithful input raises ``InvariantViolation``.
    """
    res = check_faithful(kernel, start)
    if not res:
        raise InvariantViolation("make_sticky needs a faithful coupling", res.witness)
    chain = kernel.chain
    new_tables = []
    for table in kernel.tables():
        t = dict(table)
        for s in chain.states:
            t[(s, s)] = {(u, u): p for u, p in chain.successors(s).items()}
        new_tables.append(t)
    if kernel.homogeneous:
        return MarkovianCouplingKernel(chain, rows=new_tables[0])
    return MarkovianCouplingKernel(chain, steps=new_tables)


def pair_path_law(kernel: MarkovianCouplingKernel, x: str, y: str, T: int) -> dict[tuple[Pair, ...], Fraction]:
    """Exact law of the pair trajectory ((X_0,Y_0), ..., (X_T,Y_T))."""
    layer = {((x, y),): Fraction(1)}
    for n in range(T):
        nxt = {}
        for path, p in layer.items():
            for succ, q in kernel.row(n, path[-1]).items():
                nxt[path + (succ,)] = p * q
        layer = nxt
    return layer


@dataclass
class TrajectoryCoupling:
    """Masses ``p_xy`` on pairs of whole trajectories over ``[0, horizon]``."""

    chain: MarkovChain
    horizon: int
    pairs: dict[tuple[Trajectory, Trajectory], Fraction] = field(default_factory=dict)

    def total(self) -> Fraction:
        return sum(self.pairs.values(), Fraction(0))

    def x_marginal(self) -> dict[Trajectory, Fraction]:
        out: dict[Trajectory, Fraction] = defaultdict(Fraction)
        for (a, _), p in self.pairs.items():
            out[a] += p
        return dict(out)

    def y_marginal(self) -> dict[Trajectory, Fraction]:
        out: dict[Trajectory, Fraction] = defaultdict(Fraction)
        for (_, b), p in self.pairs.items():
            out[b] += p
        return dict(out)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_path", "y_path", "mass", "mass_float"])
            for (a, b), p in sorted(self.pairs.items()):
                w.writerow([" ".join(a), " ".join(b), fmt(p), float(p)])


def kernel_to_trajectories(kernel: MarkovianCouplingKernel, x: str, y: str, T: int) -> TrajectoryCoupling:
    table: dict[tuple[Trajectory, Trajectory], Fraction] = defaultdict(Fraction)
    for path, p in pair_path_law(kernel, x, y, T).items():
        table[(tuple(a for a, _ in path), tuple(b for _, b in path))] += p
    return TrajectoryCoupling(kernel.chain, T, dict(table))


def _nonzero(d: Mapping) -> dict:
    return {k: v for k, v in d.items() if v}


def check_marginals(coupling: TrajectoryCoupling | MarkovianCouplingKernel, x: str, y: str,
                    T: int | None = None) -> tuple[bool, tuple | None]:
    """Exact check that each coordinate's path law is the chain's path law.

    Returns ``(ok, witness)`` with witness ``(coordinate, path, got, want)``.
    """
    if isinstance(coupling, MarkovianCouplingKernel):
        if T is None:
            raise ChainError("a horizon is needed to check a kernel's marginals")
        coupling = kernel_to_trajectories(coupling, x, y, T)
    elif T is not None and T != coupling.horizon:
        raise ChainError("horizon mismatch")
    chain, T = coupling.chain, coupling.horizon
    for coord, got, start in (("x", coupling.x_marginal(), x), ("y", coupling.y_marginal(), y)):
        want = path_probabilities(chain, start, T)
        got = _nonzero(got)
        if got != want:
            for path in sorted(set(got) | set(want)):
                if got.get(path, 0) != want.get(path, 0):
                    return False, (coord, path, got.get(path, Fraction(0)), want.get(path, Fraction(0)))
    return True, None


def check_aggregate_marginals(kernel: MarkovianCouplingKernel, x: str, y: str, T: int) -> bool:
    """The one-step averaged conditions satisfied by every coupling.

    For each n < T: sum over y_n of P(X_{n+1}=u | pair) P(pair) equals
    P(X_n = x_n) P(x_n, u), and symmetrically for Y.  Necessary but weaker
    than :func:`check_marginals`.
    """
    chain = kernel.chain
    dist = {(x, y): Fraction(1)}
    for n in range(T):
        lhs_x: dict[tuple[str, str], Fraction] = defaultdict(Fraction)
        lhs_y: dict[tuple[str, str], Fraction] = defaultdict(Fraction)
        mass_x: dict[str, Fraction] = defaultdict(Fraction)
        mass_y: dict[str, Fraction] = defaultdict(Fraction)
        nxt: dict[Pair, Fraction] = defaultdict(Fraction)
        for pair, p in dist.items():
            mass_x[pair[0]] += p
            mass_y[pair[1]] += p
            for succ, q in kernel.row(n, pair).items():
                lhs_x[(pair[0], succ[0])] += p * q
                lhs_y[(pair[1], succ[1])] += p * q
                nxt[succ] += p * q
        for lhs, mass in ((lhs_x, mass_x), (lhs_y, mass_y)):
            want = {(a, b): m * q for a, m in mass.items() for b, q in chain.successors(a).items()}
            if _nonzero(lhs) != want:
                return False
        dist = dict(nxt)
    return True


@dataclass(frozen=True)
class MeetingTimeDistribution:
    """``cdf[t] = P(tau <= t)`` for t = 0..horizon."""

    cdf: tuple[Fraction, ...]

    def __post_init__(self):
        if any(b < a for a, b in zip(self.cdf, self.cdf[1:])) or (self.cdf and self.cdf[-1] > 1):
            raise InvariantViolation("meeting-time cdf must be non-decreasing and at most 1")

    @property
    def horizon(self) -> int:
        return len(self.cdf) - 1

    def __getitem__(self, t: int) -> Fraction:
        return self.cdf[t]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "cdf", "cdf_float"])
            for t, c in enumerate(self.cdf):
                w.writerow([t, fmt(c), float(c)])


def first_meeting(a: Sequence[str], b: Sequence[str]) -> int | None:
    return next((t for t, (u, v) in enumerate(zip(a, b)) if u == v), None)


def meeting_time_distribution(coupling: TrajectoryCoupling | MarkovianCouplingKernel,
                              T: int, start: Pair | None = None) -> MeetingTimeDistribution:
    """Exact P(tau <= t), t = 0..T, tau the first time the coordinates agree."""
    if isinstance(coupling, TrajectoryCoupling):
        if T != coupling.horizon:
            raise ChainError(f"horizon mismatch: coupling has {coupling.horizon}, asked {T}")
        hits = [Fraction(0)] * (T + 1)
        for (a, b), p in coupling.pairs.items():
            t = first_meeting(a, b)
            if t is not None:
                hits[t] += p
        cdf, acc = [], Fraction(0)
        for h in hits:
            acc += h
            cdf.append(acc)
        return MeetingTimeDistribution(tuple(cdf))
    if start is None:
        raise ChainError("a start pair is needed for the kernel form")
    if not coupling.homogeneous and coupling.steps < T:
        raise ChainError(f"horizon mismatch: kernel has {coupling.steps} steps, asked {T}")
    x, y = start
    met = Fraction(1) if x == y else Fraction(0)
    live = {} if x == y else {(x, y): Fraction(1)}
    cdf = [met]
    for n in range(T):
        nxt: dict[Pair, Fraction] = defaultdict(Fraction)
        for pair, p in live.items():
            for succ, q in coupling.row(n, pair).items():
                if succ[0] == succ[1]:
                    met += p * q
                else:
                    nxt[succ] += p * q
        live = dict(nxt)
        cdf.append(met)
    return MeetingTimeDistribution(tuple(cdf))


@dataclass
class BoundReport:
    n: int
    tv: Fraction
    bound: Fraction
    passed: bool

    def __str__(self) -> str:
        flag = "pass" if self.passed else "FAIL"
        return f"n={self.n} tv={fmt(self.tv)} bound={fmt(self.bound)} {flag}"


def coupling_inequality_check(chain: MarkovChain, x: str, y: str,
                              mtd: MeetingTimeDistribution, n: int) -> BoundReport:
    """TV(n) <= P(tau > n); valid for faithful couplings only."""
    tv = pair_tv(chain, x, y, n)
    bound = 1 - mtd[n]
    return BoundReport(n, tv, bound, tv <= bound)


def segregation_bound_check(chain: MarkovChain, x: str, y: str,
                            mtd: MeetingTimeDistribution, n: int) -> BoundReport:
    """TV(n) <= 1 - P(tau <= n)/2; valid for every coupling."""
    tv = pair_tv(chain, x, y, n)
    bound = 1 - mtd[n] / 2
    return BoundReport(n, tv, bound, tv <= bound)


def tmix_upper_bound(n: int, alpha) -> int:
    """n * ceil(log(1/4) / log(1 - alpha/2)), with an exact ceiling.

    The ceiling is the least k with (1 - alpha/2)**k <= 1/4.  A 60-digit
    estimate decides it unless the ratio sits within 1e-40 of an integer,
    in which case the two candidates are compared exactly.
    """
    alpha = as_prob(alpha)
    if alpha == 0:
        raise ChainError("alpha must be positive")
    base = 1 - alpha / 2
    with mpmath.workdps(60):
        est = mpmath.log(mpmath.mpf(1) / 4) / mpmath.log(
            mpmath.mpf(base.numerator) / base.denominator)
        nearest = int(mpmath.nint(est))
        if abs(est - nearest) > mpmath.mpf(10) ** -40:
            k = int(mpmath.ceil(est))
        else:
            k = nearest if base ** nearest <= Fraction(1, 4) else nearest + 1
    return n * k


# -- coupling kernel file format -------------------------------------------

def _table_to_records(table) -> list[dict]:
    return [{"from": list(a), "to": list(b), "p": fmt(p)}
            for a, row in sorted(table.items()) for b, p in sorted(row.items())]


def kernel_to_dict(kernel: MarkovianCouplingKernel) -> dict:
    if kernel.homogeneous:
        return {"transitions": _table_to_records(kernel.tables()[0])}
    return {"steps": [_table_to_records(t) for t in kernel.tables()]}


def _records_to_table(records) -> dict:
    table: dict[Pair, dict[Pair, Fraction]] = defaultdict(dict)
    for rec in records:
        try:
            a, b = tuple(rec["from"]), tuple(rec["to"])
            table[a][b] = table[a].get(b, Fraction(0)) + as_fraction(str(rec["p"]))
        except (KeyError, TypeError):
            raise ChainError(f"bad coupling record {rec!r}") from None
    return table


def kernel_from_dict(chain: MarkovChain, doc: Mapping) -> MarkovianCouplingKernel:
    if "transitions" in doc:
        return MarkovianCouplingKernel(chain, rows=_records_to_table(doc["transitions"]))
    if "steps" in doc:
        return MarkovianCouplingKernel(chain, steps=[_records_to_table(s) for s in doc["steps"]])
    raise ChainError("coupling document needs 'transitions' or 'steps'")


def load_kernel(chain: MarkovChain, path: str | Path) -> MarkovianCouplingKernel:
    try:
        return kernel_from_dict(chain, json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ChainError(f"{path}: {exc}") from None


def save_kernel(kernel: MarkovianCouplingKernel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(kernel_to_dict(kernel), indent=1) + "\n")
