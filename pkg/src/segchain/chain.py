"""Finite Markov chains with exact rational kernels.

Total variation machinery (``tv_distance``, ``d_bar``, ``d``), mixing times,
absorption limits and the time-layering construction that turns a
finite-horizon chain into a reducible chain with an absorbing final layer.
"""

from __future__ import annotations

import json
from fractions import Fraction
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .errors import BudgetExceeded, ChainError
from .exact import (ScaledKernel, as_fraction, as_prob, evolve_scaled, fmt,
                    lcm_of_denominators, ratio)


class MarkovChain:
    """Finite chain with string labels and a sparse exact kernel.

    ``rows[i]`` maps successor indices to positive Fractions; every row sums
    to exactly 1.  Instances are immutable.
    """

    def __init__(self, states: Sequence[str], rows: Sequence[Mapping[int, Fraction]]):
        states = tuple(str(s) for s in states)
        if len(set(states)) != len(states):
            raise ChainError("state labels must be unique")
        if len(rows) != len(states):
            raise ChainError("kernel has %d rows for %d states" % (len(rows), len(states)))
        clean = []
        for i, row in enumerate(rows):
            r = {}
            for j, p in row.items():
                if not 0 <= j < len(states):
                    raise ChainError(f"row {states[i]!r}: successor index {j} out of range")
                p = as_fraction(p)
                if p < 0:
                    raise ChainError(f"row {states[i]!r}: negative entry {p}")
                if p:
                    r[j] = p
            total = sum(r.values(), Fraction(0))
            if total != 1:
                raise ChainError(f"row {states[i]!r} sums to {fmt(total)}, not 1")
            clean.append(r)
        self.states = states
        self.index = {s: i for i, s in enumerate(states)}
        self.rows = tuple(clean)

    @classmethod
    def from_matrix(cls, states: Sequence[str], matrix: Sequence[Sequence]) -> "MarkovChain":
        rows = [{j: as_fraction(p) for j, p in enumerate(r) if as_fraction(p)} for r in matrix]
        return cls(states, rows)

    @classmethod
    def from_transitions(cls, states: Sequence[str], transitions: Iterable[tuple]) -> "MarkovChain":
        """Build from ``(from_label, to_label, p)`` triples; repeats accumulate."""
        index = {s: i for i, s in enumerate(states)}
        rows: list[dict[int, Fraction]] = [{} for _ in states]
        for a, b, p in transitions:
            try:
                i, j = index[a], index[b]
            except KeyError as exc:
                raise ChainError(f"unknown state {exc.args[0]!r}") from None
            rows[i][j] = rows[i].get(j, Fraction(0)) + as_fraction(p)
        return cls(states, rows)

    def __len__(self) -> int:
        return len(self.states)

    def __repr__(self) -> str:
        return f"MarkovChain({len(self.states)} states)"

    def __eq__(self, other) -> bool:
        return (isinstance(other, MarkovChain) and self.states == other.states
                and self.rows == other.rows)

    def __hash__(self) -> int:
        return hash(self.states)

    def P(self, a: str, b: str) -> Fraction:
        return self.rows[self.idx(a)].get(self.idx(b), Fraction(0))

    def idx(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise ChainError(f"unknown state {label!r}") from None

    def successors(self, label: str) -> dict[str, Fraction]:
        return {self.states[j]: p for j, p in self.rows[self.idx(label)].items()}

    def matrix(self) -> list[list[Fraction]]:
        n = len(self.states)
        return [[row.get(j, Fraction(0)) for j in range(n)] for row in self.rows]

    @cached_property
    def scaled(self) -> ScaledKernel:
        return ScaledKernel(self.rows)

    def is_absorbing(self, label: str) -> bool:
        i = self.idx(label)
        return self.rows[i].get(i) == 1

    def point(self, label: str) -> "Distribution":
        return Distribution.point(self.states, label)


class Distribution:
    """Exact probability vector aligned with a chain's state order."""

    __slots__ = ("states", "weights")

    def __init__(self, states: Sequence[str], weights: Sequence):
        ws = tuple(as_prob(w) for w in weights)
        if len(ws) != len(states):
            raise ChainError("distribution length does not match state count")
        if sum(ws, Fraction(0)) != 1:
            raise ChainError("distribution weights do not sum to 1")
        self.states = tuple(states)
        self.weights = ws

    @classmethod
    def _trusted(cls, states, weights) -> "Distribution":
        obj = object.__new__(cls)
        obj.states = tuple(states)
        obj.weights = tuple(weights)
        return obj

    @classmethod
    def point(cls, states: Sequence[str], label: str) -> "Distribution":
        if label not in states:
            raise ChainError(f"unknown state {label!r}")
        return cls._trusted(states, [Fraction(int(s == label)) for s in states])

    @classmethod
    def uniform(cls, states: Sequence[str]) -> "Distribution":
        n = len(states)
        return cls._trusted(states, [Fraction(1, n)] * n)

    @classmethod
    def from_dict(cls, states: Sequence[str], masses: Mapping[str, object]) -> "Distribution":
        unknown = set(masses) - set(states)
        if unknown:
            raise ChainError(f"unknown states {sorted(unknown)}")
        return cls(states, [masses.get(s, 0) for s in states])

    def __getitem__(self, label: str) -> Fraction:
        return self.weights[self.states.index(label)]

    def __len__(self) -> int:
        return len(self.weights)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Distribution) and self.states == other.states
                and self.weights == other.weights)

    def __repr__(self) -> str:
        body = ", ".join(f"{s}: {fmt(w)}" for s, w in zip(self.states, self.weights) if w)
        return "Distribution({" + body + "})"

    def as_dict(self, nonzero: bool = True) -> dict[str, Fraction]:
        return {s: w for s, w in zip(self.states, self.weights) if w or not nonzero}


def _check_aligned(chain: MarkovChain, dist: Distribution) -> None:
    if dist.states != chain.states:
        raise ChainError("distribution is not aligned with the chain's states")


def _scaled_start(chain: MarkovChain, start: Distribution) -> tuple[list[int], int]:
    den = lcm_of_denominators(start.weights)
    return [int(w * den) for w in start.weights], den


def evolve(chain: MarkovChain, start: Distribution, n: int) -> Distribution:
    """Distribution after ``n`` applications of the kernel."""
    _check_aligned(chain, start)
    if n < 0:
        raise ChainError("step count must be non-negative")
    vec, den0 = _scaled_start(chain, start)
    out = evolve_scaled(chain.scaled, vec, n)
    den = den0 * chain.scaled.den ** n
    return Distribution._trusted(chain.states, [ratio(v, den) for v in out])


def step_distributions(chain: MarkovChain, start: Distribution, n: int) -> list[Distribution]:
    """``[start, start P, ..., start P^n]`` in one forward pass."""
    _check_aligned(chain, start)
    vec, den = _scaled_start(chain, start)
    out = [start]
    for _ in range(n):
        vec = chain.scaled.step(vec)
        den *= chain.scaled.den
        out.append(Distribution._trusted(chain.states, [ratio(v, den) for v in vec]))
    return out


def tv_distance(mu: Distribution, nu: Distribution) -> Fraction:
    """sup_A |mu(A) - nu(A)|, as the one-sided sum over {mu >= nu}."""
    if len(mu) != len(nu):
        raise ChainError("dimension mismatch in tv_distance")
    return sum((a - b for a, b in zip(mu.weights, nu.weights) if a >= b), Fraction(0))


def tv_scaled(u: Sequence[int], v: Sequence[int]) -> int:
    """Numerator of the TV distance of two vectors over a shared denominator."""
    return sum(a - b for a, b in zip(u, v) if a > b)


def pair_tv(chain: MarkovChain, x: str, y: str, n: int) -> Fraction:
    """TV between P^n(x, .) and P^n(y, .)."""
    k = chain.scaled
    ex = [0] * len(chain)
    ey = [0] * len(chain)
    ex[chain.idx(x)] = 1
    ey[chain.idx(y)] = 1
    u = evolve_scaled(k, ex, n)
    v = evolve_scaled(k, ey, n)
    return ratio(tv_scaled(u, v), k.den ** n)


def tv_sequence(chain: MarkovChain, x: str, y: str, n: int) -> list[Fraction]:
    """[TV(P^t(x,.), P^t(y,.)) for t = 0..n]."""
    k = chain.scaled
    u = [0] * len(chain)
    v = [0] * len(chain)
    u[chain.idx(x)] = 1
    v[chain.idx(y)] = 1
    den = 1
    out = [ratio(tv_scaled(u, v), den)]
    for _ in range(n):
        u, v = k.step(u), k.step(v)
        den *= k.den
        out.append(ratio(tv_scaled(u, v), den))
    return out


def _all_rows(chain: MarkovChain, n: int) -> list[list[int]]:
    k = chain.scaled
    out = []
    for i in range(len(chain)):
        e = [0] * len(chain)
        e[i] = 1
        out.append(evolve_scaled(k, e, n))
    return out


def d_bar(chain: MarkovChain, n: int) -> Fraction:
    """max over state pairs of TV(P^n(x,.), P^n(y,.))."""
    rows = _all_rows(chain, n)
    best = max((tv_scaled(u, v) for u, v in product(rows, repeat=2)), default=0)
    return ratio(best, chain.scaled.den ** n)


def d(chain: MarkovChain, pi: Distribution, n: int) -> Fraction:
    """max over states of TV(P^n(x,.), pi)."""
    _check_aligned(chain, pi)
    return max(tv_distance(evolve(chain, chain.point(s), n), pi) for s in chain.states)


def mixing_time(chain: MarkovChain, pi: Distribution, cap: int = 10_000) -> int:
    """Smallest n with d(n) <= 1/4, searching n = 0..cap.

    ``pi`` must be the common limit of the chain; it is not computed here.
    """
    _check_aligned(chain, pi)
    k = chain.scaled
    vecs = []
    for i in range(len(chain)):
        e = [0] * len(chain)
        e[i] = 1
        vecs.append(e)
    pden = lcm_of_denominators(pi.weights)
    pnum = [int(w * pden) for w in pi.weights]
    den = 1
    for n in range(cap + 1):
        # compare max_x TV * 4 <= 1 over the common denominator den * pden
        worst = max(tv_scaled([a * pden for a in v], [b * den for b in pnum]) for v in vecs)
        if 4 * worst <= den * pden:
            return n
        vecs = [k.step(v) for v in vecs]
        den *= k.den
    raise BudgetExceeded(f"d(n) > 1/4 for all n <= {cap}")


class TimeLayeredChain:
    """A chain run for ``horizon`` steps, unrolled into generations.

    State ``(s, n)`` is labelled ``"s@n"``; layer-``horizon`` states are
    absorbing.  The layered chain is built lazily since it has
    ``|S| * (horizon + 1)`` states.
    """

    def __init__(self, base: MarkovChain, horizon: int):
        if horizon < 0:
            raise ChainError("horizon must be non-negative")
        self.base = base
        self.horizon = horizon

    @staticmethod
    def label(state: str, layer: int) -> str:
        return f"{state}@{layer}"

    @cached_property
    def layered(self) -> MarkovChain:
        base, T = self.base, self.horizon
        n = len(base)
        states = [self.label(s, t) for t in range(T + 1) for s in base.states]
        rows: list[dict[int, Fraction]] = []
        for t in range(T + 1):
            for i in range(n):
                if t == T:
                    rows.append({t * n + i: Fraction(1)})
                else:
                    rows.append({(t + 1) * n + j: p for j, p in base.rows[i].items()})
        return MarkovChain(states, rows)

    def layer_marginal(self, dist: Distribution, layer: int) -> Distribution:
        """Restrict a layered-chain distribution to one generation."""
        n = len(self.base)
        ws = dist.weights[layer * n:(layer + 1) * n]
        return Distribution(self.base.states, ws)


def time_layer(chain: MarkovChain, T: int) -> TimeLayeredChain:
    return TimeLayeredChain(chain, T)


def _closed_classes(chain: MarkovChain) -> list[set[int]]:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(chain)))
    g.add_edges_from((i, j) for i, row in enumerate(chain.rows) for j in row)
    cond = nx.condensation(g)
    return [set(cond.nodes[c]["members"]) for c in cond.nodes if cond.out_degree(c) == 0]


def _solve_left(matrix: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    """Solve x @ matrix = rhs exactly by Gauss-Jordan on the transpose."""
    n = len(rhs)
    a = [[matrix[j][i] for j in range(n)] + [rhs[i]] for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return [a[i][n] for i in range(n)]


def limit_distribution(chain: MarkovChain, start: Distribution) -> Distribution:
    """lim_n start P^n for chains whose closed classes are absorbing states.

    Raises ``ChainError`` when some closed class has two or more states,
    in which case the state-wise limit need not exist.
    """
    _check_aligned(chain, start)
    classes = _closed_classes(chain)
    for c in classes:
        if len(c) > 1:
            labels = sorted(chain.states[i] for i in c)
            raise ChainError(f"closed class {labels} is not a single absorbing state")
    absorbing = sorted(i for c in classes for i in c)
    absorbing_set = set(absorbing)
    transient = [i for i in range(len(chain)) if i not in absorbing_set]
    out = [Fraction(0)] * len(chain)
    for i in absorbing:
        out[i] += start.weights[i]
    mass_t = [start.weights[i] for i in transient]
    if transient and any(mass_t):
        pos = {s: k for k, s in enumerate(transient)}
        n = len(transient)
        i_minus_q = [[Fraction(int(a == b)) for b in range(n)] for a in range(n)]
        for a, i in enumerate(transient):
            for j, p in chain.rows[i].items():
                if j in pos:
                    i_minus_q[a][pos[j]] -= p
        # expected visits: v (I - Q) = mu_T
        visits = _solve_left(i_minus_q, mass_t)
        for a, i in enumerate(transient):
            if visits[a]:
                for j, p in chain.rows[i].items():
                    if j in absorbing_set:
                        out[j] += visits[a] * p
    return Distribution(chain.states, out)


# -- chain file format ---------------------------------------------------

def chain_to_dict(chain: MarkovChain) -> dict:
    return {
        "states": list(chain.states),
        "transitions": [
            {"from": chain.states[i], "to": chain.states[j], "p": fmt(p)}
            for i, row in enumerate(chain.rows) for j, p in sorted(row.items())
        ],
    }


def chain_from_dict(doc: Mapping) -> MarkovChain:
    try:
        states = doc["states"]
        trans = doc["transitions"]
    except (KeyError, TypeError):
        raise ChainError("chain document needs 'states' and 'transitions'") from None
    if not isinstance(states, list) or not all(isinstance(s, str) for s in states):
        raise ChainError("'states' must be an array of strings")
    triples = []
    for rec in trans:
        try:
            triples.append((rec["from"], rec["to"], as_fraction(str(rec["p"]))))
        except (KeyError, TypeError):
            raise ChainError(f"bad transition record {rec!r}") from None
    return MarkovChain.from_transitions(states, triples)


def load_chain(path: str | Path) -> MarkovChain:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ChainError(f"{path}: {exc}") from None
    return chain_from_dict(doc)


def save_chain(chain: MarkovChain, path: str | Path) -> None:
    Path(path).write_text(json.dumps(chain_to_dict(chain), indent=1) + "\n")


def path_probabilities(chain: MarkovChain, start: str, T: int,
                       cap: int | None = None) -> dict[tuple[str, ...], Fraction]:
    """All positive-probability length-(T+1) paths from ``start``.

    Paths come out in depth-first order with successors sorted by index.
    Raises ``BudgetExceeded`` once more than ``cap`` paths are produced.
    """
    rows, states = chain.rows, chain.states
    succ = [sorted(r.items()) for r in rows]
    out: dict[tuple[str, ...], Fraction] = {}
    stack = [((chain.idx(start),), Fraction(1))]
    while stack:
        path, p = stack.pop()
        if len(path) == T + 1:
            out[tuple(states[i] for i in path)] = p
            if cap is not None and len(out) > cap:
                raise BudgetExceeded(f"more than {cap} trajectories from {start!r} at T={T}")
            continue
        for j, q in reversed(succ[path[-1]]):
            stack.append((path + (j,), p * q))
    return out
