"""Named chains and couplings with their construction parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path

from .chain import MarkovChain, TimeLayeredChain, time_layer
from .coupling import MarkovianCouplingKernel
from .errors import ChainError
from .exact import as_prob, fmt, snap


@dataclass
class ZooChain:
    name: str
    chain: MarkovChain
    designated: dict[str, str]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for role, s in self.designated.items():
            if s not in self.chain.states:
                raise ChainError(f"designated state {role}={s!r} missing from chain")

    @property
    def x(self) -> str:
        return self.designated["x"]

    @property
    def y(self) -> str:
        return self.designated["y"]

    def sidecar(self) -> dict:
        params = {k: fmt(v) if isinstance(v, Fraction) else v for k, v in self.params.items()}
        return {"name": self.name, "designated": self.designated, "params": params}


def sidecar_path(chain_path: str | Path) -> Path:
    p = Path(chain_path)
    return p.with_name(p.stem + ".designated.json")


def load_designated(chain_path: str | Path) -> dict | None:
    p = sidecar_path(chain_path)
    if not p.exists():
        return None
    return json.loads(p.read_text())


def relabel(chain: MarkovChain, names: dict[str, str]) -> MarkovChain:
    states = [names.get(s, s) for s in chain.states]
    return MarkovChain(states, chain.rows)


def _flip(p: Fraction) -> MarkovChain:
    return MarkovChain.from_matrix(["0", "1"], [[1 - p, p], [p, 1 - p]])


def two_state_chain(alpha) -> ZooChain:
    alpha = as_prob(alpha)
    if alpha == 0:
        raise ChainError("alpha must be positive")
    return ZooChain("two-state", _flip(alpha), {"x": "0", "y": "1"}, {"alpha": alpha})


def haggstrom_chain(p) -> ZooChain:
    """Six states: the flip-``p`` two-state chain unrolled for two steps.

    ``x`` and ``y`` are the two generation-0 states and the absorbing
    generation-2 states are ``a`` (from state 0) and ``b`` (from state 1).
    """
    p = as_prob(p)
    if not 0 < p < 1:
        raise ChainError("p must lie strictly between 0 and 1")
    lab = TimeLayeredChain.label
    names = {lab("0", 0): "x", lab("1", 0): "y", lab("0", 2): "a", lab("1", 2): "b"}
    chain = relabel(time_layer(_flip(p), 2).layered, names)
    return ZooChain("haggstrom", chain, {"x": "x", "y": "y", "a": "a", "b": "b"}, {"p": p, "T": 2})


def nb_chain(m: int, p) -> tuple[ZooChain, MarkovianCouplingKernel]:
    """Chain whose absorption laws from x and y are NB(1, p) and NB(2, p).

    Both are cut at m: mass beyond lands in ``">"``.  Layout: x steps to
    ``v0``; from ``v{j}`` the walk moves right into the absorbing ``"{j}"``
    with probability 1-p and down to ``v{j+1}`` with probability p (``v{m}``
    down is ``">"``).  ``y`` heads a second column ``y, w1, ..., w{m}`` with
    the same rule, except moving right from the j-th entry enters ``v{j}``.

    The returned kernel is the delayed coupling: while Y is still in the
    second column, X copies Y's previous move, so the copies meet the moment
    Y turns right (or at ``">"``).
    """
    if m < 1:
        raise ChainError("m must be at least 1")
    p = as_prob(p)
    if not 0 < p < 1:
        raise ChainError("p must lie strictly between 0 and 1")
    q = 1 - p
    v = [f"v{j}" for j in range(m + 1)]
    w = ["y"] + [f"w{j}" for j in range(1, m + 1)]
    absorb = [str(j) for j in range(m + 1)] + [">"]
    states = ["x"] + v + w + absorb

    def below(col, j):
        return col[j + 1] if j < m else ">"

    trans = [("x", "v0", 1)]
    for j in range(m + 1):
        trans += [(v[j], str(j), q), (v[j], below(v, j), p)]
        trans += [(w[j], v[j], q), (w[j], below(w, j), p)]
    trans += [(s, s, 1) for s in absorb]
    chain = MarkovChain.from_transitions(states, trans)

    rows: dict = {("x", "y"): {("v0", below(w, 0)): p, ("v0", "v0"): q}}
    for j in range(1, m + 1):
        rows[(v[j - 1], w[j])] = {(v[j], below(w, j)): p, (v[j], v[j]): q}
    rows[(v[m], ">")] = {(">", ">"): 1}
    for j in range(m + 1):
        ys = chain.successors(v[j])
        rows[(v[j], v[j])] = {(str(j), t): r for t, r in ys.items()}
    for a in absorb:
        for b in states:
            rows[(a, b)] = {(a, t): r for t, r in chain.successors(b).items()}
    # pairs the coupling never visits still need a valid row
    for a, b in product(states, repeat=2):
        if (a, b) not in rows:
            sa, sb = chain.successors(a), chain.successors(b)
            rows[(a, b)] = {(s, t): r * u for s, r in sa.items() for t, u in sb.items()}
    kernel = MarkovianCouplingKernel(chain, rows)
    zc = ZooChain("nb", chain, {"x": "x", "y": "y", "beyond": ">"}, {"m": m, "p": p})
    return zc, kernel


def birth_death_chain(L: int, alpha) -> ZooChain:
    """States ``"0".."L"``: the ends leave with probability alpha, the interior
    steps left or right with probability 1/2."""
    if L < 1:
        raise ChainError("L must be at least 1")
    alpha = as_prob(alpha)
    if alpha == 0:
        raise ChainError("alpha must be positive")
    states = [str(i) for i in range(L + 1)]
    half = Fraction(1, 2)
    trans = [("0", "0", 1 - alpha), ("0", "1", alpha),
             (str(L), str(L), 1 - alpha), (str(L), str(L - 1), alpha)]
    for i in range(1, L):
        trans += [(str(i), str(i - 1), half), (str(i), str(i + 1), half)]
    chain = MarkovChain.from_transitions(states, trans)
    return ZooChain("birth-death", chain, {"x": "0", "y": str(L)}, {"L": L, "alpha": alpha})


def lower_bound_alpha(L: int, delta: float, T: int) -> Fraction:
    """alpha = (ln 2 + delta)(L + 1) / (2T), snapped to a short rational."""
    if L < 1 or T < 1:
        raise ChainError("L and T must be positive")
    if delta <= 0:
        raise ChainError("delta must be positive")
    a = 0.5 * (math.log(2) + delta) * (L + 1) / T
    if a >= 1:
        raise ChainError(f"alpha = {a:.6g} is not below 1; increase T")
    return snap(a, 1e-12)


def lower_bound_chain(L: int, delta: float, T: int) -> tuple[TimeLayeredChain, Fraction]:
    alpha = lower_bound_alpha(L, delta, T)
    return time_layer(birth_death_chain(L, alpha).chain, T), alpha

