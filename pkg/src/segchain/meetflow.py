"""Optimal meeting probability as a max-flow over trajectory pairs.

Nodes: a source, one node per trajectory of each copy, a sink.  Source arcs
carry the x-trajectory probabilities, sink arcs the y-trajectory
probabilities, and an arc of capacity 1 joins every pair of trajectories that
occupy the same state at the same time.  The max-flow value is the optimal
meeting probability over ``[0, T]``; a maximum flow is turned into a coupling
by pairing along the flow and running the leftovers independently.
"""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .chain import MarkovChain, path_probabilities
from .coupling import (TrajectoryCoupling, check_marginals, meeting_time_distribution,
                       segregation_bound_check)
from .errors import ChainError, InvariantViolation
from .exact import fmt, lcm_of_denominators
from .separation import DEFAULT_BUDGET, SeparatingSequence, brute_force_optimal_separation

DEFAULT_TRAJECTORY_CAP = int(os.environ.get("SEGCHAIN_TRAJECTORY_CAP", 200_000))

Trajectory = tuple[str, ...]


@dataclass
class TrajectorySet:
    start: str
    horizon: int
    paths: list[Trajectory]
    probs: list[Fraction]

    def __len__(self) -> int:
        return len(self.paths)


def enumerate_trajectories(chain: MarkovChain, start: str, T: int,
                           cap: int = DEFAULT_TRAJECTORY_CAP) -> TrajectorySet:
    law = path_probabilities(chain, start, T, cap=cap)
    return TrajectorySet(start, T, list(law), list(law.values()))


@dataclass
class FlowNetwork:
    """Source -> x-trajectories -> y-trajectories -> sink.

    ``arcs`` lists the middle arcs as ``(i, j)`` index pairs into
    ``xs.paths`` and ``ys.paths``; each has capacity 1.
    """

    xs: TrajectorySet
    ys: TrajectorySet
    arcs: list[tuple[int, int]]

    def node_count(self) -> int:
        return len(self.xs) + len(self.ys) + 2

    def to_dict(self) -> dict:
        nodes = ["source", "sink"]
        nodes += ["x:" + " ".join(p) for p in self.xs.paths]
        nodes += ["y:" + " ".join(p) for p in self.ys.paths]
        arcs = [{"from": "source", "to": f"x{i}", "cap": fmt(p)} for i, p in enumerate(self.xs.probs)]
        arcs += [{"from": f"x{i}", "to": f"y{j}", "cap": "1"} for i, j in self.arcs]
        arcs += [{"from": f"y{j}", "to": "sink", "cap": fmt(p)} for j, p in enumerate(self.ys.probs)]
        return {"nodes": nodes, "arcs": arcs}


def build_flow_network(xs: TrajectorySet, ys: TrajectorySet) -> FlowNetwork:
    if xs.horizon != ys.horizon:
        raise ChainError(f"horizon mismatch: {xs.horizon} vs {ys.horizon}")
    at: dict[tuple[int, str], set[int]] = defaultdict(set)
    for j, path in enumerate(ys.paths):
        for t, s in enumerate(path):
            at[(t, s)].add(j)
    arcs = []
    for i, path in enumerate(xs.paths):
        hit: set[int] = set()
        for t, s in enumerate(path):
            hit |= at.get((t, s), set())
        arcs.extend((i, j) for j in sorted(hit))
    return FlowNetwork(xs, ys, arcs)


class _Dinic:
    """Blocking-flow max-flow on integer capacities."""

    def __init__(self, n: int):
        self.n = n
        self.head: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add(self, u: int, v: int, c: int) -> int:
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)
        return len(self.to) - 2

    def _levels(self, s: int, t: int):
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def run(self, s: int, t: int) -> int:
        total = 0
        to, cap, head = self.to, self.cap, self.head
        while (level := self._levels(s, t)) is not None:
            it = [0] * self.n
            while True:
                # iterative DFS for one augmenting path in the level graph
                path: list[int] = []
                u = s
                while u != t:
                    edges = head[u]
                    while it[u] < len(edges):
                        e = edges[it[u]]
                        v = to[e]
                        if cap[e] > 0 and level[v] == level[u] + 1:
                            break
                        it[u] += 1
                    else:
                        if u == s:
                            break
                        level[u] = -1  # dead end
                        e = path.pop()
                        u = to[e ^ 1]
                        it[u] += 1
                        continue
                    path.append(e)
                    u = v
                if u != t:
                    break
                push = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= push
                    cap[e ^ 1] += push
                total += push
        return total


@dataclass
class FlowResult:
    value: Fraction
    flows: dict[tuple[int, int], Fraction]
    source_flow: list[Fraction]
    sink_flow: list[Fraction]


def max_flow(net: FlowNetwork) -> FlowResult:
    """Exact maximum flow, solved over integers after a common scaling."""
    nx_, ny_ = len(net.xs), len(net.ys)
    scale = lcm_of_denominators(net.xs.probs + net.ys.probs)
    src, snk = nx_ + ny_, nx_ + ny_ + 1
    g = _Dinic(nx_ + ny_ + 2)
    src_edges = [g.add(src, i, int(p * scale)) for i, p in enumerate(net.xs.probs)]
    mid_edges = [g.add(i, nx_ + j, scale) for i, j in net.arcs]
    snk_edges = [g.add(nx_ + j, snk, int(p * scale)) for j, p in enumerate(net.ys.probs)]
    total = g.run(src, snk)

    def used(e):
        return Fraction(g.cap[e ^ 1], scale)

    flows = {arc: used(e) for arc, e in zip(net.arcs, mid_edges) if g.cap[e ^ 1]}
    result = FlowResult(Fraction(total, scale), flows,
                        [used(e) for e in src_edges], [used(e) for e in snk_edges])
    check_flow(net, result)
    return result


def check_flow(net: FlowNetwork, flow: FlowResult) -> None:
    """Capacity and conservation at every node; raises on violation."""
    out_x = [Fraction(0)] * len(net.xs)
    in_y = [Fraction(0)] * len(net.ys)
    arcset = set(net.arcs)
    for (i, j), f in flow.flows.items():
        if (i, j) not in arcset or not 0 <= f <= 1:
            raise InvariantViolation("middle arc flow out of range", (i, j, f))
        out_x[i] += f
        in_y[j] += f
    for i, (f, c) in enumerate(zip(flow.source_flow, net.xs.probs)):
        if not 0 <= f <= c or f != out_x[i]:
            raise InvariantViolation("conservation or capacity broken at x node", i)
    for j, (f, c) in enumerate(zip(flow.sink_flow, net.ys.probs)):
        if not 0 <= f <= c or f != in_y[j]:
            raise InvariantViolation("conservation or capacity broken at y node", j)
    if sum(flow.source_flow, Fraction(0)) != flow.value:
        raise InvariantViolation("flow value does not match source outflow")


def optimal_meeting_probability(chain: MarkovChain, x: str, y: str, T: int,
                                cap: int = DEFAULT_TRAJECTORY_CAP) -> Fraction:
    """C_T(x, y): the largest P(X_t = Y_t for some t <= T) over all couplings."""
    net = build_flow_network(enumerate_trajectories(chain, x, T, cap),
                             enumerate_trajectories(chain, y, T, cap))
    return max_flow(net).value


@dataclass
class CouplingPlan:
    """A flow turned into a coupling.

    Pairs ``(x, y)`` get ``paired[(x, y)]`` directly; what is left of each
    trajectory is matched independently, ``residual_x * residual_y / (1 - F)``.
    """

    net: FlowNetwork
    paired: dict[tuple[int, int], Fraction]
    residual_x: list[Fraction]
    residual_y: list[Fraction]
    total_flow: Fraction

    def mass(self, i: int, j: int) -> Fraction:
        m = self.paired.get((i, j), Fraction(0))
        if self.total_flow < 1:
            m += self.residual_x[i] * self.residual_y[j] / (1 - self.total_flow)
        return m

    def meeting_probability(self) -> Fraction:
        """Joint mass on intersecting pairs, summed over the middle arcs."""
        return sum((self.mass(i, j) for i, j in self.net.arcs), Fraction(0))

    def to_trajectory_coupling(self, chain: MarkovChain) -> TrajectoryCoupling:
        xs, ys = self.net.xs, self.net.ys
        table = {}
        if self.total_flow < 1:
            rest = 1 - self.total_flow
            for i, rx in enumerate(self.residual_x):
                if rx:
                    for j, ry in enumerate(self.residual_y):
                        if ry:
                            table[(xs.paths[i], ys.paths[j])] = rx * ry / rest
        for (i, j), q in self.paired.items():
            key = (xs.paths[i], ys.paths[j])
            table[key] = table.get(key, Fraction(0)) + q
        return TrajectoryCoupling(chain, xs.horizon, table)

    def to_csv(self, path: str | Path) -> None:
        xs, ys = self.net.xs, self.net.ys
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_path", "y_path", "mass", "mass_float"])
            for i in range(len(xs)):
                for j in range(len(ys)):
                    m = self.mass(i, j)
                    if m:
                        w.writerow([" ".join(xs.paths[i]), " ".join(ys.paths[j]), fmt(m), float(m)])


def extract_coupling(net: FlowNetwork, flow: FlowResult) -> CouplingPlan:
    paired = dict(flow.flows)
    out_x = [Fraction(0)] * len(net.xs)
    in_y = [Fraction(0)] * len(net.ys)
    for (i, j), q in paired.items():
        out_x[i] += q
        in_y[j] += q
    rx = [p - o for p, o in zip(net.xs.probs, out_x)]
    ry = [p - o for p, o in zip(net.ys.probs, in_y)]
    if min(rx + ry, default=0) < 0:
        raise InvariantViolation("flow exceeds a trajectory probability")
    F = sum(paired.values(), Fraction(0))
    if sum(rx, Fraction(0)) != 1 - F or sum(ry, Fraction(0)) != 1 - F:
        raise InvariantViolation("residual masses do not sum to 1 - F")
    return CouplingPlan(net, paired, rx, ry, F)


@dataclass
class DualityReport:
    x: str
    y: str
    T: int
    max_flow: Fraction
    separation: Fraction
    meeting_probability: Fraction
    sequence: SeparatingSequence
    checks: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.max_flow == 2 - self.separation == self.meeting_probability

    def __str__(self) -> str:
        return (f"T={self.T} ({self.x},{self.y}): C_T = {fmt(self.max_flow)}  "
                f"S_T = {fmt(self.separation)}  2 - S_T = {fmt(2 - self.separation)}  "
                f"extracted meeting probability = {fmt(self.meeting_probability)}")


def verify_duality(chain: MarkovChain, x: str, y: str, T: int,
                   cap: int = DEFAULT_TRAJECTORY_CAP, budget: int = DEFAULT_BUDGET,
                   bound_checks: bool = True) -> DualityReport:
    """Compute C_T by max-flow and S_T by search, and demand C_T = 2 - S_T.

    The extracted coupling is also checked for exact marginals, and its
    meeting probability is measured independently from the coupling table.
    Raises ``InvariantViolation`` when any identity fails.
    """
    net = build_flow_network(enumerate_trajectories(chain, x, T, cap),
                             enumerate_trajectories(chain, y, T, cap))
    flow = max_flow(net)
    plan = extract_coupling(net, flow)
    table = plan.to_trajectory_coupling(chain)
    ok, witness = check_marginals(table, x, y)
    if not ok:
        raise InvariantViolation("extracted coupling has wrong marginals", witness)
    mtd = meeting_time_distribution(table, T)
    report_sep, seq = brute_force_optimal_separation(chain, x, y, T, budget=budget)
    report = DualityReport(x, y, T, flow.value, report_sep.value, mtd[T], seq)
    if plan.meeting_probability() != mtd[T]:
        raise InvariantViolation("meeting probability differs between plan and table", report)
    if bound_checks:
        for n in range(T + 1):
            b = segregation_bound_check(chain, x, y, mtd, n)
            if not b.passed:
                raise InvariantViolation(f"segregation bound fails at n={n}", b)
        report.checks.append("segregation-bound")
    report.checks.append("marginals")
    if not report.holds:
        raise InvariantViolation("strong duality fails", report)
    return report


def save_network(net: FlowNetwork, path: str | Path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1) + "\n")
