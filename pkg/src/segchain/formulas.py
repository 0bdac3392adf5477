"""Closed forms, leading-order approximations, and the kappa experiment.

Exact quantities come back as Fractions; asymptotic ones as floats with the
correction terms dropped.  Sweeps pair each approximation with an exact
value so the dropped term shows up as a measured residual.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .chain import pair_tv
from .errors import BudgetExceeded, ChainError, InvariantViolation
from .exact import as_prob, evolve_scaled, fmt, ratio
from .meetflow import verify_duality
from .separation import constant_threshold_separation
from .zoo import birth_death_chain, lower_bound_alpha

FLOAT_TOL = 1e-12


# -- negative binomial ------------------------------------------------------

def nb_pmf(r: int, p, k: int) -> Fraction:
    """P(k successes before the r-th failure), r in {1, 2}."""
    p = as_prob(p)
    if r not in (1, 2):
        raise ChainError(f"unsupported r = {r}")
    if p == 1:
        raise ChainError("p must be below 1")
    if k < 0:
        return Fraction(0)
    if r == 1:
        return p ** k * (1 - p)
    return (k + 1) * p ** k * (1 - p) ** 2


def tv_nb(p) -> Fraction:
    """TV(NB(1, p), NB(2, p)) in closed form.

    The first pmf dominates exactly for k <= floor(p / (1 - p)), which
    telescopes to (k* + 1)(1 - p) p^(k* + 1).
    """
    p = as_prob(p)
    if p == 1:
        raise ChainError("p must be below 1")
    k = math.floor(p / (1 - p))
    return (k + 1) * (1 - p) * p ** (k + 1)


# -- endpoint vs midpoint envelope -------------------------------------------

def f_A(A: float, x: float) -> float:
    return math.exp(-A / x) + math.exp(-A / (1 - x))


def f_sup(A: float) -> float:
    """sup over 0 < x < 1 of f_A(x): the endpoint or the midpoint branch."""
    if A <= 0:
        raise ChainError("A must be positive")
    return max(math.exp(-A), 2 * math.exp(-2 * A))


# -- birth-and-death leading orders -------------------------------------------

def bd_p00_approx(L: int, alpha: float, t: int) -> float:
    return 0.5 + 0.5 * (1 - 2 * float(alpha) / L) ** t


def bd_tv_approx(L: int, alpha: float, t: int) -> float:
    return (1 - 2 * float(alpha) / L) ** t


def bd_confine_approx(k: int, alpha: float, t: int) -> float:
    """Leading order of P(X stays in {0..k} up to time t | X_0 = 0)."""
    return (1 - float(alpha) / (k + 1)) ** t


def best_constant_separation_bound(L: int, alpha: float, T: int) -> float:
    return max(1.0, f_sup(float(alpha) * T / (L + 1)))


def tv_target(L: int, delta: float) -> float:
    """Limiting TV of the lower-bound construction: exp(-(ln 2 + delta)(L + 1)/L)."""
    return math.exp(-(math.log(2) + delta) * (L + 1) / L)


# -- exact birth-and-death quantities ----------------------------------------

def bd_distribution(chain, start: str, t: int) -> list[Fraction]:
    k = chain.scaled
    e = [0] * len(chain)
    e[chain.idx(start)] = 1
    den = k.den ** t
    return [ratio(v, den) for v in evolve_scaled(k, e, t)]


def bd_confine_exact(chain, k: int, t: int) -> Fraction:
    block = list(range(k + 1))
    e = [1] + [0] * k
    sc = chain.scaled
    return ratio(sum(evolve_scaled(sc, e, t, block=block)), sc.den ** t)


@dataclass
class Residual:
    quantity: str
    L: int
    alpha: Fraction
    k: int | None
    t: int
    exact: Fraction
    approx: float
    envelope: float

    @property
    def residual(self) -> float:
        return abs(float(self.exact) - self.approx)

    @property
    def within(self) -> bool:
        return self.residual <= self.envelope + FLOAT_TOL

    def row(self) -> list:
        return [self.quantity, self.L, fmt(self.alpha), "" if self.k is None else self.k, self.t,
                fmt(self.exact), repr(self.approx), repr(self.residual), repr(self.envelope)]


RESIDUAL_HEADER = ["quantity", "L", "alpha", "k", "t", "exact", "approx", "residual", "envelope"]
ENVELOPE_C = 8  # empirical constant in front of L*alpha and k*alpha


def bd_sweep(L: int, alpha, ts: Iterable[int], ks: Sequence[int] | None = None) -> list[Residual]:
    """Exact vs leading order for P^t(0,0), TV(t) and confinement below k."""
    alpha = as_prob(alpha)
    chain = birth_death_chain(L, alpha).chain
    ks = list(range(L)) if ks is None else list(ks)
    out = []
    for t in ts:
        p0 = bd_distribution(chain, "0", t)
        pL = bd_distribution(chain, str(L), t)
        tv = sum((a - b for a, b in zip(p0, pL) if a > b), Fraction(0))
        env = ENVELOPE_C * L * float(alpha)
        out.append(Residual("p00", L, alpha, None, t, p0[0], bd_p00_approx(L, alpha, t), env))
        out.append(Residual("tv", L, alpha, None, t, tv, bd_tv_approx(L, alpha, t), env))
        for k in ks:
            out.append(Residual("confine", L, alpha, k, t, bd_confine_exact(chain, k, t),
                                bd_confine_approx(k, alpha, t), ENVELOPE_C * k * float(alpha)))
    return out


def interior_mass_check(L: int, alpha, ts: Iterable[int]) -> list[tuple[int, Fraction]]:
    """Largest interior mass of P^t(0, .) per t; each must be at most 2 alpha."""
    alpha = as_prob(alpha)
    chain = birth_death_chain(L, alpha).chain
    out = []
    for t in ts:
        dist = bd_distribution(chain, "0", t)
        out.append((t, max(dist[1:L], default=Fraction(0))))
    return out


def nb_sweep(ps: Iterable) -> list[list]:
    """tv_nb against p**(1/(1-p)), which it equals when 1/(1-p) is an integer."""
    rows = []
    for p in ps:
        p = as_prob(p)
        exact = tv_nb(p)
        approx = float(p) ** (1 / (1 - float(p)))
        rows.append([fmt(p), fmt(exact), repr(float(exact)), repr(approx), repr(abs(float(exact) - approx))])
    return rows


NB_HEADER = ["p", "tv_exact", "tv_float", "p_pow", "residual"]


def write_csv(path: str | Path, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- kappa experiment ------------------------------------------------------------

@dataclass
class KappaReport:
    chain_id: str
    x: str
    y: str
    T: int
    alpha: Fraction
    tv_exact: Fraction
    tv_kept: float
    target: float
    constant_separations: list[Fraction]
    meeting_certified: bool
    evidence: str
    kappa: Fraction = Fraction(1, 2)

    @property
    def constants_below_one(self) -> bool:
        return all(v < 1 for v in self.constant_separations)

    def __str__(self) -> str:
        best = max(self.constant_separations)
        return (f"{self.chain_id}: TV({self.T}) = {self.tv_kept:.6f} (target {self.target:.6f}, "
                f"kappa {float(self.kappa)}); best constant separation {float(best):.6f}; "
                f"{self.evidence}")


def kappa_experiment(L: int, delta: float, T: int, certify: bool | None = None,
                     cap: int = 100_000) -> KappaReport:
    """Retained TV of the time-layered birth-and-death construction at horizon T.

    Meeting is certified only by the full duality pipeline, which needs every
    trajectory enumerated; ``certify=None`` tries it when (L+1)**T <= cap.
    Otherwise the report rests on the constant-threshold family alone.
    """
    alpha = lower_bound_alpha(L, delta, T)
    chain = birth_death_chain(L, alpha).chain
    x, y = "0", str(L)
    tv = pair_tv(chain, x, y, T)
    consts = [constant_threshold_separation(chain, L, T, k).value for k in range(L)]
    if certify is None:
        certify = (L + 1) ** T <= cap
    certified = False
    evidence = "constant-family evidence only"
    if certify:
        try:
            rep = verify_duality(chain, x, y, T, cap=cap)
        except BudgetExceeded:
            evidence = "duality budget exceeded; constant-family evidence only"
        else:
            certified = rep.max_flow == 1
            evidence = ("meeting certified: C_T = 1 = 2 - S_T" if certified
                        else f"duality verified but C_T = {fmt(rep.max_flow)} < 1")
    report = KappaReport(f"birth-death L={L} alpha={fmt(alpha)}", x, y, T, alpha, tv, float(tv),
                         tv_target(L, delta), consts, certified, evidence)
    if certified and tv > Fraction(1, 2):
        raise InvariantViolation("certified meeting but TV above 1/2", report)
    return report
