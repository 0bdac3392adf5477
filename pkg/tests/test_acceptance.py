"""Acceptance gate: one numbered criterion per test, tolerances as stated.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import random
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from segchain.chain import Distribution, d_bar, limit_distribution, mixing_time, pair_tv, tv_distance, tv_sequence
from segchain.cli import fuzz_instance, random_chain
from segchain.coupling import (check_faithful, check_marginals, coupling_inequality_check, independent_coupling,
                               make_sticky, meeting_time_distribution, segregation_bound_check, tmix_upper_bound)
from segchain.formulas import (bd_confine_approx, bd_p00_approx, bd_sweep, f_sup, interior_mass_check,
                               kappa_experiment, tv_nb)
from segchain.meetflow import (build_flow_network, enumerate_trajectories, extract_coupling, max_flow,
                               optimal_meeting_probability)
from segchain.separation import boundary_sweep, brute_force_optimal_separation
from segchain.zoo import birth_death_chain, haggstrom_chain, nb_chain, two_state_chain

from conftest import tv_nb_direct

F = Fraction
FUZZ_SEED = 1


def limit_tv(z):
    c = z.chain
    return tv_distance(limit_distribution(c, c.point(z.x)), limit_distribution(c, c.point(z.y)))


@pytest.mark.acceptance(1, "strong duality: max-flow = 2 - S_T = extracted meeting probability, 200 chains")
def test_strong_duality_fuzz(detail):
    rows = [fuzz_instance(FUZZ_SEED, i, 3, 4, 6) for i in range(200)]
    sizes = {(r[1], r[2]) for r in rows}
    ok = [r for r in rows if r[5] == r[7] and F(r[5]) == 2 - F(r[6]) and r[8]]
    detail.append(f"{len(ok)}/200 exact")
    detail.append(f"{len(sizes)} (|S|, T) shapes")
    assert len(ok) == 200
    assert {n for n, _ in sizes} == {2, 3} and max(T for _, T in sizes) == 4


@pytest.mark.acceptance(2, "Haggstrom example: C_2 and limiting TV")
def test_haggstrom(detail):
    z7 = haggstrom_chain(F(7, 10))
    c2 = optimal_meeting_probability(z7.chain, "x", "y", 2)
    tv7 = limit_tv(z7)
    tv_root = float(limit_tv(haggstrom_chain(F(707107, 1000000))))
    c9 = optimal_meeting_probability(haggstrom_chain(F(9, 10)).chain, "x", "y", 2)
    detail.append(f"p=7/10: C_2={c2}, TV={tv7}")
    detail.append(f"p~sqrt2/2: |TV-(3-2sqrt2)|={abs(tv_root - (3 - 2 * math.sqrt(2))):.2e}")
    detail.append(f"p=9/10: C_2={c9}")
    assert c2 == 1 and tv7 == F(4, 25)
    assert abs(tv_root - (3 - 2 * math.sqrt(2))) <= 1e-5
    assert c9 < 1


@pytest.mark.acceptance(3, "NB total variation closed form, exact")
def test_nb_tv(detail):
    rng = random.Random(3)
    ps = sorted({F(rng.randint(1, 98), 99) for _ in range(40)})[:20]
    assert len(ps) == 20
    mism = [p for p in ps if tv_nb(p) != tv_nb_direct(p)]
    simpl = [m for m in range(1, 13) if tv_nb(F(m, m + 1)) != F(m, m + 1) ** (m + 1)]
    detail.append(f"{20 - len(mism)}/20 match direct sum")
    detail.append(f"p=m/(m+1), m<=12: {12 - len(simpl)}/12 equal p^(m+1)")
    assert not mism and not simpl


@pytest.mark.acceptance(4, "NB chain segregates x and y: coupling and limiting TV")
def test_nb_chain(detail):
    for m in (1, 4, 9):
        p = F(m, m + 1)
        z, k = nb_chain(m, p)
        marg = check_marginals(k, "x", "y", m + 2)[0]
        faithful = check_faithful(k, ("x", "y")).faithful
        met = meeting_time_distribution(k, m + 2, start=("x", "y"))[m + 2]
        tv = limit_tv(z)
        detail.append(f"m={m}: marginals={marg}, faithful={faithful}, P(tau<=m+2)={met}, TV={float(tv):.5f}")
        assert marg and not faithful and met == 1 and tv == p ** (m + 1)
    assert float(F(9, 10) ** 10) > 1 / math.e - 0.02


@pytest.mark.acceptance(5, "two-state example at T=10: S_T and TV(T)")
def test_two_state(detail):
    T = 10
    a = F(669, 10000)  # just below 1 - 2^(-1/10) = 0.066967...
    assert 2 * (1 - a) ** T > 1
    c = two_state_chain(a).chain
    r, seq = brute_force_optimal_separation(c, "0", "1", T)
    tv = pair_tv(c, "0", "1", T)
    af = 1 - 2 ** (-1 / T)
    tvf = (1 - 2 * af) ** T
    ref = (2 ** (1 - 1 / T) - 1) ** T
    detail.append(f"alpha={a}: S_T=2(1-alpha)^T {r.value == 2 * (1 - a) ** T}, TV=(1-2alpha)^T {tv == (1 - 2 * a) ** T}")
    detail.append(f"float TV={tvf:.6f} vs {ref:.6f}")
    assert r.value == 2 * (1 - a) ** T
    assert tv == (1 - 2 * a) ** T
    assert abs(tvf - ref) <= 1e-6 and abs(ref - 0.2374) < 1e-4


@pytest.mark.acceptance(6, "birth-and-death leading orders, L=6, alpha=1/1000")
def test_bd_lemma(detail):
    L, a = 6, F(1, 1000)
    ts = list(range(0, 5001, 500))
    interior = interior_mass_check(L, a, ts)
    res = bd_sweep(L, a, ts)
    b = [r for r in res if r.quantity == "p00"]
    cc = [r for r in res if r.quantity == "confine"]
    worst_b = max(r.residual for r in b) / (L * float(a))
    worst_c = max((r.residual / (r.k * float(a)) for r in cc if r.k), default=0)
    detail.append(f"max interior mass {float(max(m for _, m in interior)):.2e} (2alpha={float(2 * a)})")
    detail.append(f"(b) worst residual {worst_b:.3f}*L*alpha")
    detail.append(f"(c) worst residual {worst_c:.3f}*k*alpha")
    assert all(m <= 2 * a for _, m in interior)
    assert all(r.residual <= 8 * L * float(a) for r in b)
    # k = 0: both sides are (1 - alpha)^t; only float rounding separates them
    assert all(r.residual <= 8 * r.k * float(a) + 1e-12 for r in cc)
    assert bd_p00_approx(L, a, 0) == 1 and bd_confine_approx(2, a, 0) == 1


@pytest.mark.acceptance(7, "lower-bound construction: L=8, delta=0.05, T=40000, plus certified L=2")
def test_lower_bound(detail):
    r = kappa_experiment(8, 0.05, 40000, certify=False)
    target = math.exp(-(math.log(2) + 0.05) * 9 / 8)
    assert r.target == pytest.approx(target, abs=1e-15)
    detail.append(f"TV(40000)={r.tv_kept:.5f}, target {target:.5f}")
    detail.append(f"max constant separation {float(max(r.constant_separations)):.5f}")
    assert r.constants_below_one
    assert abs(r.tv_kept - target) <= 0.02
    for T in range(2, 7):
        small = kappa_experiment(2, 0.05, T, certify=True)
        assert small.meeting_certified and small.tv_kept <= 0.5
    detail.append("L=2, T=2..6: C_T = 1 certified by duality")


@pytest.mark.acceptance(8, "cyclic shifts and boundary sequences within 12*L*alpha")
def test_boundary_sweeps(detail):
    worst_shift = worst_excess = 0.0
    count = 0
    for L in (2, 3, 4):
        for T in range(1, 6):
            for a in (F(1, 100), F(1, 1000)):
                r = boundary_sweep(birth_death_chain(L, a).chain, L, T, a)
                assert not r.violations, r
                count += r.sequences
                worst_shift = max(worst_shift, float(r.max_shift_change / r.bound))
                worst_excess = max(worst_excess, float(r.max_excess_over_constant / r.bound))
    detail.append(f"{count} sequences, zero violations")
    detail.append(f"worst shift {worst_shift:.3f} and excess {worst_excess:.3f} of the 12*L*alpha bound")


@pytest.mark.acceptance(9, "universal bounds, t_mix bound, TV monotonicity, dbar submultiplicativity")
def test_universal_bounds(detail):
    rng = random.Random(FUZZ_SEED)
    checked = faithful_checked = 0
    chains = []
    for i in range(40):
        c = random_chain(rng, rng.randint(2, 3), 6)
        chains.append(c)
        x, y = rng.sample(c.states, 2)
        T = rng.randint(1, 4)
        net = build_flow_network(enumerate_trajectories(c, x, T), enumerate_trajectories(c, y, T))
        table = extract_coupling(net, max_flow(net)).to_trajectory_coupling(c)
        couplings = [(meeting_time_distribution(table, T), False)]
        for k in (independent_coupling(c), make_sticky(independent_coupling(c))):
            couplings.append((meeting_time_distribution(k, T, start=(x, y)), True))
        for mtd, faithful in couplings:
            for n in range(T + 1):
                assert segregation_bound_check(c, x, y, mtd, n).passed
                checked += 1
                if faithful:
                    assert coupling_inequality_check(c, x, y, mtd, n).passed
                    faithful_checked += 1
    for m in (1, 4, 9):
        z, k = nb_chain(m, F(m, m + 1))
        mtd = meeting_time_distribution(k, m + 2, start=("x", "y"))
        for n in range(m + 3):
            assert segregation_bound_check(z.chain, "x", "y", mtd, n).passed
            checked += 1
    for a in [F(1, 2), F(1, 3), F(1, 4), F(1, 8), F(1, 20), F(2, 3), F(9, 10)]:
        c = two_state_chain(a).chain
        t = mixing_time(c, Distribution.uniform(c.states))
        k = independent_coupling(c)
        for n in (1, 2, 3):
            alpha = min(meeting_time_distribution(k, n, start=s)[n] for s in [("0", "1"), ("1", "0")])
            assert tmix_upper_bound(n, alpha) >= t
    for c in chains:
        for x, y in product(c.states, repeat=2):
            seq = tv_sequence(c, x, y, 6)
            assert all(b <= a for a, b in zip(seq, seq[1:]))
        db = [d_bar(c, n) for n in range(5)]
        assert all(db[m + n] <= db[m] * db[n] for m in range(5) for n in range(5) if m + n < 5)
    detail.append(f"{checked} segregation-bound checks, {faithful_checked} faithful coupling-inequality checks")
    detail.append("t_mix bound on 7 two-state chains; TV/dbar laws on 40 chains")


@pytest.mark.acceptance(10, "f_sup against a 1e-6 grid search")
def test_f_sup_grid(detail):
    worst = 0.0
    for A in (0.01, 0.1, math.log(2), 1, 3):
        x = np.arange(1e-6, 1, 1e-6)
        grid = float(np.max(np.exp(-A / x) + np.exp(-A / (1 - x))))
        worst = max(worst, abs(grid - f_sup(A)))
    detail.append(f"max |grid - f_sup| = {worst:.2e}")
    assert worst <= 1e-6
