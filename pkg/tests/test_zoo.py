import math
from fractions import Fraction

import pytest

from segchain.chain import Distribution, d_bar, evolve, limit_distribution, tv_distance
from segchain.coupling import check_faithful, check_marginals, meeting_time_distribution
from segchain.errors import ChainError
from segchain.formulas import nb_pmf
from segchain.zoo import (birth_death_chain, haggstrom_chain, load_designated, lower_bound_alpha,
                          lower_bound_chain, nb_chain, sidecar_path, two_state_chain)

F = Fraction


def limit_tv(z):
    c = z.chain
    return tv_distance(limit_distribution(c, c.point(z.x)), limit_distribution(c, c.point(z.y)))


def test_two_state():
    z = two_state_chain(F(1, 2))
    assert evolve(z.chain, z.chain.point("0"), 1) == Distribution.uniform(["0", "1"])
    z = two_state_chain(F(1, 4))
    assert [d_bar(z.chain, T) for T in range(5)] == [F(1, 2) ** T for T in range(5)]
    with pytest.raises(ChainError):
        two_state_chain(0)


def test_two_state_critical_alpha_float():
    T = 10
    alpha = 1 - 2 ** (-1 / T)
    assert abs(2 * (1 - alpha) ** T - 1) < 1e-12
    tv = (1 - 2 * alpha) ** T
    assert abs(tv - (2 ** (1 - 1 / T) - 1) ** T) < 1e-12
    assert abs(tv - 0.2374) < 1e-4


def test_haggstrom_structure_and_landing():
    for p in (F(1, 5), F(7, 10), F(9, 10)):
        z = haggstrom_chain(p)
        c = z.chain
        assert len(c) == 6
        assert evolve(c, c.point("x"), 2)["a"] == 1 - 2 * p * (1 - p)
        assert evolve(c, c.point("y"), 2)["b"] == 1 - 2 * p * (1 - p)
        assert limit_tv(z) == (1 - 2 * p) ** 2
    assert limit_tv(haggstrom_chain(F(1, 2))) == 0
    assert limit_tv(haggstrom_chain(F(7, 10))) == F(4, 25)
    assert abs(float(limit_tv(haggstrom_chain(F(707107, 1000000)))) - (3 - 2 * math.sqrt(2))) < 1e-5
    for bad in (0, 1):
        with pytest.raises(ChainError):
            haggstrom_chain(bad)


def test_nb_chain_small_example():
    z, _ = nb_chain(1, F(1, 2))
    c = z.chain
    assert limit_distribution(c, c.point("x")).as_dict() == {"0": F(1, 2), "1": F(1, 4), ">": F(1, 4)}
    assert limit_distribution(c, c.point("y")).as_dict() == {"0": F(1, 4), "1": F(1, 4), ">": F(1, 2)}


@pytest.mark.parametrize("m, p", [(1, F(1, 3)), (2, F(1, 2)), (3, F(3, 4)), (4, F(4, 5)), (5, F(2, 7))])
def test_nb_chain_contract(m, p):
    z, k = nb_chain(m, p)
    c = z.chain
    assert len(c) == 3 * m + 5
    for start, r in (("x", 1), ("y", 2)):
        lim = limit_distribution(c, c.point(start))
        head = [nb_pmf(r, p, j) for j in range(m + 1)]
        assert [lim[str(j)] for j in range(m + 1)] == head
        assert lim[">"] == 1 - sum(head)
        # absorbed within m + 2 steps
        assert evolve(c, c.point(start), m + 2) == lim
    assert check_marginals(k, "x", "y", m + 3)[0]
    assert not check_faithful(k, ("x", "y")).faithful
    mtd = meeting_time_distribution(k, m + 2, start=("x", "y"))
    assert mtd[m + 2] == 1


def test_nb_chain_tv_limit():
    z, _ = nb_chain(4, F(4, 5))
    assert limit_tv(z) == F(1024, 3125)


def test_nb_chain_range():
    with pytest.raises(ChainError):
        nb_chain(0, F(1, 2))
    with pytest.raises(ChainError):
        nb_chain(2, 1)


def test_birth_death_rows():
    z = birth_death_chain(2, F(1, 10))
    assert z.chain.matrix() == [[F(9, 10), F(1, 10), 0], [F(1, 2), 0, F(1, 2)], [0, F(1, 10), F(9, 10)]]
    one = birth_death_chain(1, F(1, 3)).chain
    assert one.matrix() == two_state_chain(F(1, 3)).chain.matrix()
    with pytest.raises(ChainError):
        birth_death_chain(0, F(1, 2))


@pytest.mark.parametrize("L", [2, 3, 5, 8])
def test_birth_death_crossing_probability(L):
    from segchain.chain import MarkovChain
    c = birth_death_chain(L, F(1, 7)).chain
    # absorb at both ends, start from 1: the far side is reached with probability 1/L
    rows = [dict(r) for r in c.rows]
    rows[0] = {0: F(1)}
    rows[L] = {L: F(1)}
    absorbed = MarkovChain(c.states, rows)
    assert limit_distribution(absorbed, absorbed.point("1"))[str(L)] == F(1, L)


def test_lower_bound_alpha():
    a = lower_bound_alpha(1, 0.05, 100)
    assert abs(float(a) - 0.5 * (math.log(2) + 0.05) * 2 / 100) < 1e-14
    assert abs(float(a) - 0.00743) < 1e-5
    layered, a8 = lower_bound_chain(8, 0.05, 40000)
    assert abs(float(a8) - 8.36e-5) < 1e-7
    assert layered.horizon == 40000
    with pytest.raises(ChainError):
        lower_bound_alpha(1, 100.0, 10)


def test_designated_sidecar(tmp_path):
    import json
    z = haggstrom_chain(F(7, 10))
    path = tmp_path / "h.json"
    assert sidecar_path(path).name == "h.designated.json"
    sidecar_path(path).write_text(json.dumps(z.sidecar()))
    doc = load_designated(path)
    assert doc["designated"]["x"] == "x" and doc["params"]["p"] == "7/10"
    assert load_designated(tmp_path / "none.json") is None
