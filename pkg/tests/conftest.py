"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the package's scaled-integer engine:
plain Fraction matrices, multiplied the textbook way.
"""

from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import strategies as st

from segchain.chain import MarkovChain
from segchain.formulas import nb_pmf

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one numbered acceptance criterion")


@pytest.fixture
def detail(request):
    """Free-text evidence shown on the criterion's summary line."""
    marker = request.node.get_closest_marker("acceptance")
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "detail": []})
    return entry["detail"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    # the call phase decides, but a failed setup counts too
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "detail": []})
    entry["passed"] = entry.get("passed", True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        status = {True: "PASS", False: "FAIL"}.get(e.get("passed"), "NOT RUN")
        line = f"criterion {n:2d}: {status}  {e['title']}"
        if e["detail"]:
            line += "  [" + "; ".join(e["detail"]) + "]"
        terminalreporter.write_line(line)


def mat_mul(a, b):
    return [[sum((a[i][k] * b[k][j] for k in range(len(b))), Fraction(0)) for j in range(len(b[0]))]
            for i in range(len(a))]


def mat_pow(m, n):
    size = len(m)
    out = [[Fraction(int(i == j)) for j in range(size)] for i in range(size)]
    for _ in range(n):
        out = mat_mul(out, m)
    return out


def sub_block(m, idx):
    return [[m[i][j] for j in idx] for i in idx]


def flip_chain(a) -> MarkovChain:
    a = Fraction(a)
    return MarkovChain.from_matrix(["0", "1"], [[1 - a, a], [a, 1 - a]])


@st.composite
def rational_chains(draw, min_states=1, max_states=4, top=5):
    n = draw(st.integers(min_states, max_states))
    rows = []
    for _ in range(n):
        nums = draw(st.lists(st.integers(0, top), min_size=n, max_size=n))
        if not any(nums):
            nums[draw(st.integers(0, n - 1))] = 1
        s = sum(nums)
        rows.append([Fraction(v, s) for v in nums])
    return MarkovChain.from_matrix([str(i) for i in range(n)], rows)


def tv_nb_direct(p: Fraction) -> Fraction:
    """Half the L1 distance, summed exactly up to K plus the closed-form tails.

    From K = ceil(1/(1-p)) on the NB(2) pmf dominates, so the tail of
    |mu - nu| is nu's tail minus mu's tail.
    """
    K = math.ceil(1 / (1 - p))
    head = sum(abs(nb_pmf(1, p, k) - nb_pmf(2, p, k)) for k in range(K))
    mu_tail = p ** K
    nu_tail = p ** (K + 1) + (K + 1) * p ** K * (1 - p)
    return (head + nu_tail - mu_tail) / 2
