import csv
import io
import json

import pytest

from segchain.chain import load_chain
from segchain.cli import main
from segchain.exact import as_fraction, fmt


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_zoo_then_duality(capsys):
    code, out, _ = run(capsys, "zoo", "haggstrom", "--p", "7/10")
    assert code == 0
    code, out, _ = run(capsys, "flow", "duality", "--T", "2")
    assert code == 0
    assert "C_2 = 1\n" in out and "S_2 = 1\n" in out


def test_validate_bad_row(capsys, workdir):
    (workdir / "bad.json").write_text(json.dumps({"states": ["a", "b"], "transitions": [
        {"from": "a", "to": "a", "p": "9/10"}, {"from": "b", "to": "b", "p": "1"}]}))
    code, _, err = run(capsys, "chain", "validate", "bad.json")
    assert code == 2 and "'a' sums to 9/10" in err


def test_validate_ok_and_missing(capsys):
    run(capsys, "zoo", "birth-death", "--L", "3", "--alpha", "1/10")
    code, out, _ = run(capsys, "chain", "validate")
    assert code == 0 and out.startswith("ok: 4 states")
    code, _, err = run(capsys, "chain", "validate", "nope.json")
    assert code == 2


def test_parse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["zoo", "haggstrom", "--p", "abc"])
    assert exc.value.code == 2
    code, _, err = run(capsys, "zoo", "nb", "--p", "1/2")
    assert code == 2 and "--m" in err


def test_duality_fuzz(capsys):
    code, out, _ = run(capsys, "experiment", "duality-fuzz", "--instances", "200", "--max-states", "3",
                       "--max-T", "4", "--seed", "1")
    assert code == 0 and out.startswith("200/200")


def test_fuzz_deterministic_and_parallel(capsys):
    args = ["experiment", "duality-fuzz", "--instances", "12", "--seed", "5", "--format", "csv"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    _, c, _ = run(capsys, *args, "--jobs", "2")
    assert a == b == c
    rows = list(csv.DictReader(io.StringIO(a)))
    assert len(rows) == 12
    for r in rows:
        for key in ("max_flow", "separation", "meeting"):
            assert fmt(as_fraction(r[key])) == r[key]


def test_budget_exit_3(capsys):
    run(capsys, "zoo", "two-state", "--alpha", "1/3")
    code, _, err = run(capsys, "flow", "solve", "--T", "12", "--cap", "100")
    assert code == 3 and "budget" in err
    run(capsys, "zoo", "birth-death", "--L", "3", "--alpha", "1/20")
    code, _, err = run(capsys, "sep", "brute", "--T", "6", "--budget", "100")
    assert code == 3 and "100 leaves" in err


def test_invariant_exit_4(capsys):
    run(capsys, "zoo", "nb", "--m", "2", "--p", "2/3")
    code, _, err = run(capsys, "coupling", "sticky", "--kernel", "zoo.coupling.json", "--output", "s.json")
    assert code == 4 and "witness" in err


def test_coupling_commands(capsys, workdir):
    run(capsys, "zoo", "nb", "--m", "3", "--p", "3/4")
    code, out, _ = run(capsys, "coupling", "check", "--kernel", "zoo.coupling.json", "--T", "5")
    assert code == 0 and "not faithful" in out and "P(meet by 5) = 1" in out
    code, out, _ = run(capsys, "coupling", "meet", "--kernel", "zoo.coupling.json", "--T", "5",
                       "--format", "csv", "--out", "mtd.csv")
    assert code == 0 and out.splitlines()[0] == "t,cdf,cdf_float"
    assert out.splitlines()[-1].startswith("5,1,")
    assert (workdir / "mtd.csv").read_text() == out


def test_chain_commands(capsys):
    run(capsys, "zoo", "two-state", "--alpha", "1/4")
    code, out, _ = run(capsys, "chain", "tv", "--n", "3", "--format", "csv")
    assert out.splitlines()[-1] == "3,1/8,0.125"
    code, out, _ = run(capsys, "chain", "dbar", "--n", "1", "--format", "csv")
    assert out.splitlines()[-1] == "1,1/2,0.5"
    code, out, _ = run(capsys, "chain", "tmix")
    assert out.strip() == "1"
    code, out, _ = run(capsys, "chain", "evolve", "--start", "0", "--n", "2", "--format", "csv")
    assert "0,5/8,0.625" in out


def test_sep_commands(capsys):
    run(capsys, "zoo", "two-state", "--alpha", "1/10")
    code, out, _ = run(capsys, "sep", "brute", "--T", "3", "--output", "seq.json")
    assert code == 0 and "S = 729/500" in out
    code, out, _ = run(capsys, "sep", "value", "--sequence", "seq.json")
    assert "729/500" in out
    code, out, _ = run(capsys, "sep", "constant", "--T", "3", "--subset", "0")
    assert "729/500" in out
    run(capsys, "zoo", "birth-death", "--L", "2", "--alpha", "1/10")
    code, out, _ = run(capsys, "sep", "constant", "--T", "1", "--format", "csv")
    assert "0,19/10,1.9" in out


def test_flow_solve_artifacts(capsys, workdir):
    run(capsys, "zoo", "haggstrom", "--p", "9/10")
    code, out, _ = run(capsys, "flow", "solve", "--T", "2", "--dump", "net.json", "--plan", "plan.csv")
    assert code == 0 and "= 19/50" in out
    net = json.loads((workdir / "net.json").read_text())
    assert {"nodes", "arcs"} <= set(net)
    assert (workdir / "plan.csv").read_text().startswith("x_path,y_path,mass")


def test_zoo_lower_bound_and_nb_files(capsys, workdir):
    code, _, _ = run(capsys, "zoo", "lower-bound", "--L", "2", "--delta", "0.05", "--T", "4", "--output", "lb.json")
    assert code == 0
    assert len(load_chain(workdir / "lb.json")) == 15
    side = json.loads((workdir / "lb.designated.json").read_text())
    assert side["designated"] == {"x": "0@0", "y": "2@0"}


def test_experiments(capsys):
    code, out, _ = run(capsys, "experiment", "kappa", "--L", "1", "--T", "4")
    assert code == 0 and "meeting certified" in out
    code, out, _ = run(capsys, "experiment", "bd-asymptotics", "--t-max", "1000", "--t-step", "500")
    assert code == 0 and out.startswith("24/24 residuals inside")
    code, out, _ = run(capsys, "experiment", "nb-sweep", "--p", "1/2", "2/3", "--format", "csv")
    assert "1/2,1/4" in out and "2/3,8/27" in out
