"""segchain: exact computations on segregating Markov chains.

Exit status: 0 ok, 2 bad input, 3 budget exceeded, 4 invariant violated.
Chain arguments default to zoo.json, the file `segchain zoo` writes, and
--x/--y default to the designated states in its sidecar.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from . import chain as ch
from . import coupling as cp
from . import formulas as fm
from . import meetflow as mf
from . import separation as sp
from . import zoo
from .errors import BudgetExceeded, ChainError, InvariantViolation
from .exact import as_fraction, as_prob, fmt

DEFAULT_CHAIN = "zoo.json"
FUZZ_NUMERATOR_MAX = 6


class Output:
    """Collects a table and a text summary; prints one of them."""

    def __init__(self, args):
        self.format = args.format
        self.path = getattr(args, "out", None)

    def table(self, header, rows, summary: str = "") -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        if self.path:
            Path(self.path).write_text(buf.getvalue())
        if self.format == "csv":
            sys.stdout.write(buf.getvalue())
        else:
            if not summary:
                widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
                summary = "\n".join("  ".join(str(c).ljust(wd) for c, wd in zip(r, widths)).rstrip()
                                    for r in [header, *rows])
            print(summary)


def _endpoints(args) -> tuple[str, str]:
    x, y = getattr(args, "x", None), getattr(args, "y", None)
    if x is None or y is None:
        side = zoo.load_designated(args.chain)
        if side is None:
            raise ChainError("give --x and --y (no designated-states sidecar found)")
        x = x if x is not None else side["designated"]["x"]
        y = y if y is not None else side["designated"]["y"]
    return x, y


def _load(args) -> ch.MarkovChain:
    try:
        return ch.load_chain(args.chain)
    except FileNotFoundError:
        raise ChainError(f"no such chain file: {args.chain}") from None


def _pi(chain, spec: str) -> ch.Distribution:
    if spec == "uniform":
        return ch.Distribution.uniform(chain.states)
    if spec.startswith("limit:"):
        return ch.limit_distribution(chain, chain.point(spec[len("limit:"):]))
    try:
        doc = json.loads(Path(spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ChainError(f"--pi: {exc}") from None
    return ch.Distribution.from_dict(chain.states, doc)


# -- chain -------------------------------------------------------------------

def cmd_chain_validate(args):
    c = _load(args)
    absorbing = [s for s in c.states if c.is_absorbing(s)]
    print(f"ok: {len(c)} states, {sum(len(r) for r in c.rows)} transitions, "
          f"{len(absorbing)} absorbing")


def cmd_chain_evolve(args):
    c = _load(args)
    steps = ch.step_distributions(c, c.point(args.start), args.n)
    dist = steps[-1]
    rows = [[s, fmt(dist[s]), float(dist[s])] for s in c.states if dist[s]]
    Output(args).table(["state", "p", "p_float"], rows)


def cmd_chain_tv(args):
    c = _load(args)
    x, y = _endpoints(args)
    seq = ch.tv_sequence(c, x, y, args.n)
    Output(args).table(["t", "tv", "tv_float"], [[t, fmt(v), float(v)] for t, v in enumerate(seq)])


def cmd_chain_dbar(args):
    c = _load(args)
    rows = [[n, fmt(v), float(v)] for n in range(args.n + 1) for v in [ch.d_bar(c, n)]]
    Output(args).table(["n", "dbar", "dbar_float"], rows)


def cmd_chain_tmix(args):
    c = _load(args)
    print(ch.mixing_time(c, _pi(c, args.pi), cap=args.cap))


# -- coupling ------------------------------------------------------------------

def _kernel(args, c):
    try:
        return cp.load_kernel(c, args.kernel)
    except FileNotFoundError:
        raise ChainError(f"no such kernel file: {args.kernel}") from None


def _meeting_rows(c, x, y, mtd, faithful):
    rows = []
    for n in range(mtd.horizon + 1):
        seg = cp.segregation_bound_check(c, x, y, mtd, n)
        row = [n, fmt(mtd[n]), fmt(seg.tv), fmt(seg.bound), seg.passed]
        if faithful:
            row.append(cp.coupling_inequality_check(c, x, y, mtd, n).passed)
        rows.append(row)
    return rows


def cmd_coupling_check(args):
    c = _load(args)
    x, y = _endpoints(args)
    k = _kernel(args, c)
    ok, witness = cp.check_marginals(k, x, y, args.T)
    if not ok:
        raise InvariantViolation("coupling marginals are wrong", witness)
    faith = cp.check_faithful(k, (x, y), args.T)
    mtd = cp.meeting_time_distribution(k, args.T, start=(x, y))
    rows = _meeting_rows(c, x, y, mtd, faith.faithful)
    header = ["n", "p_met", "tv", "bound_any", "ok_any"] + (["ok_faithful"] if faith.faithful else [])
    if any(not all(r[4:]) for r in rows):
        raise InvariantViolation("coupling bound violated", rows)
    summary = [f"marginals exact up to T={args.T}",
               "faithful" if faith.faithful else f"not faithful: {_show(faith.witness)}",
               f"P(meet by {args.T}) = {fmt(mtd[args.T])}"]
    Output(args).table(header, rows, "\n".join(summary))


def cmd_coupling_sticky(args):
    c = _load(args)
    x, y = _endpoints(args)
    sticky = cp.make_sticky(_kernel(args, c), (x, y))
    cp.save_kernel(sticky, args.output)
    print(f"wrote sticky kernel to {args.output}")


def cmd_coupling_meet(args):
    c = _load(args)
    x, y = _endpoints(args)
    mtd = cp.meeting_time_distribution(_kernel(args, c), args.T, start=(x, y))
    Output(args).table(["t", "cdf", "cdf_float"], [[t, fmt(v), float(v)] for t, v in enumerate(mtd.cdf)])


# -- separation -------------------------------------------------------------------

def cmd_sep_value(args):
    c = _load(args)
    x, y = _endpoints(args)
    seq = sp.load_sequence(args.sequence)
    print(sp.separation_value(c, x, y, seq))


def cmd_sep_brute(args):
    c = _load(args)
    x, y = _endpoints(args)
    found = sp.brute_force_optimal_separation(c, x, y, args.T, restrict_nontrivial=args.nontrivial,
                                              budget=args.budget)
    if found is None:
        print("no sequence with both summands positive")
        return
    report, seq = found
    if args.output:
        sp.save_sequence(seq, args.output, c)
    print(report)
    for t, a in enumerate(seq.sets):
        print(f"  A_{t} = {{{', '.join(s for s in c.states if s in a)}}}")


def cmd_sep_constant(args):
    c = _load(args)
    x, y = _endpoints(args)
    if args.subset is not None:
        subset = [s for s in args.subset.split(",") if s]
        print(sp.constant_separation(c, x, y, args.T, subset))
        return
    L = len(c) - 1
    rows = []
    for k in range(L):
        r = sp.constant_threshold_separation(c, L, args.T, k)
        rows.append([k, fmt(r.value), float(r.value)])
    Output(args).table(["k", "separation", "separation_float"], rows)


# -- flow ---------------------------------------------------------------------

def cmd_flow_solve(args):
    c = _load(args)
    x, y = _endpoints(args)
    net = mf.build_flow_network(mf.enumerate_trajectories(c, x, args.T, args.cap),
                                mf.enumerate_trajectories(c, y, args.T, args.cap))
    flow = mf.max_flow(net)
    plan = mf.extract_coupling(net, flow)
    if args.dump:
        mf.save_network(net, args.dump)
    if args.plan:
        plan.to_csv(args.plan)
    print(f"C_{args.T}({x},{y}) = {fmt(flow.value)}  ({len(net.xs)} x {len(net.ys)} trajectories, "
          f"{len(net.arcs)} middle arcs)")


def cmd_flow_duality(args):
    c = _load(args)
    x, y = _endpoints(args)
    r = mf.verify_duality(c, x, y, args.T, cap=args.cap, budget=args.budget)
    print(f"C_{args.T} = {fmt(r.max_flow)}")
    print(f"S_{args.T} = {fmt(r.separation)}")
    print(f"meeting probability of extracted coupling = {fmt(r.meeting_probability)}")
    print("duality holds")


# -- zoo ---------------------------------------------------------------------

def cmd_zoo(args):
    kernel = None
    if args.name == "two-state":
        z = zoo.two_state_chain(_need(args, "alpha"))
    elif args.name == "haggstrom":
        z = zoo.haggstrom_chain(_need(args, "p"))
    elif args.name == "nb":
        z, kernel = zoo.nb_chain(_need(args, "m"), _need(args, "p"))
    elif args.name == "birth-death":
        z = zoo.birth_death_chain(_need(args, "L"), _need(args, "alpha"))
    else:  # lower-bound
        L, T = _need(args, "L"), _need(args, "T")
        delta = float(_need(args, "delta"))
        layered, alpha = zoo.lower_bound_chain(L, delta, T)
        z = zoo.ZooChain("lower-bound", layered.layered,
                         {"x": layered.label("0", 0), "y": layered.label(str(L), 0)},
                         {"L": L, "delta": delta, "T": T, "alpha": alpha})
    out = Path(args.output)
    ch.save_chain(z.chain, out)
    zoo.sidecar_path(out).write_text(json.dumps(z.sidecar(), indent=1) + "\n")
    print(f"wrote {z.name} chain ({len(z.chain)} states) to {out}")
    if kernel is not None:
        kpath = out.with_name(out.stem + ".coupling.json")
        cp.save_kernel(kernel, kpath)
        print(f"wrote coupling kernel to {kpath}")


def _need(args, name):
    v = getattr(args, name)
    if v is None:
        raise ChainError(f"zoo {args.name} needs --{name}")
    return v


# -- experiments -------------------------------------------------------------

def random_chain(rng: random.Random, n: int, top: int) -> ch.MarkovChain:
    """Rows of integer numerators drawn from 0..top, normalized."""
    rows = []
    for _ in range(n):
        nums = [rng.randint(0, top) for _ in range(n)]
        if not any(nums):
            nums[rng.randrange(n)] = 1
        s = sum(nums)
        rows.append([Fraction(a, s) for a in nums])
    return ch.MarkovChain.from_matrix([str(i) for i in range(n)], rows)


def fuzz_instance(seed: int, i: int, max_states: int, max_T: int, top: int) -> list:
    rng = random.Random(f"{seed}:{i}")
    n = rng.randint(2, max_states)
    T = rng.randint(1, max_T)
    c = random_chain(rng, n, top)
    x, y = (str(s) for s in rng.sample(range(n), 2))
    r = mf.verify_duality(c, x, y, T)
    return [i, n, T, x, y, fmt(r.max_flow), fmt(r.separation), fmt(r.meeting_probability), r.holds]


def cmd_fuzz(args):
    jobs = [(args.seed, i, args.max_states, args.max_T, args.numerator_max) for i in range(args.instances)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(fuzz_instance, *zip(*jobs)))
    else:
        rows = [fuzz_instance(*j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    held = sum(r[-1] for r in rows)
    Output(args).table(["instance", "states", "T", "x", "y", "max_flow", "separation", "meeting", "holds"],
                       rows, f"{held}/{len(rows)} instances: max-flow = 2 - S_T = extracted meeting probability")


def cmd_kappa(args):
    certify = {"auto": None, "yes": True, "no": False}[args.certify]
    r = fm.kappa_experiment(args.L, args.delta, args.T, certify=certify)
    rows = [[k, fmt(v), float(v)] for k, v in enumerate(r.constant_separations)]
    Output(args).table(["k", "constant_separation", "float"], rows, str(r))


def cmd_bd(args):
    ts = range(0, args.t_max + 1, args.t_step)
    res = fm.bd_sweep(args.L, args.alpha, ts)
    bad = [r for r in res if not r.within]
    Output(args).table(fm.RESIDUAL_HEADER, [r.row() for r in res],
                       f"{len(res) - len(bad)}/{len(res)} residuals inside the {fm.ENVELOPE_C}*L*alpha "
                       f"(or {fm.ENVELOPE_C}*k*alpha) envelope")


def cmd_nb(args):
    ps = [as_fraction(p) for p in args.p] if args.p else [Fraction(m, m + 1) for m in range(1, args.m_max + 1)]
    Output(args).table(fm.NB_HEADER, fm.nb_sweep(ps))


# -- parser ---------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, chain=True, xy=True) -> None:
    if chain:
        p.add_argument("chain", nargs="?", default=DEFAULT_CHAIN, help="chain file (JSON)")
    if xy:
        p.add_argument("--x", help="first start state (default: sidecar)")
        p.add_argument("--y", help="second start state (default: sidecar)")
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--out", help="also write the table as CSV here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="segchain", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    top = ap.add_subparsers(dest="group", required=True)

    g = top.add_parser("chain").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("validate")
    _common(p, xy=False)
    p.set_defaults(func=cmd_chain_validate)
    p = g.add_parser("evolve")
    _common(p, xy=False)
    p.add_argument("--start", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_chain_evolve)
    p = g.add_parser("tv")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_chain_tv)
    p = g.add_parser("dbar")
    _common(p, xy=False)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_chain_dbar)
    p = g.add_parser("tmix")
    _common(p, xy=False)
    p.add_argument("--pi", default="uniform", help="uniform, limit:STATE, or a JSON file of masses")
    p.add_argument("--cap", type=int, default=10_000)
    p.set_defaults(func=cmd_chain_tmix)

    g = top.add_parser("coupling").add_subparsers(dest="cmd", required=True)
    for name, func in [("check", cmd_coupling_check), ("sticky", cmd_coupling_sticky),
                       ("meet", cmd_coupling_meet)]:
        p = g.add_parser(name)
        _common(p)
        p.add_argument("--kernel", required=True, help="coupling kernel file (JSON)")
        if name == "sticky":
            p.add_argument("--output", required=True)
        else:
            p.add_argument("--T", type=int, required=True)
        p.set_defaults(func=func)

    g = top.add_parser("sep").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("value")
    _common(p)
    p.add_argument("--sequence", required=True, help="JSON list of state lists")
    p.set_defaults(func=cmd_sep_value)
    p = g.add_parser("brute")
    _common(p)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--nontrivial", action="store_true", help="require both summands positive")
    p.add_argument("--budget", type=int, default=sp.DEFAULT_BUDGET)
    p.add_argument("--output", help="write the optimal sequence here")
    p.set_defaults(func=cmd_sep_brute)
    p = g.add_parser("constant")
    _common(p)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--subset", help="comma-separated states; default: every threshold {0..k}")
    p.set_defaults(func=cmd_sep_constant)

    g = top.add_parser("flow").add_subparsers(dest="cmd", required=True)
    for name, func in [("solve", cmd_flow_solve), ("duality", cmd_flow_duality)]:
        p = g.add_parser(name)
        _common(p)
        p.add_argument("--T", type=int, required=True)
        p.add_argument("--cap", type=int, default=mf.DEFAULT_TRAJECTORY_CAP, help="trajectory cap per side")
        if name == "solve":
            p.add_argument("--dump", help="write the network as JSON")
            p.add_argument("--plan", help="write the extracted coupling as CSV")
        else:
            p.add_argument("--budget", type=int, default=sp.DEFAULT_BUDGET)
        p.set_defaults(func=func)

    p = top.add_parser("zoo")
    p.add_argument("name", choices=["two-state", "haggstrom", "nb", "birth-death", "lower-bound"])
    p.add_argument("--p", type=as_prob)
    p.add_argument("--alpha", type=as_prob)
    p.add_argument("--m", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--output", default=DEFAULT_CHAIN)
    p.set_defaults(func=cmd_zoo)

    g = top.add_parser("experiment").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("duality-fuzz")
    _common(p, chain=False, xy=False)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--max-states", type=int, default=3)
    p.add_argument("--max-T", type=int, default=4)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--numerator-max", type=int, default=FUZZ_NUMERATOR_MAX)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fuzz)
    p = g.add_parser("kappa")
    _common(p, chain=False, xy=False)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--certify", choices=["auto", "yes", "no"], default="auto")
    p.set_defaults(func=cmd_kappa)
    p = g.add_parser("bd-asymptotics")
    _common(p, chain=False, xy=False)
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--alpha", type=as_prob, default=Fraction(1, 1000))
    p.add_argument("--t-max", type=int, default=5000)
    p.add_argument("--t-step", type=int, default=500)
    p.set_defaults(func=cmd_bd)
    p = g.add_parser("nb-sweep")
    _common(p, chain=False, xy=False)
    p.add_argument("--p", nargs="*", help="rational p values; default m/(m+1)")
    p.add_argument("--m-max", type=int, default=10)
    p.set_defaults(func=cmd_nb)
    return ap


def _show(obj) -> str:
    """repr with Fractions written as plain rational strings."""
    if isinstance(obj, Fraction):
        return fmt(obj)
    if isinstance(obj, (tuple, list)):
        inner = ", ".join(_show(o) for o in obj)
        return f"({inner})" if isinstance(obj, tuple) else f"[{inner}]"
    return str(obj)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        if exc.witness is not None:
            print(f"witness: {_show(exc.witness)}", file=sys.stderr)
        return 4
    except ChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
