"""Command-line front end: solving, verification, property checks, generation.

Commands

    solve INSTANCE [--out FILE] [--trace FILE] [--solver auto|fast|general]
                   [--price-curve]
    verify INSTANCE EQUILIBRIUM
    check-price INSTANCE --prices "p1,p2,..."
    properties INSTANCE
    gen {single-machine,multi-type,laminar,flow} ... [--out FILE]
    trace-replay INSTANCE TRACE

Exit codes: 0 success / check passed, 1 verification or property failure,
2 malformed input, 3 solver precondition violation.  All outputs are
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from . import general_solver, market_model, scheduling_solver, verifier
from .general_solver import GeneralEquilibrium, GeneralSolverError, trace_to_jsonl
from .market_model import (
    MarketInstance,
    ModelError,
    is_single_machine,
    parse_instance,
    parse_rational,
    write_instance,
)
from .rational_lp import Rational, rat
from .scheduling_solver import NotSingleMachine, SchedulingResult
from .verifier import NotSchedulingInstance

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_PRECONDITION = 3


# ---------------------------------------------------------------------------
# Equilibrium file format
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return str(v)


def format_equilibrium(instance: MarketInstance, result) -> bytes:
    """Serialize a solver result: [prices], [lambda], [allocation], [segments]."""
    lines = ["[prices]"]
    for j, g in enumerate(instance.goods):
        lines.append(f"{g} = {_fmt(result.prices[j])}")
    lam: Dict[int, Rational] = {}
    seg_lines = []
    if isinstance(result, SchedulingResult):
        for seg in result.segments:
            for i in seg.members:
                lam[i] = seg.lam
        for seg in sorted(result.segments, key=lambda s: (s.lam, s.slots)):
            names = " ".join(instance.agents[i].name for i in sorted(seg.members))
            seg_lines.append(f"{names} : lambda = {_fmt(seg.lam)}")
    else:
        for members, value in result.segments:
            for i in members:
                lam[i] = value
            names = " ".join(instance.agents[i].name for i in sorted(members))
            seg_lines.append(f"{names} : lambda = {_fmt(value)}")
    lines.append("")
    lines.append("[lambda]")
    for i, a in enumerate(instance.agents):
        lines.append(f"{a.name} = {_fmt(lam[i])}")
    lines.append("")
    lines.append("[allocation]")
    for (i, j) in sorted(result.allocation):
        v = result.allocation[(i, j)]
        if v != 0:
            lines.append(f"{instance.agents[i].name}, {instance.goods[j]}, {_fmt(v)}")
    lines.append("")
    lines.append("[segments]")
    lines.extend(seg_lines)
    return ("\n".join(lines) + "\n").encode()


def parse_equilibrium(
    instance: MarketInstance, data: bytes
) -> Tuple[List[Rational], Dict[Tuple[int, int], Rational]]:
    """Read back prices and allocation from the equilibrium file format."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    good_of = {g: j for j, g in enumerate(instance.goods)}
    agent_of = {a.name: i for i, a in enumerate(instance.agents)}
    prices: List[Optional[Rational]] = [None] * instance.num_goods
    allocation: Dict[Tuple[int, int], Rational] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if section == "prices":
            key, eq, value = line.partition("=")
            key = key.strip()
            if not eq or key not in good_of:
                raise market_model.InstanceSyntaxError(f"bad price line {line!r}", lineno)
            prices[good_of[key]] = parse_rational(value, lineno)
        elif section == "allocation":
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3 or parts[0] not in agent_of or parts[1] not in good_of:
                raise market_model.InstanceSyntaxError(f"bad allocation line {line!r}", lineno)
            allocation[(agent_of[parts[0]], good_of[parts[1]])] = parse_rational(parts[2], lineno)
        elif section in ("lambda", "segments"):
            continue  # informational; the verifier re-derives everything
        else:
            raise market_model.InstanceSyntaxError("content outside any known section", lineno)
    missing = [instance.goods[j] for j, p in enumerate(prices) if p is None]
    if missing:
        raise market_model.InstanceSemanticError("prices", f"no price for {', '.join(missing)}")
    return [p for p in prices], allocation


def emit_price_curve(result) -> str:
    """Two-column table (slot, price) of a single-machine equilibrium, each
    price as an exact rational and a decimal approximation for plotting."""
    if not isinstance(result, SchedulingResult):
        raise NotSchedulingInstance("price curve is defined for single-machine results")
    lines = ["slot\tprice\tapprox"]
    for t, p in enumerate(result.prices, start=1):
        lines.append(f"{t}\t{_fmt(p)}\t{float(p):.6f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _load_instance(path: str) -> MarketInstance:
    with open(path, "rb") as fh:
        return parse_instance(fh.read())


def _solve(instance: MarketInstance, solver: str, trace: Optional[list]):
    if solver == "fast" or (solver == "auto" and is_single_machine(instance)):
        return scheduling_solver.solve_scheduling(instance, trace=trace)
    return general_solver.solve_general(instance, trace=trace)


def _cmd_solve(args, out) -> int:
    instance = _load_instance(args.instance)
    trace: Optional[list] = [] if args.trace else None
    result = _solve(instance, args.solver, trace)
    payload = format_equilibrium(instance, result)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    else:
        out.write(payload.decode())
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace_to_jsonl(trace))
    if args.price_curve:
        out.write(emit_price_curve(result))
    return EXIT_OK


def _cmd_verify(args, out) -> int:
    instance = _load_instance(args.instance)
    with open(args.equilibrium, "rb") as fh:
        prices, allocation = parse_equilibrium(instance, fh.read())
    report = verifier.verify_equilibrium(instance, allocation, prices)
    for line in report.lines():
        out.write(line + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_check_price(args, out) -> int:
    instance = _load_instance(args.instance)
    tokens = [t for t in args.prices.split(",") if t.strip()]
    prices = [parse_rational(t) for t in tokens]
    ok, _ = verifier.check_price_equilibrium(instance, prices)
    out.write(("equilibrium\n" if ok else "not an equilibrium\n"))
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_properties(args, out) -> int:
    instance = _load_instance(args.instance)
    result = _solve(instance, args.solver, None)
    prices = list(result.prices)
    checks: List[Tuple[str, bool]] = []
    report = verifier.verify_equilibrium(instance, result.allocation, prices)
    checks.append(("equilibrium", report.passed))
    exhausted = True
    for i, a in enumerate(instance.agents):
        pay = sum(
            prices[j] * result.allocation.get((i, j), rat(0))
            for j in range(instance.num_goods)
        )
        if pay != a.budget:
            exhausted = False
    checks.append(("budget-exhaustion", exhausted))
    checks.append(("pareto", verifier.check_pareto(instance, result.allocation)))
    envy, _ = verifier.check_envy_free(instance, result.allocation, prices)
    checks.append(("envy-free", envy))
    share, _ = verifier.check_sharing_incentive(instance, result.allocation)
    checks.append(("sharing-incentive", share))
    ok = all(v for _, v in checks)
    for name, v in checks:
        out.write(f"{name}: {'pass' if v else 'FAIL'}\n")
    out.write(f"overall: {'pass' if ok else 'FAIL'}\n")
    return EXIT_OK if ok else EXIT_FAIL


def _split_groups(text: str) -> List[List[str]]:
    return [[t.strip() for t in group.split(",") if t.strip()] for group in text.split(";")]


def _cmd_gen(args, out) -> int:
    if args.kind == "single-machine":
        budgets = [parse_rational(t) for t in args.budgets.split(",")]
        reqs = [int(t) for t in args.requirements.split(",")]
        instance = market_model.build_single_machine(budgets, reqs)
    elif args.kind == "multi-type":
        types = [[parse_rational(t) for t in g] for g in _split_groups(args.types)]
        reqs = [[int(t) for t in g] for g in _split_groups(args.requirements)]
        budgets = [parse_rational(t) for t in args.budgets.split(",")]
        instance = market_model.build_multi_type_scheduling(types, reqs, budgets)
    elif args.kind == "laminar":
        types = [[parse_rational(t) for t in g] for g in _split_groups(args.types)]
        reqs = [[int(t) for t in g] for g in _split_groups(args.requirements)]
        budgets = [parse_rational(t) for t in args.budgets.split(",")]
        allowed = [
            [set(int(t) for t in g) for g in _split_groups(per_agent)]
            for per_agent in args.allowed
        ]
        instance = market_model.build_laminar_restricted(types, allowed, reqs, budgets)
    else:  # flow
        edges = []
        for spec_ in args.edge:
            u, v, c, d = [t.strip() for t in spec_.split(",")]
            edges.append((u, v, parse_rational(c), parse_rational(d)))
        flow_agents = []
        for spec_ in args.agent:
            s, t, r, m = [x.strip() for x in spec_.split(",")]
            flow_agents.append((s, t, parse_rational(r), parse_rational(m)))
        instance = market_model.build_flow_market(edges, flow_agents)
    if args.name:
        instance = MarketInstance(
            name=args.name, goods=instance.goods, agents=instance.agents, graph=instance.graph
        )
    payload = write_instance(instance)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    else:
        out.write(payload.decode())
    return EXIT_OK


def _cmd_trace_replay(args, out) -> int:
    instance = _load_instance(args.instance)
    with open(args.trace) as fh:
        recorded = fh.read()
    trace: list = []
    _solve(instance, args.solver, trace)
    fresh = trace_to_jsonl(trace)
    if fresh == recorded:
        out.write("trace reproduced exactly\n")
        return EXIT_OK
    out.write("trace MISMATCH\n")
    return EXIT_FAIL


# ---------------------------------------------------------------------------
# Argument grammar and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_solver_flag(p):
        p.add_argument(
            "--solver", choices=("auto", "fast", "general"), default="auto",
            help="fast = single-machine solver, general = parametric solver",
        )

    p = sub.add_parser("solve", help="compute an equilibrium")
    p.add_argument("instance")
    p.add_argument("--out", help="write the equilibrium here instead of stdout")
    p.add_argument("--trace", help="write the search trace (JSON lines) here")
    p.add_argument("--price-curve", action="store_true", help="also print the price table")
    add_solver_flag(p)

    p = sub.add_parser("verify", help="certify a written equilibrium")
    p.add_argument("instance")
    p.add_argument("equilibrium")

    p = sub.add_parser("check-price", help="is a price vector an equilibrium?")
    p.add_argument("instance")
    p.add_argument("--prices", required=True, help="comma-separated rationals")

    p = sub.add_parser("properties", help="solve and run the property checks")
    p.add_argument("instance")
    add_solver_flag(p)

    p = sub.add_parser("gen", help="generate an instance file")
    gen = p.add_subparsers(dest="kind", required=True)
    g = gen.add_parser("single-machine")
    g.add_argument("--budgets", required=True)
    g.add_argument("--requirements", required=True)
    g = gen.add_parser("multi-type")
    g.add_argument("--types", required=True, help="';'-separated types, ','-separated delays")
    g.add_argument("--requirements", required=True, help="per agent: ';'-separated, one count per type")
    g.add_argument("--budgets", required=True)
    g = gen.add_parser("laminar")
    g.add_argument("--types", required=True)
    g.add_argument("--requirements", required=True)
    g.add_argument("--budgets", required=True)
    g.add_argument(
        "--allowed", action="append", required=True,
        help="one per agent: ';'-separated machine-index lists, one per type",
    )
    g = gen.add_parser("flow")
    g.add_argument("--edge", action="append", required=True, help="u,v,capacity,delay")
    g.add_argument("--agent", action="append", required=True, help="source,sink,demand,budget")
    for name, sp in gen.choices.items():
        sp.add_argument("--out")
        sp.add_argument("--name")

    p = sub.add_parser("trace-replay", help="re-run and compare against a recorded trace")
    p.add_argument("instance")
    p.add_argument("trace")
    add_solver_flag(p)

    return parser


_DISPATCH = {
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "check-price": _cmd_check_price,
    "properties": _cmd_properties,
    "gen": _cmd_gen,
    "trace-replay": _cmd_trace_replay,
}

_PRECONDITION_ERRORS = (
    general_solver.NoTightSet,
    general_solver.ValidDualInfeasible,
    general_solver.FinalFeasibilityInfeasible,
    general_solver.DegenerateInstance,
)


def run(argv: Sequence[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return _DISPATCH[args.command](args, out)
    except _PRECONDITION_ERRORS as exc:
        err.write(f"solver precondition violated: {type(exc).__name__}: {exc}\n")
        return EXIT_PRECONDITION
    except (ModelError, NotSingleMachine, NotSchedulingInstance, verifier.VerifierError) as exc:
        err.write(f"input error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        err.write(f"input error: {exc}\n")
        return EXIT_INPUT
    except GeneralSolverError as exc:
        err.write(f"solver error: {type(exc).__name__}: {exc}\n")
        return EXIT_PRECONDITION


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
