"""Market instances: types, validation, special-case builders, file I/O.

A market is a set of unit-supply goods and a set of agents, each with a
budget, per-good delays, and covering constraints (rows a.x >= r that any
bundle of the agent must satisfy).  Builders produce the structured special
cases (machine scheduling, restricted assignment, network flows) in this
uniform shape.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .rational_lp import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    LinearProgram,
    Rational,
    rat,
    solve,
    solve_lexicographic,
)


class ModelError(Exception):
    pass


class LengthMismatch(ModelError):
    pass


class NonPositiveInput(ModelError):
    pass


class InsufficientCapacity(ModelError):
    pass


class NotLaminar(ModelError):
    def __init__(self, pair):
        super().__init__(f"sets {sorted(pair[0])} and {sorted(pair[1])} cross")
        self.pair = pair


class MonotonicityViolated(ModelError):
    def __init__(self, pair):
        super().__init__(
            f"restricted set {sorted(pair[0])} holds a slower machine than one "
            f"available only in {sorted(pair[1])}"
        )
        self.pair = pair


class BadGraph(ModelError):
    pass


class DelayLpInfeasible(ModelError):
    def __init__(self, agent):
        super().__init__(f"covering constraints of agent {agent} are unsatisfiable")
        self.agent = agent


class InstanceSyntaxError(ModelError):
    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class InstanceSemanticError(ModelError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class CoveringRow:
    coeffs: Tuple[Rational, ...]
    rhs: Rational


@dataclass(frozen=True)
class Agent:
    name: str
    budget: Rational
    delays: Tuple[Rational, ...]
    covering: Tuple[CoveringRow, ...]


@dataclass(frozen=True)
class MarketInstance:
    name: str
    goods: Tuple[str, ...]
    agents: Tuple[Agent, ...]
    graph: Optional[str] = None  # flow-network provenance, ignored by solvers

    @property
    def num_goods(self) -> int:
        return len(self.goods)

    def agent_index(self, name: str) -> int:
        for i, a in enumerate(self.agents):
            if a.name == name:
                return i
        raise KeyError(name)


Allocation = Dict[Tuple[int, int], Rational]  # (agent index, good index) -> amount
PriceVector = List[Rational]


def validate(instance: MarketInstance) -> None:
    if not instance.agents:
        raise InstanceSemanticError("agents", "need at least one agent")
    if not instance.goods:
        raise InstanceSemanticError("goods", "need at least one good")
    m = len(instance.goods)
    for a in instance.agents:
        if a.budget <= 0:
            raise InstanceSemanticError("budget", f"agent {a.name} has non-positive budget")
        if len(a.delays) != m:
            raise InstanceSemanticError("delays", f"agent {a.name} has {len(a.delays)} delays for {m} goods")
        if any(d < 0 for d in a.delays):
            raise InstanceSemanticError("delays", f"agent {a.name} has a negative delay")
        for row in a.covering:
            if len(row.coeffs) != m:
                raise InstanceSemanticError("cover", f"agent {a.name} has a row of width {len(row.coeffs)}")
            if row.rhs < 0:
                raise InstanceSemanticError("cover", f"agent {a.name} has a negative requirement")


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_single_machine(budgets: Sequence, requirements: Sequence[int]) -> MarketInstance:
    """Slots 1..r(A) on one machine; slot t has delay t for everyone."""
    if len(budgets) != len(requirements):
        raise LengthMismatch(f"{len(budgets)} budgets vs {len(requirements)} requirements")
    if any(rat(b) <= 0 for b in budgets):
        raise NonPositiveInput("budgets must be positive")
    if any(int(r) < 1 or int(r) != r for r in requirements):
        raise NonPositiveInput("requirements must be positive integers")
    total = sum(int(r) for r in requirements)
    return build_multi_type_scheduling([list(range(1, total + 1))], [[int(r)] for r in requirements], budgets)


def build_multi_type_scheduling(
    types: Sequence[Sequence], requirements: Sequence[Sequence], budgets: Sequence
) -> MarketInstance:
    """One good per machine unit; a covering row per (agent, type)."""
    if len(budgets) != len(requirements):
        raise LengthMismatch(f"{len(budgets)} budgets vs {len(requirements)} requirement rows")
    for k, machines in enumerate(types):
        need = sum(rat(r[k]) for r in requirements)
        if len(machines) < need:
            raise InsufficientCapacity(f"type {k + 1}: {len(machines)} units for total requirement {need}")
    goods = []
    delays = []
    type_cols: List[List[int]] = []
    for k, machines in enumerate(types):
        cols = []
        for u, d in enumerate(machines):
            if len(types) == 1:
                goods.append(f"slot{u + 1}")
            else:
                goods.append(f"t{k + 1}m{u + 1}")
            delays.append(rat(d))
            cols.append(len(goods) - 1)
        type_cols.append(cols)
    agents = []
    for i, (m_i, reqs) in enumerate(zip(budgets, requirements)):
        rows = []
        for k, cols in enumerate(type_cols):
            coeffs = [rat(0)] * len(goods)
            for c in cols:
                coeffs[c] = rat(1)
            rows.append(CoveringRow(tuple(coeffs), rat(reqs[k])))
        agents.append(
            Agent(
                name=f"a{i + 1}",
                budget=rat(m_i),
                delays=tuple(delays),
                covering=tuple(rows),
            )
        )
    inst = MarketInstance(name="scheduling", goods=tuple(goods), agents=tuple(agents))
    validate(inst)
    return inst


def build_laminar_restricted(
    types: Sequence[Sequence],
    allowed: Sequence[Sequence[set]],
    requirements: Sequence[Sequence],
    budgets: Sequence,
) -> MarketInstance:
    """Multi-type scheduling where agent i may only use machines in allowed[i][k].

    The allowed sets of each type must form a laminar family, and a more
    restricted set must hold only machines at least as fast as anything that
    is available outside it (otherwise the restriction is meaningless and the
    market loses its structure).
    """
    base = build_multi_type_scheduling(types, requirements, budgets)
    for k, machines in enumerate(types):
        sets = []
        for i in range(len(budgets)):
            s = frozenset(allowed[i][k])
            for j in s:
                if not 1 <= j <= len(machines):
                    raise InstanceSemanticError("allowed", f"machine {j} not in type {k + 1}")
            sets.append(s)
        for s in sets:
            for t in sets:
                if s & t and not (s <= t or t <= s):
                    raise NotLaminar((s, t))
        for s in sets:
            for t in sets:
                if s < t:
                    inner_max = max(rat(machines[j - 1]) for j in s)
                    outer_min = min(rat(machines[j - 1]) for j in t - s)
                    if inner_max > outer_min:
                        raise MonotonicityViolated((s, t))
    # Zero out coefficients outside each agent's allowed sets.
    col_of = {}
    pos = 0
    for k, machines in enumerate(types):
        for u in range(len(machines)):
            col_of[(k, u + 1)] = pos
            pos += 1
    agents = []
    for i, a in enumerate(base.agents):
        rows = []
        for k, row in enumerate(a.covering):
            coeffs = list(row.coeffs)
            keep = {col_of[(k, j)] for j in allowed[i][k]}
            for c in range(len(coeffs)):
                if coeffs[c] != 0 and c not in keep:
                    coeffs[c] = rat(0)
            rows.append(CoveringRow(tuple(coeffs), row.rhs))
        agents.append(Agent(name=a.name, budget=a.budget, delays=a.delays, covering=tuple(rows)))
    inst = MarketInstance(name="laminar", goods=base.goods, agents=tuple(agents))
    validate(inst)
    return inst


def build_flow_market(
    edges: Sequence[Tuple[str, str, object, object]],
    agents: Sequence[Tuple[str, str, object, object]],
    name: str = "flow",
) -> MarketInstance:
    """Edges become unit-supply goods: x_ie is the fraction of edge capacity
    used, so coefficients and delays absorb c_e.  Conservation at internal
    nodes is encoded as a pair of >= rows; the demand row requires r_i net
    units into the sink.
    """
    nodes = set()
    goods = []
    caps = []
    dels = []
    seen = set()
    for u, v, c, d in edges:
        c = rat(c)
        if c <= 0:
            raise BadGraph(f"edge {u}-{v} has non-positive capacity")
        eid = f"{u}-{v}"
        if eid in seen:
            raise BadGraph(f"duplicate edge {eid}")
        seen.add(eid)
        nodes.add(u)
        nodes.add(v)
        goods.append(eid)
        caps.append(c)
        dels.append(rat(d))
    built = []
    for i, (src, sink, demand, budget) in enumerate(agents):
        if src not in nodes or sink not in nodes:
            raise BadGraph(f"agent {i + 1} references unknown node {src if src not in nodes else sink}")
        demand = rat(demand)
        if demand <= 0:
            raise BadGraph(f"agent {i + 1} has non-positive demand")
        rows = []
        sink_row = [rat(0)] * len(goods)
        for e, (u, v, _, _) in enumerate(edges):
            if v == sink:
                sink_row[e] += caps[e]
            if u == sink:
                sink_row[e] -= caps[e]
        rows.append(CoveringRow(tuple(sink_row), demand))
        for n in sorted(nodes):
            if n in (src, sink):
                continue
            bal = [rat(0)] * len(goods)
            for e, (u, v, _, _) in enumerate(edges):
                if v == n:
                    bal[e] += caps[e]
                if u == n:
                    bal[e] -= caps[e]
            rows.append(CoveringRow(tuple(bal), rat(0)))
            rows.append(CoveringRow(tuple(-x for x in bal), rat(0)))
        built.append(
            Agent(
                name=f"a{i + 1}",
                budget=rat(budget),
                delays=tuple(d * c for d, c in zip(dels, caps)),
                covering=tuple(rows),
            )
        )
    graph = ", ".join(f"{u}-{v}:{c}:{d}" for (u, v, c, d) in edges)
    inst = MarketInstance(name=name, goods=tuple(goods), agents=tuple(built), graph=graph)
    validate(inst)
    return inst


def edge_capacities(instance: MarketInstance) -> Optional[Dict[str, Rational]]:
    """Capacities recorded by build_flow_market, if this is a flow instance."""
    if not instance.graph:
        return None
    out = {}
    for part in instance.graph.split(","):
        eid, c, _ = part.strip().rsplit(":", 2)
        out[eid] = rat(c)
    return out


# ---------------------------------------------------------------------------
# Structure detection
# ---------------------------------------------------------------------------


def unit_type_supports(instance: MarketInstance) -> Optional[List[Tuple[int, ...]]]:
    """If every covering row is 0/1 with supports pairwise disjoint-or-equal
    across all agents, return the distinct supports ("machine types").
    Otherwise None.  This is the structural condition under which the market
    behaves like machine scheduling with a well-defined next-slower machine.
    """
    supports = []
    for a in instance.agents:
        for row in a.covering:
            supp = []
            for j, c in enumerate(row.coeffs):
                if c == 1:
                    supp.append(j)
                elif c != 0:
                    return None
            if not supp:
                return None
            supports.append(tuple(supp))
    distinct = []
    for s in supports:
        if s not in distinct:
            distinct.append(s)
    for i, s in enumerate(distinct):
        for t in distinct[i + 1 :]:
            if set(s) & set(t):
                return None
    return distinct


def is_single_machine(instance: MarketInstance) -> bool:
    """One covering row per agent, all-ones over all goods, delays 1..m shared."""
    m = instance.num_goods
    for a in instance.agents:
        if len(a.covering) != 1:
            return False
        row = a.covering[0]
        if any(c != 1 for c in row.coeffs):
            return False
        if tuple(a.delays) != tuple(rat(t) for t in range(1, m + 1)):
            return False
    return True


# ---------------------------------------------------------------------------
# Sufficient demand
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SufficientDemandReport:
    per_agent: Dict[str, bool]
    aggregate: bool
    note: str


def check_sufficient_demand(instance: MarketInstance) -> SufficientDemandReport:
    """At zero prices, does each agent's optimal bundle over-demand some good?

    Per-agent verdict uses the existential reading: each coordinate of the
    zero-price optimal bundle is maximized over the optimal face; true iff
    some coordinate can exceed 1.  The report also carries an aggregate
    verdict based on total demand across agents at each agent's canonical
    cheapest bundle.
    """
    m = instance.num_goods
    per_agent = {}
    totals = [rat(0)] * m
    bundles = []
    for i, a in enumerate(instance.agents):
        lp = LinearProgram(num_vars=m, objective=list(a.delays), sense="min")
        for row in a.covering:
            lp.add(list(row.coeffs), GE, row.rhs)
        sol = solve(lp)
        if sol.status == INFEASIBLE:
            raise DelayLpInfeasible(a.name)
        bundles.append(sol.primal)
        for j in range(m):
            totals[j] += sol.primal[j]
        verdict = False
        for j in range(m):
            probe = LinearProgram(num_vars=m)
            for row in a.covering:
                probe.add(list(row.coeffs), GE, row.rhs)
            staged = solve_lexicographic(
                probe, [(list(a.delays), "min"), ({j: rat(1)}, "max")]
            )
            if staged.stage_values[1] > 1:
                verdict = True
                break
        per_agent[a.name] = verdict
    overdemanded = {j for j in range(m) if totals[j] > 1}
    aggregate = all(per_agent.values()) or (
        bool(overdemanded)
        and all(any(b[j] > 0 for j in overdemanded) for b in bundles)
    )
    note = (
        "existential per-agent reading; aggregate verdict counts total demand "
        "across agents at canonical cheapest bundles"
    )
    return SufficientDemandReport(per_agent=per_agent, aggregate=aggregate, note=note)


# ---------------------------------------------------------------------------
# Instance file format
# ---------------------------------------------------------------------------

_RAT_RE = re.compile(r"^-?\d+(/\d+)?$")


def parse_rational(token: str, line: int = 0):
    token = token.strip()
    if not _RAT_RE.match(token):
        raise InstanceSyntaxError(f"not a rational (use p/q or integer): {token!r}", line)
    return rat(token) if "/" in token else rat(int(token))


def format_rational(v) -> str:
    return str(v)


def write_instance(instance: MarketInstance) -> bytes:
    lines = ["[market]", f"name = {instance.name}"]
    if instance.graph:
        lines.append(f"graph = {instance.graph}")
    lines.append("")
    lines.append("[goods]")
    lines.append(", ".join(instance.goods))
    for a in instance.agents:
        lines.append("")
        lines.append(f"[agent {a.name}]")
        lines.append(f"budget = {format_rational(a.budget)}")
        lines.append("delays = " + ", ".join(format_rational(d) for d in a.delays))
        for row in a.covering:
            lines.append(
                "cover: "
                + ", ".join(format_rational(c) for c in row.coeffs)
                + " >= "
                + format_rational(row.rhs)
            )
    return ("\n".join(lines) + "\n").encode()


def parse_instance(data: bytes) -> MarketInstance:
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    name = "unnamed"
    graph = None
    goods: List[str] = []
    agents: List[Agent] = []
    section = None
    current: Optional[dict] = None

    def finish_agent():
        nonlocal current
        if current is None:
            return
        if current["budget"] is None:
            raise InstanceSemanticError("budget", f"agent {current['name']} has no budget")
        if current["delays"] is None:
            raise InstanceSemanticError("delays", f"agent {current['name']} has no delays")
        agents.append(
            Agent(
                name=current["name"],
                budget=current["budget"],
                delays=tuple(current["delays"]),
                covering=tuple(current["rows"]),
            )
        )
        current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise InstanceSyntaxError("unterminated section header", lineno)
            header = line[1:-1].strip()
            finish_agent()
            if header == "market":
                section = "market"
            elif header == "goods":
                section = "goods"
            elif header.startswith("agent"):
                parts = header.split(None, 1)
                if len(parts) != 2:
                    raise InstanceSyntaxError("agent section needs a name", lineno)
                section = "agent"
                current = {"name": parts[1], "budget": None, "delays": None, "rows": []}
            else:
                raise InstanceSyntaxError(f"unknown section {header!r}", lineno)
            continue
        if section == "market":
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "name":
                name = value
            elif key == "graph":
                graph = value
            else:
                raise InstanceSyntaxError(f"unknown market key {key!r}", lineno)
        elif section == "goods":
            goods.extend(g.strip() for g in line.split(",") if g.strip())
        elif section == "agent":
            if line.startswith("cover:"):
                body = line[len("cover:") :]
                if ">=" not in body:
                    raise InstanceSyntaxError("cover line needs '>='", lineno)
                lhs, rhs = body.rsplit(">=", 1)
                coeffs = [parse_rational(t, lineno) for t in lhs.split(",") if t.strip()]
                if len(coeffs) != len(goods):
                    raise InstanceSemanticError(
                        "good id", f"cover row has {len(coeffs)} coefficients for {len(goods)} goods"
                    )
                current["rows"].append(CoveringRow(tuple(coeffs), parse_rational(rhs, lineno)))
            else:
                key, eq, value = line.partition("=")
                if not eq:
                    raise InstanceSyntaxError("expected 'key = value' or 'cover:' line", lineno)
                key = key.strip()
                value = value.strip()
                if key == "budget":
                    budget = parse_rational(value, lineno)
                    if budget <= 0:
                        raise InstanceSemanticError("budget", f"agent {current['name']} has budget {budget}")
                    current["budget"] = budget
                elif key == "delays":
                    current["delays"] = [parse_rational(t, lineno) for t in value.split(",") if t.strip()]
                else:
                    raise InstanceSyntaxError(f"unknown agent key {key!r}", lineno)
        else:
            raise InstanceSyntaxError("content outside any section", lineno)
    finish_agent()
    inst = MarketInstance(name=name, goods=tuple(goods), agents=tuple(agents), graph=graph)
    validate(inst)
    return inst
