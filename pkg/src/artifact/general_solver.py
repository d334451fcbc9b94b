"""Equilibrium solver for covering-constraint markets.

Each agent i gets a multiplier lambda_i.  LP(lam) minimizes total
lambda-weighted delay subject to all covering constraints and unit supplies;
its dual prices the goods.  An equilibrium is a lam for which some optimal
primal/dual pair makes every agent spend exactly its budget.

The solver builds "segments" (groups of agents sharing a lambda) from the
lowest lambda up.  Each round raises the multipliers of the remaining agents
A' uniformly by a and watches the surplus function

    f_a(S) = m(S) - pay_S(X, p^a),   X an LP(lam^a) optimum maximizing delay_S,

until some subset's surplus hits zero; that subset (made maximal) is frozen
as the next segment, the rest get an extra epsilon of separation, and the
round repeats.  Prices along the way are "valid" duals: previously frozen
agents keep their alpha rows, goods they buy keep their prices, and no price
ever decreases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from . import submodular
from .market_model import MarketInstance
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

SEARCH_LIMIT = 200  # hard cap on binary-search steps per segment


class GeneralSolverError(Exception):
    pass


class NoTightSet(GeneralSolverError):
    pass


class ValidDualInfeasible(GeneralSolverError):
    pass


class FinalFeasibilityInfeasible(GeneralSolverError):
    pass


class DegenerateInstance(GeneralSolverError):
    pass


class BracketExhausted(GeneralSolverError):
    pass


class EpsilonNotFound(GeneralSolverError):
    pass


class StageLpInfeasible(GeneralSolverError):
    pass


# ---------------------------------------------------------------------------
# Primal side: LP(lam) and its optimal face
# ---------------------------------------------------------------------------


def build_param_lp(instance: MarketInstance, lam: Sequence) -> LinearProgram:
    """LP(lam): min sum_i lam_i d_i.x_i s.t. covering rows and unit supplies."""
    n = len(instance.agents)
    m = instance.num_goods
    obj = {}
    for i, a in enumerate(instance.agents):
        for j in range(m):
            c = rat(lam[i]) * a.delays[j]
            if c:
                obj[i * m + j] = c
    lp = LinearProgram(num_vars=n * m, objective=obj, sense="min")
    for i, a in enumerate(instance.agents):
        for row in a.covering:
            lp.add({i * m + j: c for j, c in enumerate(row.coeffs) if c}, GE, row.rhs)
    for j in range(m):
        lp.add({i * m + j: rat(1) for i in range(n)}, LE, 1)
    return lp


def _base_constraints(instance: MarketInstance) -> Tuple[list, int]:
    lp = build_param_lp(instance, [0] * len(instance.agents))
    return lp.constraints, lp.num_vars


def _delay_coeffs(instance: MarketInstance, agents) -> Dict[int, Rational]:
    m = instance.num_goods
    out = {}
    for i in agents:
        for j in range(m):
            d = instance.agents[i].delays[j]
            if d:
                out[i * m + j] = d
    return out


def stagewise_optimal(
    instance: MarketInstance,
    groups: Sequence[FrozenSet[int]],
    final_subset: Optional[FrozenSet[int]] = None,
    final_sense: str = "min",
):
    """Optimal-face computation for LP(lam) with lambda constant on each group.

    `groups` are ordered by ascending lambda; delay is minimized
    lexicographically from the highest-lambda group down, which pins the
    optimal face regardless of the actual (positive, ordered) lambda values.
    Optionally a final stage optimizes delay of `final_subset` within the
    face.  Returns (allocation vector, per-group delays in `groups` order,
    final-stage value or None).
    """
    cons, nv = _base_constraints(instance)
    lp = LinearProgram(num_vars=nv, constraints=list(cons))
    stages = [(_delay_coeffs(instance, g), "min") for g in reversed(groups)]
    if final_subset is not None:
        stages.append((_delay_coeffs(instance, final_subset), final_sense))
    sol = solve_lexicographic(lp, stages)
    if sol.status == INFEASIBLE:
        raise StageLpInfeasible("covering constraints are jointly unsatisfiable")
    k = len(groups)
    group_delays = list(reversed(sol.stage_values[:k]))
    final_value = sol.stage_values[k] if final_subset is not None else None
    return sol.primal, group_delays, final_value


def _unit_row_caps(instance: MarketInstance) -> Optional[Dict[Tuple[int, int], Rational]]:
    """Per covering row (i,k): bound rate for alpha_ik when all rows are 0/1.

    For 0/1 rows the market embeds in one with a spare slowest unit per row
    (delay = slowest in the row's support + 1, never bought, price zero);
    its dual feasibility row caps alpha_ik at lambda_i * rate.  This keeps
    the dual bounded when every real good is exactly sold.
    """
    caps = {}
    for i, a in enumerate(instance.agents):
        for k, row in enumerate(a.covering):
            supp = []
            for j, c in enumerate(row.coeffs):
                if c == 1:
                    supp.append(j)
                elif c != 0:
                    return None
            if not supp:
                return None
            caps[(i, k)] = max(a.delays[j] for j in supp) + 1
    return caps


# ---------------------------------------------------------------------------
# Solver context: one round of segment finding
# ---------------------------------------------------------------------------


@dataclass
class Context:
    instance: MarketInstance
    active: FrozenSet[int]
    lam: List[Rational]  # current multipliers (before adding a)
    p_cur: List[Rational]
    frozen_groups: List[Tuple[FrozenSet[int], Rational]]  # ascending lambda
    frozen_alpha: Dict[Tuple[int, int], Rational]
    pinned: FrozenSet[int]  # goods whose price is held fixed
    x_pin: Optional[List[Rational]] = None  # an optimal allocation used for pinning/CS
    group_delays: List[Rational] = field(default_factory=list)
    delay_max: Dict[FrozenSet[int], Rational] = field(default_factory=dict)
    x_of: Dict[FrozenSet[int], List[Rational]] = field(default_factory=dict)

    @property
    def lam_active(self) -> Rational:
        some = next(iter(self.active))
        return self.lam[some]

    def groups(self) -> List[FrozenSet[int]]:
        return [g for g, _ in self.frozen_groups] + [self.active]

    def prepare(self):
        """Compute the optimal face (valid for every a >= 0 this round)."""
        x, delays, _ = stagewise_optimal(self.instance, self.groups())
        self.group_delays = delays
        if self.x_pin is None:
            self.x_pin = x

    def obj_opt(self, a) -> Rational:
        """Optimal value of LP(lam^a), linear in a via the cached face delays."""
        gs = self.groups()
        total = rat(0)
        for g, d in zip(gs, self.group_delays):
            lam_g = self.lam[next(iter(g))] + (rat(a) if g is self.active else 0)
            total += lam_g * d
        return total

    def subset_face(self, subset: FrozenSet[int]):
        """(max delay_S over the optimal face, attaining allocation)."""
        if subset not in self.delay_max:
            cons, nv = _base_constraints(self.instance)
            lp = LinearProgram(num_vars=nv, constraints=list(cons))
            for g, d in zip(self.groups(), self.group_delays):
                lp.add(_delay_coeffs(self.instance, g), EQ, d)
            lp.objective = _delay_coeffs(self.instance, subset)
            lp.sense = "max"
            sol = solve(lp)
            if sol.status != "optimal":  # pragma: no cover - face is a polytope
                raise StageLpInfeasible(f"face optimization failed: {sol.status}")
            self.delay_max[subset] = sol.objective
            self.x_of[subset] = sol.primal
        return self.delay_max[subset], self.x_of[subset]


def _bought_by(instance: MarketInstance, x: Sequence, agents) -> FrozenSet[int]:
    m = instance.num_goods
    return frozenset(
        j for j in range(m) if any(x[i * m + j] > 0 for i in agents)
    )


def valid_dual(ctx: Context, a) -> Tuple[Dict[Tuple[int, int], Rational], List[Rational]]:
    """Canonical valid dual optimum of DLP(lam^a).

    Constraints: dual feasibility at lam^a with frozen alphas fixed, prices
    p_cur + delta with delta >= 0 and delta = 0 on pinned goods, 0/1-row caps,
    and exact optimality (dual objective equals the known primal optimum).
    Among these, maximize sum r alpha of the active agents, then minimize the
    total price increase; this pair of tie-breaks makes the dual unique in
    practice and reproduces the segment boundary prices.
    """
    inst = ctx.instance
    n, m = len(inst.agents), inst.num_goods
    caps = _unit_row_caps(inst)
    lam_a = list(ctx.lam)
    for i in ctx.active:
        lam_a[i] = lam_a[i] + rat(a)
    # variables: delta_0..delta_{m-1}, then alpha rows of active agents
    a_off = {}
    nv = m
    for i in sorted(ctx.active):
        a_off[i] = nv
        nv += len(inst.agents[i].covering)
    cons = LinearProgram(num_vars=nv)
    for i, ag in enumerate(inst.agents):
        for j in range(m):
            # lam_i d_ij + p_j + delta_j - sum_k a_ijk alpha_ik >= 0
            row = {j: rat(1)}
            rhs = -lam_a[i] * ag.delays[j] - ctx.p_cur[j]
            if i in ctx.active:
                for k, crow in enumerate(ag.covering):
                    if crow.coeffs[j]:
                        row[a_off[i] + k] = -crow.coeffs[j]
            else:
                for k, crow in enumerate(ag.covering):
                    if crow.coeffs[j]:
                        rhs += crow.coeffs[j] * ctx.frozen_alpha[(i, k)]
            cons.add(row, GE, rhs)
    for j in ctx.pinned:
        cons.add({j: rat(1)}, EQ, 0)
    if caps:
        for i in sorted(ctx.active):
            for k in range(len(inst.agents[i].covering)):
                cons.add({a_off[i] + k: rat(1)}, LE, lam_a[i] * caps[(i, k)])
    # exact dual optimality: sum r alpha - sum p = primal optimum
    opt = ctx.obj_opt(a)
    row = {}
    rhs = opt + sum(ctx.p_cur)
    for i in sorted(ctx.active):
        for k, crow in enumerate(inst.agents[i].covering):
            if crow.rhs:
                row[a_off[i] + k] = crow.rhs
    for (i, k), al in ctx.frozen_alpha.items():
        rhs -= inst.agents[i].covering[k].rhs * al
    for j in range(m):
        row[j] = row.get(j, rat(0)) - 1
    cons.add(row, EQ, rhs)
    stage1 = {}
    for i in sorted(ctx.active):
        for k, crow in enumerate(inst.agents[i].covering):
            if crow.rhs:
                stage1[a_off[i] + k] = crow.rhs
    stage2 = {j: rat(1) for j in range(m)}
    sol = solve_lexicographic(cons, [(stage1, "max"), (stage2, "min")])
    if sol.status == INFEASIBLE:
        raise ValidDualInfeasible(f"no valid dual at a={a}")
    alpha = dict(ctx.frozen_alpha)
    for i in sorted(ctx.active):
        for k in range(len(inst.agents[i].covering)):
            alpha[(i, k)] = sol.primal[a_off[i] + k]
    prices = [ctx.p_cur[j] + sol.primal[j] for j in range(m)]
    return alpha, prices


def eval_f(ctx: Context, a, subset: FrozenSet[int], alpha=None) -> Rational:
    """Surplus of `subset` at lam^a under the canonical valid dual.

    Uses the complementary-slackness identity
    pay_S = sum_{i in S} sum_k r_ik alpha_ik - lam(S) * delay_S(X),
    with delay_S maximized over the cached optimal face.
    """
    inst = ctx.instance
    if all(v == 0 for v in ctx.lam) and a == 0:
        # base round at lam = 0: prices are zero, nobody pays
        return sum(inst.agents[i].budget for i in subset)
    if alpha is None:
        alpha, _ = valid_dual(ctx, a)
    d_max, _ = ctx.subset_face(subset)
    lam_s = ctx.lam_active + rat(a)
    value = rat(0)
    for i in subset:
        value += inst.agents[i].budget
        for k, crow in enumerate(inst.agents[i].covering):
            value -= crow.rhs * alpha[(i, k)]
    return value + lam_s * d_max


def min_f(ctx: Context, a) -> Tuple[FrozenSet[int], Rational]:
    """Canonical minimizer and minimum of f_a over nonempty subsets of A'."""
    if all(v == 0 for v in ctx.lam) and a == 0:
        alpha = None
    else:
        alpha, _ = valid_dual(ctx, a)
    oracle = submodular.SetFunctionOracle(
        ground_set=tuple(sorted(ctx.active)),
        evaluate=lambda s: eval_f(ctx, a, s, alpha),
    )
    res = submodular.minimize(oracle)
    return res.minimizer, res.value


def find_zero_a(ctx: Context, subset: FrozenSet[int], lo, hi) -> Optional[Rational]:
    """Smallest a in [lo, hi] at which subset's surplus can vanish.

    One LP over (a, delta, alpha): dual feasibility at lam^a, complementary
    slackness with the pinning allocation and with the delay_S-maximizing
    face point, the validity constraints, and pay_S = m(S); minimize a.
    Returns None if the system is infeasible on the bracket.
    """
    inst = ctx.instance
    n, m = len(inst.agents), inst.num_goods
    caps = _unit_row_caps(inst)
    _, x_s = ctx.subset_face(subset)
    x_pin = ctx.x_pin
    a_off = {}
    nv = 1 + m  # var 0 = a, vars 1..m = delta
    for i in sorted(ctx.active):
        a_off[i] = nv
        nv += len(inst.agents[i].covering)
    lp = LinearProgram(num_vars=nv, objective={0: rat(1)}, sense="min")
    lp.add({0: rat(1)}, GE, lo)
    lp.add({0: rat(1)}, LE, hi)

    def supports(i, j):
        return x_pin[i * m + j] > 0 or x_s[i * m + j] > 0

    for i, ag in enumerate(inst.agents):
        for j in range(m):
            row = {1 + j: rat(1)}
            rhs = -ctx.lam[i] * ag.delays[j] - ctx.p_cur[j]
            if i in ctx.active:
                row[0] = ag.delays[j]
                for k, crow in enumerate(ag.covering):
                    if crow.coeffs[j]:
                        row[a_off[i] + k] = -crow.coeffs[j]
            else:
                for k, crow in enumerate(ag.covering):
                    if crow.coeffs[j]:
                        rhs += crow.coeffs[j] * ctx.frozen_alpha[(i, k)]
            lp.add(row, EQ if supports(i, j) else GE, rhs)
    # goods undersold at an optimal allocation carry zero price
    for j in range(m):
        sold_pin = sum(x_pin[i * m + j] for i in range(n))
        sold_s = sum(x_s[i * m + j] for i in range(n))
        if (sold_pin < 1 or sold_s < 1) and j not in ctx.pinned:
            if ctx.p_cur[j] > 0:
                raise ValidDualInfeasible(f"undersold good {inst.goods[j]} has a positive price")
            lp.add({1 + j: rat(1)}, EQ, 0)
    for j in ctx.pinned:
        lp.add({1 + j: rat(1)}, EQ, 0)
    # alpha = 0 on covering rows slack at either allocation
    for i in sorted(ctx.active):
        for k, crow in enumerate(inst.agents[i].covering):
            for x in (x_pin, x_s):
                got = sum(crow.coeffs[j] * x[i * m + j] for j in range(m) if crow.coeffs[j])
                if got > crow.rhs:
                    lp.add({a_off[i] + k: rat(1)}, EQ, 0)
                    break
    if caps:
        for i in sorted(ctx.active):
            for k in range(len(inst.agents[i].covering)):
                lp.add({a_off[i] + k: rat(1), 0: -caps[(i, k)]}, LE, ctx.lam[i] * caps[(i, k)])
    # the subset pays exactly its budget: sum_j (p_cur_j + delta_j) x^S_ij over i in S
    row = {}
    rhs = rat(0)
    for i in subset:
        rhs += inst.agents[i].budget
        for j in range(m):
            x = x_s[i * m + j]
            if x:
                row[1 + j] = row.get(1 + j, rat(0)) + x
                rhs -= ctx.p_cur[j] * x
    lp.add(row, EQ, rhs)
    sol = solve(lp)
    if sol.status != "optimal":
        return None
    return sol.primal[0]


def next_segment(ctx: Context, trace: Optional[list] = None):
    """Find the next segment: maximal S* with min-surplus zero at a*.

    Returns (S*, a*, alpha at a*, prices at a*, probes used).
    Doubling brackets the zero of g(a) = min_S f_a(S), bisection narrows it
    until the minimizer stabilizes, an exact LP pins a*, and a verification
    loop guards against the minimizer changing inside the last bracket.
    """
    probes = 0

    def record(kind, **kw):
        if trace is not None:
            trace.append({"event": kind, **kw})

    s_lo, v_lo = min_f(ctx, 0)
    probes += 1
    record("entry", a="0", min=str(v_lo), set=sorted(s_lo))
    if v_lo < 0:
        raise NoTightSet(f"surplus already negative at a=0 (set {sorted(s_lo)})")
    lo = rat(0)
    hi = rat(1)
    while True:
        s_hi, v_hi = min_f(ctx, hi)
        probes += 1
        record("bracket", a=str(hi), min=str(v_hi), set=sorted(s_hi))
        if v_hi <= 0:
            break
        lo, s_lo, v_lo = hi, s_hi, v_hi
        hi = hi * 2
        if probes > SEARCH_LIMIT:
            raise BracketExhausted("no subset's surplus reaches zero")
    while s_lo != s_hi and probes <= SEARCH_LIMIT:
        mid = (lo + hi) / 2
        s_mid, v_mid = min_f(ctx, mid)
        probes += 1
        record("probe", a=str(mid), min=str(v_mid), set=sorted(s_mid))
        if v_mid > 0:
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    candidate = s_hi
    while True:
        a_star = find_zero_a(ctx, candidate, lo, hi)
        if a_star is None:
            raise NoTightSet(f"no tightening point for set {sorted(candidate)} in bracket")
        s_min, v_min = min_f(ctx, a_star)
        probes += 1
        record("zero", a=str(a_star), min=str(v_min), set=sorted(s_min))
        if v_min == 0:
            break
        # minimizer changed strictly inside the bracket; tighten and retry
        hi, candidate = a_star, s_min
        if probes > SEARCH_LIMIT:
            raise BracketExhausted("zero-verification loop did not converge")
    alpha, prices = valid_dual(ctx, a_star)
    # expand to the maximal zero-surplus superset
    s_star = s_min if eval_f(ctx, a_star, s_min, alpha) == 0 else candidate
    rest = set(ctx.active) - set(s_star)
    while rest:
        oracle = submodular.SetFunctionOracle(
            ground_set=tuple(sorted(rest)),
            evaluate=lambda t: eval_f(ctx, a_star, frozenset(s_star) | t, alpha),
        )
        res = submodular.minimize(oracle)
        if res.value > 0:
            break
        s_star = frozenset(s_star) | res.minimizer
        rest -= set(res.minimizer)
    record("segment", a=str(a_star), set=sorted(s_star))
    return frozenset(s_star), a_star, alpha, prices, probes


def _next_context(ctx: Context, s_star, a_star, alpha, prices, eps) -> Context:
    inst = ctx.instance
    lam_mid = list(ctx.lam)
    for i in ctx.active:
        lam_mid[i] = lam_mid[i] + a_star
    remaining = ctx.active - s_star
    lam_new = list(lam_mid)
    for i in remaining:
        lam_new[i] = lam_new[i] + eps
    frozen_alpha = dict(ctx.frozen_alpha)
    for i in s_star:
        for k in range(len(inst.agents[i].covering)):
            frozen_alpha[(i, k)] = alpha[(i, k)]
    # pinning allocation: optimal at lam_mid, jointly optimal for the remainder
    groups = ctx.groups()
    x_hat, _, _ = stagewise_optimal(inst, groups, final_subset=remaining, final_sense="min")
    pinned = _bought_by(inst, x_hat, set(range(len(inst.agents))) - remaining)
    new = Context(
        instance=inst,
        active=remaining,
        lam=lam_new,
        p_cur=list(prices),
        frozen_groups=ctx.frozen_groups + [(s_star, lam_mid[next(iter(s_star))])],
        frozen_alpha=frozen_alpha,
        pinned=pinned,
        x_pin=x_hat,
    )
    new.prepare()
    return new


def compute_epsilon(ctx: Context, s_star, a_star, alpha, prices) -> Tuple[Rational, Context]:
    """Separation step: largest eps in {1, 1/2, 1/4, ...} keeping the
    remaining agents' surplus nonnegative in the next round's context."""
    eps = rat(1)
    for _ in range(SEARCH_LIMIT):
        nxt = _next_context(ctx, s_star, a_star, alpha, prices, eps)
        try:
            _, v0 = min_f(nxt, 0)
        except ValidDualInfeasible:
            v0 = rat(-1)
        if v0 >= 0:
            return eps, nxt
        eps = eps / 2
    raise EpsilonNotFound("no separation parameter certified after halving limit")


@dataclass(frozen=True)
class GeneralEquilibrium:
    segments: Tuple[Tuple[FrozenSet[int], Rational], ...]  # ascending lambda
    lam: Tuple[Rational, ...]
    prices: Tuple[Rational, ...]
    allocation: Dict[Tuple[int, int], Rational]
    alpha: Dict[Tuple[int, int], Rational]
    search_iterations: int


def solve_general(instance: MarketInstance, trace: Optional[list] = None) -> GeneralEquilibrium:
    """Full run: repeat next_segment until every agent is frozen, then solve
    the final feasibility LP for an allocation with exact budgets."""
    n = len(instance.agents)
    m = instance.num_goods
    ctx = Context(
        instance=instance,
        active=frozenset(range(n)),
        lam=[rat(0)] * n,
        p_cur=[rat(0)] * m,
        frozen_groups=[],
        frozen_alpha={},
        pinned=frozenset(),
    )
    ctx.prepare()
    total_probes = 0
    first = True
    final_prices = None
    final_alpha = None
    while True:
        seg_trace = [] if trace is not None else None
        s_star, a_star, alpha, prices, probes = next_segment(ctx, seg_trace)
        total_probes += probes
        if first and a_star == 0:
            raise DegenerateInstance("some agents have zero surplus at zero prices")
        first = False
        remaining = ctx.active - s_star
        if trace is not None:
            trace.append(
                {
                    "segment": sorted(instance.agents[i].name for i in s_star),
                    "a": str(a_star),
                    "lambda": str(ctx.lam_active + a_star),
                    "prices": [str(p) for p in prices],
                    "prices_before": [str(p) for p in ctx.p_cur],
                    "pinned": sorted(ctx.pinned),
                    "steps": seg_trace,
                }
            )
        if not remaining:
            lam_fin = list(ctx.lam)
            for i in ctx.active:
                lam_fin[i] = lam_fin[i] + a_star
            ctx.frozen_groups.append((s_star, lam_fin[next(iter(s_star))]))
            ctx.lam = lam_fin
            final_prices = prices
            final_alpha = alpha
            break
        _, ctx = compute_epsilon(ctx, s_star, a_star, alpha, prices)
    allocation = _final_allocation(instance, ctx.lam, final_prices)
    return GeneralEquilibrium(
        segments=tuple(ctx.frozen_groups),
        lam=tuple(ctx.lam),
        prices=tuple(final_prices),
        allocation=allocation,
        alpha=final_alpha,
        search_iterations=total_probes,
    )


def _final_allocation(instance: MarketInstance, lam, prices) -> Dict[Tuple[int, int], Rational]:
    n, m = len(instance.agents), instance.num_goods
    base = build_param_lp(instance, lam)
    opt = solve(base)
    if opt.status != "optimal":
        raise FinalFeasibilityInfeasible("parameterized program has no optimum")
    lp = LinearProgram(num_vars=n * m, constraints=list(base.constraints))
    lp.add(_full_obj(instance, lam), EQ, opt.objective)
    for i, ag in enumerate(instance.agents):
        lp.add({i * m + j: prices[j] for j in range(m) if prices[j]}, EQ, ag.budget)
    sol = solve(lp)
    if sol.status != "optimal":
        raise FinalFeasibilityInfeasible("no optimal allocation spends every budget exactly")
    out = {}
    for i in range(n):
        for j in range(m):
            v = sol.primal[i * m + j]
            if v:
                out[(i, j)] = v
    return out


def _full_obj(instance: MarketInstance, lam) -> Dict[int, Rational]:
    m = instance.num_goods
    out = {}
    for i, ag in enumerate(instance.agents):
        for j in range(m):
            c = lam[i] * ag.delays[j]
            if c:
                out[i * m + j] = c
    return out


def trace_to_jsonl(trace: list) -> str:
    return "\n".join(json.dumps(rec, sort_keys=True) for rec in trace) + "\n"
