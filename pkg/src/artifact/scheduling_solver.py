"""Fast solver for single-machine slot markets.

Goods are slots 1..r(A) with delay t for slot t, shared by all agents; agent i
needs r_i slots and has budget m_i.  Equilibrium prices form a piecewise
linear convex decreasing curve; the solver builds it segment by segment from
the cheapest slots upward.  Each segment S gets the slope

    lambda_S = 2 (m(S) - p_low r(S)) / (r(S) (r(S)+1))

where p_low is the price at the boundary slot of the previous segment, and the
next segment is the subset of remaining agents minimizing that slope, found by
binary search on the slope with a set-function minimization at each probe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from . import submodular
from .market_model import MarketInstance, is_single_machine
from .rational_lp import (
    GE,
    INFEASIBLE,
    LE,
    LinearProgram,
    Rational,
    rat,
    solve_feasibility,
)


class SchedulingError(Exception):
    pass


class NotMarginal(SchedulingError):
    pass


class FeasibilityLpInfeasible(SchedulingError):
    pass


class NotSingleMachine(SchedulingError):
    pass


@dataclass(frozen=True)
class Segment:
    members: FrozenSet[int]  # agent indices
    lam: Rational
    slots: Tuple[int, ...]  # 1-based slot numbers, ascending
    p_low: Rational  # boundary price below this segment


@dataclass(frozen=True)
class SchedulingResult:
    segments: Tuple[Segment, ...]
    prices: Tuple[Rational, ...]  # prices[t-1] is the price of slot t
    allocation: Dict[Tuple[int, int], Rational]  # (agent index, slot-1) -> x
    search_iterations: int


def _extract(instance: MarketInstance) -> Tuple[List[Rational], List[int]]:
    if not is_single_machine(instance):
        raise NotSingleMachine(
            "expected one all-ones covering row per agent over slots with delays 1..m"
        )
    budgets = [a.budget for a in instance.agents]
    reqs = []
    for a in instance.agents:
        r = a.covering[0].rhs
        if r != int(r) or int(r) < 1:
            raise NotSingleMachine(f"agent {a.name} requirement {r} is not a positive integer")
        reqs.append(int(r))
    return budgets, reqs


def lambda_of(budgets: Sequence, requirements: Sequence[int], subset, p_low) -> Rational:
    """Slope a segment for `subset` would need so its slot prices sum to m(S)."""
    m_s = sum(budgets[i] for i in subset)
    r_s = sum(requirements[i] for i in subset)
    return rat(2) * (m_s - rat(p_low) * r_s) / (rat(r_s) * (r_s + 1))


def f_sched(budgets: Sequence, requirements: Sequence[int], subset, p_low, lam) -> Rational:
    """m(S) - p_low r(S) - lam r(S)(r(S)+1)/2; decreasing in lam, zero at lambda_S."""
    m_s = sum(budgets[i] for i in subset)
    r_s = sum(requirements[i] for i in subset)
    return m_s - rat(p_low) * r_s - rat(lam) * r_s * (r_s + 1) / 2


def next_segment_scheduling(
    budgets: Sequence,
    requirements: Sequence[int],
    active: FrozenSet[int],
    p_low,
    trace: Optional[list] = None,
) -> Tuple[FrozenSet[int], Rational, int]:
    """Subset of `active` with the least slope, and that slope.

    Binary search on lam between 0 and max budget; at each probe the
    minimizer of f over nonempty subsets tells whether the target slope is
    above (min f > 0) or below.  The probe minimization is exact (f is
    submodular, the ground set is small).  Returns (subset, lambda, probes).
    """
    if not active:
        raise SchedulingError("no active agents")

    def argmin(lam):
        oracle = submodular.SetFunctionOracle(
            ground_set=tuple(sorted(active)),
            evaluate=lambda s: f_sched(budgets, requirements, s, p_low, lam),
        )
        res = submodular.minimize(oracle)
        return res.minimizer, res.value

    lo = rat(0)
    hi = max(rat(budgets[i]) for i in active)
    s_lo, _ = argmin(lo)
    s_hi, _ = argmin(hi)
    probes = 2
    while s_lo != s_hi:
        # Exact termination guard: the target slope is the least zero of the
        # lower envelope min_S f(S, lam).  The hi-side minimizer's own zero
        # is an upper bound on it; if the envelope's minimum is exactly 0
        # there, that slope is the target and the canonical minimizer at it
        # (the union of all tied sets) is the next segment.  Without this,
        # exact slope ties between distinct subsets keep the two endpoint
        # minimizers different forever.
        cand = lambda_of(budgets, requirements, s_hi, p_low)
        s_cand, v_cand = argmin(cand)
        probes += 1
        if v_cand == 0:
            return s_cand, cand, probes
        mid = (lo + hi) / 2
        s_mid, v_mid = argmin(mid)
        probes += 1
        if trace is not None:
            trace.append(
                {
                    "probe": str(mid),
                    "minimizer": sorted(s_mid),
                    "value": str(v_mid),
                }
            )
        if v_mid > 0:
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    lam = lambda_of(budgets, requirements, s_lo, p_low)
    return s_lo, lam, probes


def allocate_segment(
    slots: Sequence[int],
    prices: Sequence,
    members: Sequence[int],
    budgets: Sequence,
    requirements: Sequence[int],
) -> Dict[Tuple[int, int], Rational]:
    """Split the segment's slots among its members.

    Feasibility LP: each member gets r_i slots in total, pays at most m_i,
    each slot is sold at most once.  Within a correctly built segment the
    system is always feasible (and here every budget is spent exactly,
    because the slot prices sum to m(S)).
    """
    nv = len(members) * len(slots)

    def var(ai, ti):
        return ai * len(slots) + ti

    cons = []
    for ai, i in enumerate(members):
        cons.append(({var(ai, ti): rat(1) for ti in range(len(slots))}, GE, requirements[i]))
        cons.append(
            ({var(ai, ti): rat(prices[ti]) for ti in range(len(slots))}, LE, budgets[i])
        )
    for ti in range(len(slots)):
        cons.append(({var(ai, ti): rat(1) for ai in range(len(members))}, LE, 1))
    sol = solve_feasibility(cons, nv)
    if sol.status == INFEASIBLE:
        raise FeasibilityLpInfeasible(f"segment over slots {list(slots)} cannot be allocated")
    out = {}
    for ai, i in enumerate(members):
        for ti, t in enumerate(slots):
            v = sol.primal[var(ai, ti)]
            if v != 0:
                out[(i, t - 1)] = v
    return out


def solve_scheduling(instance: MarketInstance, trace: Optional[list] = None) -> SchedulingResult:
    """Equilibrium of a single-machine slot market.

    Builds price segments from the last slot backwards; slot t in segment k
    gets price p_low + (T^{k-1} - t) * lambda_k where T^{k-1} is one past the
    segment's last slot.  Each segment's slots are then split among its
    members by a feasibility LP.
    """
    budgets, reqs = _extract(instance)
    n = len(budgets)
    total = sum(reqs)
    prices: List[Rational] = [rat(0)] * total
    active = frozenset(range(n))
    p_low = rat(0)
    upper = total + 1  # one past the last slot of the segment being built
    segments = []
    allocation: Dict[Tuple[int, int], Rational] = {}
    iterations = 0
    while active:
        subset, lam, probes = next_segment_scheduling(budgets, reqs, active, p_low, trace)
        iterations += probes
        r_s = sum(reqs[i] for i in subset)
        lower = upper - r_s  # first slot of this segment
        slots = list(range(lower, upper))
        for t in slots:
            prices[t - 1] = p_low + (upper - t) * lam
        seg = Segment(members=subset, lam=lam, slots=tuple(slots), p_low=p_low)
        segments.append(seg)
        if trace is not None:
            trace.append(
                {
                    "segment": sorted(instance.agents[i].name for i in subset),
                    "lambda": str(lam),
                    "slots": slots,
                }
            )
        allocation.update(
            allocate_segment(slots, [prices[t - 1] for t in slots], sorted(subset), budgets, reqs)
        )
        p_low = prices[lower - 1]
        upper = lower
        active = active - subset
    segments.reverse()  # cheapest-slot segment was built first; report left to right
    return SchedulingResult(
        segments=tuple(segments),
        prices=tuple(prices),
        allocation=allocation,
        search_iterations=iterations,
    )


def _segment_of(result: SchedulingResult, agent: int) -> Segment:
    for seg in result.segments:
        if agent in seg.members:
            return seg
    raise KeyError(agent)


def is_marginal(result: SchedulingResult, agent: int, requirement: int) -> bool:
    """Whether the agent holds exactly the last (cheapest) slots of its segment."""
    seg = _segment_of(result, agent)
    want = set(seg.slots[-requirement:])
    for t in seg.slots:
        x = result.allocation.get((agent, t - 1), rat(0))
        if t in want and x != 1:
            return False
        if t not in want and x != 0:
            return False
    return True


def marginal_payment(instance: MarketInstance, agent_name: str, certify: bool = True) -> Rational:
    """Infimum budget the agent could declare without disturbing any segment
    formed before its own.

    Lowering the agent's declared budget only lowers the slopes of candidate
    sets containing it, so an earlier iteration's choice changes exactly when
    some such set ties the slope actually chosen there.  Each tie is linear
    in the declared budget; the infimum is the largest tie value (clipped at
    zero).  Only a marginal agent - one holding precisely the cheapest slots
    of its segment - has this well-defined detachment point.
    """
    budgets, reqs = _extract(instance)
    agent = instance.agent_index(agent_name)
    result = solve_scheduling(instance)
    if not is_marginal(result, agent, reqs[agent]):
        raise NotMarginal(f"agent {agent_name} does not hold the cheapest slots of its segment")
    # Replay the run, collecting tie thresholds from iterations before the
    # agent's own segment.  Segments were built cheapest-first.
    built = sorted(result.segments, key=lambda s: s.slots[0], reverse=True)
    candidates = [rat(0)]
    for seg in built:
        if agent in seg.members:
            break
        active = set()
        for later in built[built.index(seg) :]:
            active |= later.members
        # tie: lambda_S(m') = seg.lam for S containing the agent
        for s in _subsets_with(sorted(active), agent):
            m_rest = sum(budgets[i] for i in s if i != agent)
            r_s = sum(reqs[i] for i in s)
            tie = seg.lam * r_s * (r_s + 1) / 2 + seg.p_low * r_s - m_rest
            if tie > 0:
                candidates.append(tie)
    payment = max(candidates)
    if certify:
        _certify_marginal(instance, agent, payment, result)
    return payment


def _subsets_with(elements: Sequence[int], required: int):
    rest = [e for e in elements if e != required]
    for mask in range(1 << len(rest)):
        s = [required]
        for b, e in enumerate(rest):
            if mask >> b & 1:
                s.append(e)
        yield frozenset(s)


def _earlier_segments(result: SchedulingResult, agent: int) -> List[Tuple[FrozenSet[int], Rational]]:
    out = []
    for seg in sorted(result.segments, key=lambda s: s.slots[0], reverse=True):
        if agent in seg.members:
            break
        out.append((seg.members, seg.lam))
    return out


def _certify_marginal(instance: MarketInstance, agent: int, payment, result: SchedulingResult):
    baseline = _earlier_segments(result, agent)
    delta = rat(1, 4)

    def rerun(budget):
        agents = list(instance.agents)
        a = agents[agent]
        agents[agent] = type(a)(name=a.name, budget=budget, delays=a.delays, covering=a.covering)
        probe = type(instance)(
            name=instance.name, goods=instance.goods, agents=tuple(agents), graph=instance.graph
        )
        return _earlier_segments(solve_scheduling(probe), agent)

    if rerun(payment + delta) != baseline:
        raise SchedulingError("marginal payment certification failed above the threshold")
    if payment > 0:
        below = payment - min(delta, payment / 2)
        if rerun(below) == baseline:
            raise SchedulingError("marginal payment certification failed below the threshold")
