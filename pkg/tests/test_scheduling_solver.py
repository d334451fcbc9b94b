"""Single-machine solver: slope formulas, segment search, allocation,
marginal payments."""

import pytest

from artifact.market_model import build_multi_type_scheduling, build_single_machine
from artifact.rational_lp import rat
from artifact.scheduling_solver import (
    NotMarginal,
    NotSingleMachine,
    f_sched,
    is_marginal,
    lambda_of,
    marginal_payment,
    next_segment_scheduling,
    solve_scheduling,
)

BUDGETS = [30, 17, 9, 4, 3, 1]
UNIT = [1] * 6


def names(instance, members):
    return sorted(instance.agents[i].name for i in members)


def test_lambda_closed_form():
    # single agent, m = 5, r = 2: prices 10/3, 5/3 sum to 5
    assert lambda_of([rat(5)], [2], {0}, 0) == rat(5, 3)
    # last agent of the reference run: m = 1, r = 1 at p_low = 0
    assert lambda_of([rat(b) for b in BUDGETS], UNIT, {5}, 0) == 1


def test_f_sign():
    b = [rat(x) for x in BUDGETS]
    lam = lambda_of(b, UNIT, {5}, 0)
    assert f_sched(b, UNIT, {5}, 0, lam) == 0
    assert f_sched(b, UNIT, {5}, 0, lam / 2) > 0
    assert f_sched(b, UNIT, {5}, 0, lam * 2) < 0


def test_next_segment_first_pick():
    b = [rat(x) for x in BUDGETS]
    subset, lam, _ = next_segment_scheduling(b, UNIT, frozenset(range(6)), 0)
    assert subset == frozenset({5})
    assert lam == 1


def test_full_run_segments_and_prices():
    inst = build_single_machine(BUDGETS, UNIT)
    res = solve_scheduling(inst)
    got = [(names(inst, s.members), s.lam) for s in res.segments]
    assert got == [
        (["a1"], rat(13)),
        (["a2"], rat(8)),
        (["a3"], rat(14, 3)),
        (["a4", "a5"], rat(5, 3)),
        (["a6"], rat(1)),
    ]
    assert res.prices == (rat(30), rat(17), rat(9), rat(13, 3), rat(8, 3), rat(1))
    # each agent pays its whole budget
    for i, a in enumerate(inst.agents):
        pay = sum(res.prices[j] * res.allocation.get((i, j), rat(0)) for j in range(6))
        assert pay == a.budget


def test_price_curve_convex_decreasing():
    inst = build_single_machine([11, 7, 7, 2], [2, 1, 1, 3])
    res = solve_scheduling(inst)
    p = res.prices
    assert all(p[t] > p[t + 1] for t in range(len(p) - 1)) or all(
        p[t] >= p[t + 1] for t in range(len(p) - 1)
    )
    diffs = [p[t] - p[t + 1] for t in range(len(p) - 1)]
    assert all(diffs[t] >= diffs[t + 1] for t in range(len(diffs) - 1))
    # slopes strictly increase across segments (left to right they decrease)
    lams = [s.lam for s in res.segments]
    assert all(lams[k] > lams[k + 1] for k in range(len(lams) - 1))


def test_requires_single_machine():
    multi = build_multi_type_scheduling([[1, 2], [1, 2]], [[1, 1]], [5])
    with pytest.raises(NotSingleMachine):
        solve_scheduling(multi)


def test_is_marginal():
    inst = build_single_machine(BUDGETS, UNIT)
    res = solve_scheduling(inst)
    # a5 holds slot 5 with x = 4/5 only; a6 fully holds the last slot
    assert is_marginal(res, 5, 1)
    assert not is_marginal(res, 4, 1)


def test_marginal_payment_reference_values():
    inst = build_single_machine(BUDGETS, UNIT)
    assert marginal_payment(inst, "a6") == 0
    assert marginal_payment(inst, "a1") == 25
    with pytest.raises(NotMarginal):
        marginal_payment(inst, "a4")


def test_marginal_payment_certification():
    # certified and uncertified paths agree
    inst = build_single_machine(BUDGETS, UNIT)
    assert marginal_payment(inst, "a1", certify=False) == 25


def test_iteration_budget():
    inst = build_single_machine([97, 61, 41, 23, 11, 5], [3, 2, 2, 1, 1, 1])
    res = solve_scheduling(inst)
    assert res.search_iterations < 200 * len(res.segments)
    total = sum(r for r in (3, 2, 2, 1, 1, 1))
    assert sorted(t for s in res.segments for t in s.slots) == list(range(1, total + 1))
