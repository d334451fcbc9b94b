"""Set-function minimization over nonempty subsets, by exhaustive enumeration.

Ground sets here are agent sets (at most a handful of elements), so
enumeration is both the simplest and the only exact option.  The canonical
minimizer rule makes results deterministic and, for submodular inputs,
maximal: the union of all minimizers of a submodular function is itself a
minimizer (the minimizers form a lattice).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, FrozenSet, Sequence, Tuple

DEFAULT_THRESHOLD = 20


class GroundSetTooLarge(Exception):
    pass


@dataclass(frozen=True)
class SetFunctionOracle:
    ground_set: Tuple
    evaluate: Callable[[FrozenSet], object]


def _subsets(ground: Sequence):
    for size in range(1, len(ground) + 1):
        for combo in combinations(ground, size):
            yield frozenset(combo)


@dataclass(frozen=True)
class MinimizeResult:
    minimizer: FrozenSet
    value: object
    union_is_minimizer: bool


def minimize(oracle: SetFunctionOracle, threshold: int = DEFAULT_THRESHOLD) -> MinimizeResult:
    """Exact minimum of the oracle over nonempty subsets of the ground set.

    Canonical minimizer: the union of all minimizing sets when that union is
    itself a minimizer (always the case for submodular functions); otherwise
    the lexicographically smallest minimizer, with the non-lattice structure
    flagged in the result.
    """
    ground = sorted(oracle.ground_set)
    if not ground:
        raise ValueError("ground set is empty")
    if len(ground) > threshold:
        raise GroundSetTooLarge(f"{len(ground)} elements exceeds threshold {threshold}")
    values = {}
    best = None
    for s in _subsets(ground):
        v = oracle.evaluate(s)
        values[s] = v
        if best is None or v < best:
            best = v
    minimizers = [s for s, v in values.items() if v == best]
    union = frozenset().union(*minimizers)
    if values[union] == best:
        return MinimizeResult(minimizer=union, value=best, union_is_minimizer=True)
    smallest = min(minimizers, key=lambda s: tuple(sorted(s)))
    return MinimizeResult(minimizer=smallest, value=best, union_is_minimizer=False)


@dataclass(frozen=True)
class SubmodularityVerdict:
    holds: bool
    counterexample: Tuple = None  # (S, T, x) violating the diminishing-returns law


def check_submodular(oracle: SetFunctionOracle, threshold: int = DEFAULT_THRESHOLD) -> SubmodularityVerdict:
    """Exhaustively check f(S+x) - f(S) >= f(T+x) - f(T) for all S <= T, x not in T.

    The marginal-value inequality is checked on nonempty S (the oracle's
    domain excludes the empty set, which none of the callers ever query).
    """
    ground = sorted(oracle.ground_set)
    if len(ground) > threshold:
        raise GroundSetTooLarge(f"{len(ground)} elements exceeds threshold {threshold}")
    values = {s: oracle.evaluate(s) for s in _subsets(ground)}
    for t in _subsets(ground):
        rest = [x for x in ground if x not in t]
        for s in _subsets(sorted(t)):
            for x in rest:
                lhs = values[s | {x}] - values[s]
                rhs = values[t | {x}] - values[t]
                if lhs < rhs:
                    return SubmodularityVerdict(holds=False, counterexample=(s, t, x))
    return SubmodularityVerdict(holds=True)
