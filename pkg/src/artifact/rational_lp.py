"""Exact rational linear programming.

A dense two-phase simplex over arbitrary-precision rationals with Bland's
pivot rule.  Everything downstream (market solvers, verifier) funnels its
LPs through this module, so the contract is strict: solutions are exact,
duals are exact, and identical programs always produce identical output.

Rationals are gmpy2.mpq when available (much faster), fractions.Fraction
otherwise; the two interoperate transparently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

try:
    from gmpy2 import mpq as _mpq

    def rat(value: Union[int, str, "Rational"] = 0, den: Optional[int] = None) -> "Rational":
        if den is not None:
            return _mpq(value, den)
        return _mpq(value)

except ImportError:  # pragma: no cover - exercised only without gmpy2
    from fractions import Fraction as _mpq

    def rat(value=0, den=None):
        if den is not None:
            return _mpq(value, den)
        if isinstance(value, str):
            return _mpq(value)
        return _mpq(value)

Rational = _mpq

ZERO = rat(0)
ONE = rat(1)

LE = "<="
GE = ">="
EQ = "=="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpError(Exception):
    pass


class MalformedProgram(LpError):
    pass


class UnboundedStage(LpError):
    """Raised by solve_lexicographic when a stage is unbounded."""

    def __init__(self, stage: int):
        super().__init__(f"objective stage {stage} is unbounded")
        self.stage = stage


Coeffs = Union[Sequence, Mapping[int, object]]


@dataclass
class Constraint:
    coeffs: Coeffs
    rel: str
    rhs: object

    def row(self, n: int):
        out = [ZERO] * n
        if isinstance(self.coeffs, Mapping):
            for j, v in self.coeffs.items():
                if not 0 <= j < n:
                    raise MalformedProgram(f"constraint references undeclared variable {j}")
                out[j] = rat(v)
        else:
            if len(self.coeffs) > n:
                raise MalformedProgram("constraint row longer than variable count")
            for j, v in enumerate(self.coeffs):
                out[j] = rat(v)
        if self.rel not in (LE, GE, EQ):
            raise MalformedProgram(f"unknown relation {self.rel!r}")
        return out


@dataclass
class LinearProgram:
    """min/max objective over x >= 0 subject to linear constraints."""

    num_vars: int
    objective: Coeffs = field(default_factory=dict)
    sense: str = "min"
    constraints: list = field(default_factory=list)

    def add(self, coeffs: Coeffs, rel: str, rhs) -> None:
        self.constraints.append(Constraint(coeffs, rel, rhs))

    def _objective_row(self):
        return Constraint(self.objective, LE, 0).row(self.num_vars)


@dataclass
class LpSolution:
    status: str
    primal: Optional[list] = None
    duals: Optional[list] = None
    objective: Optional[object] = None
    stage_values: Optional[list] = None

    def __getitem__(self, j):
        return self.primal[j]


class _Tableau:
    """Simplex tableau in standard form: min c.x, rows a.x (rel) b, x >= 0."""

    def __init__(self, lp: LinearProgram):
        if lp.num_vars < 0:
            raise MalformedProgram("negative variable count")
        n = lp.num_vars
        self.n = n
        self.sense = lp.sense
        if lp.sense not in ("min", "max"):
            raise MalformedProgram(f"unknown sense {lp.sense!r}")
        obj = lp._objective_row()
        if lp.sense == "max":
            obj = [-v for v in obj]
        self.flipped = []  # per-row: True if multiplied by -1 during normalization
        rows = []
        rels = []
        for c in lp.constraints:
            row = c.row(n)
            rhs = rat(c.rhs)
            rel = c.rel
            if rhs < 0:
                row = [-v for v in row]
                rhs = -rhs
                rel = {LE: GE, GE: LE, EQ: EQ}[rel]
                self.flipped.append(True)
            else:
                self.flipped.append(False)
            rows.append((row, rhs))
            rels.append(rel)
        m = len(rows)
        self.m = m
        # Column layout: structural | slack/surplus | artificial | rhs.
        n_slack = sum(1 for r in rels if r != EQ)
        n_art = sum(1 for r in rels if r != LE)
        width = n + n_slack + n_art
        self.width = width
        self.art_start = n + n_slack
        T = []
        basis = []
        id_col = []  # per-row column holding +1 identity (slack or artificial)
        s = n
        a = n + n_slack
        for i, ((row, rhs), rel) in enumerate(zip(rows, rels)):
            full = row + [ZERO] * (n_slack + n_art) + [rhs]
            if rel == LE:
                full[s] = ONE
                basis.append(s)
                id_col.append(s)
                s += 1
            elif rel == GE:
                full[s] = -ONE
                s += 1
                full[a] = ONE
                basis.append(a)
                id_col.append(a)
                a += 1
            else:
                full[a] = ONE
                basis.append(a)
                id_col.append(a)
                a += 1
            T.append(full)
        self.T = T
        self.basis = basis
        self.id_col = id_col
        self.cost = obj + [ZERO] * (width - n)

    def _pivot(self, r: int, c: int, zrow: list) -> None:
        T = self.T
        row = T[r]
        piv = row[c]
        if piv != 1:
            inv = ONE / piv
            row = [v * inv for v in row]
            T[r] = row
        for i, other in enumerate(T):
            if i == r:
                continue
            f = other[c]
            if f:
                T[i] = [x - f * y for x, y in zip(other, row)]
        f = zrow[c]
        if f:
            for j, y in enumerate(row):
                if y:
                    zrow[j] -= f * y
        self.basis[r] = c

    def _run(self, cost: list, allowed) -> str:
        """Bland's rule simplex on the current basis. Returns OPTIMAL/UNBOUNDED."""
        T = self.T
        width = self.width
        # Build the z-row (reduced costs + objective value in last slot).
        zrow = [-v for v in cost] + [ZERO]
        for i, b in enumerate(self.basis):
            f = zrow[b]
            if f:
                row = T[i]
                for j, y in enumerate(row):
                    if y:
                        zrow[j] -= f * y
        while True:
            enter = -1
            for j in range(width):
                if allowed[j] and zrow[j] > 0:
                    enter = j
                    break
            if enter < 0:
                self._zrow = zrow
                return OPTIMAL
            leave = -1
            best = None
            for i, row in enumerate(T):
                a = row[enter]
                if a > 0:
                    ratio = row[-1] / a
                    if best is None or ratio < best or (
                        ratio == best and self.basis[i] < self.basis[leave]
                    ):
                        best = ratio
                        leave = i
            if leave < 0:
                return UNBOUNDED
            self._pivot(leave, enter, zrow)

    def solve(self) -> LpSolution:
        width = self.width
        # Phase 1: minimize the sum of artificials.
        if self.art_start < width:
            p1 = [ZERO] * width
            for j in range(self.art_start, width):
                p1[j] = ONE
            allowed = [True] * (width + 1)
            allowed[width] = False
            status = self._run(p1, allowed)
            if status != OPTIMAL:  # pragma: no cover - phase 1 is always bounded
                raise LpError("phase 1 unbounded")
            if self._zrow[-1] != 0:
                return LpSolution(status=INFEASIBLE)
            self._drive_out_artificials()
        allowed = [j < self.art_start for j in range(width)] + [False]
        status = self._run(self.cost, allowed)
        if status == UNBOUNDED:
            return LpSolution(status=UNBOUNDED)
        primal = [ZERO] * self.n
        for i, b in enumerate(self.basis):
            if b < self.n:
                primal[b] = self.T[i][-1]
        duals = self._extract_duals()
        obj = self._zrow[-1]
        if self.sense == "max":
            obj = -obj
            duals = [-y for y in duals]
        return LpSolution(status=OPTIMAL, primal=primal, duals=duals, objective=obj)

    def _drive_out_artificials(self) -> None:
        # Pivot basic artificials out on any non-artificial column; rows that
        # cannot be pivoted are redundant and harmless (their artificial stays
        # basic at value zero and is barred from re-entering).
        zrow = [ZERO] * (self.width + 1)
        for i in range(self.m):
            if self.basis[i] >= self.art_start:
                row = self.T[i]
                for j in range(self.art_start):
                    if row[j] != 0:
                        self._pivot(i, j, zrow)
                        break

    def _extract_duals(self) -> list:
        # y_i = c_B . (B^-1 e_i) is the final z-row entry of row i's original
        # identity column (its own cost is zero).  Sign flips undo the rhs
        # normalization.
        duals = []
        for i in range(self.m):
            y = self._zrow[self.id_col[i]]
            if self.flipped[i]:
                y = -y
            duals.append(y)
        return duals


def solve(lp: LinearProgram) -> LpSolution:
    """Exact optimum with duals, or Infeasible/Unbounded. Deterministic."""
    return _Tableau(lp).solve()


def solve_lexicographic(lp: LinearProgram, objectives: Sequence) -> LpSolution:
    """Optimize a sequence of (coeffs, sense) stages.

    Each stage is pinned by an exact equality constraint on its optimal value
    before the next stage runs.  Returns the final solution plus the list of
    per-stage optimal values.
    """
    if not objectives:
        raise MalformedProgram("need at least one objective stage")
    work = LinearProgram(
        num_vars=lp.num_vars,
        objective=lp.objective,
        sense=lp.sense,
        constraints=list(lp.constraints),
    )
    values = []
    sol = None
    for idx, (coeffs, sense) in enumerate(objectives):
        work.objective = coeffs
        work.sense = sense
        sol = solve(work)
        if sol.status == INFEASIBLE:
            return LpSolution(status=INFEASIBLE)
        if sol.status == UNBOUNDED:
            raise UnboundedStage(idx)
        values.append(sol.objective)
        if idx + 1 < len(objectives):
            work.add(coeffs, EQ, sol.objective)
    sol.stage_values = values
    return sol


def solve_feasibility(constraints: Iterable, num_vars: int) -> LpSolution:
    """Any exact feasible point of the constraint system, or Infeasible."""
    lp = LinearProgram(num_vars=num_vars)
    for c in constraints:
        if isinstance(c, Constraint):
            lp.constraints.append(c)
        else:
            coeffs, rel, rhs = c
            lp.add(coeffs, rel, rhs)
    return solve(lp)
