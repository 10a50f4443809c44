"""Self-contained LP and branch-and-bound engine.

Exactly what the masters need and nothing more: minimize a linear objective
over named columns and rows, return primal values plus a dual price for every
row, and recover integrality by branch and bound over bounded integer
columns.

The LP path is a two-phase primal simplex on bounded variables with a dense
basis, Dantzig pricing, and a Bland's-rule fallback after a run of degenerate
pivots.  Strong duality is asserted on every optimal return.  Everything is
deterministic: identical models (same row/column insertion order) produce
identical solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from heapq import heappop, heappush

import numpy as np

FEAS_TOL = 1e-8
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
DUALITY_TOL = 1e-7
INT_TOL = 1e-7
DEGENERATE_PIVOT_LIMIT = 1000  # switch to Bland's rule beyond this

INF = math.inf


class NumericalError(Exception):
    """Pivoting stalled or exceeded the iteration cap."""


class Status(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class _Column:
    name: str
    obj: float
    lower: float
    upper: float
    integer: bool
    coeffs: dict[str, float] = field(default_factory=dict)  # row -> value


@dataclass
class _Row:
    name: str
    sense: str   # "<=", ">=", "=="
    rhs: float


@dataclass(frozen=True)
class LpSolution:
    status: Status
    objective: float
    primal: dict[str, float]
    duals: dict[str, float]
    reduced_costs: dict[str, float]
    dual_objective: float
    best_bound: float | None = None   # set by the MILP solver

    def value(self, col: str) -> float:
        return self.primal[col]


class LpModel:
    """Named-column / named-row minimization model."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.columns: dict[str, _Column] = {}
        self.rows: dict[str, _Row] = {}

    def add_column(self, name: str, obj: float = 0.0, lower: float = 0.0,
                   upper: float | None = None, integer: bool = False,
                   coeffs: dict[str, float] | None = None) -> None:
        if name in self.columns:
            raise ValueError(f"duplicate column {name}")
        hi = INF if upper is None else float(upper)
        col = _Column(name, float(obj), float(lower), hi, integer)
        if not math.isfinite(col.obj):
            raise ValueError(f"column {name}: objective must be finite")
        if integer and not (math.isfinite(col.lower) and math.isfinite(hi)):
            raise ValueError(f"integer column {name} needs finite bounds")
        if col.lower > hi + 1e-12:
            raise ValueError(f"column {name}: lower > upper")
        if coeffs:
            for row, v in coeffs.items():
                if row not in self.rows:
                    raise KeyError(f"column {name}: unknown row {row}")
                if not math.isfinite(v):
                    raise ValueError(f"column {name}: non-finite coefficient in {row}")
                col.coeffs[row] = float(v)
        self.columns[name] = col

    def add_row(self, name: str, sense: str, rhs: float,
                coeffs: dict[str, float] | None = None) -> None:
        if name in self.rows:
            raise ValueError(f"duplicate row {name}")
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"row {name}: bad sense {sense!r}")
        if not math.isfinite(rhs):
            raise ValueError(f"row {name}: rhs must be finite")
        self.rows[name] = _Row(name, sense, float(rhs))
        if coeffs:
            for col, v in coeffs.items():
                if col not in self.columns:
                    raise KeyError(f"row {name}: unknown column {col}")
                if not math.isfinite(v):
                    raise ValueError(f"row {name}: non-finite coefficient on {col}")
                self.columns[col].coeffs[name] = float(v)

    def set_coeff(self, row: str, col: str, value: float) -> None:
        if row not in self.rows or col not in self.columns:
            raise KeyError((row, col))
        self.columns[col].coeffs[row] = float(value)

    def set_bounds(self, col: str, lower: float, upper: float | None) -> None:
        c = self.columns[col]
        c.lower = float(lower)
        c.upper = INF if upper is None else float(upper)

    def integer_columns(self) -> list[str]:
        return [c.name for c in self.columns.values() if c.integer]

    def to_lp_text(self) -> str:
        """Dump in LP interchange text format for external cross-validation."""
        lines = ["Minimize", " obj:"]
        terms = [f" {c.obj:+.12g} {c.name}" for c in self.columns.values() if c.obj]
        lines.append("  " + " ".join(terms) if terms else "  0 " + next(iter(self.columns), "x"))
        lines.append("Subject To")
        sense_txt = {"<=": "<=", ">=": ">=", "==": "="}
        for r in self.rows.values():
            terms = []
            for c in self.columns.values():
                v = c.coeffs.get(r.name)
                if v:
                    terms.append(f"{v:+.12g} {c.name}")
            lines.append(f" {r.name}: {' '.join(terms) if terms else '0 ' + next(iter(self.columns))} "
                         f"{sense_txt[r.sense]} {r.rhs:.12g}")
        lines.append("Bounds")
        for c in self.columns.values():
            lo = f"{c.lower:.12g}" if math.isfinite(c.lower) else "-inf"
            hi = f"{c.upper:.12g}" if math.isfinite(c.upper) else "+inf"
            lines.append(f" {lo} <= {c.name} <= {hi}")
        ints = self.integer_columns()
        if ints:
            lines.append("General")
            lines.append(" " + " ".join(ints))
        lines.append("End")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# compilation to arrays
# ---------------------------------------------------------------------------

@dataclass
class _Compiled:
    col_names: list[str]
    row_names: list[str]
    c: np.ndarray          # objective over structural columns
    A: np.ndarray          # m x n structural coefficients
    senses: list[str]
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integers: list[int]    # structural indices of integer columns


def _compile(model: LpModel) -> _Compiled:
    col_names = list(model.columns)
    row_names = list(model.rows)
    n, m = len(col_names), len(row_names)
    if n == 0:
        raise ValueError("model has no columns")
    c = np.array([model.columns[j].obj for j in col_names])
    A = np.zeros((m, n))
    row_pos = {r: i for i, r in enumerate(row_names)}
    for j, name in enumerate(col_names):
        for row, v in model.columns[name].coeffs.items():
            A[row_pos[row], j] = v
    senses = [model.rows[r].sense for r in row_names]
    b = np.array([model.rows[r].rhs for r in row_names])
    lo = np.array([model.columns[j].lower for j in col_names])
    hi = np.array([model.columns[j].upper for j in col_names])
    integers = [j for j, name in enumerate(col_names) if model.columns[name].integer]
    return _Compiled(col_names, row_names, c, A, senses, b, lo, hi, integers)


# ---------------------------------------------------------------------------
# bounded-variable two-phase simplex
# ---------------------------------------------------------------------------

class _Simplex:
    """min c'x  s.t.  A x = b,  0 <= x <= u   (u may be +inf)."""

    def __init__(self, A: np.ndarray, b: np.ndarray, c: np.ndarray, u: np.ndarray):
        self.m, self.n = A.shape
        self.A = A
        self.b = b
        self.c = c
        self.u = u
        self.degenerate_run = 0
        self.bland = False
        self.iterations = 0

    def solve(self) -> tuple[Status, np.ndarray, np.ndarray]:
        """Returns (status, x, y); y are duals of the equality rows."""
        m, n = self.m, self.n
        if m == 0:
            x = np.where(self.c >= 0, 0.0, self.u)
            if np.any(~np.isfinite(x)):
                return Status.UNBOUNDED, np.zeros(n), np.zeros(0)
            return Status.OPTIMAL, x, np.zeros(0)

        # phase 1: artificial columns with +/-1 matching the residual sign
        x0 = np.zeros(n)
        resid = self.b - self.A @ x0
        art_sign = np.where(resid >= 0, 1.0, -1.0)
        A1 = np.hstack([self.A, np.diag(art_sign)])
        u1 = np.concatenate([self.u, np.full(m, INF)])
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        basis = list(range(n, n + m))
        at_upper = np.zeros(n + m, dtype=bool)

        status, basis, at_upper = self._iterate(A1, self.b, c1, u1, basis, at_upper)
        if status != Status.OPTIMAL:
            raise NumericalError("phase 1 did not terminate cleanly")
        xB = self._basic_values(A1, self.b, u1, basis, at_upper)
        # feasibility is judged per row: the artificial of row i measures that
        # row's residual, so compare it against the row's own scale (a global
        # threshold would let big-M rows mask real violations elsewhere)
        for pos, col in enumerate(basis):
            if col >= n and xB[pos] > 1e-7 * max(1.0, abs(self.b[col - n])):
                return Status.INFEASIBLE, np.zeros(n), np.zeros(m)

        # phase 2: freeze artificials at zero and restore the real objective
        u1 = u1.copy()
        u1[n:] = 0.0
        c2 = np.concatenate([self.c, np.zeros(m)])
        self.degenerate_run = 0
        status, basis, at_upper = self._iterate(A1, self.b, c2, u1, basis, at_upper)
        xB = self._basic_values(A1, self.b, u1, basis, at_upper)
        x_full = np.where(at_upper, np.where(np.isfinite(u1), u1, 0.0), 0.0)
        x_full[basis] = xB
        B = A1[:, basis]
        y = np.linalg.solve(B.T, c2[basis])
        if status == Status.UNBOUNDED:
            return Status.UNBOUNDED, x_full[:n], y
        return Status.OPTIMAL, x_full[:n], y

    # -- internals --------------------------------------------------------

    def _basic_values(self, A, b, u, basis, at_upper) -> np.ndarray:
        xN = np.where(at_upper, np.where(np.isfinite(u), u, 0.0), 0.0)
        xN[basis] = 0.0
        rhs = b - A @ xN
        return np.linalg.solve(A[:, basis], rhs)

    def _iterate(self, A, b, c, u, basis, at_upper):
        m = self.m
        n_tot = A.shape[1]
        in_basis = np.zeros(n_tot, dtype=bool)
        in_basis[basis] = True
        max_iter = 20000 + 50 * (m + n_tot)

        while True:
            self.iterations += 1
            if self.iterations > max_iter:
                raise NumericalError(f"simplex exceeded {max_iter} iterations")
            B = A[:, basis]
            try:
                xB = self._basic_values(A, b, u, basis, at_upper)
                y = np.linalg.solve(B.T, c[basis])
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"singular basis: {exc}") from exc
            rc = c - A.T @ y
            rc[basis] = 0.0

            lower_viol = (~in_basis) & (~at_upper) & (rc < -OPT_TOL)
            upper_viol = (~in_basis) & at_upper & (rc > OPT_TOL)
            candidates = np.flatnonzero(lower_viol | upper_viol)
            if candidates.size == 0:
                return Status.OPTIMAL, basis, at_upper
            if self.bland:
                e = int(candidates[0])
            else:
                e = int(candidates[np.argmax(np.abs(rc[candidates]))])
            sigma = -1.0 if at_upper[e] else 1.0

            w = np.linalg.solve(B, A[:, e])
            # basic variable i changes at rate -sigma*w[i] per unit of entering move
            best_t = INF
            best_idx = None   # position in basis, or ("flip",)
            best_var = n_tot + 1
            for i in range(m):
                rate = -sigma * w[i]
                if rate < -PIVOT_TOL:
                    t = xB[i] / (-rate)
                    hit_upper = False
                elif rate > PIVOT_TOL and math.isfinite(u[basis[i]]):
                    t = (u[basis[i]] - xB[i]) / rate
                    hit_upper = True
                else:
                    continue
                t = max(t, 0.0)
                if t < best_t - PIVOT_TOL or (t < best_t + PIVOT_TOL and basis[i] < best_var):
                    best_t, best_idx, best_var = t, (i, hit_upper), basis[i]
            if math.isfinite(u[e]):
                t_flip = u[e]
                if t_flip < best_t - PIVOT_TOL or (t_flip < best_t + PIVOT_TOL and e < best_var):
                    best_t, best_idx, best_var = t_flip, "flip", e
            if best_idx is None:
                return Status.UNBOUNDED, basis, at_upper

            if best_t <= PIVOT_TOL:
                self.degenerate_run += 1
                if self.degenerate_run > DEGENERATE_PIVOT_LIMIT:
                    self.bland = True
            else:
                self.degenerate_run = 0

            if best_idx == "flip":
                at_upper[e] = not at_upper[e]
            else:
                i, hit_upper = best_idx
                leaving = basis[i]
                in_basis[leaving] = False
                at_upper[leaving] = hit_upper
                basis[i] = e
                in_basis[e] = True
                at_upper[e] = False


# ---------------------------------------------------------------------------
# public solves
# ---------------------------------------------------------------------------

def _standardize(comp: _Compiled, lo: np.ndarray, hi: np.ndarray):
    """Rows to equalities with slacks; variables to [0, u] via shift/flip/split."""
    m, n = comp.A.shape
    n_slack = sum(1 for s in comp.senses if s != "==")
    A = np.zeros((m, n + n_slack))
    A[:, :n] = comp.A
    c = np.concatenate([comp.c, np.zeros(n_slack)])
    lo2 = np.concatenate([lo, np.zeros(n_slack)])
    hi2 = np.concatenate([hi, np.full(n_slack, INF)])
    k = n
    for i, s in enumerate(comp.senses):
        if s == "<=":
            A[i, k] = 1.0
            k += 1
        elif s == ">=":
            A[i, k] = -1.0
            k += 1
    b = comp.b.copy()

    # variable transforms
    cols = []
    transforms = []   # per original column: ("shift", lo) | ("flip", hi) | ("split", j_pos, j_neg)
    c_int: list[float] = []
    u_int: list[float] = []
    for j in range(n + n_slack):
        l, h = lo2[j], hi2[j]
        if math.isfinite(l):
            transforms.append(("shift", l))
            cols.append(A[:, j])
            c_int.append(c[j])
            u_int.append(h - l)
            b -= A[:, j] * l
        elif math.isfinite(h):
            transforms.append(("flip", h))
            cols.append(-A[:, j])
            c_int.append(-c[j])
            u_int.append(INF)
            b -= A[:, j] * h
        else:
            transforms.append(("split", len(cols), len(cols) + 1))
            cols.append(A[:, j])
            c_int.append(c[j])
            u_int.append(INF)
            cols.append(-A[:, j])
            c_int.append(-c[j])
            u_int.append(INF)
    A_int = np.column_stack(cols) if cols else np.zeros((m, 0))
    return A_int, b, np.array(c_int), np.array(u_int), transforms, n_slack


def _recover(transforms, x_int: np.ndarray, n_all: int) -> np.ndarray:
    x = np.zeros(n_all)
    k = 0
    for j, tr in enumerate(transforms):
        if tr[0] == "shift":
            x[j] = tr[1] + x_int[k]
            k += 1
        elif tr[0] == "flip":
            x[j] = tr[1] - x_int[k]
            k += 1
        else:
            x[j] = x_int[tr[1]] - x_int[tr[2]]
            k += 2
    return x


def _solve_compiled(comp: _Compiled, bounds_override: dict[int, tuple[float, float]] | None = None) -> LpSolution:
    lo, hi = comp.lo.copy(), comp.hi.copy()
    if bounds_override:
        for j, (l, h) in bounds_override.items():
            lo[j], hi[j] = l, h
            if l > h + 1e-12:
                return LpSolution(Status.INFEASIBLE, INF, {}, {}, {}, INF)
    m, n = comp.A.shape

    A_int, b_int, c_int, u_int, transforms, n_slack = _standardize(comp, lo, hi)
    core = _Simplex(A_int, b_int, c_int, u_int)
    status, x_int, y = core.solve()
    if status == Status.INFEASIBLE:
        return LpSolution(Status.INFEASIBLE, INF, {}, {}, {}, INF)
    if status == Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, -INF, {}, {}, {}, -INF)

    x_all = _recover(transforms, x_int, n + n_slack)
    x = x_all[:n]
    objective = float(comp.c @ x)
    duals = {comp.row_names[i]: float(y[i]) for i in range(m)}

    # reduced costs in the original column space
    rc = comp.c - comp.A.T @ y
    # dual objective including bound contributions
    dual_obj = float(y @ comp.b)
    for j in range(n):
        if rc[j] > OPT_TOL and math.isfinite(lo[j]):
            dual_obj += rc[j] * lo[j]
        elif rc[j] < -OPT_TOL and math.isfinite(hi[j]):
            dual_obj += rc[j] * hi[j]

    _verify_optimal(comp, x, lo, hi, objective, dual_obj)
    return LpSolution(
        status=Status.OPTIMAL,
        objective=objective,
        primal={comp.col_names[j]: float(x[j]) for j in range(n)},
        duals=duals,
        reduced_costs={comp.col_names[j]: float(rc[j]) for j in range(n)},
        dual_objective=dual_obj,
    )


def _verify_optimal(comp: _Compiled, x, lo, hi, objective, dual_obj) -> None:
    act = comp.A @ x
    for i, s in enumerate(comp.senses):
        r = act[i] - comp.b[i]
        tol = 10 * FEAS_TOL * max(1.0, abs(comp.b[i]), float(np.abs(x).max(initial=0.0)))
        if s == "==" and abs(r) > tol:
            raise NumericalError(f"row {comp.row_names[i]} residual {r}")
        if s == "<=" and r > tol:
            raise NumericalError(f"row {comp.row_names[i]} violated by {r}")
        if s == ">=" and r < -tol:
            raise NumericalError(f"row {comp.row_names[i]} violated by {r}")
    if abs(objective - dual_obj) > DUALITY_TOL * max(1.0, abs(objective)):
        raise NumericalError(
            f"strong duality violated: primal {objective!r} vs dual {dual_obj!r}")


def solve_lp(model: LpModel) -> LpSolution:
    """LP relaxation optimum with a dual price for every row."""
    return _solve_compiled(_compile(model))


def solve_milp(model: LpModel, gap: float = 1e-6) -> LpSolution:
    """Branch and bound over the integer columns.

    Most-fractional branching, best-bound node order; the incumbent is
    returned once it is within the relative ``gap`` of the best bound.
    """
    comp = _compile(model)
    for j in comp.integers:
        if not (math.isfinite(comp.lo[j]) and math.isfinite(comp.hi[j])):
            raise ValueError(f"integer column {comp.col_names[j]} needs finite bounds")

    root = _solve_compiled(comp)
    if root.status != Status.OPTIMAL:
        return root
    if not comp.integers:
        return root

    counter = 0
    heap: list[tuple[float, int, dict]] = [(root.objective, counter, {})]
    incumbent: LpSolution | None = None
    incumbent_obj = INF

    while heap:
        bound, _, overrides = heappop(heap)
        if incumbent is not None and bound >= incumbent_obj - gap * max(1.0, abs(incumbent_obj)):
            continue
        sol = _solve_compiled(comp, overrides)
        if sol.status != Status.OPTIMAL:
            continue
        if sol.objective >= incumbent_obj - 1e-12:
            continue
        frac_j, frac_val, frac_dist = -1, 0.0, 0.0
        for j in comp.integers:
            v = sol.primal[comp.col_names[j]]
            dist = abs(v - round(v))
            if dist > INT_TOL and dist > frac_dist + 1e-12:
                frac_j, frac_val, frac_dist = j, v, dist
        if frac_j < 0:
            incumbent = sol
            incumbent_obj = sol.objective
            continue
        lo_j = overrides.get(frac_j, (comp.lo[frac_j], comp.hi[frac_j]))[0]
        hi_j = overrides.get(frac_j, (comp.lo[frac_j], comp.hi[frac_j]))[1]
        down = dict(overrides)
        down[frac_j] = (lo_j, math.floor(frac_val))
        up = dict(overrides)
        up[frac_j] = (math.ceil(frac_val), hi_j)
        for child in (down, up):
            counter += 1
            heappush(heap, (sol.objective, counter, child))

    if incumbent is None:
        return LpSolution(Status.INFEASIBLE, INF, {}, {}, {}, INF)
    assert incumbent_obj >= root.objective - 1e-6 * max(1.0, abs(root.objective))
    # round integer columns exactly
    primal = dict(incumbent.primal)
    for j in comp.integers:
        name = comp.col_names[j]
        primal[name] = float(round(primal[name]))
    return LpSolution(incumbent.status, incumbent.objective, primal, incumbent.duals,
                      incumbent.reduced_costs, incumbent.dual_objective,
                      best_bound=root.objective)
