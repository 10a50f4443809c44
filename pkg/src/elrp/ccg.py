"""Outer loop: column-and-constraint generation over follower scenarios.

The bilevel program is solved by alternating three subproblems:

* SP0, a single-level restriction with duplicated follower variables and one
  optimality cut per recorded follower response, giving a lower bound and a
  candidate siting/sizing decision;
* SP1, the follower's best response to that decision;
* SP2, which re-optimizes the provider objective over follower plans no more
  expensive than SP1's optimum (ties are broken in the leader's favor) and
  supplies the upper bound.

Each round appends the follower response as a new scenario.  A scenario's cut
binds only while the recorded plan remains executable under the leader's port
counts, which indicator columns linearize per station and slot.  The loop
stops once the bound gap closes below epsilon.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

from .colgen import (ColumnPool, Infeasible, Mp0Spec, Mp1Spec, StabilizationBox,
                     default_stabilization, integerize, run_column_generation)
from .evaluate import FleetPlan, LeaderDecision, Route, csp_cost, fo_cost
from .instance import Instance, NodeId, money
from .pten import PtenGraph

log = logging.getLogger("elrp.ccg")

DEFAULT_ITERATION_LIMIT = 50
SP2_COST_TOL = 1e-6


class IterationLimit(Exception):
    def __init__(self, message, lb=None, ub=None):
        super().__init__(message)
        self.lb = lb
        self.ub = ub


@dataclass(frozen=True)
class Scenario:
    """One recorded follower response: fixed routes plus their cost and usage."""
    index: int
    routes: tuple[Route, ...]
    fo_cost_constant: float
    usage: Mapping[tuple[NodeId, int], int]

    @staticmethod
    def from_plan(index: int, plan: FleetPlan, instance: Instance) -> "Scenario":
        return Scenario(index=index, routes=tuple(plan.routes),
                        fo_cost_constant=fo_cost(plan, instance.economics),
                        usage=plan.joint_usage())

    def signature(self) -> tuple:
        return tuple(sorted(r.signature for r in self.routes))


@dataclass
class CcgState:
    scenarios: list[Scenario] = field(default_factory=list)
    lb: float = -math.inf
    ub: float = math.inf
    incumbent: tuple[LeaderDecision, FleetPlan] | None = None
    iteration: int = 0


@dataclass
class CcgResult:
    decision: LeaderDecision
    plan: FleetPlan
    lb: float
    ub: float
    iterations: int
    converged: bool
    log_rows: list[dict] = field(default_factory=list)


def _log_colgen(sink, stage: str, iteration: int, rows) -> None:
    if sink is None:
        return
    for row in rows:
        sink.append({"stage": stage, "outer_iter": iteration, **row})


def solve_sp0(state: CcgState, instance: Instance, graph: PtenGraph,
              pool: ColumnPool, stabilization: StabilizationBox | None = None,
              use_dominance: bool = True,
              trace_sink: list | None = None) -> tuple[LeaderDecision, float, FleetPlan]:
    """Restricted single-level problem: lower bound and a leader candidate."""
    spec = Mp0Spec(instance, leader_fixed=None, beta=None,
                   scenarios=tuple(state.scenarios))
    res = run_column_generation(spec, graph, pool, stabilization, use_dominance)
    _log_colgen(trace_sink, "sp0", state.iteration, res.log_rows)
    plan, decision, sol = integerize(spec, pool)
    return decision, money(sol.objective), plan


def solve_sp1(decision: LeaderDecision, instance: Instance, graph: PtenGraph,
              pool: ColumnPool | None = None,
              stabilization: StabilizationBox | None = None,
              use_dominance: bool = True,
              trace_sink: list | None = None) -> tuple[FleetPlan, float]:
    """Follower best response under fixed port counts."""
    spec = Mp1Spec(instance, ports=dict(decision.ports))
    pool = pool if pool is not None else ColumnPool()
    res = run_column_generation(spec, graph, pool, stabilization, use_dominance)
    _log_colgen(trace_sink, "sp1", 0, res.log_rows)
    plan, _sol = integerize(spec, pool)
    return plan, fo_cost(plan, instance.economics)


def solve_sp2(decision: LeaderDecision, theta_sp1: float, instance: Instance,
              graph: PtenGraph, pool: ColumnPool | None = None,
              stabilization: StabilizationBox | None = None,
              use_dominance: bool = True,
              trace_sink: list | None = None) -> tuple[FleetPlan, float] | None:
    """Leader-optimistic follower check; None marks the infeasible branch."""
    spec = Mp0Spec(instance, leader_fixed=decision, beta=theta_sp1 + SP2_COST_TOL)
    pool = pool if pool is not None else ColumnPool()
    try:
        res = run_column_generation(spec, graph, pool, stabilization, use_dominance)
        _log_colgen(trace_sink, "sp2", 0, res.log_rows)
        plan, _sol = integerize(spec, pool)
    except Infeasible:
        return None
    return plan, csp_cost(decision, plan, instance.economics, instance)


def solve_single_entity(instance: Instance, graph: PtenGraph,
                        use_dominance: bool = True) -> tuple[LeaderDecision, FleetPlan]:
    """Social-planner comparator: minimize both players' cost jointly.

    The service fee cancels as an internal transfer inside the objective;
    the returned plan is then split into per-player costs at the instance's
    fee for reporting.
    """
    spec = Mp0Spec(instance, joint=True)
    pool = ColumnPool()
    run_column_generation(spec, graph, pool, use_dominance=use_dominance)
    plan, decision, _sol = integerize(spec, pool)
    return decision, plan


def run_ccg(instance: Instance, epsilon: float | None = None,
            graph: PtenGraph | None = None,
            iteration_limit: int = DEFAULT_ITERATION_LIMIT,
            stabilize: bool = False,
            use_dominance: bool = True,
            trace_sink: list | None = None) -> CcgResult:
    """Column-and-constraint generation until the bound gap closes.

    ``epsilon=None`` uses the adaptive margin 1e-4 * max(1, |UB|).  Raises
    IterationLimit (with the bounds reached) if the gap does not close.
    ``trace_sink`` collects one row per inner master iteration.
    """
    from .pten import expand

    graph = graph if graph is not None else expand(instance)
    pool = ColumnPool()
    state = CcgState()
    log_rows: list[dict] = []
    stab = None

    while state.iteration < iteration_limit:
        state.iteration += 1
        if stabilize and len(pool) and stab is None:
            stab = default_stabilization(Mp1Spec(instance, ports={}), pool)

        decision, lb, _plan0 = solve_sp0(state, instance, graph, pool, stab,
                                         use_dominance, trace_sink)
        if lb < state.lb - 1e-6:
            log.warning("SP0 bound regressed from %.6f to %.6f", state.lb, lb)
        state.lb = max(state.lb, lb)

        plan1, theta1 = solve_sp1(decision, instance, graph, pool, stab,
                                  use_dominance, trace_sink)
        sp2 = solve_sp2(decision, theta1, instance, graph, pool, stab,
                        use_dominance, trace_sink)
        if sp2 is not None:
            plan_z, theta2 = sp2
            if theta2 < state.ub - 1e-12:
                state.ub = theta2
                state.incumbent = (decision, plan_z)
        else:
            plan_z = plan1

        eps = epsilon if epsilon is not None else 1e-4 * max(1.0, abs(state.ub))
        gap = state.ub - state.lb
        log_rows.append({"iter": state.iteration, "LB": state.lb, "UB": state.ub,
                         "gap": gap, "n_scenarios": len(state.scenarios),
                         "sp2_feasible": int(sp2 is not None)})
        log.info("ccg iter %d: LB=%.6f UB=%.6f gap=%.6g scenarios=%d",
                 state.iteration, state.lb, state.ub, gap, len(state.scenarios))
        if gap <= eps:
            decision_star, plan_star = state.incumbent
            return CcgResult(decision=decision_star, plan=plan_star,
                             lb=money(state.lb), ub=money(state.ub),
                             iterations=state.iteration, converged=True,
                             log_rows=log_rows)

        scenario = Scenario.from_plan(len(state.scenarios), plan_z, instance)
        known = {s.signature() for s in state.scenarios}
        if scenario.signature() in known:
            raise IterationLimit(
                f"scenario repeated with open gap {gap:.6g} at iteration {state.iteration}",
                lb=state.lb, ub=state.ub)
        state.scenarios.append(scenario)

    raise IterationLimit(
        f"no convergence within {iteration_limit} iterations "
        f"(LB={state.lb:.6f}, UB={state.ub:.6f})", lb=state.lb, ub=state.ub)
