"""Set-partitioning masters and the column-generation loop.

Two master shapes are built over a shared pool of priced routes:

* the follower master (customer coverage rows, route cost objective), used to
  compute fleet best responses under fixed port counts;
* the provider master (coverage rows, port-capacity rows, an optional
  follower-cost cap row, and optionally the siting/sizing columns plus one
  optimality cut per recorded follower scenario), used for the outer loop's
  lower-bound problem and for the leader-optimistic tie-break.

Masters are solved as LP relaxations while pricing runs; artificial
high-cost columns guarantee a feasible start and flag infeasibility when they
survive integerization.  Coverage duals can be stabilized inside a BOXSTEP
trust box that is re-centered when duals move and halved when the master
stalls.  Integrality is recovered by solving the final restricted master as a
MILP over the generated pool (price-and-branch).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .evaluate import FleetPlan, LeaderDecision, Route
from .instance import Instance, NodeId, money
from .mathprog import LpModel, LpSolution, Status, solve_lp, solve_milp
from .pten import PtenGraph
from .spprc import (MODE_JOINT, MODE_MP0, MODE_MP1, DualPrices, PricingContext,
                    solve_pricing)

log = logging.getLogger("elrp.colgen")

ARTIFICIAL_COST = 1e6
PHI_TOL = 1e-9
MASTER_ITERATION_LIMIT = 500


class IterationLimit(Exception):
    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class Infeasible(Exception):
    pass


# ---------------------------------------------------------------------------
# column pool
# ---------------------------------------------------------------------------

class ColumnPool:
    """Deduplicated store of feasible routes, keyed by route signature."""

    def __init__(self):
        self.routes: list[Route] = []
        self.names: list[str] = []
        self._index: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self.routes)

    def add(self, route: Route) -> bool:
        sig = route.signature
        if sig in self._index:
            return False
        self._index[sig] = len(self.routes)
        self.names.append(f"r{route.vehicle_type}_{len(self.routes)}")
        self.routes.append(route)
        return True

    def add_many(self, routes: Iterable[Route]) -> int:
        return sum(1 for r in routes if self.add(r))

    def items(self) -> Iterable[tuple[str, Route]]:
        return zip(self.names, self.routes)


# ---------------------------------------------------------------------------
# master specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mp1Spec:
    """Follower master: partition the customers at minimum fleet cost."""
    instance: Instance
    ports: Mapping[NodeId, int]          # available ports per station (0 = unbuilt)

    @property
    def mode(self) -> str:
        return MODE_MP1

    def pricing_stations(self) -> frozenset[NodeId]:
        return frozenset(s for s, n in self.ports.items() if n >= 1)


@dataclass(frozen=True)
class Mp0Spec:
    """Provider-side master.

    With ``leader_fixed`` set it is the leader-optimistic tie-break problem
    (optionally capped by ``beta``); with it unset the siting/sizing columns
    and one optimality cut per scenario are embedded (the outer lower-bound
    problem).  ``joint=True`` turns it into the single-entity comparator:
    both players' costs are minimized together and the fee cancels as an
    internal transfer (no cost cap, no scenario cuts).
    """
    instance: Instance
    leader_fixed: LeaderDecision | None = None
    beta: float | None = None
    scenarios: tuple = ()
    joint: bool = False

    def __post_init__(self):
        if self.joint and (self.beta is not None or self.scenarios):
            raise ValueError("the joint comparator takes no cost cap or scenarios")

    @property
    def mode(self) -> str:
        return MODE_JOINT if self.joint else MODE_MP0

    def pricing_stations(self) -> frozenset[NodeId]:
        if self.leader_fixed is None:
            return frozenset(self.instance.station_ids())
        return frozenset(s for s, y in self.leader_fixed.build.items() if y)


@dataclass
class StabilizationBox:
    center: dict[NodeId, float]
    half_width: float
    penalty: float

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half-width must be positive")


def default_stabilization(spec, pool: ColumnPool) -> StabilizationBox | None:
    """BOXSTEP defaults: width from the mean singleton cost, wide penalty cap."""
    singles = [r.cost_fo for r in pool.routes if len(r.covered_customers) == 1]
    scale = sum(singles) / len(singles) if singles else 1000.0
    return StabilizationBox(center={c: 0.0 for c in spec.instance.customer_ids()},
                            half_width=0.1 * scale, penalty=10.0 * scale)


# ---------------------------------------------------------------------------
# reduced costs (independent recomputation from route fields)
# ---------------------------------------------------------------------------

def reduced_cost_mp1(route: Route, duals: DualPrices) -> float:
    return route.cost_fo - sum(duals.gamma[c] for c in route.covered_customers)


def reduced_cost_mp0(route: Route, duals: DualPrices) -> float:
    rc = -route.revenue_csp - sum(duals.lam[c] for c in route.covered_customers)
    rc += sum(duals.mu.get(key, 0.0) * n for key, n in route.charging_usage.items())
    rc += duals.alpha * route.cost_fo
    return rc


# ---------------------------------------------------------------------------
# master construction
# ---------------------------------------------------------------------------

def _scenario_big_m(instance: Instance) -> float:
    """Data-driven bound on any follower plan cost: one maximal route per customer."""
    eco = instance.economics
    e_max = max(v.battery_capacity for v in instance.vehicle_types)
    p_max = max((s.rated_power for s in instance.stations), default=0.0)
    e_max += eco.horizon * p_max * eco.time_step_hours
    dist_max = e_max / min(v.consumption_rate for v in instance.vehicle_types)
    price_max = max((max(s.electricity_price) + instance.service_fee(s.id)
                     for s in instance.stations), default=0.0)
    c_ub = max(eco.zeta_vehicle * v.purchase_cost +
               eco.cycles_per_year * (v.travel_cost_per_length * dist_max +
                                      price_max * eco.horizon * p_max * eco.time_step_hours)
               for v in instance.vehicle_types)
    return 1.0 + len(instance.customers) * c_ub


def build_master(spec, pool: ColumnPool,
                 stabilization: StabilizationBox | None = None,
                 integer: bool = False) -> LpModel:
    inst = spec.instance
    m = LpModel("rmp1" if spec.mode == MODE_MP1 else "rmp0")

    for c in inst.customer_ids():
        m.add_row(f"cov_{c}", "==", 1.0)
    leader = spec.mode != MODE_MP1 and spec.leader_fixed is None
    for s in inst.stations:
        for t in s.feasible_slots:
            if spec.mode == MODE_MP1:
                rhs = float(spec.ports.get(s.id, 0))
            elif spec.leader_fixed is not None:
                rhs = float(spec.leader_fixed.ports.get(s.id, 0))
            else:
                rhs = 0.0
            m.add_row(f"cap_{s.id}_{t}", "<=", rhs)

    beta_rows: list[str] = []
    if spec.mode == MODE_MP0 and spec.beta is not None:
        m.add_row("beta_0", "<=", float(spec.beta))
        beta_rows.append("beta_0")

    if leader:
        big_m = _scenario_big_m(inst)
        zeta = inst.economics.zeta_station
        for s in inst.stations:
            m.add_column(f"y_{s.id}", obj=0.0, lower=0.0, upper=1.0, integer=integer)
            m.add_column(f"s_{s.id}", obj=money(zeta * s.port_cost),
                         lower=0.0, upper=float(s.size_max), integer=integer)
            m.add_column(f"dp_{s.id}", obj=money(zeta * s.upgrade_cost),
                         lower=0.0, upper=None)
            m.add_row(f"upg_{s.id}", "<=", 0.0,
                      {f"s_{s.id}": s.rated_power, f"y_{s.id}": -s.min_grid_capacity(),
                       f"dp_{s.id}": -1.0})
            m.add_row(f"size_hi_{s.id}", "<=", 0.0,
                      {f"s_{s.id}": 1.0, f"y_{s.id}": -float(s.size_max)})
            m.add_row(f"size_lo_{s.id}", "<=", 0.0,
                      {f"y_{s.id}": float(s.size_min), f"s_{s.id}": -1.0})
            for t in s.feasible_slots:
                m.set_coeff(f"cap_{s.id}_{t}", f"s_{s.id}", -1.0)
        for z, scen in enumerate(spec.scenarios):
            beta_name = f"beta_{z}"
            m.add_row(beta_name, "<=", float(scen.fo_cost_constant) + big_m)
            beta_rows.append(beta_name)
            m.add_column(f"f_{z}", obj=0.0, lower=0.0, upper=1.0,
                         coeffs={beta_name: big_m})
            link = {f"f_{z}": 1.0}
            for (s_id, t), n in sorted(scen.usage.items()):
                if n < 1:
                    continue
                st = inst.station(s_id)
                v_name = f"v_{z}_{s_id}_{t}"
                m.add_column(v_name, obj=0.0, lower=0.0, upper=1.0, integer=integer)
                m.add_row(f"svlo_{z}_{s_id}_{t}", "<=", -float(n),
                          {f"s_{s_id}": -1.0, v_name: -float(st.size_max)})
                m.add_row(f"svhi_{z}_{s_id}_{t}", "<=", float(n - 1 + st.size_max),
                          {f"s_{s_id}": 1.0, v_name: float(st.size_max)})
                m.add_row(f"sf1_{z}_{s_id}_{t}", "<=", 1.0, {f"f_{z}": 1.0, v_name: 1.0})
                link[v_name] = 1.0
            m.add_row(f"sf2_{z}", ">=", 1.0, link)

    for c in inst.customer_ids():
        m.add_column(f"art_{c}", obj=ARTIFICIAL_COST, lower=0.0, upper=None,
                     coeffs={f"cov_{c}": 1.0})
    if stabilization is not None:
        for c in inst.customer_ids():
            center = stabilization.center.get(c, 0.0)
            m.add_column(f"stb_hi_{c}", obj=money(center + stabilization.half_width),
                         lower=0.0, upper=stabilization.penalty,
                         coeffs={f"cov_{c}": 1.0})
            m.add_column(f"stb_lo_{c}", obj=money(-(center - stabilization.half_width)),
                         lower=0.0, upper=stabilization.penalty,
                         coeffs={f"cov_{c}": -1.0})

    for name, route in pool.items():
        coeffs = {f"cov_{c}": 1.0 for c in route.covered_customers}
        for (s_id, t), n in route.charging_usage.items():
            coeffs[f"cap_{s_id}_{t}"] = float(n)
        for row in beta_rows:
            coeffs[row] = route.cost_fo
        if spec.mode == MODE_MP1:
            obj = route.cost_fo
        elif spec.mode == MODE_JOINT:
            obj = money(route.cost_fo - route.revenue_csp)
        else:
            obj = -route.revenue_csp
        # the LP relaxation is iota >= 0: coverage equality already implies
        # iota <= 1, and a finite bound would let a column sit at it with
        # negative reduced cost, breaking the pricing stop criterion
        m.add_column(name, obj=obj, lower=0.0, upper=1.0 if integer else None,
                     integer=integer, coeffs=coeffs)
    return m


def _extract_duals(spec, sol: LpSolution) -> DualPrices:
    inst = spec.instance
    coverage = {c: sol.duals[f"cov_{c}"] for c in inst.customer_ids()}
    mu = {}
    for s in inst.stations:
        for t in s.feasible_slots:
            v = -sol.duals.get(f"cap_{s.id}_{t}", 0.0)
            mu[(s.id, t)] = v if v > 0 else 0.0
    alpha = 0.0
    for row, y in sol.duals.items():
        if row.startswith("beta_"):
            alpha += max(0.0, -y)
    if spec.mode == MODE_MP1:
        return DualPrices(gamma=coverage, mu=mu, alpha=0.0)
    return DualPrices(lam=coverage, mu=mu, alpha=alpha)


def solve_rmp(spec, pool: ColumnPool,
              stabilization: StabilizationBox | None = None) -> tuple[LpSolution, DualPrices]:
    """LP optimum of the restricted master plus its dual prices."""
    sol = solve_lp(build_master(spec, pool, stabilization))
    if sol.status != Status.OPTIMAL:
        raise Infeasible(f"restricted master is {sol.status.value}")
    return sol, _extract_duals(spec, sol)


def _stabilization_active(spec, sol: LpSolution) -> bool:
    return any(v > 1e-9 for name, v in sol.primal.items() if name.startswith("stb_"))


# ---------------------------------------------------------------------------
# column generation loop
# ---------------------------------------------------------------------------

@dataclass
class ColgenResult:
    pool: ColumnPool
    lp_bound: float
    duals: DualPrices
    solution: LpSolution
    iterations: int
    log_rows: list[dict] = field(default_factory=list)


def run_column_generation(spec, graph: PtenGraph, seed_pool: ColumnPool,
                          stabilization: StabilizationBox | None = None,
                          use_dominance: bool = True,
                          iteration_limit: int = MASTER_ITERATION_LIMIT) -> ColgenResult:
    """Iterate master and pricing until no route prices below -1e-9.

    The returned bound is from a final unstabilized solve, so it is the true
    LP optimum of the master over all feasible routes (restricted to the
    generated pool, which pricing certifies is dual-feasible).
    """
    pool = seed_pool
    inst = spec.instance
    stations = spec.pricing_stations()
    box = stabilization
    log_rows: list[dict] = []
    prev_obj = math.inf
    stall = 0

    for iteration in range(1, iteration_limit + 1):
        sol, duals = solve_rmp(spec, pool, box)

        best_phi: dict[int, float] = {}
        added = 0
        for vt in inst.vehicle_types:
            ctx = PricingContext(vt.id, spec.mode, duals, stations)
            cols, best = solve_pricing(graph, ctx, use_dominance=use_dominance)
            best_phi[vt.id] = best
            added += pool.add_many(r for r, _ in cols)
        log_rows.append({
            "iter": iteration, "lp_obj": sol.objective,
            **{f"phi_{k}": v for k, v in best_phi.items()},
            "pool_size": len(pool),
            "box_width": box.half_width if box else 0.0,
        })

        converged_pricing = all(v >= -PHI_TOL for v in best_phi.values()) and added == 0
        if converged_pricing:
            if box is not None and _stabilization_active(spec, sol):
                # boxed duals may sit on the trust-box wall; retire the box
                # and let the endgame run unstabilized so the final duals
                # are exact
                box = None
                continue
            final_sol, final_duals = solve_rmp(spec, pool, None)
            leftovers = 0
            for vt in inst.vehicle_types:
                ctx = PricingContext(vt.id, spec.mode, final_duals, stations)
                cols, best = solve_pricing(graph, ctx, use_dominance=use_dominance)
                leftovers += pool.add_many(r for r, _ in cols)
            if leftovers == 0:
                return ColgenResult(pool, final_sol.objective, final_duals,
                                    final_sol, iteration, log_rows)
            box = None
            continue

        if box is not None:
            center = _coverage_duals(spec, duals)
            drift = max((abs(center[c] - box.center.get(c, 0.0)) for c in center),
                        default=0.0)
            if drift > box.half_width / 2.0:
                box = StabilizationBox(center=center, half_width=box.half_width,
                                       penalty=box.penalty)
            if sol.objective > prev_obj - 1e-9:
                stall += 1
                if stall >= 2:
                    box = StabilizationBox(center=box.center,
                                           half_width=box.half_width / 2.0,
                                           penalty=box.penalty)
                    stall = 0
            else:
                stall = 0
        prev_obj = sol.objective

    raise IterationLimit(f"column generation hit {iteration_limit} iterations",
                         bound=prev_obj)


def _coverage_duals(spec, duals: DualPrices) -> dict[NodeId, float]:
    return dict(duals.gamma if spec.mode == MODE_MP1 else duals.lam)


# ---------------------------------------------------------------------------
# integrality recovery
# ---------------------------------------------------------------------------

def integerize(spec, pool: ColumnPool, gap: float = 1e-6):
    """Solve the restricted master as an integer program over the pool.

    Returns a FleetPlan for the follower master, or (FleetPlan,
    LeaderDecision) for the provider master with embedded siting columns.
    """
    model = build_master(spec, pool, stabilization=None, integer=True)
    sol = solve_milp(model, gap=gap)
    if sol.status != Status.OPTIMAL:
        raise Infeasible(f"integer master is {sol.status.value}")
    if any(sol.primal[f"art_{c}"] > 1e-6 for c in spec.instance.customer_ids()):
        raise Infeasible("artificial columns active: customers cannot be covered")

    plan = FleetPlan(routes=[route for name, route in pool.items()
                             if sol.primal[name] > 0.5])
    if spec.mode == MODE_MP1 or spec.leader_fixed is not None:
        return plan, sol
    inst = spec.instance
    build, ports, upgrade = {}, {}, {}
    for s in inst.stations:
        n = int(round(sol.primal[f"s_{s.id}"]))
        y = int(round(sol.primal[f"y_{s.id}"]))
        if n == 0:
            y = 0
        build[s.id] = y
        ports[s.id] = n if y else 0
        # report the minimal upgrade implied by the chosen size
        upgrade[s.id] = max(0.0, ports[s.id] * s.rated_power - s.min_grid_capacity()) if y else 0.0
    decision = LeaderDecision(build=build, ports=ports, upgrade=upgrade)
    decision.validate(inst)
    return plan, decision, sol
