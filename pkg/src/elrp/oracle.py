"""Brute-force reference implementations for testing.

Exhaustive route enumeration, exhaustive fleet-plan search, and exhaustive
bilevel search over the leader's discrete grid.  These are the ground truth
the pricing, column-generation and outer-loop tests compare against; they are
deliberately simple and refuse inputs beyond desk scale.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass

from .evaluate import FleetPlan, LeaderDecision, Route, csp_cost, simulate_route
from .instance import Instance, NodeId
from .pten import KIND_CUSTOMER, KIND_DUMMY, KIND_SINK, PtenGraph


class BudgetExceeded(Exception):
    pass


class Infeasible(Exception):
    pass


@dataclass(frozen=True)
class EnumerationBudget:
    max_customers: int = 5
    max_route_length: int = 48
    max_plans: int = 2_000_000
    timeout_s: float = 120.0

    def __post_init__(self):
        if min(self.max_customers, self.max_route_length, self.max_plans) <= 0:
            raise ValueError("budget fields must be positive")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")


def enumerate_routes(graph: PtenGraph, vehicle_type: int,
                     budget: EnumerationBudget = EnumerationBudget(),
                     stations: frozenset[NodeId] | None = None) -> list[Route]:
    """Every feasible route of one vehicle type, exactly once.

    Ports are interchangeable, so charging is enumerated on the first port
    row only (the canonical labeling).  ``stations`` restricts which
    candidates may be visited; None allows all of them.
    """
    inst = graph.instance
    if len(inst.customers) > budget.max_customers:
        raise BudgetExceeded(
            f"{len(inst.customers)} customers exceed budget {budget.max_customers}")
    vt = inst.vehicle(vehicle_type)
    allowed = set(inst.station_ids()) if stations is None else set(stations)
    deadline = _time.monotonic() + budget.timeout_s

    def node_ok(node: NodeId) -> bool:
        d = graph.dummies.get(node)
        if d is None:
            return True
        return d.port_tracker == 1 and d.station in allowed

    routes: list[Route] = []
    path: list[NodeId] = [graph.depot]

    def walk(node: NodeId, time: int, used: float, load: float, mask_visited: frozenset):
        if _time.monotonic() > deadline:
            raise BudgetExceeded("enumeration timed out")
        if len(path) > budget.max_route_length:
            return
        for arc in graph.out_arcs[node]:
            head = arc.head
            if not node_ok(head):
                continue
            kind = graph.kind(head)
            if kind == KIND_SINK:
                if not mask_visited:
                    continue
                if time + arc.travel_time > inst.horizon:
                    continue
                if used + vt.consumption_rate * arc.distance > vt.battery_capacity + 1e-9:
                    continue
                route = simulate_route(graph, vehicle_type, path + [head])
                routes.append(route)
                if len(routes) > budget.max_plans:
                    raise BudgetExceeded("route count exceeded budget")
                continue
            if arc.kind == "internal":
                st = inst.station(arc.station)
                gain = st.rated_power * inst.economics.time_step_hours
                if used - gain < -1e-9:
                    continue
                path.append(head)
                walk(head, arc.slot + 1, used - gain, load, mask_visited)
                path.pop()
                continue
            new_used = used + vt.consumption_rate * arc.distance
            if new_used > vt.battery_capacity + 1e-9:
                continue
            raw = time + arc.travel_time
            if kind == KIND_CUSTOMER:
                if head in mask_visited:
                    continue
                cust = inst.customer(head)
                new_load = load + cust.demand
                if new_load > vt.freight_capacity + 1e-9:
                    continue
                arrival = max(raw, cust.window_early)
                if arrival > cust.window_late:
                    continue
                path.append(head)
                walk(head, arrival + cust.service_time, new_used, new_load,
                     mask_visited | {head})
                path.pop()
            elif kind == KIND_DUMMY:
                slot = graph.dummies[head].time_tracker
                if raw > slot:
                    continue
                path.append(head)
                walk(head, slot, new_used, load, mask_visited)
                path.pop()

    walk(graph.depot, 0, 0.0, 0.0, frozenset())
    routes.sort(key=lambda r: r.signature)
    return routes


def enumerate_all_routes(graph: PtenGraph,
                         budget: EnumerationBudget = EnumerationBudget(),
                         stations: frozenset[NodeId] | None = None) -> list[Route]:
    """Routes of every vehicle type, concatenated in type order."""
    out: list[Route] = []
    for vt in graph.instance.vehicle_types:
        out.extend(enumerate_routes(graph, vt.id, budget, stations))
    return out


def _usable(route: Route, decision: LeaderDecision) -> bool:
    for (s, _t) in route.charging_usage:
        if decision.build.get(s, 0) == 0:
            return False
    return True


def _partition_search(routes: list[Route], instance: Instance,
                      decision: LeaderDecision, cost_cap: float,
                      budget: EnumerationBudget) -> list[tuple[float, FleetPlan]]:
    """All customer partitions with total route cost <= cost_cap, respecting
    port capacity under the decision."""
    customers = list(instance.customer_ids())
    usable = [r for r in routes if _usable(r, decision)]
    by_first: dict[NodeId, list[Route]] = {c: [] for c in customers}
    for r in usable:
        lowest = min(customers.index(c) for c in r.covered_customers)
        by_first[customers[lowest]].append(r)

    found: list[tuple[float, FleetPlan]] = []
    usage: dict[tuple[NodeId, int], int] = {}
    chosen: list[Route] = []
    examined = 0
    deadline = _time.monotonic() + budget.timeout_s

    def fits(route: Route) -> bool:
        for key, n in route.charging_usage.items():
            if usage.get(key, 0) + n > decision.ports.get(key[0], 0):
                return False
        return True

    def rec(covered: frozenset, total: float):
        nonlocal examined
        examined += 1
        if examined % 4096 == 0 and _time.monotonic() > deadline:
            raise BudgetExceeded("plan search timed out")
        if len(found) > budget.max_plans:
            raise BudgetExceeded("plan count exceeded budget")
        if total > cost_cap + 1e-9:
            return
        remaining = [c for c in customers if c not in covered]
        if not remaining:
            found.append((total, FleetPlan(routes=list(chosen))))
            return
        pivot = remaining[0]
        for r in by_first[pivot]:
            if r.customer_set & covered:
                continue
            if not fits(r):
                continue
            for key, n in r.charging_usage.items():
                usage[key] = usage.get(key, 0) + n
            chosen.append(r)
            rec(covered | r.customer_set, total + r.cost_fo)
            chosen.pop()
            for key, n in r.charging_usage.items():
                usage[key] -= n

    rec(frozenset(), 0.0)
    return found


def best_fleet_plan(routes: list[Route], instance: Instance,
                    decision: LeaderDecision,
                    budget: EnumerationBudget = EnumerationBudget()) -> tuple[FleetPlan, float]:
    """Minimum-cost exact cover of the customers by whole routes."""
    plans = _partition_search(routes, instance, decision, math.inf, budget)
    if not plans:
        raise Infeasible("no feasible covering plan under this decision")
    best = min(p[0] for p in plans)
    for cost, plan in plans:
        if cost <= best + 1e-12:
            return plan, cost
    raise AssertionError("unreachable")


def optimistic_plan(routes: list[Route], instance: Instance,
                    decision: LeaderDecision,
                    budget: EnumerationBudget = EnumerationBudget()) -> tuple[FleetPlan, float, float]:
    """Among follower-optimal plans, the one the leader likes best.

    Returns (plan, follower cost, leader cost).
    """
    plans = _partition_search(routes, instance, decision, math.inf, budget)
    if not plans:
        raise Infeasible("no feasible covering plan under this decision")
    theta = min(p[0] for p in plans)
    best_plan, best_leader = None, math.inf
    for cost, plan in plans:
        if cost <= theta + 1e-6:
            leader = csp_cost(decision, plan, instance.economics, instance)
            if leader < best_leader - 1e-12:
                best_plan, best_leader = plan, leader
    return best_plan, theta, best_leader


def leader_grid(instance: Instance) -> list[LeaderDecision]:
    """Every leader decision over the discrete (build, size) grid, with the
    minimal transformer upgrade implied by the chosen sizes."""
    stations = list(instance.stations)
    grids: list[list[int]] = []
    for s in stations:
        options = [0] + list(range(max(1, s.size_min), s.size_max + 1))
        grids.append(options)
    out: list[LeaderDecision] = []

    def rec(i: int, ports: dict):
        if i == len(stations):
            out.append(LeaderDecision.with_ports(instance, dict(ports)))
            return
        for n in grids[i]:
            ports[stations[i].id] = n
            rec(i + 1, ports)
        ports.pop(stations[i].id, None)

    rec(0, {})
    # deterministic order: fewest stations built first, then ports
    out.sort(key=lambda d: (sum(d.build.values()), tuple(sorted(d.ports.items()))))
    return out


def bilevel_exhaustive(instance: Instance, graph: PtenGraph,
                       budget: EnumerationBudget = EnumerationBudget()
                       ) -> tuple[LeaderDecision, FleetPlan, float]:
    """Ground-truth bilevel optimum by searching the whole leader grid.

    For each (build, size) point the follower's optimum is computed by
    exhaustive partition search and ties are resolved in the leader's favor;
    the leader-cost minimizer over the grid is returned.
    """
    if len(instance.stations) > 2:
        raise BudgetExceeded("bilevel enumeration supports at most 2 stations")
    if any(s.size_max > 3 for s in instance.stations):
        raise BudgetExceeded("bilevel enumeration supports size_max <= 3")

    all_routes = enumerate_all_routes(graph, budget)
    best = None
    for decision in leader_grid(instance):
        try:
            plan, _theta, leader = optimistic_plan(all_routes, instance, decision, budget)
        except Infeasible:
            continue
        if best is None or leader < best[2] - 1e-12:
            best = (decision, plan, leader)
    if best is None:
        raise Infeasible("no leader decision admits a feasible follower plan")
    return best
