"""Pricing engine: resource-constrained shortest paths on the expanded graph.

Given dual prices from a restricted master, finds vehicle routes with negative
reduced cost by label setting.  A label records the last node reached, the
accumulated reduced cost, a resource vector (nodes visited, distance, load,
net energy used, departure time) and the set of customers served; labels are
extended along arcs under the resource extension rules and pruned by
dominance.

Ports are interchangeable, so pricing explores only the first port row of
each available station; the master's capacity rows account for concurrency
and ports are assigned canonically when a plan is extracted.

Dominance note: the textbook rule compares net energy with <=.  With
whole-slot charging that is not value-safe: a label with a fuller battery can
be barred from a charging arc that its "worse" rival may take (charging past
full is infeasible), and in provider-side pricing a skipped slot also forfeits
revenue.  Labels are therefore compared for *equal* net energy whenever
charging is still reachable; the plain <= comparison applies at the sink and
when no station is available.  This keeps pruning exact, which the
dominance-on/off equivalence tests check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Mapping

from .evaluate import Route, simulate_route
from .instance import NodeId
from .pten import ARC_INTERNAL, KIND_CUSTOMER, KIND_DUMMY, KIND_SINK, PtenGraph

RC_EPS = 1e-9       # reduced-cost threshold for returning a column
DOM_TOL = 1e-9      # tolerance in dominance comparisons

MODE_MP1 = "mp1"
MODE_MP0 = "mp0"
# single-entity comparator: minimize both players' cost jointly; the service
# fee cancels as an internal transfer
MODE_JOINT = "joint"


@dataclass(frozen=True)
class DualPrices:
    """Dual prices of the restricted masters, in the sign convention of the
    reduced-cost formulas: coverage duals are free, mu and alpha nonnegative."""
    gamma: Mapping[NodeId, float] = field(default_factory=dict)   # MP1 coverage
    lam: Mapping[NodeId, float] = field(default_factory=dict)     # MP0 coverage
    mu: Mapping[tuple[NodeId, int], float] = field(default_factory=dict)  # (station, t)
    alpha: float = 0.0

    def __post_init__(self):
        if self.alpha < -1e-9:
            raise ValueError("alpha must be nonnegative")
        for v in self.mu.values():
            if v < -1e-9:
                raise ValueError("mu must be nonnegative")


@dataclass(frozen=True)
class PricingContext:
    vehicle_type: int
    mode: str                          # MODE_MP1 or MODE_MP0
    duals: DualPrices
    available_stations: frozenset[NodeId]
    dist_max: float = math.inf

    def coverage_dual(self, customer: NodeId) -> float:
        table = self.duals.gamma if self.mode == MODE_MP1 else self.duals.lam
        return table[customer]


@dataclass(frozen=True)
class ResourceVector:
    n_visited: int
    dist: float
    load: float
    energy_used: float
    departure_time: int
    tw_ok: bool = True


class Label:
    __slots__ = ("node", "cost", "n_visited", "dist", "load", "energy_used",
                 "time", "visited_mask", "parent", "seq", "dominated")

    def __init__(self, node, cost, n_visited, dist, load, energy_used, time,
                 visited_mask, parent, seq):
        self.node = node
        self.cost = cost
        self.n_visited = n_visited
        self.dist = dist
        self.load = load
        self.energy_used = energy_used
        self.time = time              # departure time after serving node
        self.visited_mask = visited_mask
        self.parent = parent
        self.seq = seq
        self.dominated = False

    @property
    def resources(self) -> ResourceVector:
        return ResourceVector(self.n_visited, self.dist, self.load,
                              self.energy_used, self.time)

    def path(self) -> list[NodeId]:
        nodes, lab = [], self
        while lab is not None:
            nodes.append(lab.node)
            lab = lab.parent
        return nodes[::-1]


class _Pricer:
    """One pricing invocation: immutable context, per-node label stores."""

    def __init__(self, graph: PtenGraph, ctx: PricingContext, use_dominance: bool):
        self.graph = graph
        self.ctx = ctx
        self.use_dominance = use_dominance
        inst = graph.instance
        self.inst = inst
        self.vt = inst.vehicle(ctx.vehicle_type)
        self.eco = inst.economics
        self.customer_bit = {c: 1 << i for i, c in enumerate(inst.customer_ids())}
        self.charging_possible = bool(ctx.available_stations)
        self.node_count = len(graph.node_kind)
        self.stats = {"labels_created": 0, "labels_dominated": 0, "routes_found": 0}

        # adjacency restricted to the canonical first port row of available stations
        self.adj: dict[NodeId, list] = {}
        for node, arcs in graph.out_arcs.items():
            if not self._node_allowed(node):
                continue
            kept = [a for a in arcs if self._node_allowed(a.head)]
            self.adj[node] = kept

    def _node_allowed(self, node: NodeId) -> bool:
        d = self.graph.dummies.get(node)
        if d is None:
            return True
        return d.port_tracker == 1 and d.station in self.ctx.available_stations

    # -- arc pricing ------------------------------------------------------

    def arc_cost_shares(self, arc) -> tuple[float, float]:
        """(route cost share c_r, provider cost share co_r) of one arc."""
        eco, vt = self.eco, self.vt
        if arc.kind == ARC_INTERNAL:
            st = self.inst.station(arc.station)
            gain = st.rated_power * eco.time_step_hours
            price = st.electricity_price[arc.slot] + self.inst.service_fee(st.id)
            c = eco.cycles_per_year * price * gain
            co = -eco.cycles_per_year * self.inst.service_fee(st.id) * gain
            return c, co
        c = eco.cycles_per_year * vt.travel_cost_per_length * arc.distance
        if arc.tail == self.graph.depot:
            c += eco.zeta_vehicle * vt.purchase_cost
        return c, 0.0

    def arc_reduced_cost(self, arc) -> float:
        c, co = self.arc_cost_shares(arc)
        d = self.ctx.duals
        if self.ctx.mode == MODE_MP1:
            rc = c
        elif self.ctx.mode == MODE_JOINT:
            rc = c + co
            if arc.kind == ARC_INTERNAL:
                rc += d.mu.get((arc.station, arc.slot), 0.0)
        else:
            rc = co + d.alpha * c
            if arc.kind == ARC_INTERNAL:
                rc += d.mu.get((arc.station, arc.slot), 0.0)
        if self.graph.kind(arc.head) == KIND_CUSTOMER:
            rc -= self.ctx.coverage_dual(arc.head)
        return rc

    # -- extension --------------------------------------------------------

    def extend(self, label: Label, arc, seq: int) -> Label | None:
        """Apply the resource extension rules; None when any bound fails."""
        graph, inst, vt = self.graph, self.inst, self.vt
        head = arc.head
        kind = graph.kind(head)

        n_visited = label.n_visited + 1
        if n_visited > self.node_count:
            return None

        if arc.kind == ARC_INTERNAL:
            st = inst.station(arc.station)
            gain = st.rated_power * self.eco.time_step_hours
            energy = label.energy_used - gain
            if energy < -1e-9:           # charging past full
                return None
            return Label(head, label.cost + self.arc_reduced_cost(arc), n_visited,
                         label.dist, label.load, energy, arc.slot + 1,
                         label.visited_mask, label, seq)

        dist = label.dist + arc.distance
        if dist > self.ctx.dist_max + 1e-9:
            return None
        energy = label.energy_used + vt.consumption_rate * arc.distance
        if energy > vt.battery_capacity + 1e-9:
            return None
        raw = label.time + arc.travel_time

        if kind == KIND_CUSTOMER:
            bit = self.customer_bit[head]
            if label.visited_mask & bit:
                return None
            cust = inst.customer(head)
            load = label.load + cust.demand
            if load > vt.freight_capacity + 1e-9:
                return None
            arrival = max(raw, cust.window_early)
            if arrival > cust.window_late:
                return None
            time = arrival + cust.service_time
            if time > self.eco.horizon:
                return None
            return Label(head, label.cost + self.arc_reduced_cost(arc), n_visited,
                         dist, load, energy, time, label.visited_mask | bit, label, seq)

        if kind == KIND_DUMMY:
            slot = graph.dummies[head].time_tracker
            if raw > slot:               # cannot arrive in the past
                return None
            return Label(head, label.cost + self.arc_reduced_cost(arc), n_visited,
                         dist, label.load, energy, slot, label.visited_mask, label, seq)

        if kind == KIND_SINK:
            if raw > self.eco.horizon:
                return None
            return Label(head, label.cost + self.arc_reduced_cost(arc), n_visited,
                         dist, label.load, energy, raw, label.visited_mask, label, seq)

        return None

    # -- dominance --------------------------------------------------------

    def dominates(self, a: Label, b: Label) -> bool:
        if a.node != b.node:
            return False
        if a.cost > b.cost + DOM_TOL:
            return False
        if (a.n_visited > b.n_visited or a.dist > b.dist + DOM_TOL
                or a.load > b.load + DOM_TOL or a.time > b.time):
            return False
        if self.charging_possible and self.graph.kind(a.node) != KIND_SINK:
            if abs(a.energy_used - b.energy_used) > DOM_TOL:
                return False
        elif a.energy_used > b.energy_used + DOM_TOL:
            return False
        return (a.visited_mask & ~b.visited_mask) == 0

    # -- main loop --------------------------------------------------------

    def run(self) -> tuple[list[Label], dict]:
        graph = self.graph
        seq = 0
        root = Label(graph.depot, 0.0, 0, 0.0, 0.0, 0.0, 0, 0, None, seq)
        store: dict[NodeId, list[Label]] = {graph.depot: [root]}
        completed: list[Label] = []
        queue: list[tuple[float, int, Label]] = [(0.0, seq, root)]
        processed = 0

        while queue:
            _, _, label = heappop(queue)
            if label.dominated:
                continue
            processed += 1
            for arc in self.adj.get(label.node, ()):
                seq += 1
                new = self.extend(label, arc, seq)
                if new is None:
                    continue
                self.stats["labels_created"] += 1
                if graph.kind(new.node) == KIND_SINK:
                    if new.visited_mask:
                        completed.append(new)
                    continue
                bucket = store.setdefault(new.node, [])
                if self.use_dominance:
                    if any(self.dominates(old, new)
                           for old in bucket if not old.dominated):
                        self.stats["labels_dominated"] += 1
                        continue
                    for old in bucket:
                        if not old.dominated and self.dominates(new, old):
                            old.dominated = True
                            self.stats["labels_dominated"] += 1
                    bucket[:] = [l for l in bucket if not l.dominated]
                bucket.append(new)
                heappush(queue, (new.cost, new.seq, new))

        # keep only undominated completed labels
        keep: list[Label] = []
        for lab in sorted(completed, key=lambda l: (l.cost, l.seq)):
            if self.use_dominance and any(self.dominates(k, lab) for k in keep):
                continue
            keep.append(lab)
        return keep, self.stats


def extend(label: Label, arc, graph: PtenGraph, ctx: PricingContext) -> Label | None:
    """Single-arc extension under the resource extension rules (None = infeasible)."""
    return _Pricer(graph, ctx, use_dominance=True).extend(label, arc, label.seq + 1)


def dominates(a: Label, b: Label, graph: PtenGraph, ctx: PricingContext) -> bool:
    return _Pricer(graph, ctx, use_dominance=True).dominates(a, b)


def route_reduced_cost(route: Route, ctx: PricingContext) -> float:
    """Reduced cost of a finished route under the context duals (independent
    of the label accumulation path)."""
    d = ctx.duals
    if ctx.mode == MODE_MP1:
        rc = route.cost_fo - sum(d.gamma[c] for c in route.covered_customers)
    elif ctx.mode == MODE_JOINT:
        rc = (route.cost_fo - route.revenue_csp
              - sum(d.lam[c] for c in route.covered_customers))
        rc += sum(d.mu.get(key, 0.0) * n for key, n in route.charging_usage.items())
    else:
        rc = -route.revenue_csp - sum(d.lam[c] for c in route.covered_customers)
        rc += sum(d.mu.get(key, 0.0) * n for key, n in route.charging_usage.items())
        rc += d.alpha * route.cost_fo
    return rc


def solve_pricing(graph: PtenGraph, ctx: PricingContext,
                  use_dominance: bool = True,
                  trace: bool = False) -> tuple[list[tuple[Route, float]], float]:
    """All negative-reduced-cost routes for one vehicle type.

    Returns ``(columns, best)`` where columns is a list of (route, reduced
    cost) sorted by reduced cost, and best is the minimum reduced cost over
    them (+inf when pricing found nothing below -1e-9).
    """
    pricer = _Pricer(graph, ctx, use_dominance)
    labels, stats = pricer.run()

    out: list[tuple[Route, float]] = []
    seen: set[tuple] = set()
    for lab in labels:
        if lab.cost >= -RC_EPS:
            continue
        route = simulate_route(graph, ctx.vehicle_type, lab.path())
        if route.signature in seen:
            continue
        seen.add(route.signature)
        check = route_reduced_cost(route, ctx)
        assert abs(check - lab.cost) <= 1e-6 * max(1.0, abs(check)), \
            f"label cost {lab.cost} disagrees with recomputed reduced cost {check}"
        out.append((route, check))
    out.sort(key=lambda rc: (rc[1], rc[0].signature))
    best = out[0][1] if out else math.inf
    stats["routes_found"] = len(out)
    if trace:
        import logging
        logging.getLogger("elrp.spprc").info(
            "pricing k=%s labels_created=%d labels_dominated=%d routes_found=%d",
            ctx.vehicle_type, stats["labels_created"], stats["labels_dominated"],
            stats["routes_found"])
    return out, best
