"""Route simulation, player objectives, and joint feasibility checks.

:func:`simulate_route` propagates arrival times, freight load and battery
state along a node sequence on the expanded graph and is the single source of
truth for per-route feasibility; the pricing engine, the masters and the
brute-force oracle all validate against it.

Waiting is free: a truck arriving before a customer window opens waits until
it opens, and a truck arriving at a station before its entry slot idles until
the slot starts (it occupies no port while waiting).  Charging happens in
whole time-steps only, at the station's rated power, and may never push the
battery past full.

Cost conventions: vehicle purchase is annualized with the vehicle capital
recovery factor; travel and charging costs are per operating cycle and scaled
by ``economics.cycles_per_year``.  The operator cost of a route is

    zeta_v * purchase + cycles * (travel_rate * dist + sum (pi_t + fee) * p * dt)

and the provider books ``cycles * fee * energy`` of it as service revenue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .instance import Economics, Instance, NodeId, money
from .pten import ARC_INTERNAL, KIND_CUSTOMER, KIND_DUMMY, KIND_SINK, PtenGraph


class RouteError(Exception):
    """Base class for route simulation failures."""


class InvalidRoute(RouteError):
    """Sequence malformed: wrong endpoints, missing arc, or no customer served."""


class TimeWindowViolation(RouteError):
    pass


class OverloadError(RouteError):
    pass


class EnergyDepletion(RouteError):
    pass


class OverchargeError(RouteError):
    """An internal arc would push the battery past full."""


class SlotMismatch(RouteError):
    """Arrived at a station dummy later than its time slot."""


@dataclass(frozen=True)
class RouteVisit:
    node: NodeId
    arrival: int          # time-step; at dummies this equals the slot tracker
    load_after: float     # freight remaining after serving the node
    energy_after: float   # battery level on arrival, kWh


@dataclass(frozen=True)
class Route:
    vehicle_type: int
    visits: tuple[RouteVisit, ...]
    covered_customers: tuple[NodeId, ...]
    charging_usage: Mapping[tuple[NodeId, int], int]   # (station, slot) -> ports used
    energy_by_station: Mapping[NodeId, float]          # kWh purchased per station
    cost_vehicle: float
    cost_travel: float
    cost_charging: float
    cost_fo: float          # operator cost of the route
    revenue_csp: float      # provider service revenue earned on the route
    energy_purchased: float
    distance: float

    @property
    def signature(self) -> tuple:
        return (self.vehicle_type,) + tuple(v.node for v in self.visits)

    @property
    def customer_set(self) -> frozenset:
        return frozenset(self.covered_customers)

    def stations_used(self) -> tuple[NodeId, ...]:
        return tuple(sorted({s for (s, _t) in self.charging_usage}))


def simulate_route(graph: PtenGraph, vehicle_type: int,
                   node_sequence: Sequence[NodeId]) -> Route:
    """Simulate one closed walk depot -> ... -> sink and price it.

    Arrival times follow earliest-feasible propagation; the returned route
    satisfies every per-route constraint by construction or an error is
    raised naming the first violation.
    """
    inst = graph.instance
    vt = inst.vehicle(vehicle_type)
    seq = list(node_sequence)
    if len(seq) < 3:
        raise InvalidRoute("route must visit at least one customer")
    if seq[0] != graph.depot or seq[-1] != graph.sink:
        raise InvalidRoute(f"route must run {graph.depot} -> ... -> {graph.sink}")

    covered: list[NodeId] = []
    for node in seq[1:-1]:
        if node not in graph.node_kind:
            raise InvalidRoute(f"unknown node {node}")
        if graph.kind(node) == KIND_CUSTOMER:
            if node in covered:
                raise InvalidRoute(f"customer {node} visited twice")
            covered.append(node)
    if not covered:
        raise InvalidRoute("route serves no customer")

    arc_index = {}
    for node in seq[:-1]:
        for a in graph.out_arcs.get(node, ()):
            arc_index[(a.tail, a.head)] = a

    total_demand = sum(inst.customer(c).demand for c in covered)
    if total_demand > vt.freight_capacity + 1e-9:
        raise OverloadError(
            f"demand {total_demand} exceeds capacity {vt.freight_capacity} of type {vehicle_type}")

    eco = inst.economics
    dt_h = eco.time_step_hours
    horizon = eco.horizon

    time = 0                 # departure time from the current node
    load = total_demand
    used = 0.0               # net energy consumed so far (battery = B - used)
    dist = 0.0
    charge_cost = 0.0
    usage: dict[tuple[NodeId, int], int] = {}
    energy_by_station: dict[NodeId, float] = {}
    visits = [RouteVisit(graph.depot, 0, load, vt.battery_capacity)]

    for u, v in zip(seq, seq[1:]):
        arc = arc_index.get((u, v))
        if arc is None:
            raise InvalidRoute(f"no arc {u} -> {v}")
        if arc.kind == ARC_INTERNAL:
            st = inst.station(arc.station)
            gain = st.rated_power * dt_h
            if used - gain < -1e-9:
                raise OverchargeError(
                    f"charging at {arc.station} slot {arc.slot} would exceed battery capacity")
            used -= gain
            price = st.electricity_price[arc.slot] + inst.service_fee(st.id)
            charge_cost += price * gain
            usage[(st.id, arc.slot)] = usage.get((st.id, arc.slot), 0) + 1
            energy_by_station[st.id] = energy_by_station.get(st.id, 0.0) + gain
            time = arc.slot + 1
            visits.append(RouteVisit(v, time, load, vt.battery_capacity - used))
            continue

        # external arc
        used += vt.consumption_rate * arc.distance
        if used > vt.battery_capacity + 1e-9:
            raise EnergyDepletion(f"battery depleted on arc {u} -> {v}")
        dist += arc.distance
        raw = time + arc.travel_time
        kind = graph.kind(v)
        if kind == KIND_CUSTOMER:
            c = inst.customer(v)
            arrival = max(raw, c.window_early)
            if arrival > c.window_late:
                raise TimeWindowViolation(
                    f"arrive {v} at {arrival}, window closes {c.window_late}")
            load -= c.demand
            visits.append(RouteVisit(v, arrival, load, vt.battery_capacity - used))
            time = arrival + c.service_time
        elif kind == KIND_DUMMY:
            d = graph.dummies[v]
            if raw > d.time_tracker:
                raise SlotMismatch(
                    f"arrive {v} at {raw}, slot is {d.time_tracker}")
            visits.append(RouteVisit(v, d.time_tracker, load, vt.battery_capacity - used))
            time = d.time_tracker
        elif kind == KIND_SINK:
            if raw > horizon:
                raise TimeWindowViolation(f"return at {raw} after horizon {horizon}")
            visits.append(RouteVisit(v, raw, load, vt.battery_capacity - used))
            time = raw
        else:
            raise InvalidRoute(f"cannot travel into {v} ({kind})")

    cost_vehicle = money(eco.zeta_vehicle * vt.purchase_cost)
    cost_travel = money(eco.cycles_per_year * vt.travel_cost_per_length * dist)
    cost_charging = money(eco.cycles_per_year * charge_cost)
    revenue = money(eco.cycles_per_year *
                    sum(inst.service_fee(s) * e for s, e in sorted(energy_by_station.items())))
    route = Route(
        vehicle_type=vehicle_type,
        visits=tuple(visits),
        covered_customers=tuple(covered),
        charging_usage=dict(sorted(usage.items())),
        energy_by_station=dict(sorted(energy_by_station.items())),
        cost_vehicle=cost_vehicle,
        cost_travel=cost_travel,
        cost_charging=cost_charging,
        cost_fo=money(cost_vehicle + cost_travel + cost_charging),
        revenue_csp=revenue,
        energy_purchased=sum(energy_by_station.values()),
        distance=dist,
    )
    _assert_route_invariants(route, vt.freight_capacity, vt.battery_capacity)
    return route


def _assert_route_invariants(route: Route, capacity: float, battery: float) -> None:
    for v in route.visits:
        assert -1e-9 <= v.load_after <= capacity + 1e-9
        assert -1e-9 <= v.energy_after <= battery + 1e-9
    assert len(set(route.covered_customers)) == len(route.covered_customers)


@dataclass(frozen=True)
class LeaderDecision:
    """Build flags, port counts and transformer upgrades per candidate station."""
    build: Mapping[NodeId, int]
    ports: Mapping[NodeId, int]
    upgrade: Mapping[NodeId, float]

    @staticmethod
    def nothing(instance: Instance) -> "LeaderDecision":
        return LeaderDecision(build={s.id: 0 for s in instance.stations},
                              ports={s.id: 0 for s in instance.stations},
                              upgrade={s.id: 0.0 for s in instance.stations})

    @staticmethod
    def with_ports(instance: Instance, ports: Mapping[NodeId, int]) -> "LeaderDecision":
        """Decision building the given stations, with the minimal upgrade per Eq-style sizing."""
        build, up = {}, {}
        full = {s.id: int(ports.get(s.id, 0)) for s in instance.stations}
        for s in instance.stations:
            n = full[s.id]
            build[s.id] = 1 if n > 0 else 0
            up[s.id] = max(0.0, n * s.rated_power - s.min_grid_capacity()) if n > 0 else 0.0
        return LeaderDecision(build=build, ports=full, upgrade=up)

    def validate(self, instance: Instance) -> None:
        for s in instance.stations:
            y, n, dp = self.build[s.id], self.ports[s.id], self.upgrade[s.id]
            if y == 0 and (n != 0 or dp != 0):
                raise ValueError(f"{s.id}: unbuilt station must have 0 ports and 0 upgrade")
            if y == 1 and not (s.size_min <= n <= s.size_max):
                raise ValueError(f"{s.id}: ports {n} outside [{s.size_min},{s.size_max}]")
            if y == 1 and n * s.rated_power - s.min_grid_capacity() > dp + 1e-9:
                raise ValueError(f"{s.id}: upgrade {dp} insufficient for {n} ports")


@dataclass
class FleetPlan:
    routes: list[Route] = field(default_factory=list)

    def customers_covered(self) -> list[NodeId]:
        out = []
        for r in self.routes:
            out.extend(r.covered_customers)
        return out

    def joint_usage(self) -> dict[tuple[NodeId, int], int]:
        usage: dict[tuple[NodeId, int], int] = {}
        for r in self.routes:
            for key, n in r.charging_usage.items():
                usage[key] = usage.get(key, 0) + n
        return dict(sorted(usage.items()))

    def energy_by_station(self) -> dict[NodeId, float]:
        out: dict[NodeId, float] = {}
        for r in self.routes:
            for s, e in r.energy_by_station.items():
                out[s] = out.get(s, 0.0) + e
        return dict(sorted(out.items()))

    def total_energy(self) -> float:
        return sum(r.energy_purchased for r in self.routes)

    def fleet_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for r in self.routes:
            counts[r.vehicle_type] = counts.get(r.vehicle_type, 0) + 1
        return dict(sorted(counts.items()))

    def signature(self) -> tuple:
        return tuple(sorted(r.signature for r in self.routes))

    def port_assignments(self) -> dict[tuple[int, NodeId, int], int]:
        """Canonical port per (route index, station, slot): lowest free port first."""
        occupied: dict[tuple[NodeId, int], set[int]] = {}
        out: dict[tuple[int, NodeId, int], int] = {}
        for idx, r in enumerate(self.routes):
            # one truck keeps one port for a whole contiguous session
            sessions: dict[NodeId, list[int]] = {}
            for (s, t) in r.charging_usage:
                sessions.setdefault(s, []).append(t)
            for s, slots in sorted(sessions.items()):
                slots.sort()
                taken = set()
                for t in slots:
                    taken |= occupied.get((s, t), set())
                port = 1
                while port in taken:
                    port += 1
                for t in slots:
                    occupied.setdefault((s, t), set()).add(port)
                    out[(idx, s, t)] = port
        return out


def fo_cost(plan: FleetPlan, economics: Economics) -> float:
    """Fleet operator objective: vehicles + travel + charging over the plan."""
    return money(sum(r.cost_fo for r in plan.routes))


def csp_cost(decision: LeaderDecision, plan: FleetPlan, economics: Economics,
             instance: Instance) -> float:
    """Provider objective: annualized capital expenditure minus service revenue."""
    zeta = economics.zeta_station
    capex = 0.0
    for s in instance.stations:
        capex += zeta * (s.port_cost * decision.ports[s.id] +
                         s.upgrade_cost * decision.upgrade[s.id])
    revenue = sum(r.revenue_csp for r in plan.routes)
    return money(capex - revenue)


def capex_cost(decision: LeaderDecision, instance: Instance) -> float:
    zeta = instance.economics.zeta_station
    return money(sum(zeta * (s.port_cost * decision.ports[s.id] +
                             s.upgrade_cost * decision.upgrade[s.id])
                     for s in instance.stations))


@dataclass(frozen=True)
class Violation:
    kind: str
    station: NodeId | None = None
    slot: int | None = None
    customer: NodeId | None = None
    detail: str = ""

    def render(self) -> str:
        parts = [f"violation kind={self.kind}"]
        if self.station is not None:
            parts.append(f"station={self.station}")
        if self.slot is not None:
            parts.append(f"t={self.slot}")
        if self.customer is not None:
            parts.append(f"customer={self.customer}")
        if self.detail:
            parts.append(f"detail={self.detail}")
        return " ".join(parts)


def check_joint_feasibility(decision: LeaderDecision, plan: FleetPlan,
                            instance: Instance) -> list[Violation]:
    """All cross-route constraint violations of a plan under a leader decision.

    Returns an empty list when the plan is jointly feasible; never raises.
    """
    out: list[Violation] = []
    covered = plan.customers_covered()
    seen: set[NodeId] = set()
    for c in covered:
        if c in seen:
            out.append(Violation("coverage_duplicate", customer=c))
        seen.add(c)
    for c in instance.customer_ids():
        if c not in seen:
            out.append(Violation("coverage_missing", customer=c))

    usage = plan.joint_usage()
    for (s, t), n in usage.items():
        ports = decision.ports.get(s, 0)
        if decision.build.get(s, 0) == 0:
            out.append(Violation("unbuilt_station", station=s, slot=t))
        elif n > ports:
            out.append(Violation("port_capacity", station=s, slot=t,
                                 detail=f"used={n} ports={ports}"))
    return out
