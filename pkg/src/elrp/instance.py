"""Problem data model: nodes, fleet, stations, economics, and the instance file format.

An :class:`Instance` is the full immutable description of one planning problem:
a depot, customers with demands and time windows, candidate charging stations
with grid limits and tariffs, a heterogeneous vehicle catalogue, and the
declared edge set with distances and integer travel times.  Instances are
loaded from a versioned JSON document (see ``docs/instance-format.md``) and
validated on construction; every solver module consumes them read-only.

Time is discretized into integer steps of ``time_step_hours`` hours over a
horizon of ``horizon`` steps.  Money values are quantized to 1e-6 when costs
are assembled so regression outputs are bit-stable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

log = logging.getLogger("elrp.instance")

NodeId = str

SCHEMA_VERSION = 1

#: money quantum: costs are rounded to this precision wherever they are assembled
MONEY_DECIMALS = 6


def money(x: float) -> float:
    """Quantize a monetary value to fixed-point 1e-6 precision."""
    return round(float(x), MONEY_DECIMALS)


class ParseError(Exception):
    """The instance file is malformed (bad JSON, missing keys, wrong types)."""


class ValidationError(Exception):
    """An instance invariant is violated; ``field`` names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class DomainError(ValueError):
    """An argument lies outside a function's mathematical domain."""


def capital_recovery_factor(rate: float, years: int) -> float:
    """Annualization multiplier r(1+r)^Y / ((1+r)^Y - 1).

    Converts a one-off capital cost into its equivalent annual payment over
    ``years`` at discount rate ``rate``.
    """
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    if years < 1:
        raise DomainError(f"years must be >= 1, got {years}")
    growth = (1.0 + rate) ** years
    return rate * growth / (growth - 1.0)


@dataclass(frozen=True)
class Customer:
    id: NodeId
    demand: float                # kg, delivered on visit
    window_early: int            # earliest service start, time-steps
    window_late: int             # latest arrival, time-steps
    service_time: int            # time-steps spent at the customer


@dataclass(frozen=True)
class StationCandidate:
    id: NodeId
    grid_capacity: tuple[float, ...]       # kW available from the grid, per time-step
    rated_power: float                     # kW per port
    port_cost: float                       # $ per installed port
    upgrade_cost: float                    # $ per kW of transformer upgrade
    electricity_price: tuple[float, ...]   # $/kWh, per time-step
    size_min: int
    size_max: int
    feasible_slots: tuple[int, ...]        # time-steps at which charging may start

    @property
    def slot_count(self) -> int:
        return len(self.feasible_slots)

    def min_grid_capacity(self) -> float:
        """Worst-case grid availability over the horizon (used for upgrade sizing)."""
        return min(self.grid_capacity)


@dataclass(frozen=True)
class VehicleType:
    id: int
    freight_capacity: float        # kg
    battery_capacity: float        # kWh
    consumption_rate: float        # kWh per unit length
    purchase_cost: float           # $
    travel_cost_per_length: float  # $ per unit length


@dataclass(frozen=True)
class Economics:
    discount_rate: float
    station_life_years: int
    vehicle_life_years: int
    service_fee: Mapping[NodeId, float]   # $/kWh charged by each station
    time_step_hours: float
    horizon: int                          # number of time-steps
    # Operating days per year: operational terms (travel, electricity, fees)
    # repeat this many times against one annualized capital charge.
    cycles_per_year: float = 1.0

    @property
    def zeta_station(self) -> float:
        return capital_recovery_factor(self.discount_rate, self.station_life_years)

    @property
    def zeta_vehicle(self) -> float:
        return capital_recovery_factor(self.discount_rate, self.vehicle_life_years)


@dataclass(frozen=True)
class Edge:
    u: NodeId
    v: NodeId
    distance: float
    travel_time: int


@dataclass(frozen=True)
class Instance:
    name: str
    depot: NodeId
    customers: tuple[Customer, ...]
    stations: tuple[StationCandidate, ...]
    vehicle_types: tuple[VehicleType, ...]
    edges: tuple[Edge, ...]
    economics: Economics
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)
    # derived lookups, built in __post_init__
    _dist: dict = field(default_factory=dict, compare=False, repr=False)
    _tt: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for e in self.edges:
            self._dist[(e.u, e.v)] = e.distance
            self._dist[(e.v, e.u)] = e.distance
            self._tt[(e.u, e.v)] = e.travel_time
            self._tt[(e.v, e.u)] = e.travel_time

    # -- lookups ---------------------------------------------------------

    @property
    def sink(self) -> NodeId:
        """Identifier of the depot copy used as route sink."""
        return self.depot + "'"

    @property
    def horizon(self) -> int:
        return self.economics.horizon

    def customer(self, node: NodeId) -> Customer:
        for c in self.customers:
            if c.id == node:
                return c
        raise KeyError(node)

    def station(self, node: NodeId) -> StationCandidate:
        for s in self.stations:
            if s.id == node:
                return s
        raise KeyError(node)

    def vehicle(self, type_id: int) -> VehicleType:
        for v in self.vehicle_types:
            if v.id == type_id:
                return v
        raise KeyError(type_id)

    def customer_ids(self) -> tuple[NodeId, ...]:
        return tuple(c.id for c in self.customers)

    def station_ids(self) -> tuple[NodeId, ...]:
        return tuple(s.id for s in self.stations)

    def has_edge(self, a: NodeId, b: NodeId) -> bool:
        return (a, b) in self._dist

    def distance(self, a: NodeId, b: NodeId) -> float:
        if a == b:
            return 0.0
        return self._dist[(a, b)]

    def travel_time(self, a: NodeId, b: NodeId) -> int:
        if a == b:
            return 0
        return self._tt[(a, b)]

    def neighbors(self, a: NodeId) -> list[NodeId]:
        return sorted({v for (u, v) in self._dist if u == a})

    def service_fee(self, station: NodeId) -> float:
        return self.economics.service_fee[station]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_instance(inst: Instance) -> None:
    """Check every instance invariant; raises ValidationError naming the field."""
    eco = inst.economics
    if not (0.0 < eco.discount_rate < 1.0):
        raise ValidationError("economics.discount_rate", f"must be in (0,1), got {eco.discount_rate}")
    if eco.horizon < 1:
        raise ValidationError("economics.horizon", f"must be >= 1, got {eco.horizon}")
    if eco.time_step_hours <= 0:
        raise ValidationError("economics.time_step_hours", f"must be > 0, got {eco.time_step_hours}")
    if eco.station_life_years < 1 or eco.vehicle_life_years < 1:
        raise ValidationError("economics.life_years", "station/vehicle life must be >= 1 year")
    if eco.cycles_per_year <= 0:
        raise ValidationError("economics.cycles_per_year", "must be > 0")

    ids = [inst.depot] + [c.id for c in inst.customers] + [s.id for s in inst.stations]
    if len(set(ids)) != len(ids):
        raise ValidationError("ids", "node identifiers must be unique")
    if inst.sink in ids:
        raise ValidationError("ids", f"identifier {inst.sink!r} is reserved for the depot sink")

    for c in inst.customers:
        if c.demand < 0:
            raise ValidationError(f"customers[{c.id}].demand", "must be >= 0")
        if not (0 <= c.window_early <= c.window_late <= eco.horizon):
            raise ValidationError(
                f"customers[{c.id}].window",
                f"need 0 <= early <= late <= horizon, got [{c.window_early},{c.window_late}]"
                f" with horizon {eco.horizon}")
        if c.service_time < 0:
            raise ValidationError(f"customers[{c.id}].service_time", "must be >= 0")

    for s in inst.stations:
        if not (0 <= s.size_min <= s.size_max):
            raise ValidationError(f"stations[{s.id}].size", f"need 0 <= size_min <= size_max, got [{s.size_min},{s.size_max}]")
        if s.rated_power <= 0:
            raise ValidationError(f"stations[{s.id}].rated_power", "must be > 0")
        if s.port_cost < 0 or s.upgrade_cost < 0:
            raise ValidationError(f"stations[{s.id}].costs", "must be >= 0")
        if len(s.grid_capacity) != eco.horizon:
            raise ValidationError(f"stations[{s.id}].grid_capacity", f"length must equal horizon ({eco.horizon})")
        if len(s.electricity_price) != eco.horizon:
            raise ValidationError(f"stations[{s.id}].electricity_price", f"length must equal horizon ({eco.horizon})")
        if any(p < 0 for p in s.electricity_price):
            raise ValidationError(f"stations[{s.id}].electricity_price", "prices must be >= 0")
        if not s.feasible_slots:
            raise ValidationError(f"stations[{s.id}].feasible_slots", "must list at least one slot")
        if list(s.feasible_slots) != sorted(set(s.feasible_slots)):
            raise ValidationError(f"stations[{s.id}].feasible_slots", "must be strictly increasing")
        if s.feasible_slots[0] < 0 or s.feasible_slots[-1] > eco.horizon - 1:
            raise ValidationError(f"stations[{s.id}].feasible_slots", f"slots must lie in [0,{eco.horizon - 1}]")
        if s.id not in eco.service_fee:
            raise ValidationError("economics.service_fee", f"missing fee for station {s.id}")
        if eco.service_fee[s.id] < 0:
            raise ValidationError("economics.service_fee", f"fee for {s.id} must be >= 0")

    if not inst.vehicle_types:
        raise ValidationError("vehicle_types", "at least one vehicle type is required")
    for v in inst.vehicle_types:
        for fname in ("freight_capacity", "battery_capacity", "consumption_rate",
                      "purchase_cost", "travel_cost_per_length"):
            if getattr(v, fname) <= 0:
                raise ValidationError(f"vehicle_types[{v.id}].{fname}", "must be > 0")
    type_ids = [v.id for v in inst.vehicle_types]
    if len(set(type_ids)) != len(type_ids):
        raise ValidationError("vehicle_types", "type ids must be unique")

    known = set(ids)
    seen_pairs = set()
    for e in inst.edges:
        if e.u not in known or e.v not in known:
            raise ValidationError("edges", f"edge ({e.u},{e.v}) references an unknown node")
        if e.u == e.v:
            raise ValidationError("edges", f"self-loop on {e.u}")
        key = tuple(sorted((e.u, e.v)))
        if key in seen_pairs:
            raise ValidationError("edges", f"duplicate edge {key}")
        seen_pairs.add(key)
        if e.distance <= 0:
            raise ValidationError("edges", f"distance of ({e.u},{e.v}) must be > 0")
        if e.travel_time < 1:
            raise ValidationError("edges", f"travel_time of ({e.u},{e.v}) must be >= 1 step")

    # connectivity: every customer reachable from the depot over declared edges
    adj: dict[NodeId, list[NodeId]] = {n: [] for n in known}
    for e in inst.edges:
        adj[e.u].append(e.v)
        adj[e.v].append(e.u)
    seen = {inst.depot}
    stack = [inst.depot]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    for c in inst.customers:
        if c.id not in seen:
            raise ValidationError("edges", f"customer {c.id} is not reachable from the depot")
    for s in inst.stations:
        if s.id not in seen:
            log.warning("station %s is not reachable from the depot", s.id)

    _warn_triangle_violations(inst)


def _warn_triangle_violations(inst: Instance) -> None:
    # triangle inequality is not assumed; surface violations as a warning only
    nodes = [inst.depot] + list(inst.customer_ids()) + list(inst.station_ids())
    for a in nodes:
        for b in nodes:
            if a >= b or not inst.has_edge(a, b):
                continue
            for c in nodes:
                if c in (a, b) or not (inst.has_edge(a, c) and inst.has_edge(c, b)):
                    continue
                if inst.distance(a, c) + inst.distance(c, b) < inst.distance(a, b) - 1e-9:
                    log.warning("triangle inequality violated: d(%s,%s) > d(%s,%s)+d(%s,%s)",
                                a, b, a, c, c, b)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise ParseError(f"{context}: missing key {key!r}")
    return mapping[key]


def _slot_list(raw, horizon: int, context: str) -> tuple[int, ...]:
    if raw is None:
        return tuple(range(horizon))
    if not isinstance(raw, list):
        raise ParseError(f"{context}: feasible_slots must be a list or null")
    return tuple(int(t) for t in raw)


def _series(raw, horizon: int, context: str) -> tuple[float, ...]:
    """Accept either a scalar (broadcast over the horizon) or a full list."""
    if isinstance(raw, (int, float)):
        return tuple(float(raw) for _ in range(horizon))
    if isinstance(raw, list):
        return tuple(float(x) for x in raw)
    raise ParseError(f"{context}: expected number or list")


def load_instance(path: str | Path) -> Instance:
    """Load and validate an instance file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return instance_from_dict(doc, name=path.stem)


def instance_from_dict(doc: Mapping, name: str = "instance") -> Instance:
    if not isinstance(doc, Mapping):
        raise ParseError("top level must be an object")
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema {schema!r}, expected {SCHEMA_VERSION}")
    meta = dict(doc.get("meta", {}))
    name = meta.get("name", name)

    eco_raw = _require(doc, "economics", "economics")
    horizon = int(_require(eco_raw, "horizon", "economics"))
    economics = Economics(
        discount_rate=float(_require(eco_raw, "discount_rate", "economics")),
        station_life_years=int(_require(eco_raw, "station_life_years", "economics")),
        vehicle_life_years=int(_require(eco_raw, "vehicle_life_years", "economics")),
        service_fee={str(k): float(v) for k, v in _require(eco_raw, "service_fee", "economics").items()},
        time_step_hours=float(_require(eco_raw, "time_step_hours", "economics")),
        horizon=horizon,
        cycles_per_year=float(eco_raw.get("cycles_per_year", 1.0)),
    )

    depot = str(_require(_require(doc, "depot", "depot"), "id", "depot"))

    customers = tuple(
        Customer(
            id=str(_require(c, "id", "customers")),
            demand=float(_require(c, "demand", "customers")),
            window_early=int(_require(c, "window_early", "customers")),
            window_late=int(_require(c, "window_late", "customers")),
            service_time=int(c.get("service_time", 0)),
        )
        for c in _require(doc, "customers", "customers")
    )

    stations = tuple(
        StationCandidate(
            id=str(_require(s, "id", "stations")),
            grid_capacity=_series(_require(s, "grid_capacity", "stations"), horizon, f"stations[{s.get('id')}]"),
            rated_power=float(_require(s, "rated_power", "stations")),
            port_cost=float(_require(s, "port_cost", "stations")),
            upgrade_cost=float(_require(s, "upgrade_cost", "stations")),
            electricity_price=_series(_require(s, "electricity_price", "stations"), horizon, f"stations[{s.get('id')}]"),
            size_min=int(_require(s, "size_min", "stations")),
            size_max=int(_require(s, "size_max", "stations")),
            feasible_slots=_slot_list(s.get("feasible_slots"), horizon, f"stations[{s.get('id')}]"),
        )
        for s in _require(doc, "stations", "stations")
    )

    vehicle_types = tuple(
        VehicleType(
            id=int(_require(v, "id", "vehicle_types")),
            freight_capacity=float(_require(v, "freight_capacity", "vehicle_types")),
            battery_capacity=float(_require(v, "battery_capacity", "vehicle_types")),
            consumption_rate=float(_require(v, "consumption_rate", "vehicle_types")),
            purchase_cost=float(_require(v, "purchase_cost", "vehicle_types")),
            travel_cost_per_length=float(_require(v, "travel_cost_per_length", "vehicle_types")),
        )
        for v in _require(doc, "vehicle_types", "vehicle_types")
    )

    edges = tuple(
        Edge(
            u=str(_require(e, "from", "edges")),
            v=str(_require(e, "to", "edges")),
            distance=float(_require(e, "distance", "edges")),
            travel_time=int(_require(e, "travel_time", "edges")),
        )
        for e in _require(doc, "edges", "edges")
    )

    inst = Instance(name=name, depot=depot, customers=customers, stations=stations,
                    vehicle_types=vehicle_types, edges=edges, economics=economics, meta=meta)
    validate_instance(inst)
    return inst


def instance_to_dict(inst: Instance) -> dict:
    eco = inst.economics
    return {
        "schema": SCHEMA_VERSION,
        "meta": dict(inst.meta, name=inst.name),
        "economics": {
            "discount_rate": eco.discount_rate,
            "station_life_years": eco.station_life_years,
            "vehicle_life_years": eco.vehicle_life_years,
            "service_fee": dict(eco.service_fee),
            "time_step_hours": eco.time_step_hours,
            "horizon": eco.horizon,
            "cycles_per_year": eco.cycles_per_year,
        },
        "depot": {"id": inst.depot},
        "customers": [
            {"id": c.id, "demand": c.demand, "window_early": c.window_early,
             "window_late": c.window_late, "service_time": c.service_time}
            for c in inst.customers
        ],
        "stations": [
            {"id": s.id, "grid_capacity": list(s.grid_capacity), "rated_power": s.rated_power,
             "port_cost": s.port_cost, "upgrade_cost": s.upgrade_cost,
             "electricity_price": list(s.electricity_price), "size_min": s.size_min,
             "size_max": s.size_max, "feasible_slots": list(s.feasible_slots)}
            for s in inst.stations
        ],
        "vehicle_types": [
            {"id": v.id, "freight_capacity": v.freight_capacity, "battery_capacity": v.battery_capacity,
             "consumption_rate": v.consumption_rate, "purchase_cost": v.purchase_cost,
             "travel_cost_per_length": v.travel_cost_per_length}
            for v in inst.vehicle_types
        ],
        "edges": [
            {"from": e.u, "to": e.v, "distance": e.distance, "travel_time": e.travel_time}
            for e in inst.edges
        ],
    }


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def bundled_path(name: str) -> Path:
    """Path of a bundled case-study instance, e.g. ``toy`` or ``small_base``."""
    return Path(__file__).parent / "data" / f"{name}.json"


def load_bundled(name: str) -> Instance:
    return load_instance(bundled_path(name))


# ---------------------------------------------------------------------------
# scenario overrides
# ---------------------------------------------------------------------------

def with_overrides(base: Instance,
                   service_fee: float | Mapping[NodeId, float] | None = None,
                   windows: Mapping[NodeId, tuple[int, int]] | None = None,
                   rated_power: Mapping[NodeId, float] | None = None,
                   port_cost: Mapping[NodeId, float] | None = None) -> Instance:
    """Return a re-validated copy of ``base`` with scenario knobs patched.

    Only the declared knobs may be touched: the per-station service fee
    (a scalar applies to every station), customer time windows, station
    rated power, and station port cost.  ``base`` is never mutated.
    """
    customers = base.customers
    if windows:
        patched = []
        for c in customers:
            if c.id in windows:
                early, late = windows[c.id]
                patched.append(replace(c, window_early=int(early), window_late=int(late)))
            else:
                patched.append(c)
        unknown = set(windows) - {c.id for c in customers}
        if unknown:
            raise ValidationError("windows", f"unknown customers {sorted(unknown)}")
        customers = tuple(patched)

    stations = base.stations
    if rated_power or port_cost:
        rated_power = dict(rated_power or {})
        port_cost = dict(port_cost or {})
        unknown = (set(rated_power) | set(port_cost)) - set(base.station_ids())
        if unknown:
            raise ValidationError("stations", f"unknown stations {sorted(unknown)}")
        stations = tuple(
            replace(s,
                    rated_power=float(rated_power.get(s.id, s.rated_power)),
                    port_cost=float(port_cost.get(s.id, s.port_cost)))
            for s in base.stations
        )

    economics = base.economics
    if service_fee is not None:
        if isinstance(service_fee, Mapping):
            fees = dict(economics.service_fee)
            unknown = set(service_fee) - set(base.station_ids())
            if unknown:
                raise ValidationError("economics.service_fee", f"unknown stations {sorted(unknown)}")
            fees.update({k: float(v) for k, v in service_fee.items()})
        else:
            fees = {s.id: float(service_fee) for s in base.stations}
        economics = replace(economics, service_fee=fees)

    inst = Instance(name=base.name, depot=base.depot, customers=customers,
                    stations=stations, vehicle_types=base.vehicle_types,
                    edges=base.edges, economics=economics, meta=dict(base.meta))
    validate_instance(inst)
    return inst
