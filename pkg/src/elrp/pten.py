"""Partial time-expanded network construction.

Only candidate charging stations are expanded: each station ``F_i`` becomes a
grid of dummy nodes, one per (feasible time slot, port).  A dummy carries a
time tracker ``t`` and a port tracker ``p`` and is named ``F_i-p-t``.  An
internal arc connects two dummies of the same station and port whose time
trackers differ by exactly one step; traversing it means charging at that port
for one step.  Concurrent charging load at a station is therefore just the
number of internal arcs traversed in the same time slice, which is what port
capacity constraints count.

Depot, sink and customer nodes are kept as-is; declared edges touching a
station are rewired to every dummy of that station.  The graph is immutable
after :func:`expand` and safe to share across workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

from .instance import Instance, NodeId

log = logging.getLogger("elrp.pten")

KIND_DEPOT = "depot"
KIND_SINK = "depot_sink"
KIND_CUSTOMER = "customer"
KIND_DUMMY = "station_dummy"

ARC_EXTERNAL = "external"
ARC_INTERNAL = "internal"


class CapacityError(Exception):
    """A candidate station cannot host any port (size_max = 0)."""


class UnknownStation(KeyError):
    """The queried node is not a candidate station of this graph."""


def dummy_id(station: NodeId, port: int, t: int) -> NodeId:
    return f"{station}-{port}-{t}"


@dataclass(frozen=True)
class DummyNode:
    station: NodeId
    time_tracker: int
    port_tracker: int

    @property
    def id(self) -> NodeId:
        return dummy_id(self.station, self.port_tracker, self.time_tracker)


@dataclass(frozen=True)
class Arc:
    tail: NodeId
    head: NodeId
    kind: str          # ARC_EXTERNAL or ARC_INTERNAL
    distance: float
    travel_time: int
    station: NodeId | None = None   # internal arcs: owning station
    slot: int | None = None         # internal arcs: start slot t(j)


class PtenGraph:
    """Expanded graph: nodes, adjacency, and per-station internal arc slices."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.node_kind: dict[NodeId, str] = {}
        self.dummies: dict[NodeId, DummyNode] = {}
        self.arcs: list[Arc] = []
        self.out_arcs: dict[NodeId, list[Arc]] = {}
        self.in_arcs: dict[NodeId, list[Arc]] = {}
        # (station, t) -> internal arcs starting at slot t
        self._internal_at: dict[tuple[NodeId, int], list[Arc]] = {}
        self.dummies_by_station: dict[NodeId, list[DummyNode]] = {}

    @property
    def depot(self) -> NodeId:
        return self.instance.depot

    @property
    def sink(self) -> NodeId:
        return self.instance.sink

    def _add_node(self, node: NodeId, kind: str, dummy: DummyNode | None = None):
        self.node_kind[node] = kind
        self.out_arcs[node] = []
        self.in_arcs[node] = []
        if dummy is not None:
            self.dummies[node] = dummy
            self.dummies_by_station.setdefault(dummy.station, []).append(dummy)

    def _add_arc(self, arc: Arc):
        self.arcs.append(arc)
        self.out_arcs[arc.tail].append(arc)
        self.in_arcs[arc.head].append(arc)
        if arc.kind == ARC_INTERNAL:
            self._internal_at.setdefault((arc.station, arc.slot), []).append(arc)

    def nodes(self) -> Iterator[NodeId]:
        return iter(self.node_kind)

    def kind(self, node: NodeId) -> str:
        return self.node_kind[node]

    def is_dummy(self, node: NodeId) -> bool:
        return node in self.dummies

    def internal_arcs(self, station: NodeId) -> list[Arc]:
        return [a for a in self.arcs if a.kind == ARC_INTERNAL and a.station == station]

    def external_arcs(self) -> list[Arc]:
        return [a for a in self.arcs if a.kind == ARC_EXTERNAL]


def expand(instance: Instance) -> PtenGraph:
    """Build the partial time-expanded graph for an instance.

    Deterministic: the same instance yields the identical graph, including
    node and arc ordering.
    """
    g = PtenGraph(instance)
    g._add_node(instance.depot, KIND_DEPOT)
    g._add_node(instance.sink, KIND_SINK)
    for c in instance.customers:
        g._add_node(c.id, KIND_CUSTOMER)

    for st in instance.stations:
        if st.size_max == 0:
            raise CapacityError(f"candidate station {st.id} has size_max = 0")
        for p in range(1, st.size_max + 1):
            for t in st.feasible_slots:
                g._add_node(dummy_id(st.id, p, t), KIND_DUMMY, DummyNode(st.id, t, p))

    # internal charging arcs: same port, consecutive slots
    dt_steps = 1
    for st in instance.stations:
        slots = st.feasible_slots
        for p in range(1, st.size_max + 1):
            for t in slots:
                if t + dt_steps in slots:
                    g._add_arc(Arc(tail=dummy_id(st.id, p, t),
                                   head=dummy_id(st.id, p, t + dt_steps),
                                   kind=ARC_INTERNAL, distance=0.0, travel_time=dt_steps,
                                   station=st.id, slot=t))

    # external arcs from the declared edge list
    customer_ids = set(instance.customer_ids())
    station_ids = set(instance.station_ids())
    for e in instance.edges:
        u, v = e.u, e.v
        if u in station_ids and v in station_ids:
            # station-to-station links have no entry/exit semantics here: a
            # dummy is entered from customers/depot and left toward
            # customers/sink only
            log.warning("ignoring station-to-station edge (%s,%s)", u, v)
            continue
        if u in station_ids or v in station_ids:
            other, st_id = (v, u) if u in station_ids else (u, v)
            st = instance.station(st_id)
            for p in range(1, st.size_max + 1):
                for t in st.feasible_slots:
                    d = dummy_id(st_id, p, t)
                    if other == instance.depot:
                        g._add_arc(Arc(instance.depot, d, ARC_EXTERNAL, e.distance, e.travel_time))
                        g._add_arc(Arc(d, instance.sink, ARC_EXTERNAL, e.distance, e.travel_time))
                    else:
                        g._add_arc(Arc(other, d, ARC_EXTERNAL, e.distance, e.travel_time))
                        g._add_arc(Arc(d, other, ARC_EXTERNAL, e.distance, e.travel_time))
        elif u == instance.depot or v == instance.depot:
            other = v if u == instance.depot else u
            g._add_arc(Arc(instance.depot, other, ARC_EXTERNAL, e.distance, e.travel_time))
            g._add_arc(Arc(other, instance.sink, ARC_EXTERNAL, e.distance, e.travel_time))
        else:
            # customer-customer
            g._add_arc(Arc(u, v, ARC_EXTERNAL, e.distance, e.travel_time))
            g._add_arc(Arc(v, u, ARC_EXTERNAL, e.distance, e.travel_time))

    _check_structure(g)
    return g


def _check_structure(g: PtenGraph) -> None:
    # construction invariants, asserted on every expand
    inst = g.instance
    expected_nodes = 2 + len(inst.customers) + sum(
        s.slot_count * s.size_max for s in inst.stations)
    assert len(g.node_kind) == expected_nodes, "node count identity violated"
    for arc in g.arcs:
        if arc.kind != ARC_INTERNAL:
            continue
        a, b = g.dummies[arc.tail], g.dummies[arc.head]
        assert a.station == b.station and a.port_tracker == b.port_tracker
        assert b.time_tracker - a.time_tracker == 1


def arcs_at(graph: PtenGraph, station: NodeId, t: int) -> list[Arc]:
    """Internal arcs of ``station`` whose charging step starts at slot ``t``.

    Counting the traversed members of this set gives the concurrent charging
    load at the station during [t, t+1).
    """
    if station not in set(graph.instance.station_ids()):
        raise UnknownStation(station)
    if not (0 <= t < graph.instance.horizon):
        raise ValueError(f"slot {t} outside horizon [0,{graph.instance.horizon})")
    return list(graph._internal_at.get((station, t), ()))


def charged_energy(traversed_internal_arcs: int, rated_power: float, dt_hours: float) -> float:
    """Energy (kWh) delivered by a number of one-step charging arcs."""
    if traversed_internal_arcs < 0:
        raise ValueError("arc count must be >= 0")
    return rated_power * dt_hours * traversed_internal_arcs


def dump_text(graph: PtenGraph) -> str:
    """Line-oriented debug dump of nodes and arcs."""
    lines = []
    for node, kind in graph.node_kind.items():
        if node in graph.dummies:
            d = graph.dummies[node]
            lines.append(f"node {node} kind={kind} t={d.time_tracker} p={d.port_tracker}")
        else:
            lines.append(f"node {node} kind={kind}")
    for a in graph.arcs:
        lines.append(f"arc {a.tail} {a.head} kind={a.kind} d={a.distance:g} tt={a.travel_time}")
    return "\n".join(lines) + "\n"
