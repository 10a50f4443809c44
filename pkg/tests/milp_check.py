"""Raw constraint-system cross-check.

Encodes a fleet plan back into the arc-flow variable space (x, tau, b, q per
vehicle copy) and re-evaluates every follower-side constraint numerically:
coverage, dummy single-visit, flow conservation, time windows and precedence,
freight tracking, battery tracking with per-step recharging, start-full and
never-deplete/never-overcharge bounds, and joint port capacity against the
leader's decision.  Independent of the simulation code paths: works purely on
the visit lists and graph data."""

from elrp.pten import ARC_INTERNAL


def check_plan_raw(plan, decision, instance, graph, tol=1e-6):
    """Returns a list of violated-constraint descriptions (empty = ok)."""
    errors = []
    horizon = instance.horizon
    dt = instance.economics.time_step_hours

    # coverage: each customer exactly once across the plan
    counts = {c: 0 for c in instance.customer_ids()}
    for route in plan.routes:
        for c in route.covered_customers:
            counts[c] += 1
    for c, n in counts.items():
        if n != 1:
            errors.append(f"coverage[{c}]={n}")

    dummy_visits = {}
    arc_usage = {}

    for idx, route in enumerate(plan.routes):
        vt = instance.vehicle(route.vehicle_type)
        visits = route.visits
        if visits[0].node != graph.depot or visits[-1].node != graph.sink:
            errors.append(f"route{idx}: endpoints")
            continue
        # start full
        if abs(visits[0].energy_after - vt.battery_capacity) > tol:
            errors.append(f"route{idx}: b0 != B")

        for u, v in zip(visits, visits[1:]):
            arc = next((a for a in graph.out_arcs[u.node] if a.head == v.node), None)
            if arc is None:
                errors.append(f"route{idx}: missing arc {u.node}->{v.node}")
                continue
            # time precedence: tau_v >= tau_u + service(u) + travel
            service = (instance.customer(u.node).service_time
                       if u.node in counts else 0)
            if arc.kind == ARC_INTERNAL:
                if v.arrival != u.arrival + 1:
                    errors.append(f"route{idx}: internal step time {u.node}->{v.node}")
                st = instance.station(arc.station)
                gain = st.rated_power * dt
                if abs(v.energy_after - u.energy_after - gain) > tol:
                    errors.append(f"route{idx}: recharge amount {u.node}->{v.node}")
                arc_usage[(arc.station, arc.slot)] = \
                    arc_usage.get((arc.station, arc.slot), 0) + 1
            else:
                if v.arrival < u.arrival + service + arc.travel_time:
                    errors.append(f"route{idx}: precedence {u.node}->{v.node}")
                drop = vt.consumption_rate * arc.distance
                if v.energy_after > u.energy_after - drop + tol:
                    errors.append(f"route{idx}: battery gain on travel {u.node}->{v.node}")
            if v.node in graph.dummies:
                d = graph.dummies[v.node]
                if v.arrival != d.time_tracker:
                    errors.append(f"route{idx}: tau != slot at {v.node}")
                dummy_visits[v.node] = dummy_visits.get(v.node, 0) + 1

        # per-visit bounds
        for v in visits:
            if not (-tol <= v.load_after <= vt.freight_capacity + tol):
                errors.append(f"route{idx}: load bound at {v.node}")
            if not (-tol <= v.energy_after <= vt.battery_capacity + tol):
                errors.append(f"route{idx}: battery bound at {v.node}")
            if v.node in counts:
                cust = instance.customer(v.node)
                if not (cust.window_early <= v.arrival <= cust.window_late):
                    errors.append(f"route{idx}: window at {v.node}")
            if v.arrival > horizon:
                errors.append(f"route{idx}: horizon at {v.node}")
        # freight decreases by the demand at each customer
        for u, v in zip(visits, visits[1:]):
            drop = instance.customer(v.node).demand if v.node in counts else 0.0
            if abs((u.load_after - drop) - v.load_after) > tol:
                errors.append(f"route{idx}: freight step {u.node}->{v.node}")

    # dummy nodes visited at most once across the whole plan (per port row)
    ports = plan.port_assignments()
    for (s, t), n in arc_usage.items():
        cap = decision.ports.get(s, 0)
        if decision.build.get(s, 0) == 0:
            errors.append(f"charging at unbuilt {s}")
        elif n > cap:
            errors.append(f"port capacity at ({s},{t}): {n} > {cap}")
    # the canonical port assignment itself must be collision-free
    taken = {}
    for (ridx, s, t), p in ports.items():
        key = (s, t, p)
        if key in taken:
            errors.append(f"port collision at {key}")
        taken[key] = ridx
    return errors
