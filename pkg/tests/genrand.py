"""Seeded random small instances for the exactness property tests."""

import numpy as np

from elrp.instance import instance_from_dict


def random_instance(seed, max_customers=4, max_stations=2, max_horizon=10):
    """Tiny random instance: complete customer graph, stations hanging off
    one or two customers, one or two truck types with tight batteries so
    charging is sometimes required."""
    rng = np.random.default_rng(seed)
    n_c = int(rng.integers(2, max_customers + 1))
    n_s = int(rng.integers(1, max_stations + 1))
    horizon = int(rng.integers(8, max_horizon + 1))
    customers = [f"C{i + 1}" for i in range(n_c)]
    stations = [f"S{i + 1}" for i in range(n_s)]

    def dist():
        return float(rng.integers(2, 7)) / 2.0   # 1.0 .. 3.0

    edges = []
    ring = ["D0"] + customers
    for i, u in enumerate(ring):
        for v in ring[i + 1:]:
            d = dist()
            edges.append({"from": u, "to": v, "distance": d,
                          "travel_time": max(1, round(d))})
    for s in stations:
        picks = rng.choice(customers, size=min(2, n_c), replace=False)
        for t in picks:
            d = dist()
            edges.append({"from": s, "to": str(t), "distance": d,
                          "travel_time": max(1, round(d))})

    custs = []
    for c in customers:
        early = int(rng.integers(0, 3))
        late = int(rng.integers(min(early + 3, horizon), horizon + 1))
        custs.append({"id": c, "demand": float(rng.integers(2, 6)) * 10.0,
                      "window_early": early, "window_late": late,
                      "service_time": int(rng.integers(0, 2))})

    sts = []
    for s in stations:
        sts.append({"id": s, "grid_capacity": 30.0,
                    "rated_power": float(rng.choice([5.0, 10.0])),
                    "port_cost": 10000.0, "upgrade_cost": 788.0,
                    "electricity_price": 0.1, "size_min": 1,
                    "size_max": int(rng.integers(1, 3)), "feasible_slots": None})

    types = [{"id": 1, "freight_capacity": 150.0,
              "battery_capacity": float(rng.choice([30.0, 40.0, 50.0])),
              "consumption_rate": 10.0, "purchase_cost": 10000.0,
              "travel_cost_per_length": 0.5}]
    if rng.random() < 0.5:
        types.append({"id": 2, "freight_capacity": 200.0,
                      "battery_capacity": 60.0, "consumption_rate": 10.0,
                      "purchase_cost": 18000.0, "travel_cost_per_length": 0.5})

    doc = {
        "schema": 1,
        "meta": {"name": f"rand{seed}"},
        "economics": {"discount_rate": 0.05, "station_life_years": 10,
                      "vehicle_life_years": 5,
                      "service_fee": {s: round(float(rng.uniform(0.05, 0.3)), 3)
                                      for s in stations},
                      "time_step_hours": 1.0, "horizon": horizon,
                      "cycles_per_year": 365.0},
        "depot": {"id": "D0"},
        "customers": custs,
        "stations": sts,
        "vehicle_types": types,
        "edges": edges,
    }
    return instance_from_dict(doc, name=f"rand{seed}")


def random_duals(instance, seed, scale=4000.0):
    rng = np.random.default_rng(seed + 10_000)
    return {c: round(float(rng.uniform(0.0, scale)), 4)
            for c in instance.customer_ids()}
