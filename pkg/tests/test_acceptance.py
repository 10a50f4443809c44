"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass lines and the regression-target log.
"""

import csv
import math
import time

import numpy as np
import pytest

from elrp import oracle
from elrp.ccg import run_ccg, solve_sp1
from elrp.cli import main as cli_main
from elrp.colgen import reduced_cost_mp1
from elrp.evaluate import LeaderDecision, fo_cost
from elrp.instance import bundled_path, instance_from_dict, load_bundled, with_overrides
from elrp.mathprog import LpModel, Status, solve_lp, solve_milp
from elrp.pten import expand
from elrp.spprc import MODE_MP1, DualPrices, PricingContext, solve_pricing

from genrand import random_duals, random_instance

N_PRICING_SEEDS = 100


# ---------------------------------------------------------------------------
# shared heavy computations
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pricing_results():
    """Per-seed (dominance-on best, dominance-off best, enumeration best)."""
    rows = []
    t0 = time.monotonic()
    for seed in range(N_PRICING_SEEDS):
        inst = random_instance(seed, max_customers=4, max_stations=2, max_horizon=10)
        graph = expand(inst)
        duals = DualPrices(gamma=random_duals(inst, seed))
        ctx = PricingContext(1, MODE_MP1, duals, frozenset(inst.station_ids()))
        _c, best_on = solve_pricing(graph, ctx, use_dominance=True)
        _c, best_off = solve_pricing(graph, ctx, use_dominance=False)
        routes = oracle.enumerate_routes(graph, 1)
        rcs = [reduced_cost_mp1(r, duals) for r in routes]
        neg = [v for v in rcs if v < -1e-9]
        ref = min(neg) if neg else math.inf
        rows.append((seed, best_on, best_off, ref))
    return rows, time.monotonic() - t0


@pytest.fixture(scope="module")
def sweep_artifacts(tmp_path_factory):
    """Eleven-point sweeps on the base and tight-window cases, the base sweep
    twice for the determinism check, plus the charging-rate study."""
    root = tmp_path_factory.mktemp("acceptance")
    grid = "0:0.5:0.05"
    timings = {}
    t0 = time.monotonic()
    assert cli_main(["sweep", "--instance", str(bundled_path("small_base")),
                     "--fees", grid, "--out", str(root / "base1")]) == 0
    timings["base_sweep"] = time.monotonic() - t0
    assert cli_main(["sweep", "--instance", str(bundled_path("small_base")),
                     "--fees", grid, "--out", str(root / "base2")]) == 0
    assert cli_main(["sweep", "--instance", str(bundled_path("small_tw")),
                     "--fees", grid, "--out", str(root / "tw")]) == 0
    assert cli_main(["rates", "--instance", str(bundled_path("small_tw")),
                     "--rates", "10,15,20", "--station", "F2",
                     "--out", str(root / "rates")]) == 0
    return root, timings


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_1_pricing_exactness(pricing_results):
    rows, elapsed = pricing_results
    for seed, best_on, _off, ref in rows:
        if ref is math.inf:
            assert best_on == math.inf, f"seed {seed}"
        else:
            assert abs(best_on - ref) <= 1e-9, f"seed {seed}: {best_on} vs {ref}"
    assert elapsed < 60.0, f"pricing-exactness suite took {elapsed:.1f}s"
    print(f"\n[PASS] criterion 1: pricing equals enumeration on {len(rows)} "
          f"random instances to 1e-9 ({elapsed:.1f}s)")


def test_criterion_2_dominance_soundness(pricing_results):
    rows, _elapsed = pricing_results
    for seed, best_on, best_off, _ref in rows:
        assert best_on == best_off, f"seed {seed}: {best_on} vs {best_off}"
    print(f"[PASS] criterion 2: dominance on/off identical on {len(rows)} seeds")


def test_criterion_3_follower_equivalence(toy, toy_graph, small_base, small_base_graph):
    checked = 0
    for inst, graph in ((toy, toy_graph), (small_base, small_base_graph)):
        all_routes = oracle.enumerate_all_routes(graph)
        sids = inst.station_ids()
        port_choices = [
            {s: 0 for s in sids},
            {s: (1 if s == sids[0] else 0) for s in sids},
            {s: (1 if s == sids[-1] else 0) for s in sids},
            {s: 1 for s in sids},
            {s: inst.station(s).size_max for s in sids},
        ]
        seen = set()
        for ports in port_choices:
            key = tuple(sorted(ports.items()))
            if key in seen:
                continue
            seen.add(key)
            decision = LeaderDecision.with_ports(inst, ports)
            _plan, theta = solve_sp1(decision, inst, graph)
            _oplan, ocost = oracle.best_fleet_plan(all_routes, inst, decision)
            assert abs(theta - ocost) <= 1e-6, (inst.name, ports, theta, ocost)
            checked += 1
    print(f"[PASS] criterion 3: follower best response equals exhaustive "
          f"partition search on {checked} leader decisions (tol 1e-6)")


def test_criterion_4_bilevel_equivalence(toy, small_base):
    for base in (toy, small_base):
        for fee in (0.0, 0.125, 0.30):
            inst = with_overrides(base, service_fee=fee)
            graph = expand(inst)
            res = run_ccg(inst, graph=graph)
            assert res.converged
            assert res.iterations <= 20, (base.name, fee, res.iterations)
            eps = 1e-4 * max(1.0, abs(res.ub))
            assert res.ub - res.lb <= eps + 1e-9
            _d, _p, oleader = oracle.bilevel_exhaustive(inst, graph)
            assert abs(res.ub - oleader) <= 1e-6, (base.name, fee, res.ub, oleader)
    print("[PASS] criterion 4: bilevel solver equals exhaustive leader-grid "
          "search on toy and small_base at fees 0.0/0.125/0.30 (tol 1e-6)")


def test_criterion_5_lp_engine():
    rng = np.random.default_rng(2024)
    for trial in range(500):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 7))
        A = rng.normal(size=(m, n)).round(3)
        x0 = rng.uniform(0.2, 2.0, n).round(3)
        b = A @ x0
        senses = [str(s) for s in rng.choice(["<=", ">=", "=="], m)]
        pads = {"<=": 0.5, ">=": -0.5, "==": 0.0}
        model = LpModel()
        for j in range(n):
            model.add_column(f"x{j}", obj=round(float(rng.normal()), 3),
                             lower=0.0, upper=4.0)
        for i in range(m):
            model.add_row(f"r{i}", senses[i], float(b[i] + pads[senses[i]]),
                          {f"x{j}": float(A[i, j]) for j in range(n)})
        sol = solve_lp(model)
        assert sol.status == Status.OPTIMAL, trial
        assert abs(sol.objective - sol.dual_objective) <= 1e-7 * max(1, abs(sol.objective))

    milp_checked = 0
    for trial in range(100):
        n = int(rng.integers(2, 13))
        ub = 1 if n > 8 else int(rng.integers(1, 4))
        m = int(rng.integers(1, 5))
        A = rng.integers(-3, 4, size=(m, n)).astype(float)
        b = rng.integers(-2, 12, size=m).astype(float)
        c = rng.integers(-5, 6, size=n).astype(float)
        model = LpModel()
        for j in range(n):
            model.add_column(f"x{j}", obj=float(c[j]), lower=0, upper=ub, integer=True)
        for i in range(m):
            model.add_row(f"r{i}", "<=", float(b[i]),
                          {f"x{j}": float(A[i, j]) for j in range(n)})
        sol = solve_milp(model)
        pts = np.stack(np.meshgrid(*([np.arange(ub + 1)] * n),
                                   indexing="ij")).reshape(n, -1).T.astype(float)
        feas = np.all(pts @ A.T <= b + 1e-9, axis=1)
        if not feas.any():
            assert sol.status == Status.INFEASIBLE, trial
        else:
            best = float((pts[feas] @ c).min())
            assert sol.status == Status.OPTIMAL, trial
            assert abs(sol.objective - best) <= 1e-6, (trial, sol.objective, best)
        milp_checked += 1
    print(f"[PASS] criterion 5: strong duality on 500 random LPs (1e-7); "
          f"{milp_checked} random MILPs match enumeration")


def test_criterion_6_pten_structure():
    rng = np.random.default_rng(99)
    checked = 0
    for _ in range(40):
        slots = int(rng.integers(2, 9))
        smax = int(rng.integers(1, 4))
        horizon = slots + int(rng.integers(1, 4))
        inst = instance_from_dict({
            "schema": 1,
            "meta": {"name": "grid"},
            "economics": {"discount_rate": 0.05, "station_life_years": 10,
                          "vehicle_life_years": 5, "service_fee": {"S1": 0.1},
                          "time_step_hours": 1.0, "horizon": horizon},
            "depot": {"id": "D0"},
            "customers": [{"id": "C1", "demand": 10.0, "window_early": 0,
                           "window_late": horizon, "service_time": 0}],
            "stations": [{"id": "S1", "grid_capacity": 30.0, "rated_power": 10.0,
                          "port_cost": 100.0, "upgrade_cost": 10.0,
                          "electricity_price": 0.1, "size_min": 0, "size_max": smax,
                          "feasible_slots": list(range(slots))}],
            "vehicle_types": [{"id": 1, "freight_capacity": 100.0,
                               "battery_capacity": 50.0, "consumption_rate": 10.0,
                               "purchase_cost": 1000.0, "travel_cost_per_length": 0.5}],
            "edges": [{"from": "D0", "to": "C1", "distance": 1.0, "travel_time": 1},
                      {"from": "C1", "to": "S1", "distance": 1.0, "travel_time": 1}],
        })
        g = expand(inst)
        assert len(g.node_kind) == 2 + 1 + slots * smax
        internal = [a for a in g.arcs if a.kind == "internal"]
        assert len(internal) == smax * (slots - 1)
        for a in internal:
            u, v = g.dummies[a.tail], g.dummies[a.head]
            assert u.station == v.station and u.port_tracker == v.port_tracker
            assert v.time_tracker - u.time_tracker == 1
        checked += 1
    print(f"[PASS] criterion 6: node and internal-arc count identities hold "
          f"on {checked} randomized (slots, size) grids")


def test_criterion_7_case_study_qualitative(sweep_artifacts):
    root, _timings = sweep_artifacts
    base = _read(root / "base1" / "sweep.csv")
    tw = _read(root / "tw" / "sweep.csv")
    rates = _read(root / "rates" / "rates.csv")
    assert all(r["errors"] == "" for r in base + tw + rates)

    def built_fees(rows):
        return [float(r["fee"]) for r in rows if r["stations_built"] != "none"]

    def f_high(rows):
        sold = [float(r["fee"]) for r in rows if float(r["total_energy_sold"]) > 0]
        return max(sold) if sold else 0.0

    # (a) non-participation at low fees: nothing is built at fee 0 and the
    # first participation fee is strictly positive
    assert base[0]["stations_built"] == "none"
    f_low = min(built_fees(base))
    assert f_low > 0.0

    # (b) a rejection threshold above which no energy is sold and the
    # operator's fleet bill rises
    fh_base = f_high(base)
    assert 0.0 < fh_base < 0.5
    above = [r for r in base if float(r["fee"]) > fh_base]
    at = next(r for r in base if float(r["fee"]) == fh_base)
    assert above and all(float(r["total_energy_sold"]) == 0 for r in above)
    assert all(float(r["fo_fleet_cost"]) > float(at["fo_fleet_cost"]) for r in above)

    # tight windows push the rejection threshold strictly down
    fh_tw = f_high(tw)
    assert fh_tw < fh_base

    # FO cost is non-decreasing in the fee within a fixed build regime
    for rows in (base, tw):
        for a, b in zip(rows, rows[1:]):
            if a["stations_built"] == b["stations_built"]:
                assert float(a["fo_cost"]) <= float(b["fo_cost"]) + 1e-6

    # the provider's revenue is re-derivable as cycles * fee * energy and
    # closes the cost identity against the capex column
    cycles = load_bundled("small_base").economics.cycles_per_year
    for r in base + tw:
        rederived = cycles * float(r["fee"]) * float(r["total_energy_sold"])
        assert float(r["csp_revenue"]) == pytest.approx(rederived, abs=1e-4)
        assert float(r["csp_cost"]) == pytest.approx(
            float(r["csp_capex"]) - float(r["csp_revenue"]), abs=1e-4)

    # raising the F2 rate 10 -> 15 -> 20 helps both players weakly
    fo = [float(r["fo_cost"]) for r in rates]
    profit = [float(r["csp_profit"]) for r in rates]
    assert fo[0] >= fo[1] - 1e-6 and fo[1] >= fo[2] - 1e-6
    assert profit[0] <= profit[1] + 1e-6 and profit[1] <= profit[2] + 1e-6

    print("[PASS] criterion 7: qualitative case-study reproduction on the "
          "reconstructed instances")
    print("  [REGRESSION TARGETS] published -> observed (directional only):")
    print(f"    rejection threshold, base case : 0.421 -> {fh_base:.3f} $/kWh")
    print(f"    rejection threshold, tight tw  : 0.25  -> {fh_tw:.3f} $/kWh")
    base_best = max(-float(r["csp_cost"]) for r in base)
    tw_best = max(-float(r["csp_cost"]) for r in tw)
    drop = 100.0 * (1.0 - tw_best / base_best) if base_best > 0 else float("nan")
    print(f"    provider best-profit drop      : 74.23% -> {drop:.2f}%")
    fo_base_chosen = min(float(r["fo_cost"]) for r in base)
    fo_tw_chosen = min(float(r["fo_cost"]) for r in tw)
    rise = 100.0 * (fo_tw_chosen / fo_base_chosen - 1.0)
    print(f"    operator cost increase under tw: 13.8% -> {rise:.2f}%")
    print(f"    chosen fee in the published study: 0.125 $/kWh (recorded)")


def test_criterion_8_sweep_runtime(sweep_artifacts):
    _root, timings = sweep_artifacts
    assert timings["base_sweep"] < 300.0
    print(f"[PASS] criterion 8: 11-point fee sweep finished in "
          f"{timings['base_sweep']:.1f}s (< 300s)")


def test_criterion_9_determinism(sweep_artifacts):
    root, _timings = sweep_artifacts
    a = (root / "base1" / "sweep.csv").read_bytes()
    b = (root / "base2" / "sweep.csv").read_bytes()
    assert a == b
    pa = (root / "base1" / "sweep.png").read_bytes()
    pb = (root / "base2" / "sweep.png").read_bytes()
    assert pa == pb
    print("[PASS] criterion 9: consecutive sweep runs are byte-identical "
          "(csv and png)")
