"""Matplotlib figure rendering for the report outputs.

Each CSV the CLI writes gets a companion PNG: fee sweeps plot both players'
cost curves against the single-entity comparator, rate studies plot the cost
breakdowns, and single solves plot a route/charging timeline.  Figures are
written with fixed metadata so repeated runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KW = dict(dpi=150, metadata={"Software": None})

FO_COLOR = "#c23b22"
CSP_COLOR = "#1f77b4"


def _finite(rows, key):
    return [(r["fee"], r[key]) for r in rows if r.get(key) is not None]


def fee_sweep_figure(rows: list[dict], path: str | Path, title: str = "") -> None:
    """Two-entity cost curves (solid) vs single-entity split (dashed)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    for key, label, color, style in (
            ("fo_cost", "FO cost (two-entity)", FO_COLOR, "-"),
            ("csp_cost", "CSP cost (two-entity)", CSP_COLOR, "-"),
            ("single_fo_cost", "FO cost (single entity)", FO_COLOR, "--"),
            ("single_csp_cost", "CSP cost (single entity)", CSP_COLOR, "--")):
        pts = _finite(rows, key)
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                    color=color, marker="o", ms=3.5, lw=1.4, label=label)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("service fee ($/kWh)")
    ax.set_ylabel("annualized cost ($)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def rate_study_figure(rows: list[dict], path: str | Path, title: str = "") -> None:
    """FO cost breakdown bars with the CSP profit on a second axis."""
    rows = [r for r in rows if r.get("fo_cost") is not None]
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    x = range(len(rows))
    fleet = [r["fo_fleet_cost"] for r in rows]
    travel = [r["fo_travel_cost"] for r in rows]
    charge = [r["fo_charging_cost"] for r in rows]
    ax.bar(x, fleet, 0.55, label="fleet", color="#6b7fae")
    ax.bar(x, travel, 0.55, bottom=fleet, label="travel", color="#9fb4d8")
    ax.bar(x, charge, 0.55, bottom=[a + b for a, b in zip(fleet, travel)],
           label="charging", color="#d4c16f")
    ax.set_xticks(list(x), [f"{r['rate']:g} kW" for r in rows])
    ax.set_ylabel("FO annualized cost ($)")
    ax2 = ax.twinx()
    ax2.plot(list(x), [r["csp_profit"] for r in rows], "k--o", ms=4, label="CSP profit")
    ax2.set_ylabel("CSP profit ($)")
    if title:
        ax.set_title(title)
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def solution_timeline_figure(plan, instance, path: str | Path, title: str = "") -> None:
    """One lane per route: customer stops as markers, charging as bars."""
    fig, ax = plt.subplots(figsize=(7.5, 1.2 + 0.8 * max(1, len(plan.routes))))
    customers = set(instance.customer_ids())
    for lane, route in enumerate(plan.routes):
        y = len(plan.routes) - lane
        arrivals = [v.arrival for v in route.visits]
        ax.plot([arrivals[0], arrivals[-1]], [y, y], color="0.75", lw=1.2, zorder=1)
        for (station, slot), _n in route.charging_usage.items():
            ax.barh(y, 1.0, left=slot, height=0.3, color="#d4c16f",
                    edgecolor="0.4", lw=0.4, zorder=2)
        for v in route.visits:
            if v.node in customers:
                ax.plot(v.arrival, y, "o", color=FO_COLOR, ms=6, zorder=3)
                ax.annotate(v.node, (v.arrival, y), textcoords="offset points",
                            xytext=(0, 7), ha="center", fontsize=8)
        ax.annotate(f"route {lane} (type {route.vehicle_type})",
                    (arrivals[0], y), textcoords="offset points",
                    xytext=(-4, -14), ha="left", fontsize=8, color="0.3")
    ax.set_xlabel("time step")
    ax.set_yticks([])
    ax.set_xlim(-0.5, instance.horizon + 0.5)
    ax.set_ylim(0.3, len(plan.routes) + 0.9)
    if title:
        ax.set_title(title)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
