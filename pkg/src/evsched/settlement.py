"""Physical delivery simulation and cost settlement.

Schedules are promises; delivery replays them against the true itinerary and
battery physics, clipping whatever cannot happen (EV absent, power limit,
SOE window). Settlement prices the delivered energy plus a dual-price
imbalance penalty: shortfalls are bought back dearer than day-ahead, surplus
is refunded cheaper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import (
    CostOptions,
    Driving,
    FastCharge,
    Parked,
    Scenario,
    effective_power_limit,
)


@dataclass(frozen=True)
class Flow:
    """One scheduled per-step energy exchange of an EV at a station."""

    ev_id: str
    cs_id: str
    t: int
    e_sch: float = 0.0
    e_dch: float = 0.0
    e_fch: float = 0.0


@dataclass(frozen=True)
class CostBreakdown:
    """Cost components of one settled (or planned) schedule.

    ``total_system_cost`` excludes utilization fees because they are an
    EV-to-station transfer inside the e-mobility system, not a resource cost;
    ``total_ev_perspective_cost`` adds them back.
    """

    energy_cost: float = 0.0
    grid_fees: float = 0.0
    utilization_fees: float = 0.0
    degradation_cost: float = 0.0
    imbalance_cost: float = 0.0
    mobility_deficit: float = 0.0

    @property
    def total_system_cost(self) -> float:
        return self.energy_cost + self.grid_fees + self.degradation_cost + self.imbalance_cost

    @property
    def total_ev_perspective_cost(self) -> float:
        return self.total_system_cost + self.utilization_fees

    FIELD_ORDER = (
        "energy_cost",
        "grid_fees",
        "utilization_fees",
        "degradation_cost",
        "imbalance_cost",
        "mobility_deficit",
        "total_system_cost",
        "total_ev_perspective_cost",
    )

    def as_rows(self) -> list[tuple[str, float]]:
        return [(name, getattr(self, name)) for name in self.FIELD_ORDER]


@dataclass
class DeliveredFlow:
    flow: Flow
    d_sch: float
    d_dch: float
    d_fch: float

    @property
    def scheduled_net(self) -> float:
        return self.flow.e_sch + self.flow.e_fch - self.flow.e_dch

    @property
    def delivered_net(self) -> float:
        return self.d_sch + self.d_fch - self.d_dch

    @property
    def imbalance(self) -> float:
        return self.scheduled_net - self.delivered_net


@dataclass
class DeliveryResult:
    """Delivered flows, net imbalances and the simulated true SOE paths."""

    flows: list[DeliveredFlow]
    true_soe: dict[str, np.ndarray]
    mobility_deficit: dict[str, float]
    horizon: int

    def net_by_ev_step(self, which: str) -> dict[tuple[str, int], float]:
        out: dict[tuple[str, int], float] = {}
        for df in self.flows:
            key = (df.flow.ev_id, df.flow.t)
            val = df.scheduled_net if which == "scheduled" else df.delivered_net
            out[key] = out.get(key, 0.0) + val
        return out

    def imbalance_by_ev_step(self) -> dict[tuple[str, int], float]:
        sched = self.net_by_ev_step("scheduled")
        deliv = self.net_by_ev_step("delivered")
        return {k: sched[k] - deliv[k] for k in sched}

    def total_imbalance_short(self) -> float:
        return math.fsum(max(v, 0.0) for v in self.imbalance_by_ev_step().values())

    def total_imbalance_long(self) -> float:
        return math.fsum(max(-v, 0.0) for v in self.imbalance_by_ev_step().values())

    def total_mobility_deficit(self) -> float:
        return math.fsum(self.mobility_deficit.values())


def simulate_delivery(flows: list[Flow], scenario: Scenario) -> DeliveryResult:
    """Forward replay of scheduled flows against the true itinerary.

    Per step: delivered charge is capped by the min(OBC, CP) limit and the
    headroom to soe_max, delivered discharge by the limit and the energy above
    soe_min; flows at stations where the EV is not actually present deliver
    nothing. Driving drains that would push the SOE below soe_min are clamped
    and recorded as mobility deficit.
    """
    T = scenario.time_grid.horizon_steps
    h = scenario.time_grid.step_hours
    stations = scenario.station_map()

    by_ev_step: dict[str, dict[int, list[Flow]]] = {ev.id: {} for ev in scenario.evs}
    for f in flows:
        by_ev_step[f.ev_id].setdefault(f.t, []).append(f)

    delivered: list[DeliveredFlow] = []
    true_soe: dict[str, np.ndarray] = {}
    deficits: dict[str, float] = {}

    for ev in scenario.evs:
        itinerary = scenario.itinerary(ev.id)
        soe = ev.soe_init
        path = np.empty(T)
        deficit = 0.0
        for t in range(T):
            state = itinerary.states[t]
            step_flows = sorted(by_ev_step[ev.id].get(t, []), key=lambda f: f.cs_id)
            for f in step_flows:
                d_sch = d_dch = d_fch = 0.0
                if isinstance(state, Parked) and f.cs_id == state.cs_id:
                    limit = effective_power_limit(ev, stations[f.cs_id]) * h
                    d_sch = min(f.e_sch, limit, max(0.0, (ev.soe_max - soe) / ev.eta_sch))
                    soe += d_sch * ev.eta_sch
                    d_dch = min(f.e_dch, limit, max(0.0, (soe - ev.soe_min) * ev.eta_dch))
                    soe -= d_dch / ev.eta_dch
                elif isinstance(state, FastCharge) and f.cs_id == state.cs_id:
                    d_fch = min(f.e_fch, state.e_fch_max, max(0.0, (ev.soe_max - soe) / ev.eta_fch))
                    soe += d_fch * ev.eta_fch
                delivered.append(DeliveredFlow(f, d_sch, d_dch, d_fch))
            if isinstance(state, Driving):
                soe -= state.e_run / ev.eta_run
                if soe < ev.soe_min:
                    deficit += ev.soe_min - soe
                    soe = ev.soe_min
            path[t] = soe
        true_soe[ev.id] = path
        deficits[ev.id] = deficit

    return DeliveryResult(delivered, true_soe, deficits, T)


def settle(
    delivery: DeliveryResult,
    prices,
    scenario: Scenario,
    options: CostOptions | None = None,
) -> CostBreakdown:
    """Price a delivery: delivered-basis costs plus the imbalance penalty."""
    options = options or CostOptions()
    p = prices.prices if hasattr(prices, "prices") else tuple(prices)
    stations = scenario.station_map()
    evs = {ev.id: ev for ev in scenario.evs}

    energy = grid = util = deg = 0.0
    for df in delivery.flows:
        cs = stations[df.flow.cs_id]
        ev = evs[df.flow.ev_id]
        price = p[df.flow.t]
        energy += (df.d_sch + df.d_fch - df.d_dch) * price
        grid += (df.d_sch + df.d_fch) * cs.grid_fee
        if options.discharge_pays_grid_fee:
            grid += df.d_dch * cs.grid_fee
        util += (df.d_sch + df.d_dch + df.d_fch) * cs.utilization_fee
        deg += df.d_dch * ev.degradation_fee

    pc = scenario.price_curve
    imbalance = 0.0
    for (ev_id, t), imb in delivery.imbalance_by_ev_step().items():
        if imb > 0:
            imbalance += imb * p[t] * pc.penalty_short_factor
        elif imb < 0:
            imbalance += -imb * p[t] * (1.0 - pc.penalty_long_factor)

    return CostBreakdown(
        energy_cost=energy,
        grid_fees=grid,
        utilization_fees=util,
        degradation_cost=deg,
        imbalance_cost=imbalance,
        mobility_deficit=delivery.total_mobility_deficit(),
    )


def plan_breakdown(flows: list[Flow], prices, scenario: Scenario, options: CostOptions | None = None) -> CostBreakdown:
    """Breakdown of a schedule as planned (no delivery errors, no imbalance)."""
    options = options or CostOptions()
    p = prices.prices if hasattr(prices, "prices") else tuple(prices)
    stations = scenario.station_map()
    evs = {ev.id: ev for ev in scenario.evs}
    energy = grid = util = deg = 0.0
    for f in flows:
        cs = stations[f.cs_id]
        ev = evs[f.ev_id]
        price = p[f.t]
        energy += (f.e_sch + f.e_fch - f.e_dch) * price
        grid += (f.e_sch + f.e_fch) * cs.grid_fee
        if options.discharge_pays_grid_fee:
            grid += f.e_dch * cs.grid_fee
        util += (f.e_sch + f.e_dch + f.e_fch) * cs.utilization_fee
        deg += f.e_dch * ev.degradation_fee
    return CostBreakdown(energy, grid, util, deg, 0.0, 0.0)
