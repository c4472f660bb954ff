"""EV-based scheduling: one whole-day cost-minimal program per EV.

Each EV tracks its own SOE across every station it visits, so night-time
energy can be positioned for evening discharge at a different station. The
per-step SOE recursion couples slow charge, V2G discharge, driving
consumption and fast charge through their efficiencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lp
from .mobility import InfeasibleMobility, min_required_soe
from .scenario import (
    ChargingStation,
    CostOptions,
    Driving,
    Ev,
    FastCharge,
    Itinerary,
    Parked,
    PriceCurve,
    Scenario,
    TimeGrid,
    effective_power_limit,
)
from .settlement import CostBreakdown, Flow, plan_breakdown

_SNAP = 1e-9
# infinitesimal throughput preference: breaks zero-profit ties toward the
# least battery activity without measurably changing any real cost; must sit
# well above the solver's dual tolerance to be acted on
_TIE_EPS = 3e-9


@dataclass(frozen=True)
class EvSchedule:
    """Optimal per-step plan of one EV: energies are grid-side kWh per step."""

    ev_id: str
    e_sch: np.ndarray
    e_dch: np.ndarray
    e_fch: np.ndarray
    soe: np.ndarray
    total_cost: float
    cost_breakdown: CostBreakdown

    def flows(self, itinerary: Itinerary) -> list[Flow]:
        out: list[Flow] = []
        for t, state in enumerate(itinerary.states):
            if isinstance(state, Parked):
                out.append(Flow(self.ev_id, state.cs_id, t, self.e_sch[t], self.e_dch[t], 0.0))
            elif isinstance(state, FastCharge):
                out.append(Flow(self.ev_id, state.cs_id, t, 0.0, 0.0, self.e_fch[t]))
        return out


@dataclass(frozen=True)
class AggregateProfile:
    """Fleet profile: per-step totals plus per-contributor breakdown."""

    group_by: str  # "ev" | "cs"
    charge: np.ndarray
    discharge: np.ndarray
    contributors: dict[str, tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class FleetResult:
    schedules: list[EvSchedule]
    aggregate: AggregateProfile
    total_cost: float
    coupled: bool

    def flows(self, scenario: Scenario) -> list[Flow]:
        out: list[Flow] = []
        for s in self.schedules:
            out.extend(s.flows(scenario.itinerary(s.ev_id)))
        return out


class _EvBlock:
    """Per-EV variable layout and rows of the day-ahead program."""

    def __init__(
        self,
        ev: Ev,
        itinerary: Itinerary,
        stations: dict[str, ChargingStation],
        prices: PriceCurve,
        time_grid: TimeGrid,
        options: CostOptions,
    ):
        self.ev = ev
        self.itinerary = itinerary
        T = time_grid.horizon_steps
        h = time_grid.step_hours
        self.T = T
        bounds: list[tuple[float, float]] = []
        cost: list[float] = []

        # layout: [sch_0..sch_{T-1}, dch_.., fch_.., soe_..]
        for t in range(T):
            state = itinerary.states[t]
            if isinstance(state, Parked):
                cs = stations[state.cs_id]
                cap = effective_power_limit(ev, cs) * h
                bounds.append((0.0, cap))
                cost.append(prices.prices[t] + cs.grid_fee + cs.utilization_fee + _TIE_EPS)
            else:
                bounds.append((0.0, 0.0))
                cost.append(0.0)
        for t in range(T):
            state = itinerary.states[t]
            if isinstance(state, Parked):
                cs = stations[state.cs_id]
                cap = effective_power_limit(ev, cs) * h
                gf_dch = cs.grid_fee if options.discharge_pays_grid_fee else 0.0
                bounds.append((0.0, cap))
                cost.append(-prices.prices[t] + gf_dch + cs.utilization_fee + ev.degradation_fee + _TIE_EPS)
            else:
                bounds.append((0.0, 0.0))
                cost.append(0.0)
        for t in range(T):
            state = itinerary.states[t]
            if isinstance(state, FastCharge):
                cs = stations[state.cs_id]
                bounds.append((0.0, state.e_fch_max))
                cost.append(prices.prices[t] + cs.grid_fee + cs.utilization_fee + _TIE_EPS)
            else:
                bounds.append((0.0, 0.0))
                cost.append(0.0)
        for t in range(T):
            lo = ev.soe_min if t < T - 1 else max(ev.soe_min, ev.soe_end_min)
            bounds.append((lo, ev.soe_max))
            cost.append(0.0)

        self.bounds = bounds
        self.cost = cost

    def soe_rows(self, base: int) -> list[tuple[dict[int, float], str, float]]:
        """SOE recursion rows with variable indices offset by ``base``."""
        ev, T = self.ev, self.T
        rows = []
        for t in range(T):
            coeffs = {
                base + 3 * T + t: 1.0,
                base + t: -ev.eta_sch,
                base + T + t: 1.0 / ev.eta_dch,
                base + 2 * T + t: -ev.eta_fch,
            }
            if t > 0:
                coeffs[base + 3 * T + t - 1] = -1.0
            state = self.itinerary.states[t]
            run = state.e_run / ev.eta_run if isinstance(state, Driving) else 0.0
            rhs = -run + (ev.soe_init if t == 0 else 0.0)
            rows.append((coeffs, lp.EQ, rhs))
        return rows

    def extract(self, x: np.ndarray, base: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        T = self.T
        e_sch = np.array(x[base : base + T])
        e_dch = np.array(x[base + T : base + 2 * T])
        e_fch = np.array(x[base + 2 * T : base + 3 * T])
        for arr in (e_sch, e_dch, e_fch):
            arr[np.abs(arr) < _SNAP] = 0.0
        ev = self.ev
        soe = np.empty(T)
        prev = ev.soe_init
        for t in range(T):
            state = self.itinerary.states[t]
            run = state.e_run / ev.eta_run if isinstance(state, Driving) else 0.0
            prev = prev + e_sch[t] * ev.eta_sch - e_dch[t] / ev.eta_dch - run + e_fch[t] * ev.eta_fch
            soe[t] = prev
        return e_sch, e_dch, e_fch, soe


def _check_no_simultaneity(block: _EvBlock, e_sch, e_dch, prices: PriceCurve, stations) -> None:
    # simultaneous charge+discharge is strictly dominated whenever effective
    # buy prices are nonnegative and the round trip loses energy
    ev = block.ev
    if ev.eta_sch * ev.eta_dch >= 1.0:
        return
    for t in range(block.T):
        state = block.itinerary.states[t]
        if not isinstance(state, Parked):
            continue
        cs = stations[state.cs_id]
        if prices.prices[t] + cs.grid_fee + cs.utilization_fee < 0:
            return
    bad = np.nonzero((e_sch > 1e-7) & (e_dch > 1e-7))[0]
    if bad.size:
        raise RuntimeError(f"EV {ev.id}: simultaneous charge/discharge at step {int(bad[0])}")


def optimize_ev(
    ev: Ev,
    itinerary: Itinerary,
    stations: dict[str, ChargingStation],
    prices: PriceCurve,
    time_grid: TimeGrid,
    options: CostOptions | None = None,
) -> EvSchedule:
    """Cost-minimal whole-day schedule for one EV.

    Raises :class:`InfeasibleMobility` when the itinerary cannot be driven at
    all; an infeasible LP is never silently relaxed.
    """
    options = options or CostOptions()
    min_required_soe(ev, itinerary, stations, time_grid)  # raises when undrivable

    block = _EvBlock(ev, itinerary, stations, prices, time_grid, options)
    builder = lp.LpBuilder()
    for (lo, hi), c in zip(block.bounds, block.cost):
        builder.add_var(lo, hi, c)
    for coeffs, rel, rhs in block.soe_rows(0):
        builder.add_constraint(coeffs, rel, rhs)
    solution = lp.solve(builder.build())
    if not solution.is_optimal:
        raise InfeasibleMobility(ev.id, -1, f"EV {ev.id}: day-ahead program infeasible")

    e_sch, e_dch, e_fch, soe = block.extract(solution.values, 0)
    _check_no_simultaneity(block, e_sch, e_dch, prices, stations)
    # re-price the schedule with the true coefficients so the tie-break
    # epsilon never shows up in reported costs
    probe = EvSchedule(ev.id, e_sch, e_dch, e_fch, soe, 0.0, CostBreakdown())
    breakdown = _plan_breakdown_from(probe.flows(itinerary), prices, stations, {ev.id: ev}, options)
    total = breakdown.total_ev_perspective_cost
    return EvSchedule(ev.id, e_sch, e_dch, e_fch, soe, total, breakdown)


def _plan_breakdown_from(flows, prices, stations, evs, options) -> CostBreakdown:
    p = prices.prices
    energy = grid = util = deg = 0.0
    for f in flows:
        cs = stations[f.cs_id]
        ev = evs[f.ev_id]
        energy += (f.e_sch + f.e_fch - f.e_dch) * p[f.t]
        grid += (f.e_sch + f.e_fch) * cs.grid_fee
        if options.discharge_pays_grid_fee:
            grid += f.e_dch * cs.grid_fee
        util += (f.e_sch + f.e_dch + f.e_fch) * cs.utilization_fee
        deg += f.e_dch * ev.degradation_fee
    return CostBreakdown(energy, grid, util, deg, 0.0, 0.0)


def station_load_risk(scenario: Scenario) -> list[tuple[str, int]]:
    """(station, step) pairs where connected-EV power could exceed capacity."""
    h = scenario.time_grid.step_hours
    out = []
    for t in range(scenario.time_grid.horizon_steps):
        demand: dict[str, float] = {}
        for it in scenario.itineraries:
            cs_id = it.cs_at(t)
            if cs_id is not None:
                ev = scenario.ev(it.ev_id)
                cs = scenario.station(cs_id)
                demand[cs_id] = demand.get(cs_id, 0.0) + effective_power_limit(ev, cs) * h
        for cs_id, d in demand.items():
            cs = scenario.station(cs_id)
            if d > cs.num_cps * cs.cp_limit * h + 1e-9:
                out.append((cs_id, t))
    return out


def optimize_joint(scenario: Scenario, options: CostOptions | None = None) -> FleetResult:
    """One LP over the whole fleet with per-station per-step capacity rows."""
    options = options or CostOptions()
    stations = scenario.station_map()
    tg = scenario.time_grid
    h = tg.step_hours
    T = tg.horizon_steps

    blocks: list[_EvBlock] = []
    for ev in scenario.evs:
        itinerary = scenario.itinerary(ev.id)
        min_required_soe(ev, itinerary, stations, tg)
        blocks.append(_EvBlock(ev, itinerary, stations, scenario.price_curve, tg, options))

    builder = lp.LpBuilder()
    bases: list[int] = []
    for block in blocks:
        base = len(builder._cost)
        bases.append(base)
        for (lo, hi), c in zip(block.bounds, block.cost):
            builder.add_var(lo, hi, c)
    for block, base in zip(blocks, bases):
        for coeffs, rel, rhs in block.soe_rows(base):
            builder.add_constraint(coeffs, rel, rhs)

    # shared station capacity: total slow throughput <= num_cps * cp_limit
    for t in range(T):
        per_cs: dict[str, dict[int, float]] = {}
        for block, base in zip(blocks, bases):
            state = block.itinerary.states[t]
            if isinstance(state, Parked):
                row = per_cs.setdefault(state.cs_id, {})
                row[base + t] = 1.0
                row[base + T + t] = 1.0
        for cs_id, coeffs in sorted(per_cs.items()):
            cs = stations[cs_id]
            builder.add_constraint(coeffs, lp.LEQ, cs.num_cps * cs.cp_limit * h)

    solution = lp.solve(builder.build())
    if not solution.is_optimal:
        raise InfeasibleMobility(scenario.evs[0].id, -1, "joint fleet program infeasible")

    evs = {ev.id: ev for ev in scenario.evs}
    schedules: list[EvSchedule] = []
    for block, base in zip(blocks, bases):
        e_sch, e_dch, e_fch, soe = block.extract(solution.values, base)
        _check_no_simultaneity(block, e_sch, e_dch, scenario.price_curve, stations)
        probe = EvSchedule(block.ev.id, e_sch, e_dch, e_fch, soe, 0.0, CostBreakdown())
        breakdown = _plan_breakdown_from(probe.flows(block.itinerary), scenario.price_curve, stations, evs, options)
        schedules.append(
            EvSchedule(block.ev.id, e_sch, e_dch, e_fch, soe, breakdown.total_ev_perspective_cost, breakdown)
        )
    aggregate = aggregate_by(schedules, scenario, "ev")
    total = math.fsum(s.total_cost for s in schedules)
    return FleetResult(schedules, aggregate, total, coupled=True)


def optimize_fleet(scenario: Scenario, options: CostOptions | None = None) -> FleetResult:
    """Fleet schedule: independent per-EV programs, or one joint program when
    some station's connected-EV power demand could exceed its capacity."""
    options = options or CostOptions()
    if station_load_risk(scenario):
        return optimize_joint(scenario, options)
    stations = scenario.station_map()
    schedules = [
        optimize_ev(ev, scenario.itinerary(ev.id), stations, scenario.price_curve, scenario.time_grid, options)
        for ev in scenario.evs
    ]
    total = math.fsum(s.total_cost for s in schedules)
    return FleetResult(schedules, aggregate_by(schedules, scenario, "ev"), total, coupled=False)


def aggregate_by(schedules: list[EvSchedule], scenario: Scenario, group_by: str) -> AggregateProfile:
    """Stacked fleet profile grouped by EV or by station.

    Totals are exact sums (fsum) of the same per-EV-step values in both
    groupings, so the outline is identical whichever way the stack is drawn.
    """
    T = scenario.time_grid.horizon_steps
    contributions: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def slot(key: str) -> tuple[np.ndarray, np.ndarray]:
        if key not in contributions:
            contributions[key] = (np.zeros(T), np.zeros(T))
        return contributions[key]

    per_step_charge: list[list[float]] = [[] for _ in range(T)]
    per_step_discharge: list[list[float]] = [[] for _ in range(T)]
    for sched in schedules:
        itinerary = scenario.itinerary(sched.ev_id)
        for t in range(T):
            charge = sched.e_sch[t] + sched.e_fch[t]
            discharge = sched.e_dch[t]
            per_step_charge[t].append(charge)
            per_step_discharge[t].append(discharge)
            if group_by == "ev":
                key = sched.ev_id
            else:
                state = itinerary.states[t]
                key = state.cs_id if isinstance(state, (Parked, FastCharge)) else None
            if key is not None:
                ch, dc = slot(key)
                ch[t] += charge
                dc[t] += discharge

    charge = np.array([math.fsum(v) for v in per_step_charge])
    discharge = np.array([math.fsum(v) for v in per_step_discharge])
    return AggregateProfile(group_by, charge, discharge, contributions)
