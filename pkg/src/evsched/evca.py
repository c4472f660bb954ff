"""Station-based scheduling: per-station programs over forecasted sessions.

Each station only sees an EV between its forecasted arrival and departure
(session window); outside the window the EV's state is invisible to it.
Session boundary SOE values come from a boundary policy:

* ``naive``: the departure floor is the minimal SOE needed for all remaining
  mobility (backward recursion), and the arrival value is that same minimal
  requirement; only the very first session starts from the EV's known initial
  SOE. Stations therefore receive no energy positioned beyond mobility needs,
  which is exactly the flexibility-transfer loss the station-based concept
  suffers from.
* ``oracle``: boundary values read off the EV-based optimal schedules, i.e.
  the full flexibility transfer the stations could at best be told about.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import evba, lp
from .mobility import min_required_soe
from .scenario import (
    ChargingStation,
    CostOptions,
    ForecastErrorModel,
    Parked,
    PriceCurve,
    Scenario,
    effective_power_limit,
)
from .settlement import Flow, plan_breakdown

logger = logging.getLogger(__name__)

_SNAP = 1e-9
# same minimal-throughput tie-break as the EV-based optimizer
_TIE_EPS = 3e-9


class InfeasibleSession(RuntimeError):
    """A departure-SOE floor is unreachable within the session window."""

    def __init__(self, cs_id: str, session: "SessionForecast | None" = None, message: str | None = None):
        self.cs_id = cs_id
        self.session = session
        detail = f" ({session.ev_id} [{session.t_arr},{session.t_dep}))" if session else ""
        super().__init__(message or f"station {cs_id}: infeasible session{detail}")


@dataclass(frozen=True)
class SessionForecast:
    """One parked session: the four attributes a station must anticipate."""

    ev_id: str
    cs_id: str
    t_arr: int
    soe_arr: float
    t_dep: int
    soe_dep: float

    def __post_init__(self):
        if not self.t_arr < self.t_dep:
            raise ValueError(f"session {self.ev_id}@{self.cs_id}: t_arr must precede t_dep")

    @property
    def steps(self) -> range:
        return range(self.t_arr, self.t_dep)


@dataclass(frozen=True)
class SessionSchedule:
    session: SessionForecast
    e_sch: np.ndarray
    e_dch: np.ndarray
    soe: np.ndarray


@dataclass(frozen=True)
class CsSchedule:
    """A station's plan over its sessions; variables exist only inside windows."""

    cs_id: str
    sessions: tuple[SessionSchedule, ...]
    charge_total: np.ndarray
    discharge_total: np.ndarray
    total_cost: float

    def flows(self) -> list[Flow]:
        out = []
        for ss in self.sessions:
            for k, t in enumerate(ss.session.steps):
                out.append(Flow(ss.session.ev_id, self.cs_id, t, float(ss.e_sch[k]), float(ss.e_dch[k]), 0.0))
        return out


def split_parked_sessions(scenario: Scenario, ev_id: str) -> list[tuple[str, int, int]]:
    """(cs_id, t_arr, t_dep) for each maximal parked run of one EV."""
    itinerary = scenario.itinerary(ev_id)
    out: list[tuple[str, int, int]] = []
    current: tuple[str, int] | None = None
    for t, state in enumerate(itinerary.states):
        cs_id = state.cs_id if isinstance(state, Parked) else None
        if current is not None and (cs_id is None or cs_id != current[0]):
            out.append((current[0], current[1], t))
            current = None
        if cs_id is not None and current is None:
            current = (cs_id, t)
    if current is not None:
        out.append((current[0], current[1], scenario.time_grid.horizon_steps))
    return out


def derive_true_sessions(
    scenario: Scenario,
    boundary_policy: str = "naive",
    fleet: evba.FleetResult | None = None,
    options: CostOptions | None = None,
) -> list[SessionForecast]:
    """Ground-truth session windows with policy-assigned boundary SOE values.

    Raises :class:`~evsched.mobility.InfeasibleMobility` when even maximum-rate
    charging cannot meet the itinerary.
    """
    if boundary_policy not in ("naive", "oracle"):
        raise ValueError(f"unknown boundary policy {boundary_policy!r}")
    stations = scenario.station_map()
    if boundary_policy == "oracle" and fleet is None:
        fleet = evba.optimize_fleet(scenario, options)

    sessions: list[SessionForecast] = []
    for ev in scenario.evs:
        itinerary = scenario.itinerary(ev.id)
        runs = split_parked_sessions(scenario, ev.id)
        if boundary_policy == "naive":
            req = min_required_soe(ev, itinerary, stations, scenario.time_grid)
            for k, (cs_id, t_arr, t_dep) in enumerate(runs):
                arr = ev.soe_init if k == 0 else float(req[t_arr])
                dep = float(req[t_dep])
                sessions.append(SessionForecast(ev.id, cs_id, t_arr, arr, t_dep, dep))
        else:
            min_required_soe(ev, itinerary, stations, scenario.time_grid)
            soe = next(s.soe for s in fleet.schedules if s.ev_id == ev.id)

            def clamp(v: float) -> float:
                return min(max(v, ev.soe_min), ev.soe_max)

            for cs_id, t_arr, t_dep in runs:
                arr = ev.soe_init if t_arr == 0 else clamp(float(soe[t_arr - 1]))
                dep = clamp(float(soe[t_dep - 1]))
                sessions.append(SessionForecast(ev.id, cs_id, t_arr, arr, t_dep, dep))
    return sessions


def _window_max_gain(scenario: Scenario, session: SessionForecast) -> float:
    ev = scenario.ev(session.ev_id)
    cs = scenario.station(session.cs_id)
    per_step = effective_power_limit(ev, cs) * scenario.time_grid.step_hours * ev.eta_sch
    return per_step * len(session.steps)


def apply_forecast_noise(
    sessions: list[SessionForecast],
    model: ForecastErrorModel,
    seed: int,
    scenario: Scenario,
) -> list[SessionForecast]:
    """Perturb session boundaries; deterministic for a fixed seed.

    Arrival/departure steps get independent integer shifts, arrival SOE gets
    Gaussian noise clipped into the EV's SOE window, departure SOE gains the
    forecast margin and is clamped to what the window can physically deliver.
    Sessions whose window collapses to zero length are dropped with a warning.
    """
    rng = np.random.default_rng(seed)
    shifts, probs = model.shifts_and_probs()
    T = scenario.time_grid.horizon_steps
    out: list[SessionForecast] = []
    for s in sessions:
        da = int(rng.choice(shifts, p=probs))
        dd = int(rng.choice(shifts, p=probs))
        noise = float(rng.normal(0.0, model.soe_sigma)) if model.soe_sigma > 0 else 0.0
        t_arr = min(max(s.t_arr + da, 0), T - 1)
        t_dep = min(max(s.t_dep + dd, 1), T)
        if t_arr >= t_dep:
            logger.warning("dropping zero-length noisy session %s@%s [%d,%d)", s.ev_id, s.cs_id, t_arr, t_dep)
            continue
        ev = scenario.ev(s.ev_id)
        soe_arr = min(max(s.soe_arr + noise, ev.soe_min), ev.soe_max)
        soe_dep = min(s.soe_dep + model.dep_soe_margin, ev.soe_max)
        shifted = SessionForecast(s.ev_id, s.cs_id, t_arr, soe_arr, t_dep, soe_dep)
        reachable = soe_arr + _window_max_gain(scenario, shifted)
        if soe_dep > reachable:
            soe_dep = reachable
            shifted = replace(shifted, soe_dep=soe_dep)
        out.append(shifted)
    return out


def optimize_cs(
    cs: ChargingStation,
    sessions: list[SessionForecast],
    prices: PriceCurve,
    issue3_obc_known: bool,
    scenario: Scenario,
    options: CostOptions | None = None,
) -> CsSchedule:
    """Cost-minimal station plan over its forecasted sessions.

    Power per session-step is capped at cp_limit alone unless the station
    knows the OBC rating (``issue3_obc_known``), in which case min(CP, OBC)
    applies. Nothing is modeled outside session windows.
    """
    options = options or CostOptions()
    T = scenario.time_grid.horizon_steps
    h = scenario.time_grid.step_hours
    for s in sessions:
        if s.cs_id != cs.id:
            raise ValueError(f"session {s.ev_id} does not reference station {cs.id}")

    sessions = sorted(sessions, key=lambda s: (s.t_arr, s.ev_id, s.t_dep))
    for s in sessions:
        ev = scenario.ev(s.ev_id)
        gain = effective_power_limit(ev, cs) * h * ev.eta_sch * len(s.steps)
        if s.soe_dep > s.soe_arr + gain + 1e-9:
            raise InfeasibleSession(cs.id, s)

    builder = lp.LpBuilder()
    layout: list[tuple[SessionForecast, int]] = []  # (session, first var index)
    for s in sessions:
        ev = scenario.ev(s.ev_id)
        limit = cs.cp_limit if not issue3_obc_known else effective_power_limit(ev, cs)
        cap = limit * h
        gf_dch = cs.grid_fee if options.discharge_pays_grid_fee else 0.0
        n_steps = len(s.steps)
        base = builder.add_var(0.0, cap, prices.prices[s.t_arr] + cs.grid_fee + cs.utilization_fee + _TIE_EPS)
        for k, t in enumerate(s.steps):
            if k > 0:
                builder.add_var(0.0, cap, prices.prices[t] + cs.grid_fee + cs.utilization_fee + _TIE_EPS)
        for t in s.steps:
            builder.add_var(0.0, cap, -prices.prices[t] + gf_dch + cs.utilization_fee + ev.degradation_fee + _TIE_EPS)
        for k, t in enumerate(s.steps):
            lo = ev.soe_min if k < n_steps - 1 else max(ev.soe_min, s.soe_dep)
            builder.add_var(lo, ev.soe_max)
        layout.append((s, base))
        # dynamics: soe_k = soe_{k-1} + eta*sch_k - dch_k/eta, anchored at soe_arr
        for k in range(n_steps):
            coeffs = {
                base + 2 * n_steps + k: 1.0,
                base + k: -ev.eta_sch,
                base + n_steps + k: 1.0 / ev.eta_dch,
            }
            if k > 0:
                coeffs[base + 2 * n_steps + k - 1] = -1.0
            builder.add_constraint(coeffs, lp.EQ, s.soe_arr if k == 0 else 0.0)

    # shared charging-point capacity per step
    for t in range(T):
        coeffs: dict[int, float] = {}
        for s, base in layout:
            if s.t_arr <= t < s.t_dep:
                k = t - s.t_arr
                n_steps = len(s.steps)
                coeffs[base + k] = 1.0
                coeffs[base + n_steps + k] = 1.0
        if coeffs:
            builder.add_constraint(coeffs, lp.LEQ, cs.num_cps * cs.cp_limit * h)

    solution = lp.solve(builder.build())
    if not solution.is_optimal:
        raise InfeasibleSession(cs.id, None, f"station {cs.id}: joint session program infeasible")

    x = solution.values
    out_sessions: list[SessionSchedule] = []
    charge_total = np.zeros(T)
    discharge_total = np.zeros(T)
    for s, base in layout:
        ev = scenario.ev(s.ev_id)
        n_steps = len(s.steps)
        e_sch = np.array(x[base : base + n_steps])
        e_dch = np.array(x[base + n_steps : base + 2 * n_steps])
        for arr in (e_sch, e_dch):
            arr[np.abs(arr) < _SNAP] = 0.0
        soe = np.empty(n_steps)
        prev = s.soe_arr
        for k in range(n_steps):
            prev = prev + e_sch[k] * ev.eta_sch - e_dch[k] / ev.eta_dch
            soe[k] = prev
        out_sessions.append(SessionSchedule(s, e_sch, e_dch, soe))
        charge_total[s.t_arr : s.t_dep] += e_sch
        discharge_total[s.t_arr : s.t_dep] += e_dch

    sched = CsSchedule(cs.id, tuple(out_sessions), charge_total, discharge_total, 0.0)
    total = plan_breakdown(sched.flows(), prices, scenario, options).total_ev_perspective_cost
    return CsSchedule(cs.id, tuple(out_sessions), charge_total, discharge_total, total)


def optimize_central(scenario: Scenario, options: CostOptions | None = None) -> list[evba.EvSchedule]:
    """Omniscient single-aggregator plan: the union of all EV-based constraints.

    Exists to check that with one central entity it does not matter whether
    the system is framed around EVs or stations.
    """
    return evba.optimize_joint(scenario, options).schedules


@dataclass(frozen=True)
class EvcaPlan:
    sessions: tuple[SessionForecast, ...]
    cs_schedules: tuple[CsSchedule, ...]
    total_cost: float

    def flows(self) -> list[Flow]:
        out: list[Flow] = []
        for cs_sched in self.cs_schedules:
            out.extend(cs_sched.flows())
        return out


def plan_evca(
    scenario: Scenario,
    boundary_policy: str = "naive",
    issue3_obc_known: bool = True,
    noise: bool = False,
    seed: int = 0,
    options: CostOptions | None = None,
    fleet: evba.FleetResult | None = None,
) -> EvcaPlan:
    """Full station-based day-ahead plan: sessions, optional noise, station programs."""
    options = options or CostOptions()
    sessions = derive_true_sessions(scenario, boundary_policy, fleet=fleet, options=options)
    if noise:
        sessions = apply_forecast_noise(sessions, scenario.forecast_error, seed, scenario)
    schedules: list[CsSchedule] = []
    for cs in scenario.stations:
        cs_sessions = [s for s in sessions if s.cs_id == cs.id]
        schedules.append(
            optimize_cs(cs, cs_sessions, scenario.price_curve, issue3_obc_known, scenario, options)
        )
    total = math.fsum(s.total_cost for s in schedules)
    return EvcaPlan(tuple(sessions), tuple(schedules), total)
