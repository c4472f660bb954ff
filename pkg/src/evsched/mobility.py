"""Mobility feasibility: minimal-SOE recursion over an itinerary.

``min_required_soe`` answers "how full must the battery be at the start of
step t so that every remaining trip and the end-of-day target stay reachable,
charging as hard as physically possible in every future window".
"""

from __future__ import annotations

import numpy as np

from .scenario import ChargingStation, Driving, Ev, FastCharge, Itinerary, Parked, TimeGrid, effective_power_limit


class InfeasibleMobility(RuntimeError):
    """The itinerary cannot be driven even with maximum-rate charging."""

    def __init__(self, ev_id: str, step: int, message: str | None = None):
        self.ev_id = ev_id
        self.step = step
        super().__init__(message or f"EV {ev_id}: mobility infeasible from step {step}")


def step_battery_delta_max(ev: Ev, state, stations: dict[str, ChargingStation], step_hours: float) -> float:
    """Largest battery-side SOE change achievable in one step for this state."""
    if isinstance(state, Parked):
        return effective_power_limit(ev, stations[state.cs_id]) * step_hours * ev.eta_sch
    if isinstance(state, FastCharge):
        return state.e_fch_max * ev.eta_fch
    return -state.e_run / ev.eta_run


def min_required_soe(
    ev: Ev,
    itinerary: Itinerary,
    stations: dict[str, ChargingStation],
    time_grid: TimeGrid,
) -> np.ndarray:
    """Backward recursion: req[t] = minimal feasible SOE at the start of step t.

    req has length T+1; req[T] is the end-of-horizon floor. Raises
    :class:`InfeasibleMobility` when the requirement exceeds soe_max anywhere
    or exceeds soe_init at t=0.
    """
    T = time_grid.horizon_steps
    req = np.empty(T + 1)
    req[T] = max(ev.soe_min, ev.soe_end_min)
    for t in range(T - 1, -1, -1):
        gain = step_battery_delta_max(ev, itinerary.states[t], stations, time_grid.step_hours)
        req[t] = max(ev.soe_min, req[t + 1] - gain)
        if req[t] > ev.soe_max + 1e-9:
            raise InfeasibleMobility(ev.id, _first_violating_step(ev, itinerary, stations, time_grid))
    if req[0] > ev.soe_init + 1e-9:
        raise InfeasibleMobility(ev.id, _first_violating_step(ev, itinerary, stations, time_grid))
    return req


def _first_violating_step(
    ev: Ev,
    itinerary: Itinerary,
    stations: dict[str, ChargingStation],
    time_grid: TimeGrid,
) -> int:
    """Forward max-charging simulation; first step where the SOE window breaks."""
    soe = ev.soe_init
    for t, state in enumerate(itinerary.states):
        delta = step_battery_delta_max(ev, state, stations, time_grid.step_hours)
        soe = min(soe + delta, ev.soe_max) if delta >= 0 else soe + delta
        if soe < ev.soe_min - 1e-9:
            return t
    return time_grid.horizon_steps - 1
