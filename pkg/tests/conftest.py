from __future__ import annotations

import numpy as np
import pytest

from evsched import evba
from evsched.scenario import (
    ChargingStation,
    Driving,
    Ev,
    FastCharge,
    ForecastErrorModel,
    Itinerary,
    Parked,
    PriceCurve,
    Scenario,
    TimeGrid,
    builtin_illustrative,
    validate,
)

ZERO_NOISE = ForecastErrorModel(time_shift_probs=((0, 1.0),), soe_sigma=0.0, dep_soe_margin=0.0)


@pytest.fixture(scope="session")
def builtin() -> Scenario:
    return builtin_illustrative()


@pytest.fixture(scope="session")
def builtin_fleet(builtin):
    return evba.optimize_fleet(builtin)


def make_single_ev_scenario(
    prices,
    states=None,
    *,
    obc=5.0,
    cp=5.0,
    capacity=10.0,
    soe_init=5.0,
    soe_min=0.0,
    soe_max=10.0,
    soe_end_min=5.0,
    eta=1.0,
    grid_fee=0.0,
    utilization_fee=0.0,
    degradation_fee=0.0,
    num_cps=1,
) -> Scenario:
    """One EV, one slow station, parked throughout unless states given."""
    T = len(prices)
    if states is None:
        states = tuple(Parked("cs") for _ in range(T))
    ev = Ev(
        id="ev",
        capacity=capacity,
        soe_init=soe_init,
        soe_min=soe_min,
        soe_max=soe_max,
        soe_end_min=soe_end_min,
        obc_limit=obc,
        eta_sch=eta,
        eta_dch=eta,
        eta_run=1.0,
        eta_fch=eta,
        degradation_fee=degradation_fee,
    )
    cs = ChargingStation(id="cs", cp_limit=cp, num_cps=num_cps, utilization_fee=utilization_fee, grid_fee=grid_fee)
    return validate(
        Scenario(
            time_grid=TimeGrid(T, 1.0),
            evs=(ev,),
            stations=(cs,),
            itineraries=(Itinerary("ev", tuple(states)),),
            price_curve=PriceCurve(tuple(float(p) for p in prices)),
            forecast_error=ZERO_NOISE,
        )
    )


def assert_soe_recursion(schedule, ev, itinerary, tol=1e-6):
    """Recompute the SOE recursion from the schedule's energy series."""
    prev = ev.soe_init
    for t in range(len(schedule.soe)):
        state = itinerary.states[t]
        run = state.e_run / ev.eta_run if isinstance(state, Driving) else 0.0
        fch = schedule.e_fch[t] if isinstance(state, FastCharge) else 0.0
        prev = prev + schedule.e_sch[t] * ev.eta_sch - schedule.e_dch[t] / ev.eta_dch - run + fch * ev.eta_fch
        assert abs(prev - schedule.soe[t]) <= tol, f"SOE recursion broken at step {t}"
