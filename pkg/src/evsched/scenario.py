"""Scenario data model: fleet, stations, itineraries, prices, validation and file I/O.

A scenario is immutable once validated and safe to share across workers.
All energies are kWh, powers kW; the per-step energy bound of a power limit
is ``limit * step_hours``.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Union


class ScenarioError(ValueError):
    """A scenario violates one of its structural invariants."""


@dataclass(frozen=True)
class TimeGrid:
    """Discrete daily horizon: ``horizon_steps`` steps of ``step_hours`` each."""

    horizon_steps: int = 24
    step_hours: float = 1.0


@dataclass(frozen=True)
class Ev:
    """An EV: battery window, on-board charger limit, conversion efficiencies.

    ``eta_sch``/``eta_dch``/``eta_fch`` apply to slow charge, V2G discharge
    and fast charge respectively; ``eta_run`` scales driving consumption.
    ``degradation_fee`` is paid per kWh discharged in V2G mode.
    """

    id: str
    capacity: float
    soe_init: float
    soe_min: float
    soe_max: float
    soe_end_min: float
    obc_limit: float
    eta_sch: float = 0.95
    eta_dch: float = 0.95
    eta_run: float = 1.0
    eta_fch: float = 0.95
    degradation_fee: float = 0.0


@dataclass(frozen=True)
class ChargingStation:
    """A station with ``num_cps`` identical charging points of ``cp_limit`` kW."""

    id: str
    cp_limit: float
    num_cps: int = 1
    utilization_fee: float = 0.0
    grid_fee: float = 0.0
    is_fast: bool = False


@dataclass(frozen=True)
class Parked:
    cs_id: str


@dataclass(frozen=True)
class Driving:
    e_run: float


@dataclass(frozen=True)
class FastCharge:
    cs_id: str
    e_fch_max: float


ItineraryState = Union[Parked, Driving, FastCharge]


@dataclass(frozen=True)
class Itinerary:
    """Per-step location/driving state of one EV over the whole horizon."""

    ev_id: str
    states: tuple[ItineraryState, ...]

    def cs_at(self, t: int) -> str | None:
        """Station id the EV is parked at during step ``t`` (None if absent)."""
        s = self.states[t]
        return s.cs_id if isinstance(s, Parked) else None


@dataclass(frozen=True)
class PriceCurve:
    """Day-ahead price per step plus dual imbalance penalty factors."""

    prices: tuple[float, ...]
    penalty_short_factor: float = 1.5
    penalty_long_factor: float = 0.5


@dataclass(frozen=True)
class ForecastErrorModel:
    """Parametric session-forecast noise.

    ``time_shift_probs`` is a distribution over integer step shifts applied
    independently to arrival and departure times; ``soe_sigma`` is the stddev
    of arrival-SOE noise (clipped into the EV's SOE window); ``dep_soe_margin``
    is added to the forecasted departure SOE.
    """

    time_shift_probs: tuple[tuple[int, float], ...] = ((-1, 0.1), (0, 0.8), (1, 0.1))
    soe_sigma: float = 0.0
    dep_soe_margin: float = 0.0

    def shifts_and_probs(self) -> tuple[list[int], list[float]]:
        pairs = sorted(self.time_shift_probs)
        return [s for s, _ in pairs], [p for _, p in pairs]


@dataclass(frozen=True)
class CostOptions:
    """Cost-model toggles shared by the optimizers and settlement.

    V2G discharge does not pay grid fees by default; the toggle exists because
    such a fee would change arbitrage profitability materially.
    """

    discharge_pays_grid_fee: bool = False


@dataclass(frozen=True)
class Scenario:
    time_grid: TimeGrid
    evs: tuple[Ev, ...]
    stations: tuple[ChargingStation, ...]
    itineraries: tuple[Itinerary, ...]
    price_curve: PriceCurve
    forecast_error: ForecastErrorModel = field(default_factory=ForecastErrorModel)
    rng_seed: int = 0

    def ev(self, ev_id: str) -> Ev:
        for ev in self.evs:
            if ev.id == ev_id:
                return ev
        raise KeyError(ev_id)

    def station(self, cs_id: str) -> ChargingStation:
        for cs in self.stations:
            if cs.id == cs_id:
                return cs
        raise KeyError(cs_id)

    def station_map(self) -> dict[str, ChargingStation]:
        return {cs.id: cs for cs in self.stations}

    def itinerary(self, ev_id: str) -> Itinerary:
        for it in self.itineraries:
            if it.ev_id == ev_id:
                return it
        raise KeyError(ev_id)


def effective_power_limit(ev: Ev, station: ChargingStation) -> float:
    """Binding slow-charging power limit: the smaller of OBC and CP ratings."""
    return min(ev.obc_limit, station.cp_limit)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


def validate(scenario: Scenario) -> Scenario:
    """Check every structural invariant; returns the scenario when valid.

    Raises :class:`ScenarioError` naming the violated invariant. Emits a
    warning (not an error) when some effective buy price is negative because
    the no-simultaneous-charge-discharge property then no longer holds.
    """
    tg = scenario.time_grid
    _require(tg.horizon_steps >= 1, "horizon_steps must be >= 1")
    _require(tg.step_hours > 0, "step_hours must be > 0")
    T = tg.horizon_steps

    _require(len(scenario.evs) > 0, "scenario must contain at least one EV")
    seen: set[str] = set()
    for ev in scenario.evs:
        _require(ev.id not in seen, f"duplicate EV id {ev.id!r}")
        seen.add(ev.id)
        _require(
            0 <= ev.soe_min <= ev.soe_init <= ev.soe_max <= ev.capacity,
            f"EV {ev.id}: requires 0 <= soe_min <= soe_init <= soe_max <= capacity",
        )
        _require(
            0 <= ev.soe_end_min <= ev.soe_max,
            f"EV {ev.id}: requires 0 <= soe_end_min <= soe_max",
        )
        _require(ev.obc_limit > 0, f"EV {ev.id}: obc_limit must be > 0")
        for name in ("eta_sch", "eta_dch", "eta_run", "eta_fch"):
            eta = getattr(ev, name)
            _require(0 < eta <= 1, f"EV {ev.id}: {name} must be in (0, 1]")
        _require(ev.degradation_fee >= 0, f"EV {ev.id}: degradation_fee must be >= 0")

    seen = set()
    for cs in scenario.stations:
        _require(cs.id not in seen, f"duplicate station id {cs.id!r}")
        seen.add(cs.id)
        _require(cs.cp_limit > 0, f"station {cs.id}: cp_limit must be > 0")
        _require(cs.num_cps >= 1, f"station {cs.id}: num_cps must be >= 1")
        _require(cs.utilization_fee >= 0, f"station {cs.id}: utilization_fee must be >= 0")
        _require(cs.grid_fee >= 0, f"station {cs.id}: grid_fee must be >= 0")

    cs_ids = {cs.id for cs in scenario.stations}
    ev_ids = [ev.id for ev in scenario.evs]
    it_ids = [it.ev_id for it in scenario.itineraries]
    _require(sorted(it_ids) == sorted(ev_ids), "exactly one itinerary per EV required")

    for it in scenario.itineraries:
        _require(
            len(it.states) == T,
            f"itinerary {it.ev_id}: states length != horizon ({len(it.states)} vs {T})",
        )
        for t, state in enumerate(it.states):
            if isinstance(state, Driving):
                _require(state.e_run >= 0, f"itinerary {it.ev_id}: e_run < 0 at step {t}")
            elif isinstance(state, (Parked, FastCharge)):
                _require(
                    state.cs_id in cs_ids,
                    f"itinerary {it.ev_id}: unknown station {state.cs_id!r} at step {t}",
                )
                if isinstance(state, FastCharge):
                    _require(
                        state.e_fch_max >= 0,
                        f"itinerary {it.ev_id}: e_fch_max < 0 at step {t}",
                    )
            else:
                raise ScenarioError(f"itinerary {it.ev_id}: invalid state at step {t}")

    # Per-step CP occupancy against the station's point count.
    for t in range(T):
        counts: dict[str, int] = {}
        for it in scenario.itineraries:
            cs_id = it.cs_at(t)
            if cs_id is not None:
                counts[cs_id] = counts.get(cs_id, 0) + 1
        for cs in scenario.stations:
            if counts.get(cs.id, 0) > cs.num_cps:
                raise ScenarioError(
                    f"CP capacity exceeded at station {cs.id} step {t}: "
                    f"{counts[cs.id]} EVs for {cs.num_cps} charging points"
                )

    pc = scenario.price_curve
    _require(len(pc.prices) == T, f"price curve length != horizon ({len(pc.prices)} vs {T})")
    _require(pc.penalty_short_factor > 0, "penalty_short_factor must be > 0")
    _require(pc.penalty_long_factor > 0, "penalty_long_factor must be > 0")

    fem = scenario.forecast_error
    total_p = sum(p for _, p in fem.time_shift_probs)
    _require(abs(total_p - 1.0) < 1e-9, "time_shift_probs must sum to 1")
    _require(all(p >= 0 for _, p in fem.time_shift_probs), "time_shift_probs must be >= 0")
    _require(fem.soe_sigma >= 0, "soe_sigma must be >= 0")

    for cs in scenario.stations:
        worst = min(pc.prices) + cs.grid_fee + cs.utilization_fee
        if worst < 0:
            warnings.warn(
                f"negative effective buy price at station {cs.id}: "
                "schedules may charge and discharge simultaneously",
                stacklevel=2,
            )
    return scenario


# ---------------------------------------------------------------------------
# JSON serialization


def _state_to_dict(state: ItineraryState) -> dict:
    if isinstance(state, Parked):
        return {"parked": state.cs_id}
    if isinstance(state, Driving):
        return {"driving": {"e_run": state.e_run}}
    return {"fast_charge": {"cs": state.cs_id, "e_fch_max": state.e_fch_max}}


def _state_from_dict(obj: Mapping, where: str) -> ItineraryState:
    if not isinstance(obj, Mapping) or len(obj) != 1:
        raise ScenarioError(f"{where}: itinerary state must have exactly one key")
    key = next(iter(obj))
    try:
        if key == "parked":
            return Parked(cs_id=str(obj["parked"]))
        if key == "driving":
            return Driving(e_run=float(obj["driving"]["e_run"]))
        if key == "fast_charge":
            inner = obj["fast_charge"]
            return FastCharge(cs_id=str(inner["cs"]), e_fch_max=float(inner["e_fch_max"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: malformed {key!r} state: {exc}") from exc
    raise ScenarioError(f"{where}: unknown itinerary state {key!r}")


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "time_grid": {
            "horizon_steps": scenario.time_grid.horizon_steps,
            "step_hours": scenario.time_grid.step_hours,
        },
        "evs": [
            {
                "id": ev.id,
                "capacity": ev.capacity,
                "soe_init": ev.soe_init,
                "soe_min": ev.soe_min,
                "soe_max": ev.soe_max,
                "soe_end_min": ev.soe_end_min,
                "obc_limit": ev.obc_limit,
                "eta_sch": ev.eta_sch,
                "eta_dch": ev.eta_dch,
                "eta_run": ev.eta_run,
                "eta_fch": ev.eta_fch,
                "degradation_fee": ev.degradation_fee,
            }
            for ev in scenario.evs
        ],
        "stations": [
            {
                "id": cs.id,
                "cp_limit": cs.cp_limit,
                "num_cps": cs.num_cps,
                "utilization_fee": cs.utilization_fee,
                "grid_fee": cs.grid_fee,
                "is_fast": cs.is_fast,
            }
            for cs in scenario.stations
        ],
        "itineraries": [
            {"ev_id": it.ev_id, "states": [_state_to_dict(s) for s in it.states]}
            for it in scenario.itineraries
        ],
        "prices": {
            "prices": list(scenario.price_curve.prices),
            "penalty_short_factor": scenario.price_curve.penalty_short_factor,
            "penalty_long_factor": scenario.price_curve.penalty_long_factor,
        },
        "forecast_error": {
            "time_shift_probs": {str(s): p for s, p in scenario.forecast_error.time_shift_probs},
            "soe_sigma": scenario.forecast_error.soe_sigma,
            "dep_soe_margin": scenario.forecast_error.dep_soe_margin,
        },
        "rng_seed": scenario.rng_seed,
    }


def scenario_from_dict(data: Mapping) -> Scenario:
    """Build and validate a Scenario from its JSON dictionary form."""
    try:
        tg = TimeGrid(
            horizon_steps=int(data["time_grid"]["horizon_steps"]),
            step_hours=float(data["time_grid"]["step_hours"]),
        )
        evs = tuple(
            Ev(
                id=str(e["id"]),
                capacity=float(e["capacity"]),
                soe_init=float(e["soe_init"]),
                soe_min=float(e["soe_min"]),
                soe_max=float(e["soe_max"]),
                soe_end_min=float(e["soe_end_min"]),
                obc_limit=float(e["obc_limit"]),
                eta_sch=float(e.get("eta_sch", 0.95)),
                eta_dch=float(e.get("eta_dch", 0.95)),
                eta_run=float(e.get("eta_run", 1.0)),
                eta_fch=float(e.get("eta_fch", 0.95)),
                degradation_fee=float(e.get("degradation_fee", 0.0)),
            )
            for e in data["evs"]
        )
        stations = tuple(
            ChargingStation(
                id=str(s["id"]),
                cp_limit=float(s["cp_limit"]),
                num_cps=int(s.get("num_cps", 1)),
                utilization_fee=float(s.get("utilization_fee", 0.0)),
                grid_fee=float(s.get("grid_fee", 0.0)),
                is_fast=bool(s.get("is_fast", False)),
            )
            for s in data["stations"]
        )
        itineraries = tuple(
            Itinerary(
                ev_id=str(i["ev_id"]),
                states=tuple(
                    _state_from_dict(s, f"itinerary {i.get('ev_id')!r} step {t}")
                    for t, s in enumerate(i["states"])
                ),
            )
            for i in data["itineraries"]
        )
        prices = PriceCurve(
            prices=tuple(float(p) for p in data["prices"]["prices"]),
            penalty_short_factor=float(data["prices"].get("penalty_short_factor", 1.5)),
            penalty_long_factor=float(data["prices"].get("penalty_long_factor", 0.5)),
        )
        fem_data = data.get("forecast_error", {})
        fem = ForecastErrorModel(
            time_shift_probs=tuple(
                sorted((int(k), float(v)) for k, v in fem_data.get("time_shift_probs", {"0": 1.0}).items())
            ),
            soe_sigma=float(fem_data.get("soe_sigma", 0.0)),
            dep_soe_margin=float(fem_data.get("dep_soe_margin", 0.0)),
        )
        scenario = Scenario(
            time_grid=tg,
            evs=evs,
            stations=stations,
            itineraries=itineraries,
            price_curve=prices,
            forecast_error=fem,
            rng_seed=int(data.get("rng_seed", 0)),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    return validate(scenario)


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def canonical_hash(scenario: Scenario) -> str:
    """Platform-stable SHA-256 of the canonicalized JSON form."""
    blob = json.dumps(scenario_to_dict(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def builtin_illustrative() -> Scenario:
    """The bundled 3-EV / 3-station day used throughout the test suite."""
    data = json.loads(resources.files("evsched.data").joinpath("illustrative.json").read_text())
    return scenario_from_dict(data)


def with_fees(
    scenario: Scenario,
    *,
    grid: bool = True,
    utilization: bool = True,
    degradation: bool = True,
) -> Scenario:
    """Scenario copy with selected fee families zeroed out (toggle experiments)."""
    stations = tuple(
        replace(
            cs,
            grid_fee=cs.grid_fee if grid else 0.0,
            utilization_fee=cs.utilization_fee if utilization else 0.0,
        )
        for cs in scenario.stations
    )
    evs = tuple(
        replace(ev, degradation_fee=ev.degradation_fee if degradation else 0.0)
        for ev in scenario.evs
    )
    return replace(scenario, stations=stations, evs=evs)


def with_prices(scenario: Scenario, prices) -> Scenario:
    """Scenario copy with a replaced day-ahead price vector."""
    pc = replace(scenario.price_curve, prices=tuple(float(p) for p in prices))
    return validate(replace(scenario, price_curve=pc))
