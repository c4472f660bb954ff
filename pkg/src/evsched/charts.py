"""Static SVG profile charts: per-EV, per-station and fleet-aggregate views.

Hand-rolled SVG keeps the output deterministic text, diffable in tests.
Charge bars point up, discharge bars down, power limits are dashed lines and
SOE runs as an overlay polyline on its own scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import FastCharge, Parked, Scenario

EV_COLORS = ("#2aa198", "#cb4b16", "#6c71c4", "#859900", "#b58900", "#d33682")
CS_COLORS = ("#4caf50", "#2196f3", "#f44336", "#9c27b0", "#ff9800", "#607d8b")
SOE_COLOR = "#a57c00"
LIMIT_COLOR = "#333333"
OUTLINE_COLOR = "#000000"

PANEL_W = 380
PANEL_H = 190
MARGIN = 46
GAP = 26


def _fmt(v: float) -> str:
    return f"{v:.3f}"


@dataclass
class EvSeries:
    """Per-EV plotted series (grid-side kWh per step) plus SOE in kWh."""

    ev_id: str
    charge: np.ndarray  # e_sch + e_fch
    discharge: np.ndarray
    soe: np.ndarray


class _Svg:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
            f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
            f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
        ]

    def rect(self, x, y, w, h, fill, opacity=1.0):
        if h <= 0 or w <= 0:
            return
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" fill-opacity="{opacity:.2f}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke, width=1.0, dash: str | None = None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{width:g}"{dash_attr}/>'
        )

    def polyline(self, points: list[tuple[float, float]], stroke, width=1.5):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width:g}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", fill="#000000"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}" fill="{fill}">{s}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class _Panel:
    """Axis mapping for one chart panel: hours on x, +/- power on y."""

    def __init__(self, svg: _Svg, x0: float, y0: float, T: int, pmax: float, title: str):
        self.svg = svg
        self.x0 = x0
        self.y0 = y0
        self.T = T
        self.pmax = max(pmax, 1e-9)
        self.mid = y0 + PANEL_H / 2
        svg.text(x0, y0 - 6, title, size=12)
        svg.line(x0, self.mid, x0 + PANEL_W, self.mid, "#888888", 0.8)
        svg.line(x0, y0, x0, y0 + PANEL_H, "#888888", 0.8)
        for hour in range(0, T + 1, max(1, T // 6)):
            x = self.x(hour)
            svg.text(x, y0 + PANEL_H + 14, str(hour), size=9, anchor="middle")
        svg.text(x0 - 6, y0 + 10, _fmt(self.pmax), size=9, anchor="end")
        svg.text(x0 - 6, y0 + PANEL_H, f"-{_fmt(self.pmax)}", size=9, anchor="end")

    def x(self, t: float) -> float:
        return self.x0 + t / self.T * PANEL_W

    def y(self, power: float) -> float:
        return self.mid - power / self.pmax * (PANEL_H / 2)

    def bar(self, t: int, base: float, value: float, color: str) -> float:
        """Stacked bar segment from ``base`` (kW) up/down by ``value``; returns new base."""
        if abs(value) < 1e-12:
            return base
        y1 = self.y(base)
        y2 = self.y(base + value)
        top, bot = min(y1, y2), max(y1, y2)
        self.svg.rect(self.x(t) + 0.5, top, PANEL_W / self.T - 1.0, bot - top, color, 0.85)
        return base + value

    def hline(self, power: float, color=LIMIT_COLOR, dash="4,3"):
        self.svg.line(self.x(0), self.y(power), self.x(self.T), self.y(power), color, 1.2, dash)

    def overlay(self, values: np.ndarray, vmax: float, color=SOE_COLOR):
        """Secondary-scale polyline (e.g. SOE on battery capacity scale)."""
        vmax = max(vmax, 1e-9)
        pts = [(self.x(t + 0.5), self.y0 + PANEL_H - v / vmax * PANEL_H) for t, v in enumerate(values)]
        self.svg.polyline(pts, color, 1.4)

    def step_outline(self, values: np.ndarray, color=OUTLINE_COLOR):
        pts: list[tuple[float, float]] = []
        for t, v in enumerate(values):
            y = self.y(v)
            pts.append((self.x(t), y))
            pts.append((self.x(t + 1), y))
        self.svg.polyline(pts, color, 1.6)


def _ev_color(scenario: Scenario, ev_id: str) -> str:
    ids = [ev.id for ev in scenario.evs]
    return EV_COLORS[ids.index(ev_id) % len(EV_COLORS)]


def _cs_color(scenario: Scenario, cs_id: str) -> str:
    ids = [cs.id for cs in scenario.stations]
    return CS_COLORS[ids.index(cs_id) % len(CS_COLORS)]


def _power(series: np.ndarray, h: float) -> np.ndarray:
    return series / h


def render_ev_view(series: list[EvSeries], scenario: Scenario) -> str:
    """One panel per EV: bars colored by the station used, OBC limit, SOE."""
    T = scenario.time_grid.horizon_steps
    h = scenario.time_grid.step_hours
    n = len(series)
    svg = _Svg(MARGIN * 2 + PANEL_W, MARGIN + n * (PANEL_H + GAP + 18))
    pmax = max(max((ev.obc_limit for ev in scenario.evs), default=1.0), _series_peak(series, h))
    for i, s in enumerate(series):
        ev = scenario.ev(s.ev_id)
        it = scenario.itinerary(s.ev_id)
        panel = _Panel(svg, MARGIN, MARGIN + i * (PANEL_H + GAP + 18), T, pmax, f"{s.ev_id} (OBC {ev.obc_limit:g} kW)")
        for t in range(T):
            state = it.states[t]
            cs_id = state.cs_id if isinstance(state, (Parked, FastCharge)) else None
            color = _cs_color(scenario, cs_id) if cs_id else "#bbbbbb"
            panel.bar(t, 0.0, _power(s.charge, h)[t], color)
            panel.bar(t, 0.0, -_power(s.discharge, h)[t], color)
        panel.hline(ev.obc_limit)
        panel.hline(-ev.obc_limit)
        panel.overlay(s.soe, ev.capacity)
    return svg.render()


def render_cs_view(series: list[EvSeries], scenario: Scenario) -> str:
    """One panel per station: stacked per-EV contributions and the CP limit."""
    T = scenario.time_grid.horizon_steps
    h = scenario.time_grid.step_hours
    stations = list(scenario.stations)
    svg = _Svg(MARGIN * 2 + PANEL_W, MARGIN + len(stations) * (PANEL_H + GAP + 18))
    pmax = max(
        max((cs.cp_limit * cs.num_cps for cs in stations), default=1.0), _series_peak(series, h)
    )
    for i, cs in enumerate(stations):
        panel = _Panel(
            svg, MARGIN, MARGIN + i * (PANEL_H + GAP + 18), T, pmax, f"{cs.id} (CP {cs.cp_limit:g} kW x {cs.num_cps})"
        )
        for t in range(T):
            up = 0.0
            down = 0.0
            for s in series:
                if scenario.itinerary(s.ev_id).cs_at(t) != cs.id:
                    continue
                color = _ev_color(scenario, s.ev_id)
                up = panel.bar(t, up, _power(s.charge, h)[t], color)
                down = panel.bar(t, down, -_power(s.discharge, h)[t], color)
        panel.hline(cs.cp_limit)
        panel.hline(-cs.cp_limit)
    return svg.render()


def aggregate_outline(series: list[EvSeries]) -> tuple[np.ndarray, np.ndarray]:
    """Fleet charge/discharge totals per step, grouping-independent.

    Uses exact sums over the per-EV values, so stacking by EV or by station
    yields the same outline numbers.
    """
    T = len(series[0].charge) if series else 0
    charge = np.array([math.fsum(s.charge[t] for s in series) for t in range(T)])
    discharge = np.array([math.fsum(s.discharge[t] for s in series) for t in range(T)])
    return charge, discharge


def render_aggregate_view(series: list[EvSeries], scenario: Scenario) -> str:
    """Two stacked panels (grouped by EV, grouped by station) sharing one outline."""
    T = scenario.time_grid.horizon_steps
    h = scenario.time_grid.step_hours
    charge, discharge = aggregate_outline(series)
    pmax = max(
        float(np.max(_power(charge, h), initial=0.0)),
        float(np.max(_power(discharge, h), initial=0.0)),
        1.0,
    )
    svg = _Svg(MARGIN * 2 + PANEL_W, MARGIN + 2 * (PANEL_H + GAP + 18))

    panel_ev = _Panel(svg, MARGIN, MARGIN, T, pmax, "fleet (stacked by EV)")
    for t in range(T):
        up = down = 0.0
        for s in series:
            color = _ev_color(scenario, s.ev_id)
            up = panel_ev.bar(t, up, _power(s.charge, h)[t], color)
            down = panel_ev.bar(t, down, -_power(s.discharge, h)[t], color)
    panel_ev.step_outline(_power(charge, h))
    panel_ev.step_outline(-_power(discharge, h))

    panel_cs = _Panel(svg, MARGIN, MARGIN + PANEL_H + GAP + 18, T, pmax, "fleet (stacked by station)")
    for t in range(T):
        up = down = 0.0
        for cs in scenario.stations:
            for s in series:
                if scenario.itinerary(s.ev_id).cs_at(t) != cs.id:
                    continue
                color = _cs_color(scenario, cs.id)
                up = panel_cs.bar(t, up, _power(s.charge, h)[t], color)
                down = panel_cs.bar(t, down, -_power(s.discharge, h)[t], color)
    panel_cs.step_outline(_power(charge, h))
    panel_cs.step_outline(-_power(discharge, h))
    return svg.render()


def _series_peak(series: list[EvSeries], h: float) -> float:
    peak = 0.0
    for s in series:
        if len(s.charge):
            peak = max(peak, float(np.max(s.charge)) / h, float(np.max(s.discharge)) / h)
    return peak
