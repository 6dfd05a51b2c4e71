"""Space-time diagrams of a solved plan as standalone SVG.

The horizontal axis is time in minutes from the service start, the
vertical axis is distance along the line (cumulative inter-station travel
time).  Whole trips span all stations, section trips only their section;
fake trips are not drawn.  Output is fully deterministic: fixed float
formatting, no timestamps, elements emitted in line/trip order.
"""

from __future__ import annotations

import io
from typing import Mapping, Optional, Sequence

from .domain import LineSpec, NetworkScenario, station_offsets
from .solution import FAKE, SHORT, WHOLE, NetworkSolution

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

_X_SCALE = 24.0    # px per minute
_Y_SCALE = 18.0    # px per minute of travel distance
_MARGIN = 60.0


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _line_positions(line: LineSpec) -> Sequence[float]:
    """Vertical position of each station: travel time only, no dwell."""
    pos = [0.0]
    for dr in line.d:
        pos.append(pos[-1] + dr)
    return pos


def svg_diagram(scenario: NetworkScenario, solution: NetworkSolution,
                line_ids: Optional[Sequence[str]] = None) -> str:
    lines = [ln for ln in scenario.lines
             if line_ids is None or ln.id in line_ids]
    if not lines:
        raise ValueError("no lines selected")
    panels = []
    width = 0.0
    y_cursor = _MARGIN / 2
    t_max = max(scenario.t_hat[ln.id] for ln in lines)
    for ci, ln in enumerate(lines):
        pos = _line_positions(ln)
        off = station_offsets(ln)
        height = pos[-1] * _Y_SCALE
        panel = {"line": ln, "pos": pos, "off": off,
                 "y0": y_cursor, "height": height,
                 "color": _COLORS[ci % len(_COLORS)]}
        panels.append(panel)
        y_cursor += height + _MARGIN
        width = max(width, _MARGIN + t_max * _X_SCALE + _MARGIN)
    total_h = y_cursor

    buf = io.StringIO()
    w = buf.write
    w('<?xml version="1.0" encoding="UTF-8"?>\n')
    w(f'<svg xmlns="http://www.w3.org/2000/svg" '
      f'width="{_fmt(width)}" height="{_fmt(total_h)}" '
      f'viewBox="0 0 {_fmt(width)} {_fmt(total_h)}">\n')
    w('<rect width="100%" height="100%" fill="white"/>\n')

    for panel in panels:
        ln: LineSpec = panel["line"]
        y0 = panel["y0"]
        pos = panel["pos"]
        off = panel["off"]
        color = panel["color"]
        st = ln.short_turn

        def xy(t: float, station: int):
            return (_MARGIN + t * _X_SCALE,
                    y0 + pos[station - 1] * _Y_SCALE)

        w(f'<text x="{_fmt(_MARGIN)}" y="{_fmt(y0 - 8)}" '
          f'font-family="monospace" font-size="12">line {ln.id}</text>\n')
        for i in ln.stations:
            x1, yy = xy(0.0, i)
            x2, _ = xy(scenario.t_hat[ln.id], i)
            w(f'<line x1="{_fmt(x1)}" y1="{_fmt(yy)}" x2="{_fmt(x2)}" '
              f'y2="{_fmt(yy)}" stroke="#dddddd" stroke-width="1"/>\n')
            w(f'<text x="{_fmt(x1 - 28)}" y="{_fmt(yy + 4)}" '
              f'font-family="monospace" font-size="10">s{i}</text>\n')

        plan = solution.lines[ln.id]
        for k, trip in enumerate(plan.trips, start=1):
            if trip.kind == FAKE:
                continue
            if trip.kind == WHOLE:
                stations = list(ln.stations)
            else:
                stations = list(range(st.first, st.last + 1))
            pts = []
            for i in stations:
                in_sec = st is not None and st.first <= i <= st.last
                t = trip.t1 + off[i - 1] + (trip.w if in_sec else 0.0)
                pts.append(xy(t, i))
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
            dash = ' stroke-dasharray="6,3"' if trip.kind == SHORT else ""
            w(f'<polyline points="{path}" fill="none" stroke="{color}" '
              f'stroke-width="1.5"{dash}/>\n')
            x, yy = pts[0]
            w(f'<text x="{_fmt(x + 2)}" y="{_fmt(yy - 3)}" '
              f'font-family="monospace" font-size="9" '
              f'fill="{color}">k{k}</text>\n')
    w("</svg>\n")
    return buf.getvalue()
