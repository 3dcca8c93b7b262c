"""Human-readable run reports with machine-readable mirrors.

Every metric line carries its units and the grid resolution it was computed
at.  Reports also carry the diagnostic tables the headline numbers depend
on: peak sensitivity to the fitted initial latent counts, and the
threshold-crossing table for the susceptible pool under vaccination (the
date a "reaches zero" claim lands on depends entirely on the threshold
chosen, so the report shows several).
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .epi_core import EpidemicParams
from .ode import Trajectory

S_THRESHOLD_FRACTIONS = (0.10, 0.01, 0.001)
S_THRESHOLD_PERSONS = (100.0, 1.0, 0.5)
LATENT_SCALES = (0.8, 1.0, 1.2)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (dt.date, dt.datetime)):
        return obj.isoformat()
    return obj


@dataclass
class RunReport:
    title: str
    sections: list = field(default_factory=list)  # (heading, [lines])
    data: dict = field(default_factory=dict)

    def add(self, heading: str, lines):
        self.sections.append((heading, list(lines)))

    def render(self) -> str:
        out = [self.title, "=" * len(self.title), ""]
        for heading, lines in self.sections:
            out.append(heading)
            out.append("-" * len(heading))
            out.extend(lines)
            out.append("")
        return "\n".join(out)

    def write(self, out_dir) -> None:
        text_path = out_dir / "report.txt"
        text_path.write_text(self.render(), encoding="utf-8")
        (out_dir / "report.json").write_text(
            json.dumps(_to_jsonable(self.data), indent=2, sort_keys=True), encoding="utf-8"
        )


def day_to_date(start: dt.date, day: float) -> dt.date:
    return start + dt.timedelta(days=round(day))


def peak_info(traj: Trajectory, column: int) -> tuple[float, float]:
    """(peak value, peak day) of one compartment on the full grid."""
    idx = int(np.argmax(traj.values[:, column]))
    return float(traj.values[idx, column]), float(traj.times[idx])


def crossing_day(traj: Trajectory, column: int, threshold: float):
    """First grid day the compartment falls below threshold, else None."""
    below = np.flatnonzero(traj.values[:, column] < threshold)
    return float(traj.times[below[0]]) if below.size else None


def trajectory_summary(traj: Trajectory, start: dt.date) -> dict:
    i_peak, i_day = peak_info(traj, 2)
    q_peak, q_day = peak_info(traj, 3)
    last = traj.values[-1]
    terminal = {name: float(last[k]) for k, name in enumerate("SEIQRDP")}
    if traj.values.shape[1] == 8:
        terminal["W"] = float(last[7])
    return {
        "I_peak_persons": i_peak,
        "I_peak_day": i_day,
        "I_peak_date": day_to_date(start, i_day),
        "Q_peak_persons": q_peak,
        "Q_peak_day": q_day,
        "Q_peak_date": day_to_date(start, q_day),
        "terminal_persons": terminal,
        "steps_per_day": traj.grid.steps_per_day,
    }


def susceptible_crossings(traj: Trajectory, start: dt.date) -> list:
    """Crossing day of S under several threshold definitions."""
    s0 = float(traj.values[0, 0])
    rows = []
    for frac in S_THRESHOLD_FRACTIONS:
        day = crossing_day(traj, 0, frac * s0)
        rows.append({
            "threshold": f"{frac:.1%} of S0",
            "threshold_persons": frac * s0,
            "day": day,
            "date": day_to_date(start, day) if day is not None else None,
        })
    for persons in S_THRESHOLD_PERSONS:
        day = crossing_day(traj, 0, persons)
        rows.append({
            "threshold": f"{persons:g} persons",
            "threshold_persons": persons,
            "day": day,
            "date": day_to_date(start, day) if day is not None else None,
        })
    return rows


def latent_sensitivity(params: EpidemicParams, x0: np.ndarray, grid,
                       start: dt.date, scales=LATENT_SCALES) -> list:
    """Uncontrolled peak metrics under scaled initial latent counts.

    E0 and I0 are rescaled jointly and S0 adjusted to keep the total fixed;
    this is the table that shows how much of any headline-peak gap is
    attributable to the unobserved initial latent states.
    """
    rows = []
    p_arr = params.as_array()
    for se in scales:
        for si in scales:
            x = x0.copy()
            x[1] = x0[1] * se
            x[2] = x0[2] * si
            x[0] = x0[0] + (x0[1] - x[1]) + (x0[2] - x[2])
            traj = kernels.integrate_uncontrolled(p_arr, x[:7], grid.t0, grid.h, grid.n_steps)
            i_idx = int(np.argmax(traj[:, 2]))
            q_idx = int(np.argmax(traj[:, 3]))
            rows.append({
                "E0_scale": se,
                "I0_scale": si,
                "I_peak_persons": float(traj[i_idx, 2]),
                "I_peak_date": day_to_date(start, grid.t0 + i_idx * grid.h),
                "Q_peak_persons": float(traj[q_idx, 3]),
                "Q_peak_date": day_to_date(start, grid.t0 + q_idx * grid.h),
            })
    return rows


def format_summary_lines(summary: dict, label: str) -> list:
    grid_note = f"(grid: {summary['steps_per_day']} steps/day)"
    lines = [
        f"I peak: {summary['I_peak_persons']:,.0f} persons on "
        f"{summary['I_peak_date']} (day {summary['I_peak_day']:.1f}) {grid_note}",
        f"Q peak: {summary['Q_peak_persons']:,.0f} persons on "
        f"{summary['Q_peak_date']} (day {summary['Q_peak_day']:.1f}) {grid_note}",
    ]
    terminal = summary["terminal_persons"]
    terms = ", ".join(f"{k}={v:,.0f}" for k, v in terminal.items())
    lines.append(f"terminal compartments [{label}]: {terms} persons")
    return lines


def format_crossing_lines(rows: list) -> list:
    lines = []
    for row in rows:
        if row["day"] is None:
            lines.append(f"S below {row['threshold']}: never within the window")
        else:
            lines.append(
                f"S below {row['threshold']} ({row['threshold_persons']:,.1f} persons): "
                f"day {row['day']:.1f} ({row['date']})"
            )
    return lines


def format_sensitivity_lines(rows: list) -> list:
    lines = ["E0xI0 scale -> I peak (date) | Q peak (date)  [persons]"]
    for row in rows:
        lines.append(
            f"  {row['E0_scale']:.1f} x {row['I0_scale']:.1f} -> "
            f"{row['I_peak_persons']:,.0f} ({row['I_peak_date']}) | "
            f"{row['Q_peak_persons']:,.0f} ({row['Q_peak_date']})"
        )
    return lines
