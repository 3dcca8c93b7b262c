"""Observation ingestion and deterministic table output.

Input follows the Italian national feed layout: a UTF-8 comma-separated
table whose header contains at least the date, active-positive, recovered
and deceased columns (names overridable through the scenario's
data_columns).  Output tables are written with fixed decimal places so
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as dt
import importlib.resources

import numpy as np

from .calibration import ObservedSeries
from .errors import DataParseError
from .ode import Trajectory

_STATE_COLUMNS = ("S", "E", "I", "Q", "R", "D", "P", "W")


def builtin_data_path(name: str = "italy_reconstructed.csv"):
    """Path to a dataset bundled with the package."""
    return importlib.resources.files("epictrl").joinpath("data", name)


def _parse_day(text: str, line: int, column: str) -> dt.date:
    value = text.strip()
    try:
        if "T" in value or " " in value:
            return dt.datetime.fromisoformat(value).date()
        return dt.date.fromisoformat(value)
    except ValueError as err:
        raise DataParseError(f"line {line}: bad {column} value {text!r}: {err}") from err


def load_observed_series(path, columns: dict | None = None) -> ObservedSeries:
    """Read daily (active, recovered, deceased) counts into an ObservedSeries.

    Rows are sorted by calendar day (timestamps are truncated); duplicate
    days, gaps, negative counts and decreasing cumulative series are all
    rejected with the offending line number.
    """
    from .config import DEFAULT_COLUMNS

    cols = dict(DEFAULT_COLUMNS)
    if columns:
        cols.update(columns)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as err:
        raise DataParseError(f"cannot read data file {path}: {err}") from err
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataParseError(f"{path}: empty file, expected a header row")
        missing = [c for c in cols.values() if c not in reader.fieldnames]
        if missing:
            raise DataParseError(
                f"{path}: missing column(s) {', '.join(missing)} in header "
                f"(found: {', '.join(reader.fieldnames)})"
            )
        rows = []
        for record in reader:
            line = reader.line_num
            day = _parse_day(record[cols["date"]], line, cols["date"])
            values = []
            for key in ("active", "recovered", "deceased"):
                text = record[cols[key]]
                try:
                    value = float(text)
                except (TypeError, ValueError) as err:
                    raise DataParseError(
                        f"line {line}: bad {cols[key]} value {text!r}"
                    ) from err
                if not np.isfinite(value) or value < 0.0:
                    raise DataParseError(
                        f"line {line}: {cols[key]} must be finite and >= 0, got {text}"
                    )
                values.append(value)
            rows.append((day, line, *values))

    if not rows:
        raise DataParseError(f"{path}: no data rows")
    rows.sort(key=lambda row: row[0])
    for prev, cur in zip(rows, rows[1:]):
        gap = (cur[0] - prev[0]).days
        if gap == 0:
            raise DataParseError(f"line {cur[1]}: duplicate date {cur[0]}")
        if gap != 1:
            raise DataParseError(
                f"line {cur[1]}: gap in dates between {prev[0]} and {cur[0]}"
            )
    for prev, cur in zip(rows, rows[1:]):
        if cur[3] < prev[3]:
            raise DataParseError(
                f"line {cur[1]}: recovered count decreases ({prev[3]:g} -> {cur[3]:g}); "
                f"cumulative series must be nondecreasing"
            )
        if cur[4] < prev[4]:
            raise DataParseError(
                f"line {cur[1]}: deceased count decreases ({prev[4]:g} -> {cur[4]:g}); "
                f"cumulative series must be nondecreasing"
            )
    return ObservedSeries(
        dates=[row[0] for row in rows],
        Q_obs=np.array([row[2] for row in rows]),
        R_obs=np.array([row[3] for row in rows]),
        D_obs=np.array([row[4] for row in rows]),
    )


def write_timeseries(traj: Trajectory, control, path, start: dt.date) -> None:
    """One row per calendar day: date, day index, compartments, optional u.

    Compartments are in persons, u is a dimensionless fraction; grid nodes
    between whole days are dropped.  The u column appears only when a
    control is supplied.
    """
    day_nodes = traj.grid.day_indices()
    values = traj.values[day_nodes]
    u = None
    if control is not None:
        if control.grid != traj.grid:
            raise ValueError("control and trajectory live on different grids")
        u = control.values[day_nodes]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = ["date", "day"] + [f"{name}[persons]" for name in _STATE_COLUMNS]
        if u is not None:
            header.append("u[fraction]")
        fh.write(",".join(header) + "\n")
        for k, node_values in enumerate(values):
            day = start + dt.timedelta(days=k)
            row = [day.isoformat(), str(k)]
            padded = list(node_values) + [0.0] * (8 - len(node_values))
            row.extend(f"{v:.6f}" for v in padded)
            if u is not None:
                row.append(f"{u[k]:.8f}")
            fh.write(",".join(row) + "\n")


def write_field(field, path) -> None:
    """Flat (r, z, T) table of a temperature field snapshot."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("r[m],z[m],T[degC]\n")
        for i, r in enumerate(field.r):
            for j, z in enumerate(field.z):
                fh.write(f"{r:.6f},{z:.6f},{field.values[i, j]:.6f}\n")


def write_transport_table(rows, reference_c: float, path) -> None:
    """Required-T0 table across cap conditions and criteria."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cap_condition,criterion,unit_response[fraction],required_T0[degC]\n")
        for row in rows:
            t0 = f"{row.required_t0:.4f}" if row.required_t0 is not None else "unreachable"
            fh.write(f"{row.cap_condition},{row.criterion},{row.phi_eval:.8f},{t0}\n")
