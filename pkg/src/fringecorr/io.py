"""Readers and writers for event lists, grids, spectra and reports.

Event lists travel as plain CSV with header ``x_mm,y_mm,t_s``.  Floats
are written with `repr`, i.e. the shortest string that round-trips the
double exactly, so write -> read -> write is byte-identical.  Reports are
JSON with sorted keys for the same reason (timing values are the only
run-to-run difference).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .simulate import EventList
from .spectra import AmplitudeSpectrum

__all__ = [
    "write_events",
    "read_events",
    "write_grid",
    "write_spectrum",
    "read_spectrum",
    "write_report",
    "read_report",
]

EVENT_HEADER = "x_mm,y_mm,t_s"


def write_events(path, events: EventList) -> None:
    path = Path(path)
    lines = [EVENT_HEADER]
    lines.extend(
        f"{x!r},{y!r},{t!r}"
        for x, y, t in zip(
            events.x.tolist(), events.y.tolist(), events.t.tolist()
        )
    )
    lines.append("")
    path.write_text("\n".join(lines))


def read_events(
    path, duration: float | None = None, window: float | None = None
) -> EventList:
    """Load an event CSV.

    `duration` and `window` are not part of the format; when omitted they
    are inferred from the data (max t, and just above max y) — good
    enough for analysis, but pass the true values when they are known,
    e.g. for exact correlation normalization.
    """
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header != EVENT_HEADER:
            raise ValueError(
                f"{path}: expected header {EVENT_HEADER!r}, got {header!r}"
            )
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, 3))
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns, got {data.shape[1]}")
    x, y, t = data[:, 0], data[:, 1], data[:, 2]
    if duration is None:
        duration = float(t[-1]) if t.size else 1.0
    if window is None:
        top = float(np.max(y)) if y.size else 1.0
        window = float(np.nextafter(top, math.inf)) if y.size else 1.0
    return EventList(x=x, y=y, t=t, duration=duration, window=window)


def write_grid(path, grid) -> None:
    """Long-format correlation grid: u_mm, tau_s, g2, count per row.

    Meant for subset grids; a full default-resolution grid is ~10^8 rows.
    """
    path = Path(path)
    values = grid.values
    tau = grid.tau_centers
    with path.open("w") as fh:
        fh.write("u_mm,tau_s,g2,count\n")
        for i, u in enumerate(grid.u_centers.tolist()):
            g_row = values[i].tolist()
            c_row = grid.counts[i].tolist()
            for j, ts in enumerate(tau.tolist()):
                fh.write(f"{u!r},{ts!r},{g_row[j]!r},{c_row[j]}\n")


def write_spectrum(path, spec: AmplitudeSpectrum) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# df_hz={spec.df!r}\n")
        fh.write(f"# source_dtau_s={spec.source_dtau!r}\n")
        fh.write(f"# n_rows_averaged={spec.n_rows_averaged}\n")
        fh.write(f"# resolution_flagged={int(spec.resolution_flagged)}\n")
        if spec.record_length is not None:
            fh.write(f"# record_length_s={spec.record_length!r}\n")
        fh.write("freq_hz,amplitude\n")
        for f, a in zip(spec.frequencies.tolist(), spec.amplitudes.tolist()):
            fh.write(f"{f!r},{a!r}\n")


def read_spectrum(path) -> AmplitudeSpectrum:
    path = Path(path)
    meta: dict[str, str] = {}
    rows = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition("=")
                meta[key] = value
            elif line != "freq_hz,amplitude":
                rows.append(line.split(","))
    amps = np.array([float(r[1]) for r in rows])
    record = meta.get("record_length_s")
    return AmplitudeSpectrum(
        df=float(meta["df_hz"]),
        amplitudes=amps,
        n_rows_averaged=int(meta["n_rows_averaged"]),
        source_dtau=float(meta["source_dtau_s"]),
        resolution_flagged=bool(int(meta["resolution_flagged"])),
        record_length=float(record) if record is not None else None,
    )


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())
