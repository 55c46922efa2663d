"""CSV/JSON persistence: exact round trips and format validation."""

import numpy as np
import pytest

from fringecorr.correlate import pair_histogram
from fringecorr.io import (
    read_events,
    read_report,
    read_spectrum,
    write_events,
    write_grid,
    write_report,
    write_spectrum,
)
from fringecorr.spectra import AmplitudeSpectrum


def test_events_round_trip_bit_exact(tmp_path, dephased_events):
    p1 = tmp_path / "events.csv"
    p2 = tmp_path / "events2.csv"
    write_events(p1, dephased_events)
    back = read_events(p1, duration=dephased_events.duration,
                       window=dephased_events.window)
    assert np.array_equal(back.x, dephased_events.x)
    assert np.array_equal(back.y, dephased_events.y)
    assert np.array_equal(back.t, dephased_events.t)
    write_events(p2, back)
    assert p1.read_bytes() == p2.read_bytes()


def test_events_metadata_inference(tmp_path, dephased_events):
    p = tmp_path / "events.csv"
    write_events(p, dephased_events)
    back = read_events(p)
    assert back.duration == dephased_events.t[-1]
    assert back.window > dephased_events.y.max()
    # inferred window is the smallest float that keeps max(y) inside
    assert np.nextafter(back.window, -np.inf) == dephased_events.y.max()


def test_events_format_validation(tmp_path):
    bad_header = tmp_path / "bad1.csv"
    bad_header.write_text("a_mm,b_mm,c_s\n0.1,0.2,0.3\n")
    with pytest.raises(ValueError, match="header"):
        read_events(bad_header)
    bad_cols = tmp_path / "bad2.csv"
    bad_cols.write_text("x_mm,y_mm,t_s\n0.1,0.2\n")
    with pytest.raises(ValueError, match="columns"):
        read_events(bad_cols)


def test_grid_long_format(tmp_path, dephased_events):
    grid = pair_histogram(dephased_events, du=1.3, dtau=0.01, tau_max=0.03,
                          u_rows=np.array([0.0, 1.3]))
    p = tmp_path / "grid.csv"
    write_grid(p, grid)
    lines = p.read_text().strip().split("\n")
    assert lines[0] == "u_mm,tau_s,g2,count"
    assert len(lines) == 1 + grid.counts.size
    first = lines[1].split(",")
    assert float(first[0]) == grid.u_centers[0]
    assert float(first[1]) == pytest.approx(0.005)
    assert float(first[2]) == pytest.approx(grid.values[0, 0])
    assert int(first[3]) == grid.counts[0, 0]


def test_spectrum_round_trip(tmp_path):
    spec = AmplitudeSpectrum(
        df=0.25,
        amplitudes=np.array([0.1, 0.0, 3.5e-17, 0.2]),
        n_rows_averaged=7,
        source_dtau=5e-4,
        resolution_flagged=True,
        record_length=8.0,
    )
    p = tmp_path / "spec.csv"
    write_spectrum(p, spec)
    back = read_spectrum(p)
    assert back.df == spec.df
    assert np.array_equal(back.amplitudes, spec.amplitudes)
    assert back.n_rows_averaged == 7
    assert back.source_dtau == 5e-4
    assert back.resolution_flagged is True
    assert back.record_length == 8.0
    assert np.array_equal(back.frequencies, spec.frequencies)


def test_spectrum_round_trip_without_record_length(tmp_path):
    spec = AmplitudeSpectrum(
        df=1.0,
        amplitudes=np.array([1.0, 2.0]),
        n_rows_averaged=1,
        source_dtau=1e-3,
    )
    p = tmp_path / "spec.csv"
    write_spectrum(p, spec)
    back = read_spectrum(p)
    assert back.record_length is None
    assert back.resolution_flagged is False


def test_report_round_trip_and_stable_bytes(tmp_path):
    report = {
        "config": {"seed": 3, "rate": 2000.0},
        "stages": {"fit": {"contrast": 0.5986, "nested": [1, 2.5, None]}},
        "ok": True,
    }
    p1 = tmp_path / "report.json"
    p2 = tmp_path / "report2.json"
    write_report(p1, report)
    back = read_report(p1)
    assert back == report
    write_report(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert text.index('"config"') < text.index('"ok"') < text.index('"stages"')
