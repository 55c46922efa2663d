"""Pair histogramming against a brute-force oracle, plus the fringe fits."""

import math

import numpy as np
import pytest

import oracles
from conftest import EXEMPLAR, FRINGE
from fringecorr.correlate import (
    CorrelationGrid,
    FitError,
    fit_integrated,
    fit_zero_lag,
    pair_histogram,
)
from fringecorr.simulate import EventList, SimConfig, generate_events
from fringecorr.theory import binning_attenuation

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def small_events():
    cfg = SimConfig(fringe=FRINGE, components=(EXEMPLAR,), rate=300.0,
                    duration=2.0, seed=5)
    return generate_events(cfg)


def test_pair_counts_match_brute_force(small_events):
    du, dtau, tau_max = 0.5, 0.01, 0.1
    grid = pair_histogram(small_events, du, dtau, tau_max)
    ref = oracles.pair_counts_brute(
        small_events.t, small_events.y, grid.u_centers, du, dtau, grid.n_tau
    )
    assert np.array_equal(grid.counts, ref)
    assert grid.counts.sum() > 1000  # the comparison actually saw pairs


def test_row_subset_matches_full_grid(small_events):
    du, dtau, tau_max = 0.5, 0.01, 0.1
    full = pair_histogram(small_events, du, dtau, tau_max)
    sub = pair_histogram(small_events, du, dtau, tau_max,
                         u_rows=np.array([0.0, 1.5, -2.0]))
    assert sub.u_centers.shape == (3,)
    for i, u in enumerate(sub.u_centers):
        j = int(np.argmin(np.abs(full.u_centers - u)))
        assert np.array_equal(sub.counts[i], full.counts[j])
        assert np.allclose(sub.row(i), full.row(j))


def test_uncorrelated_stream_normalizes_to_one():
    rng = np.random.default_rng(0)
    n, duration, window = 20_000, 10.0, 26.0
    ev = EventList(
        rng.uniform(0.0, 1.0, n),
        rng.uniform(0.0, window, n),
        np.sort(rng.uniform(0.0, duration, n)),
        duration,
        window,
    )
    grid = pair_histogram(ev, du=0.5, dtau=1e-3, tau_max=0.5)
    assert 0.99 < float(np.mean(grid.values)) < 1.01


def test_row_column_values_consistency(small_events):
    grid = pair_histogram(small_events, 0.5, 0.01, 0.05)
    vals = grid.values
    assert vals.shape == grid.counts.shape
    assert np.allclose(grid.row(7), vals[7])
    assert np.allclose(grid.column(2), vals[:, 2])
    assert grid.tau_max == pytest.approx(grid.n_tau * grid.dtau)
    assert np.allclose(grid.tau_centers,
                       (np.arange(grid.n_tau) + 0.5) * grid.dtau)


def test_histogram_validation(small_events):
    with pytest.raises(ValueError):
        pair_histogram(small_events, 0.0, 0.01, 0.1)
    with pytest.raises(ValueError):
        pair_histogram(small_events, 0.5, -1.0, 0.1)
    with pytest.raises(ValueError):
        pair_histogram(small_events, 0.5, 0.01, 5.0)  # beyond duration
    with pytest.raises(ValueError):
        pair_histogram(small_events, 30.0, 0.01, 0.1)  # one giant u bin
    two = EventList(np.zeros(1), np.full(1, 1.0), np.zeros(1), 2.0, 26.0)
    with pytest.raises(ValueError):
        pair_histogram(two, 0.5, 0.01, 0.1)


def _analytic_zero_lag_grid(contrast, phase, du=0.13, window=26.0,
                            duration=20.0, n_events=20_000, dtau=1e-4):
    """Single-column grid whose normalized values equal an exact g2 row."""
    m_half = int(math.ceil(window / du)) - 1
    u = np.arange(-m_half, m_half + 1) * du
    g2 = 1.0 + 0.5 * contrast**2 * np.cos(TWO_PI / 2.6 * u + phase)
    u_corr = 1.0 - np.abs(u) / window
    t_corr = 1.0 - 0.5 * dtau / duration
    norm = (duration * window) / (n_events**2 * dtau * du)
    counts = (g2 * u_corr * t_corr / norm)[:, None]
    return CorrelationGrid(u, du, dtau, counts, duration, window, n_events)


def test_zero_lag_fit_exact_on_analytic_grid():
    grid = _analytic_zero_lag_grid(contrast=0.6, phase=0.0)
    fit = fit_zero_lag(grid)
    assert abs(fit.contrast - 0.6) < 1e-6
    assert abs(fit.period - 2.6) < 1e-6
    assert abs(((fit.phase + math.pi) % TWO_PI) - math.pi) < 1e-6
    assert abs(fit.mean - 1.0) < 1e-9
    assert fit.residual_rms < 1e-9


def test_zero_lag_fit_recovers_phase_and_hint_path():
    grid = _analytic_zero_lag_grid(contrast=math.sqrt(0.3), phase=0.7)
    fit = fit_zero_lag(grid, k_hint=TWO_PI / 2.6)
    assert abs(fit.contrast - math.sqrt(0.3)) < 1e-6
    assert abs(fit.phase - 0.7) < 1e-6
    assert fit.ci95["contrast"] < 1e-6


def test_zero_lag_amplitude_tracks_binned_contrast(dephased_zero_fit,
                                                   dephased_zero_grid):
    # the zero-lag modulation is K0^2/2 scaled by the square of the
    # finite-bin contrast factor, independent of the dephasing amplitude
    fit = dephased_zero_fit
    att = binning_attenuation([EXEMPLAR], dephased_zero_grid.dtau)
    amp = 0.5 * fit.contrast**2
    want = 0.5 * 0.36 * att**2
    sigma_amp = fit.contrast * fit.ci95["contrast"] / 1.96
    assert abs(amp - want) <= 3.0 * sigma_amp
    assert 0.0 < fit.ci95["contrast"] < 0.25


def test_zero_lag_attenuation_report(dephased_zero_grid):
    fit = fit_zero_lag(dephased_zero_grid, components=(EXEMPLAR,))
    att = binning_attenuation([EXEMPLAR], dephased_zero_grid.dtau)
    assert fit.attenuation == pytest.approx(att)
    assert fit.contrast_corrected == pytest.approx(fit.contrast / att)
    bare = fit_zero_lag(dephased_zero_grid)
    assert bare.attenuation is None and bare.contrast_corrected is None


def test_zero_lag_needs_populated_bins():
    t = np.arange(5) * 1e-3
    ev = EventList(np.zeros(5), np.full(5, 13.0), t, 2.0, 26.0)
    grid = pair_histogram(ev, du=0.5, dtau=0.5, tau_max=0.5)
    assert int(np.count_nonzero(grid.counts[:, 0])) == 1
    with pytest.raises(FitError):
        fit_zero_lag(grid)


def test_integrated_fit_needs_events():
    few = EventList(np.zeros(50), np.linspace(0.0, 25.0, 50),
                    np.linspace(0.0, 1.0, 50), 2.0, 26.0)
    with pytest.raises(FitError):
        fit_integrated(few)


def test_integrated_fit_hint_agrees_with_scan(plain_events):
    free = fit_integrated(plain_events)
    hinted = fit_integrated(plain_events, k_hint=TWO_PI / 2.6)
    assert abs(free.contrast - hinted.contrast) < 1e-3
    assert abs(free.period - hinted.period) < 1e-4
    assert free.wavenumber == pytest.approx(TWO_PI / free.period)
