"""Shared fixtures: one unperturbed and one dephased event stream.

Both are session-scoped; module tests slice and correlate them in many
ways, and the streams themselves are deterministic (seeded), so there is
no reason to regenerate them per test.
"""

import math

import pytest

from fringecorr.correlate import fit_zero_lag, pair_histogram
from fringecorr.simulate import SimConfig, generate_events
from fringecorr.spectra import antinode_targets, temporal_spectrum
from fringecorr.theory import FringeModel, PerturbationComponent

FRINGE = FringeModel(contrast=0.6, period=2.6)

#: the reference single-frequency dephasing used across the suite
EXEMPLAR = PerturbationComponent(
    freq=540.0, peak_phase_dev=0.5725 * math.pi, phase=0.59 * math.pi
)


@pytest.fixture(scope="session")
def plain_events():
    """10 s of events from the unperturbed 2.6 mm fringe."""
    return generate_events(
        SimConfig(fringe=FRINGE, rate=2000.0, duration=10.0, seed=42)
    )


@pytest.fixture(scope="session")
def dephased_events():
    """10 s of events dephased by the 540 Hz exemplar component."""
    return generate_events(
        SimConfig(
            fringe=FRINGE,
            components=(EXEMPLAR,),
            rate=2000.0,
            duration=10.0,
            seed=3,
        )
    )


@pytest.fixture(scope="session")
def dephased_zero_grid(dephased_events):
    """Single-row correlation grid (tau in [0, 50 us)) of the dephased stream."""
    return pair_histogram(dephased_events, du=0.09, dtau=5e-5, tau_max=5e-5)


@pytest.fixture(scope="session")
def dephased_zero_fit(dephased_zero_grid):
    return fit_zero_lag(dephased_zero_grid)


@pytest.fixture(scope="session")
def dephased_spectrum(dephased_events):
    """Antinode-row temporal amplitude spectrum of the dephased stream.

    Uses the true fringe period for the row selection; the zero-lag fit's
    own period estimate is exercised separately.
    """
    rows = antinode_targets(FRINGE.period, dephased_events.window)
    grid = pair_histogram(
        dephased_events, du=0.09, dtau=5e-5, tau_max=5.0, u_rows=rows
    )
    return temporal_spectrum(grid, FRINGE.period, df=0.2, f_max=2000.0)
