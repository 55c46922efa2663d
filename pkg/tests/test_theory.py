"""Closed-form theory against independent oracles and exact identities."""

import math

import numpy as np
import pytest

import oracles
from fringecorr.theory import (
    EnumerationOverflowError,
    FringeModel,
    Multiplet,
    PerturbationComponent,
    approx_g2,
    bessel_amplitude,
    binning_attenuation,
    default_order_cap,
    enumerate_multiplets,
    explicit_g2,
    fringe_density,
    modulation_amplitude,
    phase_shift,
    reconstruction_sensitivity,
    theoretical_spectrum,
    washout_factor,
)

TWO_PI = 2.0 * math.pi

C540 = PerturbationComponent(freq=540.0, peak_phase_dev=0.5725 * math.pi,
                             phase=0.59 * math.pi)
PAIR = (
    PerturbationComponent(freq=6.0, peak_phase_dev=0.6 * math.pi),
    PerturbationComponent(freq=40.0, peak_phase_dev=0.5 * math.pi),
)


# ----------------------------------------------------------------------
# Bessel identities (everything the sideband algebra rests on)


@pytest.mark.parametrize("x", [0.3, 0.5725 * math.pi, 2.356, 0.75 * math.pi])
def test_bessel_oracle_agreement(x):
    from scipy.special import jv

    for order in range(-6, 7):
        assert abs(float(jv(order, x)) - oracles.bessel_j(order, x)) < 1e-10


@pytest.mark.parametrize("x", [0.5, 1.798, 2.356])
def test_bessel_negative_order_symmetry(x):
    for m in range(1, 8):
        lhs = oracles.bessel_j(-m, x)
        rhs = (-1.0) ** m * oracles.bessel_j(m, x)
        assert abs(lhs - rhs) < 1e-10


@pytest.mark.parametrize("x", [0.5725 * math.pi, 2.356, 0.2])
def test_bessel_sum_of_squares_is_one(x):
    total = sum(oracles.bessel_j(m, x) ** 2 for m in range(-40, 41))
    assert abs(total - 1.0) < 1e-10


@pytest.mark.parametrize("x", [0.7, 1.798, 2.9])
def test_bessel_recurrence(x):
    for m in range(1, 6):
        lhs = oracles.bessel_j(m - 1, x) + oracles.bessel_j(m + 1, x)
        rhs = (2.0 * m / x) * oracles.bessel_j(m, x)
        assert abs(lhs - rhs) < 1e-10


def test_washout_factor_is_j0_product():
    phi = 0.5725 * math.pi
    one = washout_factor([PerturbationComponent(freq=10.0, peak_phase_dev=phi)])
    assert abs(one - oracles.bessel_j(0, phi)) < 1e-10
    two = washout_factor(PAIR)
    want = oracles.bessel_j(0, PAIR[0].peak_phase_dev) * oracles.bessel_j(
        0, PAIR[1].peak_phase_dev
    )
    assert abs(two - want) < 1e-10


def test_washout_matches_long_record_time_average():
    # 1e4 modulation periods; the quadrature oracle knows nothing of J0
    comp = (10.0, 0.5725 * math.pi, 0.3)
    got = washout_factor([PerturbationComponent(*comp)])
    ref = oracles.washout_time_quad([comp], duration=1e3)
    assert abs(abs(got) - ref) < 1e-4

    comps = [(6.0, 0.6 * math.pi, 0.1), (40.0, 0.5 * math.pi, 2.0)]
    got2 = washout_factor([PerturbationComponent(*c) for c in comps])
    ref2 = oracles.washout_time_quad(comps, duration=1e3)
    assert abs(abs(got2) - ref2) < 1e-4


# ----------------------------------------------------------------------
# components, densities, phase excursion


def test_component_validation():
    with pytest.raises(ValueError):
        PerturbationComponent(freq=0.0, peak_phase_dev=1.0)
    with pytest.raises(ValueError):
        PerturbationComponent(freq=10.0, peak_phase_dev=-0.1)
    c = PerturbationComponent(freq=10.0, peak_phase_dev=1.0, phase=-0.5)
    assert 0.0 <= c.phase < TWO_PI
    assert abs(c.omega - TWO_PI * 10.0) < 1e-12


def test_fringe_model_validation():
    with pytest.raises(ValueError):
        FringeModel(contrast=1.2, period=2.6)
    with pytest.raises(ValueError):
        FringeModel(contrast=0.6, period=0.0)
    assert abs(FringeModel(contrast=0.6, period=2.6).wavenumber
               - TWO_PI / 2.6) < 1e-12


def test_phase_shift_matches_oracle():
    comps = [PerturbationComponent(*c) for c in
             [(6.0, 0.6 * math.pi, 0.1), (40.0, 0.5 * math.pi, 2.0)]]
    t = np.linspace(0.0, 1.0, 1001)
    got = phase_shift(comps, t)
    ref = oracles.phase_excursion(
        [(6.0, 0.6 * math.pi, 0.1), (40.0, 0.5 * math.pi, 2.0)], t
    )
    assert np.max(np.abs(got - ref)) < 1e-12


def test_fringe_density_bounds_and_mean():
    fringe = FringeModel(contrast=0.6, period=2.6, mean_intensity=3.0)
    y = np.linspace(0.0, 2.6, 2001)[:-1]  # one exact period
    d = fringe_density(y, 0.0, fringe)
    assert np.all(d >= 3.0 * (1.0 - 0.6) - 1e-12)
    assert np.max(d) <= 3.0 * (1.0 + 0.6) + 1e-12
    assert abs(np.mean(d) - 3.0) < 1e-6


# ----------------------------------------------------------------------
# multiplet machinery


def test_enumerate_multiplets_single_long_record():
    # long record: only net-zero sum vectors survive -> pure diagonal
    mults = enumerate_multiplets([C540], duration=100.0, order_cap=12)
    assert len(mults) == 25
    assert all(m.n == tuple(-v for v in m.m) for m in mults)


def test_enumerate_multiplets_contains_diagonal_family():
    mults = enumerate_multiplets(PAIR, duration=20.0, order_cap=4)
    diag = {m.m for m in mults if m.n == tuple(-v for v in m.m)}
    assert (0, 0) in diag and (1, -1) in diag and (2, 1) in diag


def test_enumeration_overflow():
    with pytest.raises(EnumerationOverflowError):
        enumerate_multiplets(PAIR, duration=20.0, order_cap=6, max_count=10)


def test_multiplet_validation_and_order_cap_defaults():
    with pytest.raises(ValueError):
        Multiplet(n=(1,), m=(1, 2))
    assert default_order_cap(1) == 12
    assert default_order_cap(2) == 6


def test_bessel_amplitude_is_order_product():
    mult = Multiplet(n=(1, -2), m=(0, 2))
    got = bessel_amplitude(mult, PAIR)
    want = (
        oracles.bessel_j(1, PAIR[0].peak_phase_dev)
        * oracles.bessel_j(0, PAIR[0].peak_phase_dev)
        * oracles.bessel_j(-2, PAIR[1].peak_phase_dev)
        * oracles.bessel_j(2, PAIR[1].peak_phase_dev)
    )
    assert abs(got - want) < 1e-12
    with pytest.raises(ValueError):
        bessel_amplitude(Multiplet(n=(1,), m=(1,)), PAIR)


# ----------------------------------------------------------------------
# explicit vs diagonal correlation


def test_explicit_equals_diagonal_for_long_record():
    k = TWO_PI / 2.6
    u = np.linspace(-5.0, 5.0, 21)[:, None]
    tau = np.linspace(0.0, 0.01, 41)[None, :]
    full = explicit_g2(u, tau, 0.6, k, [C540], duration=100.0)
    diag = approx_g2(u, tau, 0.6, k, [C540])
    assert np.max(np.abs(full - diag)) < 1e-9


def test_explicit_zero_lag_value():
    # g2(u, 0) = 1 + (K0^2/2) * cos(k*u), whatever the dephasing
    k = TWO_PI / 2.6
    u = np.linspace(-5.0, 5.0, 21)
    got = explicit_g2(u, 0.0, 0.6, k, [C540], duration=100.0)
    assert np.max(np.abs(got - (1.0 + 0.18 * np.cos(k * u)))) < 1e-9


def test_near_degenerate_pair_needs_off_diagonal_terms():
    # 10.0 vs 10.05 Hz over a 5 s record: the beat does not average out,
    # so the diagonal product misses real correlation structure
    close = (
        PerturbationComponent(freq=10.0, peak_phase_dev=1.0),
        PerturbationComponent(freq=10.05, peak_phase_dev=1.0),
    )
    u = np.linspace(-5.0, 5.0, 21)[:, None]
    tau = np.linspace(0.0, 0.2, 101)[None, :]
    full = explicit_g2(u, tau, 0.6, TWO_PI / 2.6, close, duration=5.0)
    diag = approx_g2(u, tau, 0.6, TWO_PI / 2.6, close)
    assert np.max(np.abs(full - diag)) > 5e-3


def test_modulation_amplitude_against_quadrature():
    taus = [0.0, 1.7e-4, 5.0e-4, 1.3e-3]
    for tau in taus:
        got = float(modulation_amplitude(tau, 0.6, [C540]))
        ref = oracles.modulation_amplitude_quad(
            tau, 0.6, [(540.0, 0.5725 * math.pi, 0.59 * math.pi)]
        )
        assert abs(got - ref) < 1e-6
    # multi-component: product of per-component decays
    ref2 = oracles.modulation_amplitude_quad(
        2.0e-3, 0.6, [(6.0, 0.6 * math.pi, 0.0), (40.0, 0.5 * math.pi, 0.0)]
    )
    got2 = float(modulation_amplitude(2.0e-3, 0.6, PAIR))
    assert abs(got2 - ref2) < 1e-6


def test_modulation_amplitude_peaks_at_zero_lag():
    tau = np.linspace(0.0, 0.02, 2001)
    amp = modulation_amplitude(tau, 0.6, [C540])
    assert abs(amp[0] - 0.18) < 1e-12
    assert np.max(np.abs(amp)) <= amp[0] + 1e-12


# ----------------------------------------------------------------------
# discretized sideband spectrum


def test_theoretical_spectrum_single_component_lines():
    grid = np.arange(0.1, 2000.0 + 1e-9, 0.1)
    amps = theoretical_spectrum(grid, 0.6, [C540], duration=10.0)
    phi = C540.peak_phase_dev
    for m in (1, 2, 3):
        idx = int(round(540.0 * m / 0.1)) - 1
        want = 0.18 * oracles.bessel_j(m, phi) ** 2
        assert abs(amps[idx] - want) < 1e-10
    # nothing anywhere else
    mask = np.ones(grid.size, dtype=bool)
    for m in range(1, 4):
        mask[int(round(540.0 * m / 0.1)) - 1] = False
    assert np.max(amps[mask]) < 1e-7


def test_theoretical_spectrum_intermodulation_line():
    grid = np.arange(0.5, 100.0 + 1e-9, 0.5)
    amps = theoretical_spectrum(grid, 0.6, PAIR, duration=2.0)
    idx = int(round(34.0 / 0.5)) - 1  # |40 - 6|
    want = (
        0.18
        * oracles.bessel_j(1, PAIR[0].peak_phase_dev) ** 2
        * oracles.bessel_j(1, PAIR[1].peak_phase_dev) ** 2
    )
    assert abs(amps[idx] - want) < 1e-10


def test_theoretical_spectrum_resolution_warning():
    grid = np.arange(1.0, 100.0 + 1e-9, 1.0)  # 1 Hz steps on a 10 s record
    with pytest.warns(RuntimeWarning, match="coarser"):
        theoretical_spectrum(grid, 0.6, [C540], duration=10.0)


def test_theoretical_spectrum_grid_validation():
    with pytest.raises(ValueError):
        theoretical_spectrum(np.array([1.0]), 0.6, [C540], duration=10.0)
    with pytest.raises(ValueError):
        theoretical_spectrum(np.array([2.0, 1.0]), 0.6, [C540], duration=10.0)
    with pytest.raises(ValueError):
        theoretical_spectrum(np.array([0.0, 1.0]), 0.6, [C540], duration=10.0)


# ----------------------------------------------------------------------
# finite-bin attenuation


def test_binning_attenuation_against_quadrature():
    comp = [(540.0, 0.75 * math.pi, 0.0)]
    pkg = [PerturbationComponent(*comp[0])]
    for frac in (0.02, 0.08, 0.25):
        dtau = frac / 540.0
        got = binning_attenuation(pkg, dtau)
        ref = oracles.binning_attenuation_quad(comp, dtau)
        assert abs(got - ref) < 1e-6


def test_binning_attenuation_two_components_small_bins():
    # the per-component sinc series drops cross terms of order
    # (w1*dtau)^2*(w2*dtau)^2; keep bins small enough that they are tiny
    comps = [(60.0, 0.6 * math.pi, 0.0), (140.0, 0.5 * math.pi, 0.0)]
    pkg = [PerturbationComponent(*c) for c in comps]
    for dtau in (1e-4, 3e-4):
        got = binning_attenuation(pkg, dtau)
        ref = oracles.binning_attenuation_quad(comps, dtau)
        # dropped cross terms scale as (w1*w2*dtau^2)^2: ~2e-5 at 3e-4 s
        assert abs(got - ref) < 5e-5


def test_binning_attenuation_limits_and_monotonicity():
    comps = [PerturbationComponent(freq=540.0, peak_phase_dev=0.75 * math.pi)]
    assert binning_attenuation(comps, 0.0) == 1.0
    assert abs(binning_attenuation(comps, 1e-9) - 1.0) < 1e-9
    taus = np.linspace(0.0, 0.25 / 540.0, 60)
    vals = [binning_attenuation(comps, t) for t in taus]
    assert all(b < a + 1e-12 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        binning_attenuation(comps, -1e-6)


# ----------------------------------------------------------------------
# reconstruction sensitivity


def test_sensitivity_amplitude_offset_closed_form():
    # a pure amplitude error has the exact ratio J0(d_phi)
    for d_phi in (0.1, 0.4, 0.8, 1.2):
        quad = reconstruction_sensitivity(0.0, d_phi, 0.0, 0.66 * math.pi,
                                          540.0, duration=19.2)
        closed = reconstruction_sensitivity(0.0, d_phi, 0.0, 0.66 * math.pi,
                                            540.0, duration=19.2,
                                            method="approx")
        exact = oracles.sensitivity_amplitude_exact(d_phi)
        assert abs(closed - exact) < 1e-12
        assert abs(quad - exact) < 1e-3


def test_sensitivity_phase_offset_against_exact_form():
    # package closed form J0(d_phase*phi1) is the small-angle version of
    # the exact J0(2*phi1*sin(d_phase/2))
    phi1 = 0.66 * math.pi
    for d_phase in (0.05, 0.2, 0.4):
        quad = reconstruction_sensitivity(0.0, 0.0, d_phase, phi1, 540.0,
                                          duration=19.2)
        closed = reconstruction_sensitivity(0.0, 0.0, d_phase, phi1, 540.0,
                                            duration=19.2, method="approx")
        exact = oracles.sensitivity_phase_exact(d_phase, phi1)
        assert abs(quad - exact) < 1e-3
        assert abs(closed - exact) < 0.01


def test_sensitivity_frequency_offset_against_oracle():
    phi1 = 0.66 * math.pi
    for d_freq in (1e-3, 5e-3, 1e-2):
        quad = reconstruction_sensitivity(d_freq, 0.0, 0.0, phi1, 540.0,
                                          duration=19.2)
        ref = oracles.sensitivity_freq_quad(d_freq, phi1, 19.2)
        assert abs(quad - ref) < 1e-3


def test_sensitivity_validation_and_warnings():
    with pytest.raises(ValueError):
        reconstruction_sensitivity(0.0, 0.0, 0.0, -1.0, 540.0)
    with pytest.raises(ValueError):
        reconstruction_sensitivity(0.0, 0.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):  # combined offsets have no closed form
        reconstruction_sensitivity(1e-3, 0.1, 0.0, 1.0, 540.0,
                                   method="approx")
    with pytest.raises(ValueError):
        reconstruction_sensitivity(0.0, 0.0, 0.0, 1.0, 540.0, method="magic")
    with pytest.warns(RuntimeWarning, match="fewer than 50"):
        reconstruction_sensitivity(0.0, 0.1, 0.0, 1.0, 2.0, duration=1.0)
