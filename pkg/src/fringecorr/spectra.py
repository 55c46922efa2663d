"""Temporal amplitude spectra of the pair correlation and peak detection.

The diagonal correlation g2(u, tau) = 1 + A(tau)*cos(k*u) is sampled on
the grid rows closest to the fringe antinodes u = N_u * period/2, where
the spatial factor is +/-1 and A(tau) appears with maximal amplitude and
alternating sign.  Each row of g2 - 1 is transformed to a one-sided
amplitude spectrum on an arbitrary uniform frequency grid (chirp-z
transform: resolution and grid spacing are decoupled from the record
length) and the row magnitudes are averaged, which cancels the parity
sign without phase bookkeeping.

Amplitude convention: a row modulation a*cos(2*pi*f*tau) yields the
one-sided phasor amplitude a/2, matching the single-component theoretical
peak height (K0^2/2)*J_m(phi_1)^2 of `theory.theoretical_spectrum`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import czt

from .correlate import CorrelationGrid

__all__ = [
    "AmplitudeSpectrum",
    "Peak",
    "PeakList",
    "antinode_targets",
    "temporal_spectrum",
    "detect_peaks",
]


def antinode_targets(
    period: float, window: float, fraction: float = 0.5
) -> np.ndarray:
    """Antinode positions N_u * period/2 with |u| <= fraction*window (mm).

    These are the natural `u_rows` subset for `correlate.pair_histogram`
    when only the temporal spectrum is needed.  The default stops at half
    the window: beyond that the finite-window normalization amplifies the
    cell noise faster than extra rows help the average.
    """
    if period <= 0.0 or window <= 0.0:
        raise ValueError("period and window must be > 0")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    half = 0.5 * period
    n_max = int(math.floor((fraction * window - 1e-12) / half))
    return np.arange(-n_max, n_max + 1) * half


@dataclass
class AmplitudeSpectrum:
    """One-sided amplitude spectrum on the uniform grid df, 2*df, ..., f_max.

    `record_length` is the time span of the transformed record; it sets
    the spectral resolution (and thus the sidelobe envelope used to tell
    leakage from real peaks).
    """

    df: float
    amplitudes: np.ndarray
    n_rows_averaged: int
    source_dtau: float
    resolution_flagged: bool = False
    record_length: float | None = None

    @property
    def frequencies(self) -> np.ndarray:
        return self.df * np.arange(1, self.amplitudes.size + 1)

    @property
    def f_max(self) -> float:
        return self.df * self.amplitudes.size


@dataclass(frozen=True)
class Peak:
    freq: float
    amplitude: float
    snr: float


@dataclass
class PeakList:
    """Detected spectral peaks, sorted by frequency."""

    peaks: list[Peak]
    noise_floor: float
    threshold: float

    def __len__(self) -> int:
        return len(self.peaks)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([p.freq for p in self.peaks])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.peaks])


def _row_amplitude(x: np.ndarray, df: float, n_points: int, dtau: float) -> np.ndarray:
    """|DFT| of x at f = df*(1..n_points), normalized to phasor amplitude."""
    w = np.exp(-2j * math.pi * df * dtau)
    a = np.exp(2j * math.pi * df * dtau)
    return np.abs(czt(x, m=n_points, w=w, a=a)) / x.size


def temporal_spectrum(
    grid: CorrelationGrid,
    period: float,
    df: float,
    f_max: float,
) -> AmplitudeSpectrum:
    """Row-averaged amplitude spectrum of g2 - 1 at the fringe antinodes.

    Parameters
    ----------
    grid : CorrelationGrid
        Full grid or an antinode row subset; rows are matched to the
        nearest available u bin.
    period : float
        Fringe period in mm (from the zero-lag fit); antinode rows sit at
        integer multiples of period/2.
    df, f_max : float
        Frequency grid spacing and upper edge in Hz.  f_max must stay at
        or below the 1/(2*dtau) binning Nyquist; a df coarser than the
        1/tau_max record resolution is flagged (real peaks could fall
        between grid points) but still computed.
    """
    if df <= 0.0 or f_max <= df:
        raise ValueError("need 0 < df < f_max")
    nyquist = 0.5 / grid.dtau
    if f_max > nyquist * (1.0 + 1e-12):
        raise ValueError(
            f"f_max {f_max:.6g} Hz exceeds the binning Nyquist {nyquist:.6g} Hz"
        )
    if period <= 0.0:
        raise ValueError("period must be > 0")

    targets = antinode_targets(period, grid.window)
    # nearest available u bin per antinode, if that bin actually holds it
    keep = set()
    for u_t in targets:
        i = int(np.argmin(np.abs(grid.u_centers - u_t)))
        if abs(grid.u_centers[i] - u_t) <= 0.5 * grid.du + 1e-12:
            keep.add(i)
    rows = np.array(sorted(keep), dtype=int)
    if rows.size < 2:
        raise ValueError(
            "fewer than two antinode rows available; widen the grid or "
            "check the period"
        )

    n_points = int(math.floor(f_max / df + 1e-9))
    acc = np.zeros(n_points)
    for i in rows:
        acc += _row_amplitude(grid.row(int(i)) - 1.0, df, n_points, grid.dtau)
    flagged = df > 1.0 / grid.tau_max * (1.0 + 1e-12)
    return AmplitudeSpectrum(
        df=float(df),
        amplitudes=acc / rows.size,
        n_rows_averaged=int(rows.size),
        source_dtau=grid.dtau,
        resolution_flagged=bool(flagged),
        record_length=grid.tau_max,
    )


def detect_peaks(
    spec: AmplitudeSpectrum, sigma_mult: float | None = None
) -> PeakList:
    """Local maxima above a robust noise threshold.

    The noise floor is the median amplitude, its spread the scaled median
    absolute deviation (1.4826*MAD); peaks must exceed
    floor + sigma_mult*spread.  Each peak is refined by a three-point
    parabola, giving sub-bin frequency and amplitude;
    snr = (amplitude - floor)/spread.

    `sigma_mult` defaults to sqrt(2*ln(n)) + 1 for n grid points — the
    extreme-value scale of n noise draws plus one sigma of margin — which
    keeps the expected false-peak count near zero whether the spectrum
    has a thousand bins or a million.  A fixed multiplier (say 3) is only
    safe for short spectra.
    """
    amps = spec.amplitudes
    if amps.size < 3:
        raise ValueError("spectrum too short for peak detection")
    if sigma_mult is None:
        sigma_mult = math.sqrt(2.0 * math.log(amps.size)) + 1.0
    floor = float(np.median(amps))
    spread = 1.4826 * float(np.median(np.abs(amps - floor)))
    threshold = floor + sigma_mult * spread
    freqs = spec.frequencies

    peaks: list[Peak] = []
    for i in range(1, amps.size - 1):
        if amps[i] <= threshold:
            continue
        if not (amps[i] > amps[i - 1] and amps[i] >= amps[i + 1]):
            continue
        denom = amps[i - 1] - 2.0 * amps[i] + amps[i + 1]
        if denom < 0.0:
            delta = 0.5 * (amps[i - 1] - amps[i + 1]) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
        else:
            delta = 0.0
        freq = freqs[i] + delta * spec.df
        amp = amps[i] - 0.25 * (amps[i - 1] - amps[i + 1]) * delta
        snr = (amp - floor) / spread if spread > 0 else math.inf
        peaks.append(Peak(freq=float(freq), amplitude=float(amp), snr=float(snr)))
    if spec.record_length:
        peaks = _suppress_leakage(peaks, spec.record_length)
    return PeakList(peaks=peaks, noise_floor=floor, threshold=float(threshold))


#: safety factor on the sidelobe envelope when classifying leakage
LEAKAGE_MARGIN = 1.5


def _suppress_leakage(peaks: list[Peak], record_length: float) -> list[Peak]:
    """Drop peaks consistent with spectral leakage of a stronger one.

    A finite record of length T smears a tone into sidelobes bounded by
    the envelope amp/(pi*|df|*T).  When the frequency grid is finer than
    the 1/T resolution those sidelobes show up as extra local maxima, so
    any peak lying under a (margin-widened) envelope of an already kept,
    stronger peak is discarded.  Distinct real peaks of comparable size
    are untouched: the envelope falls below their amplitude within a few
    resolution widths.
    """
    kept: list[Peak] = []
    for p in sorted(peaks, key=lambda p: -p.amplitude):
        shadowed = False
        for q in kept:
            dist = abs(p.freq - q.freq)
            if dist <= 0.0:
                shadowed = True
                break
            if p.amplitude <= LEAKAGE_MARGIN * q.amplitude / (
                math.pi * dist * record_length
            ):
                shadowed = True
                break
        if not shadowed:
            kept.append(p)
    kept.sort(key=lambda p: p.freq)
    return kept
