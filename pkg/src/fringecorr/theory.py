"""Closed-form theory of periodically dephased fringe patterns.

A stationary fringe pattern ``f0 * (1 + K0*cos(k*y + theta))`` whose phase is
modulated by a sum of sinusoidal dephasing components

    phi(t) = sum_j  phi_j * cos(omega_j * t + phase_j)

washes out under time integration, but the modulation survives in the
second-order correlation of individual detection events.  This module
collects the closed-form results needed everywhere else in the package:

* the instantaneous phase excursion and event density (`phase_shift`,
  `fringe_density`),
* the time-integrated contrast reduction (`washout_factor`),
* the explicit pair correlation built from Bessel-function sideband
  multiplets (`enumerate_multiplets`, `bessel_amplitude`, `explicit_g2`)
  and its diagonal approximation (`approx_g2`),
* the discretized sideband amplitude spectrum (`theoretical_spectrum`),
* the contrast attenuation caused by finite correlation-time binning
  (`binning_attenuation`),
* the contrast recovered when events are unshifted with slightly wrong
  component parameters (`reconstruction_sensitivity`).

Units: spatial quantities in mm, times in s, frequencies in Hz (angular
frequencies only appear internally as ``2*pi*freq``), phases in rad.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import j0 as _bessel_j0, jv as _bessel_jv

TWO_PI = 2.0 * math.pi

#: default highest Bessel order kept per component in multiplet sums
DEFAULT_ORDER_CAP_SINGLE = 12
DEFAULT_ORDER_CAP_MULTI = 6

#: multiplets with |product of Bessel factors| below this are dropped when
#: building discretized spectra (they are far below any realistic noise floor)
BESSEL_FLOOR = 1e-6

#: hard bound on the number of enumerated multiplets
MAX_MULTIPLETS = 2_000_000


class EnumerationOverflowError(RuntimeError):
    """Raised when a multiplet enumeration would exceed its size bound."""


@dataclass(frozen=True)
class PerturbationComponent:
    """One sinusoidal dephasing component.

    Parameters
    ----------
    freq : float
        Modulation frequency in Hz, > 0.
    peak_phase_dev : float
        Peak phase deviation phi_j in rad, >= 0.
    phase : float
        Temporal phase offset in rad; stored normalized to [0, 2*pi).
    """

    freq: float
    peak_phase_dev: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not self.freq > 0.0:
            raise ValueError(f"component frequency must be > 0, got {self.freq}")
        if self.peak_phase_dev < 0.0:
            raise ValueError(
                f"peak phase deviation must be >= 0, got {self.peak_phase_dev}"
            )
        object.__setattr__(self, "phase", self.phase % TWO_PI)

    @property
    def omega(self) -> float:
        """Angular frequency in rad/s."""
        return TWO_PI * self.freq


@dataclass(frozen=True)
class FringeModel:
    """Unperturbed spatial fringe: f0 * (1 + K0*cos(k*y + spatial_phase)).

    `period` is the fringe period in mm, `mean_intensity` the mean event
    density f0 (events per mm per s), `contrast` the fringe contrast K0.
    """

    contrast: float
    period: float
    mean_intensity: float = 1.0
    spatial_phase: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError(f"contrast must be in [0, 1], got {self.contrast}")
        if not self.period > 0.0:
            raise ValueError(f"period must be > 0, got {self.period}")
        if not self.mean_intensity > 0.0:
            raise ValueError(
                f"mean intensity must be > 0, got {self.mean_intensity}"
            )

    @property
    def wavenumber(self) -> float:
        """Spatial angular wavenumber k = 2*pi/period in rad/mm."""
        return TWO_PI / self.period


@dataclass(frozen=True)
class Multiplet:
    """Integer Bessel-order pair vector (n_j, m_j) of one correlation term."""

    n: tuple[int, ...]
    m: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.n) != len(self.m):
            raise ValueError("n and m must have the same length")

    @property
    def temporal_orders(self) -> tuple[int, ...]:
        return self.m


def _component_tuple(
    components: Sequence[PerturbationComponent],
) -> tuple[PerturbationComponent, ...]:
    comps = tuple(components)
    if not comps:
        raise ValueError("need at least one perturbation component")
    return comps


def default_order_cap(n_components: int) -> int:
    """Default Bessel order cap: 12 for one component, 6 otherwise."""
    return DEFAULT_ORDER_CAP_SINGLE if n_components == 1 else DEFAULT_ORDER_CAP_MULTI


def phase_shift(components: Sequence[PerturbationComponent], t) -> np.ndarray:
    """Instantaneous phase excursion phi(t) = sum_j phi_j*cos(omega_j*t + phase_j).

    `t` may be a scalar or array (seconds); returns matching shape in rad.
    """
    comps = _component_tuple(components)
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    for c in comps:
        out += c.peak_phase_dev * np.cos(c.omega * t + c.phase)
    return out if out.shape else float(out)


def fringe_density(
    y,
    t,
    fringe: FringeModel,
    components: Sequence[PerturbationComponent] = (),
) -> np.ndarray:
    """Instantaneous event density f(y, t) of the dephased fringe.

    Broadcasts `y` (mm) against `t` (s).  Without components this is the
    static pattern.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    phi = phase_shift(components, t) if len(tuple(components)) else 0.0
    out = fringe.mean_intensity * (
        1.0
        + fringe.contrast
        * np.cos(fringe.wavenumber * y + fringe.spatial_phase + phi)
    )
    return out if np.ndim(out) else float(out)


def washout_factor(components: Sequence[PerturbationComponent]) -> float:
    """Time-integrated contrast ratio K_pert/K0 = prod_j J0(phi_j).

    Signed: J0 changes sign beyond its first zero at phi ~ 2.405.  A fitted
    contrast corresponds to the magnitude.
    """
    comps = _component_tuple(components)
    out = 1.0
    for c in comps:
        out *= float(_bessel_j0(c.peak_phase_dev))
    return out


# ----------------------------------------------------------------------
# multiplet machinery


@lru_cache(maxsize=512)
def _multiplet_arrays(
    freqs: tuple[float, ...],
    duration: float,
    order_cap: int,
    max_count: int,
) -> tuple[np.ndarray, np.ndarray]:
    """All order vectors (n, m), |n_j|,|m_j| <= cap, with
    |sum_j (n_j+m_j)*omega_j| < 2*pi/duration.

    Enumerated through the sum vector s = n + m: the frequency constraint
    depends on s only, and for each admitted s the n choices factorize per
    component.  Returns int arrays of shape (M, N); cached per call signature.
    """
    n_comp = len(freqs)
    cap = int(order_cap)
    if cap < 0:
        raise ValueError("order_cap must be >= 0")
    if duration <= 0.0:
        raise ValueError("duration must be > 0")

    s_axis = np.arange(-2 * cap, 2 * cap + 1, dtype=np.int64)
    grids = np.meshgrid(*([s_axis] * n_comp), indexing="ij")
    s_all = np.stack([g.ravel() for g in grids], axis=1)  # (25^N-ish, N)
    omegas = TWO_PI * np.asarray(freqs)
    admitted = np.abs(s_all @ omegas) < TWO_PI / duration
    s_admitted = s_all[admitted]

    # n_j ranges per component so that both n_j and m_j = s_j - n_j are in cap
    lo = np.maximum(-cap, s_admitted - cap)
    hi = np.minimum(cap, s_admitted + cap)
    counts = np.prod(hi - lo + 1, axis=1)
    total = int(counts.sum())
    if total > max_count:
        raise EnumerationOverflowError(
            f"multiplet enumeration would produce {total} entries "
            f"(bound {max_count}); reduce order_cap or raise max_count"
        )

    n_blocks = []
    s_blocks = []
    for s_row, lo_row, hi_row in zip(s_admitted, lo, hi):
        axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo_row, hi_row)]
        mesh = np.meshgrid(*axes, indexing="ij")
        block = np.stack([g.ravel() for g in mesh], axis=1)
        n_blocks.append(block)
        s_blocks.append(np.broadcast_to(s_row, block.shape))
    if n_blocks:
        n_arr = np.concatenate(n_blocks, axis=0)
        m_arr = np.concatenate(s_blocks, axis=0) - n_arr
    else:
        n_arr = np.empty((0, n_comp), dtype=np.int64)
        m_arr = np.empty((0, n_comp), dtype=np.int64)
    n_arr.setflags(write=False)
    m_arr.setflags(write=False)
    return n_arr, m_arr


def enumerate_multiplets(
    components: Sequence[PerturbationComponent],
    duration: float,
    order_cap: int | None = None,
    max_count: int = MAX_MULTIPLETS,
) -> list[Multiplet]:
    """List every multiplet contributing to the pair correlation.

    A record of length `duration` admits the order vectors whose net
    frequency |sum_j (n_j+m_j)*omega_j| stays below 2*pi/duration; all others
    average out.  Always contains the diagonal family n = -m.  Raises
    `EnumerationOverflowError` beyond `max_count` entries.
    """
    comps = _component_tuple(components)
    cap = default_order_cap(len(comps)) if order_cap is None else int(order_cap)
    n_arr, m_arr = _multiplet_arrays(
        tuple(c.freq for c in comps), float(duration), cap, int(max_count)
    )
    return [
        Multiplet(tuple(int(v) for v in n_row), tuple(int(v) for v in m_row))
        for n_row, m_row in zip(n_arr, m_arr)
    ]


def bessel_amplitude(
    multiplet: Multiplet, components: Sequence[PerturbationComponent]
) -> float:
    """Amplitude factor B = prod_j J_{n_j}(phi_j) * J_{m_j}(phi_j)."""
    comps = _component_tuple(components)
    if len(multiplet.n) != len(comps):
        raise ValueError("multiplet order does not match component count")
    out = 1.0
    for n_j, m_j, c in zip(multiplet.n, multiplet.m, comps):
        out *= float(_bessel_jv(n_j, c.peak_phase_dev)) * float(
            _bessel_jv(m_j, c.peak_phase_dev)
        )
    return out


def _term_table(
    comps: tuple[PerturbationComponent, ...],
    duration: float,
    order_cap: int,
    bessel_floor: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized per-multiplet quantities of the explicit correlation sum.

    Returns (B, omega_m, temporal_phase, parity, net_order_sum) where
    parity = sum_j (m_j - n_j) determines the spatial phase (pi/2)*parity.
    """
    n_arr, m_arr = _multiplet_arrays(
        tuple(c.freq for c in comps), duration, order_cap, MAX_MULTIPLETS
    )
    phis = np.array([c.peak_phase_dev for c in comps])
    amp = _bessel_jv(n_arr, phis) * _bessel_jv(m_arr, phis)
    bee = np.prod(amp, axis=1)
    if bessel_floor > 0.0:
        keep = np.abs(bee) >= bessel_floor
        n_arr, m_arr, bee = n_arr[keep], m_arr[keep], bee[keep]
    omegas = TWO_PI * np.array([c.freq for c in comps])
    phases = np.array([c.phase for c in comps])
    omega_m = m_arr @ omegas
    temporal_phase = (m_arr + n_arr) @ phases
    parity = np.sum(m_arr - n_arr, axis=1)
    return bee, omega_m, temporal_phase, parity, np.sum(m_arr + n_arr, axis=1)


def explicit_g2(
    u,
    tau,
    contrast: float,
    wavenumber: float,
    components: Sequence[PerturbationComponent],
    duration: float,
    order_cap: int | None = None,
    bessel_floor: float = 0.0,
) -> np.ndarray:
    """Explicit pair correlation g2(u, tau) as a Bessel multiplet sum.

    g2 = 1 + (K0^2/2) * sum_multiplets B * cos(omega_m*tau + Phi)
                                         * cos(k*u + (pi/2)*sum(m - n))

    with B from `bessel_amplitude`, omega_m = sum_j m_j*omega_j and
    Phi = sum_j phase_j*(m_j + n_j).  `u` (mm) and `tau` (s) broadcast
    together.  `bessel_floor` > 0 drops negligible terms; the default keeps
    every enumerated term so that truncation matches `approx_g2` exactly in
    the diagonal regime.
    """
    comps = _component_tuple(components)
    cap = default_order_cap(len(comps)) if order_cap is None else int(order_cap)
    bee, omega_m, tphase, parity, _ = _term_table(
        comps, float(duration), cap, bessel_floor
    )
    u_arr, tau_arr = np.broadcast_arrays(
        np.asarray(u, dtype=float), np.asarray(tau, dtype=float)
    )
    out = np.ones(u_arr.shape)
    pref = 0.5 * contrast * contrast
    # chunk over terms to bound the grid*terms intermediate
    chunk = max(1, int(4e6 / max(u_arr.size, 1)))
    for start in range(0, bee.size, chunk):
        sl = slice(start, start + chunk)
        temporal = np.cos(tau_arr[..., None] * omega_m[sl] + tphase[sl])
        spatial = np.cos(
            wavenumber * u_arr[..., None] + 0.5 * math.pi * parity[sl]
        )
        out += pref * np.sum(bee[sl] * temporal * spatial, axis=-1)
    return out if out.shape else float(out)


def approx_g2(
    u,
    tau,
    contrast: float,
    wavenumber: float,
    components: Sequence[PerturbationComponent],
    order_cap: int | None = None,
) -> np.ndarray:
    """Diagonal (n = -m) approximation g2 = 1 + A(tau)*cos(k*u) with

    A(tau) = (K0^2/2) * prod_j sum_m J_m(phi_j)^2 * cos(m*omega_j*tau).

    Valid whenever the record is long against every beat period, which makes
    the diagonal multiplets dominate.  Component phases drop out.
    """
    comps = _component_tuple(components)
    tau_arr = np.asarray(tau, dtype=float)
    amp = modulation_amplitude(tau_arr, contrast, comps, order_cap)
    out = 1.0 + amp * np.cos(wavenumber * np.asarray(u, dtype=float))
    return out if np.ndim(out) else float(out)


def modulation_amplitude(
    tau,
    contrast: float,
    components: Sequence[PerturbationComponent],
    order_cap: int | None = None,
) -> np.ndarray:
    """Signed spatial-modulation amplitude A(tau) of the diagonal correlation."""
    comps = _component_tuple(components)
    cap = default_order_cap(len(comps)) if order_cap is None else int(order_cap)
    tau_arr = np.asarray(tau, dtype=float)
    orders = np.arange(0, cap + 1)
    out = np.full(tau_arr.shape, 0.5 * contrast * contrast)
    for c in comps:
        jm2 = _bessel_jv(orders, c.peak_phase_dev) ** 2
        weights = np.where(orders == 0, 1.0, 2.0) * jm2
        cosines = np.cos(np.multiply.outer(tau_arr, orders) * c.omega)
        out = out * (cosines @ weights)
    return out if out.shape else float(out)


_PARITY_COS = {0: 1.0, 1: 0.0, 2: -1.0, 3: 0.0}


def theoretical_spectrum(
    freq_grid: np.ndarray,
    contrast: float,
    components: Sequence[PerturbationComponent],
    duration: float,
    order_cap: int | None = None,
    bessel_floor: float = BESSEL_FLOOR,
) -> np.ndarray:
    """Discretized sideband amplitude spectrum on `freq_grid` (Hz).

    Every multiplet with net frequency f_m = sum_j m_j*freq_j > 0 deposits

        (K0^2/2) * B * (cos(Phi) - sin(Phi)) * cos((pi/2)*sum(m - n))

    at the nearest grid point; coincident deposits add coherently before the
    magnitude is taken.  The parity cosine is the multiplet's spatial factor
    evaluated at the fringe antinode rows u = N_u*period/2, where measured
    spectra are read out, and the (cos - sin) combination normalizes the
    single-component peak at m*freq_1 to height (K0^2/2)*J_m(phi_1)^2.
    Grids coarser than 1/duration trigger a resolution warning.
    """
    grid = np.asarray(freq_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("freq_grid must be a 1-D array with >= 2 points")
    if not np.all(np.diff(grid) > 0.0):
        raise ValueError("freq_grid must be strictly increasing")
    if grid[0] <= 0.0:
        raise ValueError("freq_grid must be strictly positive")
    comps = _component_tuple(components)
    cap = default_order_cap(len(comps)) if order_cap is None else int(order_cap)
    # float jitter in a constructed grid can push single steps a few
    # ulps wide; only warn on a genuinely coarser grid
    if np.max(np.diff(grid)) > 1.0 / duration * (1.0 + 1e-9):
        warnings.warn(
            "frequency grid is coarser than the 1/duration record resolution; "
            "spectral components may fall between grid points",
            RuntimeWarning,
            stacklevel=2,
        )

    bee, omega_m, tphase, parity, _ = _term_table(
        comps, float(duration), cap, bessel_floor
    )
    f_m = omega_m / TWO_PI
    row_factor = np.array([_PARITY_COS[int(p) % 4] for p in parity])
    values = (
        0.5 * contrast * contrast
        * bee
        * (np.cos(tphase) - np.sin(tphase))
        * row_factor
    )

    half_step = 0.5 * float(np.min(np.diff(grid)))
    keep = (f_m > 0.0) & (f_m >= grid[0] - half_step) & (
        f_m <= grid[-1] + half_step
    ) & (values != 0.0)
    f_m, values = f_m[keep], values[keep]
    idx = np.clip(np.searchsorted(grid, f_m), 0, grid.size - 1)
    left_closer = (idx > 0) & (
        np.abs(grid[np.maximum(idx - 1, 0)] - f_m) <= np.abs(grid[idx] - f_m)
    )
    idx = idx - left_closer.astype(int)
    amps = np.zeros(grid.shape)
    np.add.at(amps, idx, values)
    return np.abs(amps)


def _sinc(x: np.ndarray) -> np.ndarray:
    """sin(x)/x with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    x_safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x * x / 6.0 + x**4 / 120.0, np.sin(x_safe) / x_safe)
    return out


def binning_attenuation(
    components: Sequence[PerturbationComponent],
    dtau: float,
    order_cap: int | None = None,
) -> float:
    """Contrast factor K_meas/K0 caused by averaging g2 over a [0, dtau) bin.

    sqrt(|A|) with A = prod_j sum_m J_m(phi_j)^2 * sinc(m*omega_j*dtau);
    approaches 1 as dtau -> 0.
    """
    comps = _component_tuple(components)
    if dtau < 0.0:
        raise ValueError("dtau must be >= 0")
    cap = default_order_cap(len(comps)) if order_cap is None else int(order_cap)
    orders = np.arange(0, cap + 1)
    att = 1.0
    for c in comps:
        jm2 = _bessel_jv(orders, c.peak_phase_dev) ** 2
        weights = np.where(orders == 0, 1.0, 2.0) * jm2
        att *= float(np.sum(weights * _sinc(orders * c.omega * dtau)))
    return math.sqrt(abs(att))


def reconstruction_sensitivity(
    d_freq: float,
    d_phi: float,
    d_phase: float,
    phi1: float,
    freq1: float,
    phase1: float = 0.0,
    duration: float = 20.0,
    method: str = "quadrature",
    samples_per_period: int = 200,
) -> float:
    """Contrast ratio K_rec/K0 after unshifting events with offset parameters.

    The assumed component is (freq1 + |d_freq|, phi1 + d_phi,
    phase1 + d_phase) while the true one is (freq1, phi1, phase1):

        K_rec/K0 = (1/T) * integral cos(phi_true(t) - phi_assumed(t)) dt

    evaluated by composite trapezoid quadrature (``method="quadrature"``)
    with `samples_per_period` points per modulation period, or by the
    single-offset closed forms (``method="approx"``):

        frequency only:  exp(-((pi/8)*|2*pi*d_freq|*T*phi1)^2 / 2)
        amplitude only:  J0(d_phi)
        phase only:      J0(d_phase * phi1)

    `d_freq` in Hz; the result is signed and independent of freq1, phase1
    and T once the record holds many periods (T*freq1 >= 50, else warns).
    """
    if phi1 < 0.0:
        raise ValueError("phi1 must be >= 0")
    if freq1 <= 0.0:
        raise ValueError("freq1 must be > 0")
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if duration * freq1 < 50.0:
        warnings.warn(
            "record holds fewer than 50 modulation periods; the sensitivity "
            "ratio is not yet averaging-independent",
            RuntimeWarning,
            stacklevel=2,
        )
    if method == "approx":
        offsets = [d_freq != 0.0, d_phi != 0.0, d_phase != 0.0]
        if sum(offsets) > 1:
            raise ValueError(
                "closed forms hold for a single nonzero offset; "
                "use method='quadrature' for combined offsets"
            )
        if d_freq != 0.0:
            arg = (math.pi / 8.0) * abs(TWO_PI * d_freq) * duration * phi1
            return math.exp(-0.5 * arg * arg)
        if d_phi != 0.0:
            return float(_bessel_j0(d_phi))
        if d_phase != 0.0:
            return float(_bessel_j0(d_phase * phi1))
        return 1.0
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")

    omega_true = TWO_PI * freq1
    omega_assumed = TWO_PI * (freq1 + abs(d_freq))
    n = int(
        min(
            2e7,
            max(1000, math.ceil(samples_per_period * duration * freq1)),
        )
    )
    t = np.linspace(0.0, duration, n + 1)
    mismatch = phi1 * np.cos(omega_true * t + phase1) - (phi1 + d_phi) * np.cos(
        omega_assumed * t + phase1 + d_phase
    )
    return float(np.trapezoid(np.cos(mismatch), t) / duration)
