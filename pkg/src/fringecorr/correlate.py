"""Pair correlation histograms and fringe-contrast fits.

`pair_histogram` turns an event list into the normalized second-order
correlation g2(u, tau) on a regular (u, tau) grid: every ordered pair of
events with time separation tau = t_later - t_earlier below `tau_max`
contributes at (u = y_later - y_earlier, tau).  Events are time sorted, so
the enumeration slides an O(N*W) window (W = pairs per tau_max horizon)
instead of touching all N^2 pairs; the hot loop is a compiled kernel.

Raw counts are normalized by the pair density of a Poisson-uniform stream,

    g2 = (T*Y / (N^2 * dtau * du)) * counts / ((1 - tau/T) * (1 - |u|/Y)),

which corrects the triangular finite-record and finite-window overlaps and
makes an uncorrelated stream average to one.

`fit_zero_lag` extracts contrast and period from the tau = [0, dtau) row
(g2 = 1 + (K^2/2)*cos(k*u + theta)); `fit_integrated` fits the plain
time-integrated fringe.  Both share a linear least-squares core that scans
a wavenumber grid — the model is linear in (mean, cos, sin) once k is
fixed — and then refines k by bounded scalar minimization, avoiding the
divergence-prone fully nonlinear fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar

from .simulate import EventList
from .theory import PerturbationComponent, binning_attenuation

__all__ = [
    "CorrelationGrid",
    "FringeFit",
    "FitError",
    "pair_histogram",
    "fit_zero_lag",
    "fit_integrated",
]


class FitError(RuntimeError):
    """Raised when a fringe fit has no usable data."""


@dataclass
class CorrelationGrid:
    """Normalized pair correlation on a regular (u, tau) grid.

    `counts[iu, itau]` are raw pair counts for the bin centered at
    `u_centers[iu]`, tau in [itau*dtau, (itau+1)*dtau).  `values` is the
    normalized g2, computed lazily (the full default grid is large).
    `u_centers` may be a subset of the full u grid when the histogram was
    restricted to selected rows.
    """

    u_centers: np.ndarray
    du: float
    dtau: float
    counts: np.ndarray
    duration: float
    window: float
    n_events: int
    _values: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_tau(self) -> int:
        return int(self.counts.shape[1])

    @property
    def tau_max(self) -> float:
        """Upper edge of the last tau bin."""
        return self.n_tau * self.dtau

    @property
    def tau_centers(self) -> np.ndarray:
        return (np.arange(self.n_tau) + 0.5) * self.dtau

    @property
    def values(self) -> np.ndarray:
        """Normalized g2 values, same shape as `counts`."""
        if self._values is None:
            self._values = self._normalize(self.counts)
        return self._values

    def _normalize(self, counts: np.ndarray) -> np.ndarray:
        t_corr = 1.0 - self.tau_centers / self.duration
        u_corr = 1.0 - np.abs(self.u_centers) / self.window
        norm = (self.duration * self.window) / (
            self.n_events**2 * self.dtau * self.du
        )
        return norm * counts / (u_corr[:, None] * t_corr[None, :])

    def row(self, iu: int) -> np.ndarray:
        """Normalized g2 of a single u row without materializing the rest."""
        t_corr = 1.0 - self.tau_centers / self.duration
        u_corr = 1.0 - abs(float(self.u_centers[iu])) / self.window
        norm = (self.duration * self.window) / (
            self.n_events**2 * self.dtau * self.du
        )
        return norm * self.counts[iu] / (u_corr * t_corr)

    def column(self, itau: int) -> np.ndarray:
        """Normalized g2 of a single tau column (all u rows)."""
        t_corr = 1.0 - (itau + 0.5) * self.dtau / self.duration
        u_corr = 1.0 - np.abs(self.u_centers) / self.window
        norm = (self.duration * self.window) / (
            self.n_events**2 * self.dtau * self.du
        )
        return norm * self.counts[:, itau] / (u_corr * t_corr)


@dataclass
class FringeFit:
    """Sinusoidal fringe fit result.

    `contrast` is K (nonnegative), `period` the fringe period in mm,
    `phase` the cosine phase at the coordinate origin, `mean` the fitted
    offset, and `ci95` half-width 95% confidence intervals per parameter.
    When the dephasing components are known, `attenuation` holds the
    finite-bin contrast factor and `contrast_corrected` = contrast divided
    by it.
    """

    contrast: float
    period: float
    phase: float
    mean: float
    ci95: dict[str, float]
    n_points: int
    residual_rms: float
    attenuation: float | None = None
    contrast_corrected: float | None = None

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.period


@njit(cache=True)
def _count_pairs(t, y, dtau, du, n_tau, tau_limit, m_half, row_of, counts):
    n = t.size
    for j in range(n):
        tj = t[j]
        yj = y[j]
        for i in range(j + 1, n):
            dt = t[i] - tj
            if dt >= tau_limit:
                break
            itau = int(dt / dtau)
            if itau >= n_tau:
                continue
            iu = int(math.floor((y[i] - yj) / du + 0.5))
            if iu < -m_half or iu > m_half:
                continue
            slot = row_of[iu + m_half]
            if slot >= 0:
                counts[slot, itau] += 1


def pair_histogram(
    events: EventList,
    du: float,
    dtau: float,
    tau_max: float,
    u_rows: np.ndarray | None = None,
) -> CorrelationGrid:
    """Histogram ordered event pairs into a normalized correlation grid.

    Parameters
    ----------
    events : EventList
        Time-sorted events with duration and window metadata.
    du, dtau : float
        Bin widths in mm and s.  u bins are centered on integer multiples
        of du; tau bins start at zero, so the first row is tau in [0, dtau).
    tau_max : float
        Largest time separation kept; rounded to a whole number of tau
        bins and required to stay below the record duration.
    u_rows : array of float, optional
        When given, only the u bins nearest these positions are
        accumulated (one row each, duplicates merged).  The normalization
        is per bin, so a row subset is identical to the same rows of the
        full grid at a fraction of the memory.

    Pairs separated by more than the outermost covered u bin edge (a
    sliver narrower than du at |u| -> window, where the pair density
    vanishes) are not counted.
    """
    if du <= 0.0 or dtau <= 0.0:
        raise ValueError("du and dtau must be > 0")
    n_tau = max(1, int(round(tau_max / dtau)))
    if n_tau * dtau > events.duration:
        raise ValueError(
            f"tau_max {n_tau * dtau:.6g} s must stay below the record "
            f"duration {events.duration:.6g} s"
        )
    if len(events) < 2:
        raise ValueError("need at least two events")

    m_half = int(math.ceil(events.window / du)) - 1
    if m_half < 1:
        raise ValueError("du too coarse for the window")

    full_centers = np.arange(-m_half, m_half + 1) * du
    if u_rows is None:
        row_of = np.arange(2 * m_half + 1, dtype=np.int64)
        u_centers = full_centers
    else:
        wanted = np.unique(
            np.clip(np.round(np.asarray(u_rows, dtype=float) / du), -m_half, m_half)
        ).astype(np.int64)
        row_of = np.full(2 * m_half + 1, -1, dtype=np.int64)
        row_of[wanted + m_half] = np.arange(wanted.size)
        u_centers = wanted * du

    counts = np.zeros((u_centers.size, n_tau), dtype=np.int64)
    _count_pairs(
        events.t,
        events.y,
        float(dtau),
        float(du),
        n_tau,
        float(n_tau * dtau),
        m_half,
        row_of,
        counts,
    )
    return CorrelationGrid(
        u_centers=u_centers,
        du=float(du),
        dtau=float(dtau),
        counts=counts,
        duration=events.duration,
        window=events.window,
        n_events=len(events),
    )


# ----------------------------------------------------------------------
# sinusoid fitting


def _design(k: float, pos: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(pos.size), np.cos(k * pos), np.sin(k * pos)])


def _wls(k: float, pos: np.ndarray, val: np.ndarray, w: np.ndarray):
    """Weighted LS of val ~ c0 + a*cos(k*pos) + b*sin(k*pos); returns
    (chi2, beta, XtWX)."""
    x = _design(k, pos)
    xtw = x.T * w
    beta, *_ = np.linalg.lstsq(xtw @ x, xtw @ val, rcond=None)
    r = val - x @ beta
    return float(np.sum(w * r * r)), beta, xtw @ x


def _scan_and_refine(pos, val, w, k_grid):
    chi = np.array([_wls(k, pos, val, w)[0] for k in k_grid])
    best = int(np.argmin(chi))
    lo = k_grid[max(best - 1, 0)]
    hi = k_grid[min(best + 1, k_grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda k: _wls(k, pos, val, w)[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        k_best = float(res.x)
        if res.fun > chi[best]:
            k_best = float(k_grid[best])
    else:
        k_best = float(k_grid[best])
    return k_best


def _fit_sinusoid(pos, val, w, k_grid):
    """Core fit.  Returns dict with mean, amplitude, phase, k and their
    one-sigma errors from the linear-model covariance at the best k."""
    k_best = _scan_and_refine(pos, val, w, k_grid)
    chi2, beta, xtwx = _wls(k_best, pos, val, w)
    dof = max(pos.size - 4, 1)  # three linear parameters plus k
    scale = chi2 / dof
    cov = scale * np.linalg.pinv(xtwx)
    c0, a, b = beta
    amp = math.hypot(a, b)
    phase = math.atan2(-b, a) if amp > 0 else 0.0
    if amp > 0:
        grad = np.array([0.0, a / amp, b / amp])
        var_amp = float(grad @ cov @ grad)
    else:
        var_amp = float(cov[1, 1] + cov[2, 2])
    # curvature of chi2(k) -> var(k); h set by the grid scale
    h = max(1e-6 * k_best, (k_grid[-1] - k_grid[0]) * 1e-5)
    chi_plus = _wls(k_best + h, pos, val, w)[0]
    chi_minus = _wls(k_best - h, pos, val, w)[0]
    curv = (chi_plus - 2.0 * chi2 + chi_minus) / (h * h)
    var_k = 2.0 * scale / curv if curv > 0 else float("inf")
    return {
        "mean": float(c0),
        "amp": float(amp),
        "phase": float(phase % (2.0 * math.pi)),
        "k": k_best,
        "var_mean": float(cov[0, 0]),
        "var_amp": var_amp,
        "var_phase": var_amp / amp**2 if amp > 0 else float("inf"),
        "var_k": var_k,
        "chi2": chi2,
        "rms": math.sqrt(chi2 / max(np.sum(w), 1e-300)),
    }


def _default_k_grid(window: float, du: float) -> np.ndarray:
    """Wavenumber scan from two fringes per window up to near bin Nyquist."""
    k_min = 2.0 * math.pi / (window / 2.0)
    k_max = 0.8 * math.pi / du
    dk = math.pi / (4.0 * window)
    return np.arange(k_min, k_max, dk)


def _hint_k_grid(k_hint: float, rel_window: float = 0.02) -> np.ndarray:
    return np.linspace(k_hint * (1 - rel_window), k_hint * (1 + rel_window), 25)


Z95 = 1.959963984540054


def _package_fit(core: dict, contrast: float, var_contrast: float, n: int) -> FringeFit:
    k = core["k"]
    period = 2.0 * math.pi / k
    var_period = core["var_k"] * (period / k) ** 2
    return FringeFit(
        contrast=float(contrast),
        period=float(period),
        phase=core["phase"],
        mean=core["mean"],
        ci95={
            "contrast": Z95 * math.sqrt(max(var_contrast, 0.0)),
            "period": Z95 * math.sqrt(max(var_period, 0.0)),
            "phase": Z95 * math.sqrt(max(core["var_phase"], 0.0)),
            "mean": Z95 * math.sqrt(max(core["var_mean"], 0.0)),
        },
        n_points=n,
        residual_rms=core["rms"],
    )


def fit_zero_lag(
    grid: CorrelationGrid,
    components: tuple[PerturbationComponent, ...] | None = None,
    k_hint: float | None = None,
) -> FringeFit:
    """Fit g2 = 1 + (K^2/2)*cos(k*u + theta) to the tau = [0, dtau) row.

    The zero-lag row carries the unperturbed contrast: its modulation
    amplitude is K0^2/2 up to the finite-bin attenuation of `dtau`.  When
    `components` are given (after identification), the attenuation is
    computed and a corrected contrast reported alongside.

    Under Poisson pair statistics the variance of a normalized cell is
    proportional to the inverse expected pair count, which falls off with
    the window-overlap factor 1 - |u|/Y; the fit weights by that factor,
    so the amplified outer cells cannot dominate.  Zero-count cells are
    data (fringe troughs) and stay in the fit.
    """
    pos = grid.u_centers
    val = grid.column(0)
    w = 1.0 - np.abs(pos) / grid.window
    populated = int(np.count_nonzero(grid.counts[:, 0]))
    if populated < 10:
        raise FitError(
            f"zero-lag row has only {populated} populated u bins; "
            "need >= 10 (more events or coarser binning)"
        )
    k_grid = (
        _hint_k_grid(k_hint) if k_hint else _default_k_grid(grid.window, grid.du)
    )
    core = _fit_sinusoid(pos, val, w, k_grid)
    amp = core["amp"]
    contrast = math.sqrt(2.0 * amp)
    var_contrast = core["var_amp"] / (2.0 * amp) if amp > 0 else core["var_amp"]
    fit = _package_fit(core, contrast, var_contrast, pos.size)
    if components:
        fit.attenuation = binning_attenuation(components, grid.dtau)
        fit.contrast_corrected = fit.contrast / fit.attenuation
    return fit


def fit_integrated(
    events: EventList,
    n_bins: int | None = None,
    k_hint: float | None = None,
) -> FringeFit:
    """Fit the time-integrated fringe I(y) = I0*(1 + K*cos(k*y + theta)).

    Under periodic dephasing the fitted K is the washed-out contrast
    K0*|prod_j J0(phi_j)|.  `n_bins` defaults to about one bin per 90 um;
    `k_hint` restricts the wavenumber scan to a +/-2% neighborhood, which
    is what the reconstruction optimizer uses for its objective.
    """
    if len(events) < 100:
        raise FitError("need >= 100 events for an integrated fringe fit")
    if n_bins is None:
        n_bins = max(64, int(round(events.window / 0.09)))
    counts, edges = np.histogram(events.y, bins=n_bins, range=(0.0, events.window))
    counts = counts.astype(float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    k_grid = (
        _hint_k_grid(k_hint)
        if k_hint
        else _default_k_grid(events.window, events.window / n_bins)
    )
    # two passes: unweighted first, then Poisson weights from the smooth
    # model of the first pass.  Weighting by the raw counts would let
    # downward-fluctuating trough bins dominate and bias the contrast up.
    core = _fit_sinusoid(centers, counts, np.ones(n_bins), k_grid)
    if core["mean"] > 0:
        model = core["mean"] + core["amp"] * np.cos(
            core["k"] * centers + core["phase"]
        )
        w = 1.0 / np.clip(model, 0.05 * core["mean"], None)
        core = _fit_sinusoid(centers, counts, w, k_grid)
    mean = core["mean"]
    if mean <= 0:
        raise FitError("integrated fringe fit found nonpositive mean level")
    contrast = core["amp"] / mean
    grad_amp = 1.0 / mean
    grad_mean = -core["amp"] / mean**2
    var_contrast = (
        grad_amp**2 * core["var_amp"] + grad_mean**2 * core["var_mean"]
    )
    return _package_fit(core, contrast, var_contrast, n_bins)
