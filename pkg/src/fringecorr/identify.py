"""Identification of dephasing frequencies from a peak spectrum.

The measured amplitude spectrum of a dephased fringe contains peaks at
integer combinations sum_j m_j*freq_j of the (unknown) modulation
frequencies.  The search works level by level:

1. Every candidate set (level N starts from the single detected peaks)
   predicts its combination positions (`expected_components`) and is
   scored by the congruence M = percentage of *measured* peaks lying
   within `match_tol` of a predicted position.
2. Candidates with M >= accept_threshold are accepted; M <=
   reject_threshold discards the candidate; anything in between is kept
   as "possible".
3. If the level produced no accept, the unique frequencies of the
   possible candidates are combined into all (N+1)-element sets and the
   next level runs, up to `max_freqs` frequencies.
4. Among accepted candidates, the peak phase deviations phi_j are fitted
   by matching the theoretical sideband spectrum to the measured one
   (`fit_peak_phase_deviations`); the candidate with the smallest
   normalized residual wins (ties: fewer frequencies, then lower total
   frequency).

Everything is deterministic: peaks are processed in ascending frequency
and combinations in lexicographic order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import jv as _bessel_jv

from .spectra import AmplitudeSpectrum, PeakList
from .theory import (
    PerturbationComponent,
    default_order_cap,
)

__all__ = [
    "SearchConfig",
    "IdentificationResult",
    "IdentificationError",
    "expected_components",
    "congruence",
    "search",
    "fit_peak_phase_deviations",
]

TWO_PI = 2.0 * math.pi


class IdentificationError(RuntimeError):
    """Search exhausted without an accepted candidate.

    Carries the best candidate seen (`best_freqs`, `best_congruence`) so
    callers can report a near miss.
    """

    def __init__(self, message: str, best_freqs: tuple[float, ...] = (),
                 best_congruence: float = 0.0):
        super().__init__(message)
        self.best_freqs = best_freqs
        self.best_congruence = best_congruence


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the frequency search.

    `match_tol` (Hz) should be about the spectral grid spacing.  The
    per-frequency harmonic order is bounded by f_max/freq and by
    `order_cap_single` (one frequency) or the combined L1 order
    `order_cap_multi` (several).  `max_candidates` bounds one level's
    combination count.
    """

    f_max: float
    match_tol: float = 0.1
    accept_threshold: float = 80.0
    reject_threshold: float = 10.0
    max_freqs: int = 4
    order_cap_single: int = 20
    order_cap_multi: int = 8
    max_candidates: int = 200_000
    residual_warn: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.reject_threshold < self.accept_threshold <= 100.0:
            raise ValueError("need 0 < reject_threshold < accept_threshold <= 100")
        if self.max_freqs < 1:
            raise ValueError("max_freqs must be >= 1")
        if self.f_max <= 0.0 or self.match_tol <= 0.0:
            raise ValueError("f_max and match_tol must be > 0")


@dataclass
class IdentificationResult:
    """Identified dephasing components and fit diagnostics.

    `congruence` is the winning candidate's peak-match percentage,
    `fit_residual` the normalized squared mismatch between theoretical
    and measured spectra over the spectrally significant grid points
    (0 = perfect, ~1 = explains nothing).  `contrast_used` and
    `period_used` record the fringe parameters the fit assumed.
    """

    components: tuple[PerturbationComponent, ...]
    congruence: float
    fit_residual: float
    contrast_used: float
    period_used: float
    poor_fit: bool = False

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(c.freq for c in self.components)


@lru_cache(maxsize=64)
def _l1_ball(n_dims: int, radius: int) -> np.ndarray:
    """Integer vectors with 1 <= sum|m_j| <= radius, shape (V, n_dims)."""
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * n_dims), indexing="ij")
    vecs = np.stack([g.ravel() for g in grids], axis=1)
    order = np.sum(np.abs(vecs), axis=1)
    out = vecs[(order >= 1) & (order <= radius)]
    out.setflags(write=False)
    return out


def _candidate_positions(
    freqs: np.ndarray, cfg: SearchConfig
) -> np.ndarray:
    """Sorted positive combination positions of one candidate set (with
    possible near-duplicates; congruence matching does not care)."""
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 1:
        cap = min(int(cfg.f_max / freqs[0]), cfg.order_cap_single)
        if cap < 1:
            return np.empty(0)
        return freqs[0] * np.arange(1, cap + 1)
    vecs = _l1_ball(freqs.size, cfg.order_cap_multi)
    per_freq_cap = np.floor(cfg.f_max / freqs).astype(np.int64)
    ok = np.all(np.abs(vecs) <= per_freq_cap, axis=1)
    pos = np.abs(vecs[ok] @ freqs)
    pos = pos[(pos > 0.0) & (pos <= cfg.f_max)]
    return np.sort(pos)


def expected_components(
    freqs,
    f_max: float,
    match_tol: float = 0.1,
    order_cap_single: int = 20,
    order_cap_multi: int = 8,
) -> np.ndarray:
    """Predicted spectral positions |sum_j m_j*freq_j| of a candidate set.

    One frequency: its harmonics up to f_max (order capped).  Several:
    all integer combinations with combined order sum|m_j| <= the multi
    cap and per-frequency order <= f_max/freq_j.  Sorted, deduplicated
    within `match_tol`.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if np.any(freqs <= 0.0):
        raise ValueError("candidate frequencies must be > 0")
    cfg = SearchConfig(
        f_max=f_max,
        match_tol=match_tol,
        order_cap_single=order_cap_single,
        order_cap_multi=order_cap_multi,
    )
    pos = _candidate_positions(freqs, cfg)
    if pos.size == 0:
        return pos
    keep = [pos[0]]
    for p in pos[1:]:
        if p - keep[-1] > match_tol:
            keep.append(p)
    return np.array(keep)


def congruence(theor, expt, match_tol: float) -> float:
    """Percentage of measured positions matched by theoretical ones.

    Each measured entry counts once, matched when some theoretical
    position lies within `match_tol`.
    """
    expt = np.atleast_1d(np.asarray(expt, dtype=float))
    if expt.size == 0:
        raise ValueError("need at least one measured position")
    theor = np.sort(np.atleast_1d(np.asarray(theor, dtype=float)))
    if theor.size == 0:
        return 0.0
    return 100.0 * float(np.mean(_matched(theor, expt, match_tol)))


def _matched(theor_sorted: np.ndarray, expt: np.ndarray, tol: float) -> np.ndarray:
    idx = np.searchsorted(theor_sorted, expt)
    left = np.abs(theor_sorted[np.clip(idx - 1, 0, theor_sorted.size - 1)] - expt)
    right = np.abs(theor_sorted[np.clip(idx, 0, theor_sorted.size - 1)] - expt)
    return np.minimum(left, right) <= tol


def _batch_congruence(
    cands: np.ndarray, expt: np.ndarray, cfg: SearchConfig
) -> np.ndarray:
    """Congruence of many same-size candidate sets at once.

    `cands` has shape (C, n_freqs >= 2).  Combination positions are one
    matrix product per chunk against the shared L1 ball of order vectors,
    which keeps whole search levels affordable even with tens of
    thousands of candidates.
    """
    ball = _l1_ball(cands.shape[1], cfg.order_cap_multi).astype(float)
    abs_ball = np.abs(ball)
    # cap_table[j][c] precomputes |m_j| <= c for every ball vector, so the
    # per-candidate axis-cap test is a row gather instead of a (B, V, n)
    # broadcast compare
    cap_table = [
        np.stack([abs_ball[:, j] <= c for c in range(cfg.order_cap_multi + 1)])
        for j in range(cands.shape[1])
    ]
    out = np.empty(cands.shape[0])
    chunk = max(1, 2_000_000 // ball.shape[0])
    for lo in range(0, cands.shape[0], chunk):
        sub = cands[lo : lo + chunk]
        pos = np.abs(sub @ ball.T)  # (B, V)
        caps = np.minimum(
            np.floor(cfg.f_max / sub), cfg.order_cap_multi
        ).astype(np.int64)
        valid = cap_table[0][caps[:, 0]]
        for j in range(1, cands.shape[1]):
            valid = valid & cap_table[j][caps[:, j]]
        valid &= (pos > 0.0) & (pos <= cfg.f_max)
        # flatten the valid positions once and range-query them per
        # measured value; orders of magnitude cheaper than comparing the
        # full (B, V) block against every measured frequency
        rows = np.nonzero(valid)[0]
        flat = pos[valid]
        order = np.argsort(flat)
        flat = flat[order]
        rows = rows[order]
        matched = np.zeros(sub.shape[0])
        flags = np.zeros(sub.shape[0], dtype=bool)
        for e in expt:
            i0 = np.searchsorted(flat, e - cfg.match_tol, side="left")
            i1 = np.searchsorted(flat, e + cfg.match_tol, side="right")
            if i1 > i0:
                flags[:] = False
                flags[rows[i0:i1]] = True
                matched += flags
        out[lo : lo + chunk] = 100.0 * matched / expt.size
    return out


# ----------------------------------------------------------------------
# peak-phase-deviation fitting

PHI_GRID_STEP = 0.01 * math.pi
PHI_GRID_MAX = 3.0 * math.pi


class _SidebandModel:
    """Vectorized theoretical sideband amplitudes of one candidate set on
    the grid points it can populate.

    Only the stationary (order-sum-zero) terms survive time averaging over
    a long record, and for those the amplitude deposited at |m . f| is the
    all-positive product prefactor * prod_j J_{m_j}(phi_j)^2, so the model
    is separable per component and independent of temporal phases."""

    def __init__(self, freqs: tuple[float, ...], grid_df: float, n_grid: int,
                 contrast: float):
        cap = default_order_cap(len(freqs))
        axis = np.arange(-cap, cap + 1, dtype=np.int64)
        grids = np.meshgrid(*([axis] * len(freqs)), indexing="ij")
        m_arr = np.stack([g.ravel() for g in grids], axis=1)
        f_m = m_arr @ np.asarray(freqs)
        idx = np.round(f_m / grid_df).astype(np.int64) - 1
        keep = (idx >= 0) & (idx < n_grid)
        self.m = m_arr[keep] + cap  # shifted to table indices
        self.cap = cap
        self.orders = axis
        # group order vectors by grid index for accumulation
        order = np.argsort(idx[keep], kind="stable")
        self.m = self.m[order]
        idx_sorted = idx[keep][order]
        self.positions, self.starts = np.unique(idx_sorted, return_index=True)
        self.pref = 0.5 * contrast * contrast

    def amplitudes(self, phis: np.ndarray) -> np.ndarray:
        """Model amplitudes at `self.positions` for trial phi vectors.

        `phis` has shape (n_trials, n_freqs); returns (n_trials, n_pos).
        """
        phis = np.atleast_2d(phis)
        if self.positions.size == 0:
            return np.zeros((phis.shape[0], 0))
        vals = np.full((phis.shape[0], self.m.shape[0]), self.pref)
        for j in range(self.m.shape[1]):
            table = _bessel_jv(self.orders, phis[:, j : j + 1]) ** 2
            vals *= np.take_along_axis(table, self.m[:, j][None, :], axis=1)
        return np.add.reduceat(vals, self.starts, axis=1)


_J1_BRANCH = np.linspace(0.0, 1.8412, 512)
_J1SQ_BRANCH = _bessel_jv(1, _J1_BRANCH) ** 2


def _fundamental_amplitude_seed(
    model: _SidebandModel,
    freqs: tuple[float, ...],
    spectrum: AmplitudeSpectrum,
    meas: np.ndarray,
) -> np.ndarray:
    """Initial phi vector solved from the fundamental-line amplitudes.

    amp(f_j) = pref * J1(phi_j)^2 * prod_{k != j} J0(phi_k)^2, inverted by
    fixed-point iteration on the rising branch of J1^2.
    """
    amp = np.zeros(len(freqs))
    for j, f in enumerate(freqs):
        idx = int(round(f / spectrum.df)) - 1
        if 0 <= idx < meas.size:
            amp[j] = meas[idx]
    phis = np.full(len(freqs), 0.3)
    for _ in range(40):
        j0sq = _bessel_jv(0, phis) ** 2
        prod = np.prod(j0sq)
        others = np.where(j0sq > 1e-12, prod / j0sq, 0.0)
        target = np.clip(
            amp / (model.pref * np.maximum(others, 1e-12)),
            _J1SQ_BRANCH[1],
            _J1SQ_BRANCH[-1],
        )
        new = np.interp(target, _J1SQ_BRANCH, _J1_BRANCH)
        if np.max(np.abs(new - phis)) < 1e-10:
            phis = new
            break
        phis = new
    return np.maximum(phis, PHI_GRID_STEP)


def fit_peak_phase_deviations(
    spectrum: AmplitudeSpectrum,
    freqs,
    contrast: float,
    period: float,
    residual_warn: float = 0.5,
) -> IdentificationResult:
    """Fit phi_j by matching theoretical sideband amplitudes to `spectrum`.

    Frequencies and the fringe contrast stay fixed; each phi_j is scanned
    on a coarse grid over (0, 3*pi] and refined by bounded minimization,
    cycling through the components (largest first after the first sweep)
    until the residual stops improving.  The residual is evaluated over
    the spectrally significant grid points — the candidate's possible
    sideband positions plus every measured point above the robust noise
    threshold — and normalized by the measured power there, so results
    are comparable between candidate sets.

    Temporal phases are not identifiable from a magnitude spectrum and
    are returned as 0; `reconstruct.optimize` recovers them.
    """
    freqs = tuple(float(f) for f in np.atleast_1d(np.asarray(freqs, dtype=float)))
    model = _SidebandModel(freqs, spectrum.df, spectrum.amplitudes.size, contrast)
    meas = spectrum.amplitudes
    floor = np.median(meas)
    spread = 1.4826 * np.median(np.abs(meas - floor))
    significant = np.flatnonzero(meas > floor + 3.0 * spread)
    compare = np.union1d(model.positions, significant).astype(np.int64)
    meas_cmp = meas[compare]
    norm = float(np.sum(meas_cmp**2))
    if norm <= 0.0:
        norm = 1.0
    # map the model's position list into the comparison vector
    slot = np.searchsorted(compare, model.positions)

    def residual_rows(phi_rows: np.ndarray) -> np.ndarray:
        theor = np.zeros((phi_rows.shape[0], compare.size))
        theor[:, slot] = model.amplitudes(phi_rows)
        return np.sum((theor - meas_cmp) ** 2, axis=1) / norm

    grid = np.arange(PHI_GRID_STEP, PHI_GRID_MAX + 0.5 * PHI_GRID_STEP,
                     PHI_GRID_STEP)

    def descend(start: np.ndarray) -> tuple[np.ndarray, float]:
        phis = start.copy()
        best = float(residual_rows(phis[None, :])[0])
        for sweep in range(6):
            order = np.argsort(-phis) if sweep else np.arange(len(freqs))
            improved = best
            for j in order:
                trials = np.tile(phis, (grid.size, 1))
                trials[:, j] = grid
                res = residual_rows(trials)
                i_best = int(np.argmin(res))

                def scalar(phi_j: float, j=j) -> float:
                    row = phis.copy()
                    row[j] = phi_j
                    return float(residual_rows(row[None, :])[0])

                lo = grid[max(i_best - 1, 0)]
                hi = grid[min(i_best + 1, grid.size - 1)]
                refined = minimize_scalar(
                    scalar, bounds=(lo, hi), method="bounded",
                    options={"xatol": 1e-6},
                )
                if refined.fun <= res[i_best]:
                    phis[j] = float(refined.x)
                    best = float(refined.fun)
                else:
                    phis[j] = float(grid[i_best])
                    best = float(res[i_best])
            if improved - best < 1e-12:
                break
        return phis, best

    # The per-axis scans are global but the objective couples the phi_j
    # through the J0^2 factors of the other components, so coordinate
    # descent can stall in a joint local minimum; start it from several
    # seeds and keep the best outcome.
    seeds = [
        np.full(len(freqs), PHI_GRID_STEP),
        np.full(len(freqs), 0.5 * math.pi),
        _fundamental_amplitude_seed(model, freqs, spectrum, meas),
    ]
    phis, best = min(
        (descend(seed) for seed in seeds), key=lambda pb: pb[1]
    )

    comps = tuple(
        PerturbationComponent(freq=f, peak_phase_dev=float(p))
        for f, p in zip(freqs, phis)
    )
    return IdentificationResult(
        components=comps,
        congruence=float("nan"),
        fit_residual=best,
        contrast_used=float(contrast),
        period_used=float(period),
        poor_fit=best > residual_warn,
    )


# ----------------------------------------------------------------------
# the search proper


def search(
    peaks: PeakList,
    cfg: SearchConfig,
    spectrum: AmplitudeSpectrum | None = None,
    contrast: float | None = None,
    period: float | None = None,
) -> IdentificationResult:
    """Identify the modulation frequency set explaining a peak list.

    With `spectrum` (plus `contrast` and `period`) given, accepted
    candidates are ranked by their amplitude-fit residual; without it the
    ranking falls back to congruence (then fewer frequencies, then lower
    total) and the returned components carry phi_j = 0.

    Raises `IdentificationError` when every level up to `cfg.max_freqs`
    is exhausted without an accept; the error carries the best candidate.
    """
    if len(peaks) == 0:
        raise ValueError("peak list is empty; nothing to identify")
    expt = np.sort(peaks.frequencies)
    level: list[tuple[float, ...]] = [(float(f),) for f in expt]
    best_cand: tuple[float, ...] = ()
    best_m = -1.0

    for n_freqs in range(1, cfg.max_freqs + 1):
        if n_freqs == 1:
            ms = []
            for cand in level:
                pos = _candidate_positions(np.array(cand), cfg)
                if pos.size == 0:
                    ms.append(0.0)
                    continue
                ms.append(
                    100.0 * float(np.mean(_matched(pos, expt, cfg.match_tol)))
                )
        else:
            ms = _batch_congruence(np.array(level), expt, cfg).tolist()

        accepted: list[tuple[tuple[float, ...], float]] = []
        possible: list[tuple[float, ...]] = []
        for cand, m in zip(level, ms):
            if m > best_m:
                best_m, best_cand = m, cand
            if m >= cfg.accept_threshold:
                accepted.append((cand, m))
            elif m > cfg.reject_threshold:
                possible.append(cand)

        if accepted:
            return _select(accepted, cfg, spectrum, contrast, period)

        uniq = sorted({f for cand in possible for f in cand})
        if n_freqs == cfg.max_freqs or len(uniq) < n_freqs + 1:
            break
        n_next = math.comb(len(uniq), n_freqs + 1)
        if n_next > cfg.max_candidates:
            raise IdentificationError(
                f"level {n_freqs + 1} would test {n_next} candidates "
                f"(bound {cfg.max_candidates})",
                best_freqs=best_cand,
                best_congruence=best_m,
            )
        level = list(itertools.combinations(uniq, n_freqs + 1))

    raise IdentificationError(
        f"no candidate reached {cfg.accept_threshold:.0f}% congruence "
        f"within {cfg.max_freqs} frequencies "
        f"(best: {best_cand} at {best_m:.1f}%)",
        best_freqs=best_cand,
        best_congruence=best_m,
    )


def _select(
    accepted: list[tuple[tuple[float, ...], float]],
    cfg: SearchConfig,
    spectrum: AmplitudeSpectrum | None,
    contrast: float | None,
    period: float | None,
) -> IdentificationResult:
    """Pick the winning accepted candidate."""
    if spectrum is not None and contrast is not None:
        ranked = []
        for cand, m in accepted:
            fit = fit_peak_phase_deviations(
                spectrum, cand, contrast, period if period else float("nan"),
                cfg.residual_warn,
            )
            fit.congruence = m
            ranked.append((fit.fit_residual, len(cand), sum(cand), fit))
        ranked.sort(key=lambda r: r[:3])
        return ranked[0][3]

    accepted.sort(key=lambda cm: (-cm[1], len(cm[0]), sum(cm[0])))
    cand, m = accepted[0]
    comps = tuple(
        PerturbationComponent(freq=f, peak_phase_dev=0.0) for f in cand
    )
    return IdentificationResult(
        components=comps,
        congruence=m,
        fit_residual=float("nan"),
        contrast_used=float("nan") if contrast is None else float(contrast),
        period_used=float("nan") if period is None else float(period),
    )
