"""End-to-end analysis pipeline and spectral response sweeps.

One `run_pipeline` call covers the full chain: (optional) event
simulation, washed-out integrated fit, zero-lag contrast fit, antinode
temporal spectrum, peak detection, frequency identification, and fringe
reconstruction with optional parameter refinement.  Two correlation
passes keep memory bounded: a single-tau-bin pass over all u rows for
the zero-lag fit, and a full-record pass restricted to the antinode rows
for the spectrum.

Each stage is timed and its failure recorded without aborting the rest
where dependencies allow.  The resulting report is a plain dict; with a
fixed seed it is byte-identical between runs except for the "timings"
section.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from typing import Any

import numpy as np
import scipy

from . import correlate, identify, reconstruct, spectra
from .simulate import EventList, SimConfig, generate_events
from .theory import FringeModel, PerturbationComponent, binning_attenuation, washout_factor

__all__ = [
    "PipelineConfig",
    "SweepConfig",
    "run_pipeline",
    "run_sweep",
    "component_from_dict",
]


def _package_version() -> str:
    try:
        return metadata.version("fringecorr")
    except metadata.PackageNotFoundError:
        return "unknown"


def component_from_dict(d: dict) -> PerturbationComponent:
    """Build a component from {"freq": ..., "peak_phase_dev": ..., "phase": ...}."""
    allowed = {"freq", "peak_phase_dev", "phase"}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown component keys: {sorted(unknown)}")
    return PerturbationComponent(**d)


@dataclass(frozen=True)
class PipelineConfig:
    """Flat bag of pipeline knobs; defaults follow the reference setup
    (2.6 mm fringe at 60 % contrast, 2 kHz events, 90 um / 50 us bins,
    0.1 Hz spectral grid up to 2 kHz)."""

    # fringe + synthetic source (used when no events are supplied)
    contrast: float = 0.6
    period: float = 2.6
    mean_intensity: float = 1.0
    spatial_phase: float = 0.0
    rate: float = 2000.0
    duration: float = 20.0
    window: float | None = None  # None -> 10 periods
    x_extent: float = 1.0
    seed: int = 0
    components: tuple[PerturbationComponent, ...] = ()
    # correlation grids
    du: float = 0.09
    dtau: float = 5e-5
    tau_max: float = 10.0
    # spectrum + peaks
    df: float = 0.1
    f_max: float = 2000.0
    sigma_mult: float | None = None  # None -> adaptive (see detect_peaks)
    # identification
    accept_threshold: float = 80.0
    reject_threshold: float = 10.0
    match_tol: float | None = None  # None -> df
    max_freqs: int = 4
    # reconstruction
    reconstruct: bool = True
    refine: bool = True
    refine_tol: float = 1e-3

    def resolved_window(self) -> float:
        return 10.0 * self.period if self.window is None else self.window

    def resolved_match_tol(self) -> float:
        return self.df if self.match_tol is None else self.match_tol

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            k: getattr(self, k)
            for k in self.__dataclass_fields__
            if k != "components"
        }
        d["window"] = self.resolved_window()
        d["match_tol"] = self.resolved_match_tol()
        d["components"] = [
            {"freq": c.freq, "peak_phase_dev": c.peak_phase_dev, "phase": c.phase}
            for c in self.components
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        comps = tuple(
            component_from_dict(c) for c in d.pop("components", ())
        )
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(components=comps, **d)

    def sim_config(self) -> SimConfig:
        fringe = FringeModel(
            contrast=self.contrast,
            period=self.period,
            mean_intensity=self.mean_intensity,
            spatial_phase=self.spatial_phase,
        )
        return SimConfig(
            fringe=fringe,
            components=self.components,
            rate=self.rate,
            duration=self.duration,
            window=self.resolved_window(),
            x_extent=self.x_extent,
            seed=self.seed,
        )


def _config_sha256(cfg: PipelineConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _fit_dict(fit: correlate.FringeFit) -> dict:
    d = {
        "contrast": fit.contrast,
        "period_mm": fit.period,
        "phase_rad": fit.phase,
        "mean": fit.mean,
        "ci95": dict(fit.ci95),
        "n_points": fit.n_points,
        "residual_rms": fit.residual_rms,
    }
    if fit.attenuation is not None:
        d["binning_attenuation"] = fit.attenuation
        d["contrast_corrected"] = fit.contrast_corrected
    return d


def _components_list(comps) -> list[dict]:
    return [
        {"freq_hz": c.freq, "peak_phase_dev_rad": c.peak_phase_dev,
         "phase_rad": c.phase}
        for c in comps
    ]


def run_pipeline(
    cfg: PipelineConfig, events: EventList | None = None
) -> dict:
    """Run the full analysis chain; returns the report dict.

    When `events` is None they are simulated from the config (the
    configured components then also yield predicted washout/attenuation
    values in the report for comparison).  Supplied events override the
    config's source parameters.
    """
    timings: dict[str, float] = {}
    report: dict[str, Any] = {
        "config": cfg.to_dict(),
        "provenance": {
            "config_sha256": _config_sha256(cfg),
            "seed": cfg.seed,
            "versions": {
                "fringecorr": _package_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        },
        "stages": {},
        "timings": timings,
    }
    stages = report["stages"]

    def timed(name: str, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            timings[name] = time.perf_counter() - t0

    # --- source -------------------------------------------------------
    if events is None:
        try:
            events = timed("simulate", lambda: generate_events(cfg.sim_config()))
        except Exception as exc:  # config errors surface here
            stages["simulate"] = {"status": f"failed: {exc}"}
            report["timings"]["completed_utc"] = _utcnow()
            return report
        stages["simulate"] = {"status": "ok", "n_events": len(events)}
        if cfg.components:
            wf = washout_factor(cfg.components)
            stages["simulate"]["predicted"] = {
                "washout_factor": wf,
                "contrast_washed": abs(wf) * cfg.contrast,
                "binning_attenuation": binning_attenuation(
                    cfg.components, cfg.dtau
                ),
            }
    else:
        stages["simulate"] = {"status": "skipped (events supplied)",
                              "n_events": len(events)}
    report["provenance"]["n_events"] = len(events)
    report["provenance"]["duration_s"] = events.duration
    report["provenance"]["window_mm"] = events.window

    # --- washed-out integrated fit -------------------------------------
    try:
        fit_int = timed(
            "integrated_fit", lambda: correlate.fit_integrated(events)
        )
        stages["integrated_fit"] = {"status": "ok", **_fit_dict(fit_int)}
    except Exception as exc:
        fit_int = None
        stages["integrated_fit"] = {"status": f"failed: {exc}"}

    # --- zero-lag contrast fit ------------------------------------------
    try:
        grid_a = timed(
            "correlate_zero_lag",
            lambda: correlate.pair_histogram(
                events, du=cfg.du, dtau=cfg.dtau, tau_max=cfg.dtau
            ),
        )
        fit_zero = timed(
            "zero_lag_fit", lambda: correlate.fit_zero_lag(grid_a)
        )
        stages["zero_lag_fit"] = {"status": "ok", **_fit_dict(fit_zero)}
    except Exception as exc:
        stages["zero_lag_fit"] = {"status": f"failed: {exc}"}
        report["timings"]["completed_utc"] = _utcnow()
        return report

    period_fit = fit_zero.period
    k_fit = fit_zero.wavenumber

    # --- temporal spectrum at the antinode rows -------------------------
    try:
        rows = spectra.antinode_targets(period_fit, events.window)
        grid_b = timed(
            "correlate_antinodes",
            lambda: correlate.pair_histogram(
                events, du=cfg.du, dtau=cfg.dtau, tau_max=cfg.tau_max,
                u_rows=rows,
            ),
        )
        spec = timed(
            "spectrum",
            lambda: spectra.temporal_spectrum(
                grid_b, period_fit, df=cfg.df, f_max=cfg.f_max
            ),
        )
        peaks = timed(
            "detect_peaks", lambda: spectra.detect_peaks(spec, cfg.sigma_mult)
        )
        stages["spectrum"] = {
            "status": "ok",
            "df_hz": spec.df,
            "f_max_hz": spec.f_max,
            "n_rows_averaged": spec.n_rows_averaged,
            "resolution_flagged": spec.resolution_flagged,
        }
        stages["peaks"] = {
            "status": "ok",
            "noise_floor": peaks.noise_floor,
            "threshold": peaks.threshold,
            "peaks": [
                {"freq_hz": p.freq, "amplitude": p.amplitude, "snr": p.snr}
                for p in peaks.peaks
            ],
        }
    except Exception as exc:
        stages["spectrum"] = {"status": f"failed: {exc}"}
        report["timings"]["completed_utc"] = _utcnow()
        return report

    # --- identification ---------------------------------------------------
    if len(peaks) == 0:
        stages["identification"] = {
            "status": "skipped (no peaks above threshold; pattern "
                      "consistent with an unperturbed fringe)",
        }
        report["timings"]["completed_utc"] = _utcnow()
        return report

    search_cfg = identify.SearchConfig(
        f_max=cfg.f_max,
        match_tol=cfg.resolved_match_tol(),
        accept_threshold=cfg.accept_threshold,
        reject_threshold=cfg.reject_threshold,
        max_freqs=cfg.max_freqs,
    )
    try:
        ident = timed(
            "identify",
            lambda: identify.search(
                peaks, search_cfg, spectrum=spec,
                contrast=fit_zero.contrast, period=period_fit,
            ),
        )
    except identify.IdentificationError as exc:
        stages["identification"] = {
            "status": f"failed: {exc}",
            "best_freqs_hz": list(exc.best_freqs),
            "best_congruence_percent": exc.best_congruence,
        }
        report["timings"]["completed_utc"] = _utcnow()
        return report

    att = binning_attenuation(ident.components, cfg.dtau)
    stages["identification"] = {
        "status": "ok",
        "components": _components_list(ident.components),
        "congruence_percent": ident.congruence,
        "fit_residual": ident.fit_residual,
        "poor_fit": ident.poor_fit,
        "contrast_used": ident.contrast_used,
        "binning_attenuation": att,
        "contrast_unperturbed_estimate": fit_zero.contrast / att,
    }

    # --- reconstruction -----------------------------------------------------
    if not cfg.reconstruct:
        stages["reconstruction"] = {"status": "skipped (disabled)"}
        report["timings"]["completed_utc"] = _utcnow()
        return report
    try:
        comps = ident.components
        if cfg.refine:
            refined = timed(
                "refine",
                lambda: reconstruct.optimize(
                    events, comps, period_fit, k_hint=k_fit,
                    tol=cfg.refine_tol,
                ),
            )
            comps = refined.components
            stages["reconstruction"] = {
                "status": "ok",
                "refined": True,
                "improved": refined.improved,
                "n_sweeps": refined.n_sweeps,
                "contrast_raw": refined.contrast_raw,
                "contrast_initial": refined.contrast_initial,
                "contrast": refined.contrast,
                "components": _components_list(comps),
                "fit": _fit_dict(refined.fit) if refined.fit else None,
            }
        else:
            rec_events = reconstruct.reconstruct_events(
                events, comps, period_fit
            )
            fit_rec = timed(
                "reconstruct_fit",
                lambda: correlate.fit_integrated(rec_events, k_hint=k_fit),
            )
            stages["reconstruction"] = {
                "status": "ok",
                "refined": False,
                "contrast_raw": fit_int.contrast if fit_int else None,
                "contrast": fit_rec.contrast,
                "components": _components_list(comps),
                "fit": _fit_dict(fit_rec),
            }
    except Exception as exc:
        stages["reconstruction"] = {"status": f"failed: {exc}"}

    report["timings"]["completed_utc"] = _utcnow()
    return report


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


# ----------------------------------------------------------------------
# spectral response sweep


@dataclass(frozen=True)
class SweepConfig:
    """Scan of the interferometer's vibrational response.

    At each scan frequency one component is driven with a peak phase
    deviation from the response model (`baseline` plus Lorentzian
    `resonances` with keys freq_hz/width_hz/peak_phase_dev); any
    `fixed_lines` act at every scan point.  Each point gets its own seed
    (base seed + index) and its own pipeline run reduced to the contrast
    fits, or the full identification chain with
    `include_identification`.
    """

    frequencies: tuple[float, ...]
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    baseline: float = 0.0
    resonances: tuple[dict, ...] = ()
    fixed_lines: tuple[dict, ...] = ()
    include_identification: bool = False

    def response(self, freq: float) -> float:
        """Driven peak phase deviation at a scan frequency (rad)."""
        dev = self.baseline
        for r in self.resonances:
            hw = 0.5 * r["width_hz"]
            dev += r["peak_phase_dev"] * hw * hw / (
                (freq - r["freq_hz"]) ** 2 + hw * hw
            )
        return dev

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        pipe = PipelineConfig.from_dict(d.pop("pipeline", {}))
        d["frequencies"] = tuple(float(f) for f in d.pop("frequencies"))
        d["resonances"] = tuple(d.pop("resonances", ()))
        d["fixed_lines"] = tuple(d.pop("fixed_lines", ()))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(pipeline=pipe, **d)


def run_sweep(cfg: SweepConfig) -> dict:
    """Measure washed-out and zero-lag contrast across scan frequencies.

    Returns {"config": ..., "rows": [...]} with one row per frequency:
    the driven phase deviation, predicted washed contrast, measured
    integrated and zero-lag contrasts; failures are recorded per row.
    """
    if not cfg.frequencies:
        raise ValueError("sweep needs at least one scan frequency")
    base = cfg.pipeline
    fixed = tuple(component_from_dict(d) for d in cfg.fixed_lines)
    rows: list[dict] = []
    t0 = time.perf_counter()
    for i, freq in enumerate(cfg.frequencies):
        dev = cfg.response(freq)
        comps = fixed
        if dev > 0.0:
            comps = (PerturbationComponent(freq=freq, peak_phase_dev=dev),) + fixed
        row: dict[str, Any] = {
            "freq_hz": freq,
            "peak_phase_dev_rad": dev,
            "contrast_washed_predicted":
                abs(washout_factor(comps)) * base.contrast,
        }
        point = PipelineConfig.from_dict(
            {**{k: v for k, v in base.to_dict().items() if k != "components"},
             "seed": base.seed + i,
             "components": _components_list_to_config(comps)}
        )
        try:
            if cfg.include_identification:
                rep = run_pipeline(point)
                row["report"] = {
                    k: v for k, v in rep["stages"].items()
                }
                zl = rep["stages"].get("zero_lag_fit", {})
                fi = rep["stages"].get("integrated_fit", {})
                row["contrast_integrated"] = fi.get("contrast")
                row["contrast_zero_lag"] = zl.get("contrast")
            else:
                events = generate_events(point.sim_config())
                fit_int = correlate.fit_integrated(events)
                grid = correlate.pair_histogram(
                    events, du=point.du, dtau=point.dtau, tau_max=point.dtau
                )
                fit_zero = correlate.fit_zero_lag(grid)
                row["contrast_integrated"] = fit_int.contrast
                row["contrast_zero_lag"] = fit_zero.contrast
                row["period_integrated_mm"] = fit_int.period
        except Exception as exc:
            row["error"] = str(exc)
        rows.append(row)
    return {
        "config": {
            "frequencies": list(cfg.frequencies),
            "baseline": cfg.baseline,
            "resonances": [dict(r) for r in cfg.resonances],
            "fixed_lines": [dict(r) for r in cfg.fixed_lines],
            "include_identification": cfg.include_identification,
            "pipeline": base.to_dict(),
        },
        "rows": rows,
        "timings": {"total": time.perf_counter() - t0,
                    "completed_utc": _utcnow()},
    }


def _components_list_to_config(comps) -> list[dict]:
    return [
        {"freq": c.freq, "peak_phase_dev": c.peak_phase_dev, "phase": c.phase}
        for c in comps
    ]
