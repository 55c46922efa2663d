"""Command-line interface.

Subcommands mirror the library stages: simulate, correlate, spectrum,
identify, reconstruct, plus the one-shot pipeline and the response
sweep.  Configuration comes from a JSON file (--config, or the
FRINGECORR_CONFIG environment variable) with individual flags taking
precedence; results are printed as JSON so they can be piped onward.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import correlate, identify, io, pipeline, reconstruct, spectra
from .simulate import generate_events

CONFIG_ENV = "FRINGECORR_CONFIG"


def _load_config(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _parse_component(text: str) -> dict:
    parts = [float(p) for p in text.split(",")]
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(
            "component must be 'freq,peak_phase_dev[,phase]'"
        )
    d = {"freq": parts[0], "peak_phase_dev": parts[1]}
    if len(parts) == 3:
        d["phase"] = parts[2]
    return d


def _pipeline_config(args, extra_overrides: dict | None = None) -> pipeline.PipelineConfig:
    cfg = _load_config(getattr(args, "config", None))
    for key in (
        "contrast", "period", "rate", "duration", "window", "x_extent",
        "seed", "du", "dtau", "tau_max", "df", "f_max", "sigma_mult",
        "accept_threshold", "reject_threshold", "match_tol", "max_freqs",
    ):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    comps = getattr(args, "component", None)
    if comps:
        cfg["components"] = comps
    if extra_overrides:
        cfg.update(extra_overrides)
    return pipeline.PipelineConfig.from_dict(cfg)


def _read_events(args):
    return io.read_events(
        args.events, duration=args.duration, window=args.window
    )


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--events", required=True, help="event CSV (x_mm,y_mm,t_s)")
    p.add_argument("--duration", type=float,
                   help="acquisition time in s (default: inferred from max t)")
    p.add_argument("--window", type=float,
                   help="detector window in mm (default: inferred from max y)")


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--du", type=float, default=0.09, help="u bin in mm")
    p.add_argument("--dtau", type=float, default=5e-5, help="tau bin in s")
    p.add_argument("--tau-max", type=float, dest="tau_max", default=10.0,
                   help="correlation record length in s")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fringecorr",
        description="Correlation analysis of dephased fringe event data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic dephased events")
    p.add_argument("--config", help="pipeline config JSON")
    for name, typ in (
        ("contrast", float), ("period", float), ("rate", float),
        ("duration", float), ("window", float), ("x-extent", float),
        ("seed", int),
    ):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--component", action="append", type=_parse_component,
                   metavar="FREQ,PDEV[,PHASE]",
                   help="dephasing component (repeatable)")
    p.add_argument("--out", required=True, help="output event CSV")

    p = sub.add_parser("correlate", help="pair correlation and contrast fits")
    _add_source_flags(p)
    _add_grid_flags(p)
    p.add_argument("--antinodes-period", type=float, dest="antinodes_period",
                   help="restrict to antinode rows of this period (mm)")
    p.add_argument("--export-grid", dest="export_grid",
                   help="write the normalized grid as CSV")
    p.add_argument("--fit", choices=("zero-lag", "integrated", "both"),
                   default="both")

    p = sub.add_parser("spectrum", help="temporal amplitude spectrum and peaks")
    _add_source_flags(p)
    _add_grid_flags(p)
    p.add_argument("--period", type=float,
                   help="fringe period in mm (default: zero-lag fit)")
    p.add_argument("--df", type=float, default=0.1)
    p.add_argument("--f-max", type=float, dest="f_max", default=2000.0)
    p.add_argument("--sigma-mult", type=float, dest="sigma_mult",
                   help="peak threshold in sigma (default: adaptive)")
    p.add_argument("--out", help="write the spectrum as CSV")

    p = sub.add_parser("identify", help="search dephasing frequencies in a spectrum")
    p.add_argument("--spectrum", required=True, help="spectrum CSV")
    p.add_argument("--contrast", type=float, required=True,
                   help="zero-lag fringe contrast")
    p.add_argument("--period", type=float, help="fringe period in mm")
    p.add_argument("--sigma-mult", type=float, dest="sigma_mult",
                   help="peak threshold in sigma (default: adaptive)")
    p.add_argument("--accept", type=float, default=80.0)
    p.add_argument("--reject", type=float, default=10.0)
    p.add_argument("--match-tol", type=float, dest="match_tol")
    p.add_argument("--max-freqs", type=int, dest="max_freqs", default=4)
    p.add_argument("--f-max", type=float, dest="f_max",
                   help="search band (default: spectrum upper edge)")

    p = sub.add_parser("reconstruct", help="undo a dephasing in event data")
    _add_source_flags(p)
    p.add_argument("--period", type=float, required=True)
    p.add_argument("--component", action="append", type=_parse_component,
                   metavar="FREQ,PDEV[,PHASE]")
    p.add_argument("--report", help="pipeline report JSON with identified components")
    p.add_argument("--refine", action=argparse.BooleanOptionalAction,
                   default=True, help="refine parameters by contrast maximization")
    p.add_argument("--out", help="write reconstructed events CSV")

    p = sub.add_parser("pipeline", help="full analysis chain")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--events", help="analyse existing events instead of simulating")
    p.add_argument("--duration", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("sweep", help="spectral response sweep")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out", help="write the sweep report JSON here")

    args = parser.parse_args(argv)
    return _COMMANDS[args.command](args)


def _cmd_simulate(args) -> int:
    cfg = _pipeline_config(args)
    events = generate_events(cfg.sim_config())
    io.write_events(args.out, events)
    _emit({
        "n_events": len(events),
        "out": str(args.out),
        "duration_s": events.duration,
        "window_mm": events.window,
    })
    return 0


def _cmd_correlate(args) -> int:
    events = _read_events(args)
    out: dict = {"n_events": len(events)}
    if args.fit in ("integrated", "both"):
        fit = correlate.fit_integrated(events)
        out["integrated_fit"] = pipeline._fit_dict(fit)
    u_rows = None
    if args.antinodes_period:
        u_rows = spectra.antinode_targets(args.antinodes_period, events.window)
    if args.fit in ("zero-lag", "both") or args.export_grid:
        tau_max = args.tau_max if args.export_grid else args.dtau
        grid = correlate.pair_histogram(
            events, du=args.du, dtau=args.dtau, tau_max=tau_max, u_rows=u_rows
        )
        if args.fit in ("zero-lag", "both") and u_rows is None:
            out["zero_lag_fit"] = pipeline._fit_dict(correlate.fit_zero_lag(grid))
        if args.export_grid:
            io.write_grid(args.export_grid, grid)
            out["grid"] = str(args.export_grid)
    _emit(out)
    return 0


def _cmd_spectrum(args) -> int:
    events = _read_events(args)
    period = args.period
    if period is None:
        grid_a = correlate.pair_histogram(
            events, du=args.du, dtau=args.dtau, tau_max=args.dtau
        )
        period = correlate.fit_zero_lag(grid_a).period
    rows = spectra.antinode_targets(period, events.window)
    grid = correlate.pair_histogram(
        events, du=args.du, dtau=args.dtau, tau_max=args.tau_max, u_rows=rows
    )
    spec = spectra.temporal_spectrum(grid, period, df=args.df, f_max=args.f_max)
    peaks = spectra.detect_peaks(spec, args.sigma_mult)
    if args.out:
        io.write_spectrum(args.out, spec)
    _emit({
        "period_mm": period,
        "df_hz": spec.df,
        "n_rows_averaged": spec.n_rows_averaged,
        "resolution_flagged": spec.resolution_flagged,
        "noise_floor": peaks.noise_floor,
        "threshold": peaks.threshold,
        "peaks": [
            {"freq_hz": p.freq, "amplitude": p.amplitude, "snr": p.snr}
            for p in peaks.peaks
        ],
        "out": args.out,
    })
    return 0


def _cmd_identify(args) -> int:
    spec = io.read_spectrum(args.spectrum)
    peaks = spectra.detect_peaks(spec, args.sigma_mult)
    if len(peaks) == 0:
        _emit({"status": "no peaks above threshold"})
        return 1
    cfg = identify.SearchConfig(
        f_max=args.f_max if args.f_max else spec.f_max,
        match_tol=args.match_tol if args.match_tol else spec.df,
        accept_threshold=args.accept,
        reject_threshold=args.reject,
        max_freqs=args.max_freqs,
    )
    try:
        res = identify.search(
            peaks, cfg, spectrum=spec, contrast=args.contrast,
            period=args.period,
        )
    except identify.IdentificationError as exc:
        _emit({
            "status": f"failed: {exc}",
            "best_freqs_hz": list(exc.best_freqs),
            "best_congruence_percent": exc.best_congruence,
        })
        return 1
    _emit({
        "status": "ok",
        "components": pipeline._components_list(res.components),
        "congruence_percent": res.congruence,
        "fit_residual": res.fit_residual,
        "poor_fit": res.poor_fit,
    })
    return 0


def _cmd_reconstruct(args) -> int:
    events = _read_events(args)
    comps = []
    if args.report:
        rep = io.read_report(args.report)
        ident = rep["stages"].get("identification", {})
        for c in ident.get("components", []):
            comps.append(pipeline.component_from_dict({
                "freq": c["freq_hz"],
                "peak_phase_dev": c["peak_phase_dev_rad"],
                "phase": c["phase_rad"],
            }))
    for d in args.component or ():
        comps.append(pipeline.component_from_dict(d))
    if not comps:
        print("no components given (--component or --report)", file=sys.stderr)
        return 2
    out: dict = {}
    if args.refine:
        res = reconstruct.optimize(events, comps, args.period)
        comps = list(res.components)
        out.update({
            "improved": res.improved,
            "n_sweeps": res.n_sweeps,
            "contrast_raw": res.contrast_raw,
            "contrast": res.contrast,
        })
    rec = reconstruct.reconstruct_events(events, comps, args.period)
    fit = correlate.fit_integrated(rec)
    out.update({
        "components": pipeline._components_list(comps),
        "fit": pipeline._fit_dict(fit),
    })
    if args.out:
        io.write_events(args.out, rec)
        out["out"] = str(args.out)
    _emit(out)
    return 0


def _cmd_pipeline(args) -> int:
    overrides = {}
    cfg = _pipeline_config(args, overrides)
    events = None
    if args.events:
        events = io.read_events(
            args.events, duration=args.duration, window=args.window
        )
    report = pipeline.run_pipeline(cfg, events=events)
    if args.out:
        io.write_report(args.out, report)
    _emit(report)
    return 0


def _cmd_sweep(args) -> int:
    cfg = pipeline.SweepConfig.from_dict(json.loads(Path(args.config).read_text()))
    report = pipeline.run_sweep(cfg)
    if args.out:
        io.write_report(args.out, report)
    _emit(report)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "correlate": _cmd_correlate,
    "spectrum": _cmd_spectrum,
    "identify": _cmd_identify,
    "reconstruct": _cmd_reconstruct,
    "pipeline": _cmd_pipeline,
    "sweep": _cmd_sweep,
}


if __name__ == "__main__":
    raise SystemExit(main())
