"""Correlation analysis of vibrationally dephased fringe event data.

Event streams from a washed-out interference pattern still carry the
unperturbed fringe in their second-order correlations.  This package
simulates such streams, extracts the pair correlation g2(u, tau), reads
the unperturbed contrast off the zero-lag fringe, identifies unknown
periodic dephasing components from the correlation's temporal spectrum,
and undoes them event by event.
"""

from .correlate import (
    CorrelationGrid,
    FitError,
    FringeFit,
    fit_integrated,
    fit_zero_lag,
    pair_histogram,
)
from .identify import (
    IdentificationError,
    IdentificationResult,
    SearchConfig,
    congruence,
    expected_components,
    fit_peak_phase_deviations,
    search,
)
from .pipeline import PipelineConfig, SweepConfig, run_pipeline, run_sweep
from .reconstruct import (
    ReconstructionResult,
    fringe_displacement,
    optimize,
    reconstruct_events,
)
from .simulate import EventList, SimConfig, generate_events
from .spectra import (
    AmplitudeSpectrum,
    Peak,
    PeakList,
    antinode_targets,
    detect_peaks,
    temporal_spectrum,
)
from .theory import (
    EnumerationOverflowError,
    FringeModel,
    Multiplet,
    PerturbationComponent,
    approx_g2,
    bessel_amplitude,
    binning_attenuation,
    enumerate_multiplets,
    explicit_g2,
    fringe_density,
    modulation_amplitude,
    phase_shift,
    reconstruction_sensitivity,
    theoretical_spectrum,
    washout_factor,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeSpectrum",
    "CorrelationGrid",
    "EnumerationOverflowError",
    "EventList",
    "FitError",
    "FringeFit",
    "FringeModel",
    "IdentificationError",
    "IdentificationResult",
    "Multiplet",
    "Peak",
    "PeakList",
    "PerturbationComponent",
    "PipelineConfig",
    "ReconstructionResult",
    "SearchConfig",
    "SimConfig",
    "SweepConfig",
    "antinode_targets",
    "approx_g2",
    "bessel_amplitude",
    "binning_attenuation",
    "congruence",
    "detect_peaks",
    "enumerate_multiplets",
    "expected_components",
    "explicit_g2",
    "fit_integrated",
    "fit_peak_phase_deviations",
    "fit_zero_lag",
    "fringe_density",
    "fringe_displacement",
    "generate_events",
    "modulation_amplitude",
    "optimize",
    "pair_histogram",
    "phase_shift",
    "reconstruct_events",
    "reconstruction_sensitivity",
    "run_pipeline",
    "run_sweep",
    "search",
    "temporal_spectrum",
    "theoretical_spectrum",
    "washout_factor",
]
