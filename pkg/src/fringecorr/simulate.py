"""Synthetic event streams from a dephased fringe model.

Events arrive as a homogeneous Poisson process in time; each event's
transverse position y is drawn from the instantaneous fringe density by
rejection sampling against the envelope f0*(1 + K0).  The x coordinate is
uninformative and uniform.  Everything is driven by one seeded
`numpy.random.Generator`, so a (config, seed) pair reproduces the stream
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .theory import FringeModel, PerturbationComponent, phase_shift

#: refuse to generate more than this many events in one call
MAX_EVENTS = 20_000_000


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    `rate` is the mean event rate in events/s, `duration` the acquisition
    time T in s and `window` the detector extent Y in mm.  By default the
    window must hold an integer number of fringe periods so that the
    marginal y-density of the unperturbed pattern is exactly flat; pass
    ``allow_partial_fringe=True`` to lift that.
    """

    fringe: FringeModel
    components: tuple[PerturbationComponent, ...] = ()
    rate: float = 2000.0
    duration: float = 20.0
    window: float | None = None
    x_extent: float = 1.0
    seed: int = 0
    allow_partial_fringe: bool = False

    def __post_init__(self) -> None:
        if not self.rate > 0.0:
            raise ValueError(f"rate must be > 0, got {self.rate}")
        if not self.duration > 0.0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if not self.x_extent > 0.0:
            raise ValueError(f"x_extent must be > 0, got {self.x_extent}")
        object.__setattr__(self, "components", tuple(self.components))
        if self.window is None:
            object.__setattr__(self, "window", 10.0 * self.fringe.period)
        if not self.window >= 2.0 * self.fringe.period:
            raise ValueError(
                f"window must hold at least two fringe periods, got "
                f"{self.window} mm for period {self.fringe.period} mm"
            )
        periods = self.window / self.fringe.period
        if not self.allow_partial_fringe and abs(periods - round(periods)) > 1e-9:
            raise ValueError(
                f"window of {periods:.6g} fringe periods is not an integer "
                "multiple; set allow_partial_fringe=True to permit it"
            )
        if self.rate * self.duration > MAX_EVENTS:
            raise ValueError(
                f"expected event count {self.rate * self.duration:.3g} exceeds "
                f"the {MAX_EVENTS} bound"
            )


@dataclass
class EventList:
    """Detected events: positions x, y (mm) and arrival times t (s).

    Times are nondecreasing; `duration` and `window` are the acquisition
    length and detector extent the events live in (needed for correlation
    normalization, which corrects for finite-record pair statistics).
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    duration: float
    window: float

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if not (self.x.shape == self.y.shape == self.t.shape) or self.x.ndim != 1:
            raise ValueError("x, y, t must be 1-D arrays of equal length")
        if np.any(np.diff(self.t) < 0.0):
            raise ValueError("event times must be nondecreasing")
        if self.t.size and (self.t[0] < 0.0 or self.t[-1] > self.duration):
            raise ValueError("event times must lie in [0, duration]")
        if self.y.size and (self.y.min() < 0.0 or self.y.max() >= self.window):
            raise ValueError("event positions must lie in [0, window)")

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def records(self) -> np.ndarray:
        """(N, 3) array of (x, y, t) rows."""
        return np.column_stack([self.x, self.y, self.t])


def generate_events(cfg: SimConfig) -> EventList:
    """Draw one synthetic event stream.

    Deterministic for a given config (the seed lives in `SimConfig`); the
    event count is Poisson with mean rate*duration.
    """
    rng = np.random.default_rng(cfg.seed)
    n = int(rng.poisson(cfg.rate * cfg.duration))
    t = np.sort(rng.uniform(0.0, cfg.duration, n))

    envelope = 1.0 + cfg.fringe.contrast
    k = cfg.fringe.wavenumber
    phi = phase_shift(cfg.components, t) if cfg.components else np.zeros(n)
    y = np.empty(n)
    pending = np.arange(n)
    # rejection-sample y against the flat envelope; the acceptance odds are
    # (1 + K0*cos)/(1 + K0) >= (1-K0)/(1+K0), so the loop terminates fast
    while pending.size:
        proposal = rng.uniform(0.0, cfg.window, pending.size)
        density = 1.0 + cfg.fringe.contrast * np.cos(
            k * proposal + cfg.fringe.spatial_phase + phi[pending]
        )
        accepted = rng.uniform(0.0, envelope, pending.size) < density
        y[pending[accepted]] = proposal[accepted]
        pending = pending[~accepted]

    x = rng.uniform(0.0, cfg.x_extent, n)
    return EventList(x=x, y=y, t=t, duration=cfg.duration, window=cfg.window)
