"""
In-pixel current-to-frequency A/D converter.

The sensor current charges an integrating capacitor; when the integrator
reaches the comparator level a reset pulse is emitted and counted. The reset
keeps the charge that arrived above threshold (overshoot carry), so charge is
conserved exactly and the count after a window ``T`` satisfies
``count * C * dV <= I * T < (count + 1) * C * dV`` for constant ``I`` and no
dead time. During the reset pulse (``t_dead``) integration is suspended.

Two kernels share the same update rule: a scalar one for single pixels
(``step``, ``simulate``, ``convert``) and a NumPy one stepping whole arrays of
pixels at once (``integrate_array``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError

# Comparator resolution relative to the integration swing. Keeps ramps that
# land on the threshold in exact arithmetic from being lost to rounding.
COMPARATOR_TOL = 1e-9

# Minimum number of time steps per integration ramp when dead time matters.
STEPS_PER_RAMP = 20


@dataclass(frozen=True)
class AdcConfig:
    """Converter parameters, SI units.

    Defaults (100 fF, 1 V swing) put 1 pA at 10 Hz and 100 nA at 1 MHz.
    """

    c_int: float = 100e-15
    v_reset: float = 0.0
    v_comp: float = 1.0
    t_dead: float = 0.0
    t_meas: float = 1.0
    counter_bits: int = 24

    def __post_init__(self):
        if not self.c_int > 0:
            raise InvalidArgumentError("c_int must be positive")
        if not self.v_comp > self.v_reset:
            raise InvalidArgumentError("v_comp must exceed v_reset")
        if not self.t_dead >= 0:
            raise InvalidArgumentError("t_dead must be non-negative")
        if not self.t_meas > 0:
            raise InvalidArgumentError("t_meas must be positive")
        if not 1 <= self.counter_bits <= 63:
            raise InvalidArgumentError("counter_bits must lie in [1, 63]")

    @property
    def dv(self) -> float:
        return self.v_comp - self.v_reset

    @property
    def q_count(self) -> float:
        """Charge per reset pulse [C]."""
        return self.c_int * self.dv

    @property
    def counter_max(self) -> int:
        return 2**self.counter_bits - 1


@dataclass(frozen=True)
class AdcPixelState:
    """State of one converter.

    ``t_int`` (time spent integrating) and ``t_elapsed`` are bookkeeping used
    by the charge-conservation checks.
    """

    v_int: float = 0.0
    count: int = 0
    t_in_dead: float = 0.0
    t_int: float = 0.0
    t_elapsed: float = 0.0

    @classmethod
    def initial(cls, cfg: AdcConfig) -> "AdcPixelState":
        return cls(v_int=cfg.v_reset)

    def residual_charge(self, cfg: AdcConfig) -> float:
        return (self.v_int - cfg.v_reset) * cfg.c_int

    def counter(self, cfg: AdcConfig) -> int:
        """Value held by the saturating digital counter."""
        return min(self.count, cfg.counter_max)

    def saturated(self, cfg: AdcConfig) -> bool:
        return self.count > cfg.counter_max


def _advance(v, count, dead, t_int, i, dt, c_int, v_reset, dv, t_dead):
    """One explicit step of the scalar kernel. Returns the updated tuple."""
    remaining = dt
    if dead > 0.0:
        used = dead if dead < remaining else remaining
        dead -= used
        remaining -= used
    if remaining > 0.0:
        v += i * remaining / c_int
        t_int += remaining
        if v - v_reset >= dv * (1.0 - COMPARATOR_TOL):
            if t_dead == 0.0:
                # several ramps may fit in one step; each one resets with carry
                n = max(1, math.floor((v - v_reset) / dv + COMPARATOR_TOL))
            else:
                n = 1
                dead = t_dead
            count += n
            v -= n * dv
    return v, count, dead, t_int


def _check_current(i):
    if i < 0:
        raise InvalidArgumentError(
            f"sensor current must be non-negative (got {i!r}); the electrode "
            "regulation keeps the current unidirectional"
        )


def _substeps(i: float, dt: float, cfg: AdcConfig) -> int:
    if i == 0.0:
        return 1
    return max(1, math.ceil(STEPS_PER_RAMP * i * dt / cfg.q_count - 1e-9))


def step(state: AdcPixelState, current: float, dt: float, cfg: AdcConfig) -> AdcPixelState:
    """Advance one converter by ``dt`` at constant ``current``.

    ``dt`` is split internally so that every ramp spans at least
    ``STEPS_PER_RAMP`` sub-steps; a coarse step therefore gives the same count
    as many fine ones.
    """
    _check_current(current)
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    n = _substeps(current, dt, cfg)
    h = dt / n
    v, count, dead, t_int = state.v_int, state.count, state.t_in_dead, state.t_int
    for _ in range(n):
        v, count, dead, t_int = _advance(
            v, count, dead, t_int, current, h, cfg.c_int, cfg.v_reset, cfg.dv, cfg.t_dead
        )
    return AdcPixelState(v, count, dead, t_int, state.t_elapsed + dt)


def default_dt(current: float, cfg: AdcConfig) -> float:
    """Largest step dividing ``t_meas`` that resolves a ramp with 20 steps."""
    if current <= 0:
        return cfg.t_meas
    n = max(1, math.ceil(cfg.t_meas * current * STEPS_PER_RAMP / cfg.q_count - 1e-9))
    return cfg.t_meas / n


def simulate(current: float, cfg: AdcConfig, dt: float | None = None) -> AdcPixelState:
    """Step a fresh converter through one window ``t_meas`` at constant current."""
    _check_current(current)
    if dt is None:
        dt = default_dt(current, cfg)
    n_steps = int(round(cfg.t_meas / dt))
    if n_steps < 1:
        raise InvalidArgumentError("dt longer than the measurement window")
    h = cfg.t_meas / n_steps
    if cfg.t_dead > 0:
        # dead time needs every ramp resolved; refine a coarse grid uniformly
        sub = _substeps(current, h, cfg)
        n_steps *= sub
        h = cfg.t_meas / n_steps
    v, count, dead, t_int = cfg.v_reset, 0, 0.0, 0.0
    c, vr, dv, td = cfg.c_int, cfg.v_reset, cfg.dv, cfg.t_dead
    for _ in range(n_steps):
        v, count, dead, t_int = _advance(v, count, dead, t_int, current, h, c, vr, dv, td)
    return AdcPixelState(v, count, dead, t_int, cfg.t_meas)


def convert(current: float, cfg: AdcConfig, dt: float | None = None) -> int:
    """Counter value after one measurement window at constant ``current``."""
    return simulate(current, cfg, dt).counter(cfg)


def estimate_current(count: int, cfg: AdcConfig) -> float:
    """Invert a count to a current, correcting for dead time when present."""
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")
    window = cfg.t_meas - count * cfg.t_dead
    if window <= 0:
        raise InvalidArgumentError(
            f"{count} pulses of {cfg.t_dead} s dead time do not fit in {cfg.t_meas} s"
        )
    return count * cfg.q_count / window


def ideal_frequency(current, cfg: AdcConfig):
    """Closed-form pulse rate ``1 / (C dV / I + t_dead)``."""
    i = np.asarray(current, dtype=float)
    with np.errstate(divide="ignore"):
        f = np.where(i > 0, 1.0 / (cfg.q_count / np.where(i > 0, i, 1.0) + cfg.t_dead), 0.0)
    return float(f) if f.ndim == 0 else f


def decade_window(current: float, cfg: AdcConfig, min_counts: int = 10) -> float:
    """Window length for the decade containing ``current``.

    Chosen so that the bottom of the decade still yields ``min_counts`` pulses.
    """
    if not current > 0:
        raise InvalidArgumentError("current must be positive")
    floor = 10.0 ** math.floor(math.log10(current) + 1e-12)
    return min_counts * cfg.q_count / floor + min_counts * cfg.t_dead


class TransferPoint(NamedTuple):
    current: float
    count: int
    frequency: float


def transfer_curve(cfg: AdcConfig, currents) -> list[TransferPoint]:
    """Convert each current with ``cfg``; ``frequency = count / t_meas``."""
    currents = list(currents)
    for i in currents:
        _check_current(i)
    out = []
    for i in currents:
        n = convert(i, cfg)
        out.append(TransferPoint(float(i), n, n / cfg.t_meas))
    return out


def fit_proportionality(points) -> tuple[float, float, float]:
    """Least-squares line ``f = slope * I + intercept``; returns (slope, intercept, R^2)."""
    x = np.array([p.current for p in points], dtype=float)
    y = np.array([p.frequency for p in points], dtype=float)
    if len(x) < 2:
        raise InvalidArgumentError("need at least two points to fit")
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def write_transfer_csv(path, points, fit=None) -> None:
    """Write ``current_A,count,frequency_Hz`` rows, optionally a fit footer comment."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["current_A", "count", "frequency_Hz"])
        for p in points:
            w.writerow([repr(float(p.current)), int(p.count), repr(float(p.frequency))])
        if fit is not None:
            slope, intercept, r2 = fit
            fh.write(f"# slope_Hz_per_A={slope!r} intercept_Hz={intercept!r} r2={r2!r}\n")


def read_transfer_csv(path) -> tuple[list[TransferPoint], dict]:
    """Read back a transfer CSV; returns the points and the parsed footer (may be empty)."""
    points, footer = [], {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            for item in line[1:].split():
                k, _, v = item.partition("=")
                footer[k] = float(v)
        elif line and not line.startswith("current_A"):
            i, n, f = line.split(",")
            points.append(TransferPoint(float(i), int(n), float(f)))
    return points, footer


@dataclass
class AdcArrayState:
    """Vectorized converter state, one element per pixel."""

    v_int: np.ndarray
    count: np.ndarray
    t_in_dead: np.ndarray
    t_int: np.ndarray

    @classmethod
    def initial(cls, shape, cfg: AdcConfig) -> "AdcArrayState":
        return cls(
            np.full(shape, cfg.v_reset, dtype=float),
            np.zeros(shape, dtype=np.int64),
            np.zeros(shape, dtype=float),
            np.zeros(shape, dtype=float),
        )

    def counter(self, cfg: AdcConfig) -> np.ndarray:
        return np.minimum(self.count, cfg.counter_max)


def integrate_array(currents, dt: float, cfg: AdcConfig, state: AdcArrayState | None = None):
    """Step an array of converters through a sampled current waveform.

    ``currents`` has shape ``(n_steps, *pixel_shape)``; row ``k`` is held
    constant over ``[k dt, (k+1) dt)``. Without dead time each step may
    contain several ramps (the overshoot-carry update is exact for a constant
    current), so ``dt`` only needs to follow the waveform. With dead time,
    steps are sub-divided to resolve every ramp with ``STEPS_PER_RAMP`` steps.
    """
    currents = np.asarray(currents, dtype=float)
    if currents.ndim < 1:
        raise InvalidArgumentError("currents needs a leading time axis")
    if np.any(currents < 0):
        raise InvalidArgumentError("sensor currents must be non-negative")
    if state is None:
        state = AdcArrayState.initial(currents.shape[1:], cfg)
    v = state.v_int.copy()
    count = state.count.copy()
    dead = state.t_in_dead.copy()
    t_int = state.t_int.copy()
    c, vr, dv, td = cfg.c_int, cfg.v_reset, cfg.dv, cfg.t_dead
    n_sub = 1
    if td > 0 and currents.size:
        n_sub = _substeps(float(currents.max()), dt, cfg)
    h = dt / n_sub
    for i in currents:
        for _ in range(n_sub):
            if td > 0:
                used = np.minimum(dead, h)
                dead -= used
                rem = h - used
            else:
                rem = h
            v += i * rem / c
            t_int += rem
            over = v - vr
            if td == 0:
                n = np.floor(over / dv + COMPARATOR_TOL).astype(np.int64)
                np.maximum(n, 0, out=n)
            else:
                n = (over >= dv * (1.0 - COMPARATOR_TOL)).astype(np.int64)
                dead = np.where(n > 0, td, dead)
            count += n
            v -= n * dv
    return AdcArrayState(v, count, dead, t_int)


def with_window(cfg: AdcConfig, t_meas: float) -> AdcConfig:
    return replace(cfg, t_meas=t_meas)
