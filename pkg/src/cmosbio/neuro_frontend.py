"""
Single neural-recording pixel.

Signal path: cleft voltage of an action potential -> capacitive divider onto
the sensor transistor gate -> square-law sensor transistor whose quiescent
current was equalized by storing a calibration voltage on its gate -> difference
current against the calibration source -> calibrated current gain stages.

The regulation loop that compensates the difference current is ideal (infinite
loop gain), so the loop output equals the difference current itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, StateError

AP_AMPLITUDE_MIN = 100e-6
AP_AMPLITUDE_MAX = 5e-3

# Relative accuracy to which the stored gate voltage reproduces i_cal; a
# quiescent offset below this is rounding of the closed-form inverse.
SOLVER_TOL = 1e-12


@dataclass(frozen=True)
class CleftSignal:
    """Difference-of-exponentials action-potential transient in the cleft.

    The peak equals ``amplitude`` and occurs
    ``ln(tau_fall/tau_rise) * tau_rise * tau_fall / (tau_fall - tau_rise)``
    after onset.
    """

    amplitude: float
    t_onset: float = 0.0
    tau_rise: float = 1e-3
    tau_fall: float = 4e-3
    kind: str = "biexp"

    def __post_init__(self):
        a = abs(self.amplitude)
        if not (AP_AMPLITUDE_MIN * (1 - 1e-9) <= a <= AP_AMPLITUDE_MAX * (1 + 1e-9)):
            raise InvalidArgumentError(
                f"cleft amplitude {self.amplitude!r} V outside the 100 uV .. 5 mV range"
            )
        if not (0 < self.tau_rise < self.tau_fall):
            raise InvalidArgumentError("need 0 < tau_rise < tau_fall")
        if self.t_onset < 0:
            raise InvalidArgumentError("t_onset must be non-negative")
        if self.kind != "biexp":
            raise InvalidArgumentError(f"unknown waveform kind {self.kind!r}")

    @property
    def t_peak(self) -> float:
        tr, tf = self.tau_rise, self.tau_fall
        return self.t_onset + math.log(tf / tr) * tr * tf / (tf - tr)

    @property
    def norm(self) -> float:
        s = self.t_peak - self.t_onset
        return math.exp(-s / self.tau_fall) - math.exp(-s / self.tau_rise)


def action_potential(t, sig: CleftSignal):
    """Cleft voltage [V] at time(s) ``t``; zero before onset."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("time must be non-negative")
    s = np.maximum(t - sig.t_onset, 0.0)
    v = sig.amplitude * (np.exp(-s / sig.tau_fall) - np.exp(-s / sig.tau_rise)) / sig.norm
    v = np.where(t >= sig.t_onset, v, 0.0)
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class CouplingSpec:
    """Cleft-to-gate attenuation; the cleft height is kept as metadata only."""

    alpha: float = 0.8
    cleft_height: float = 60e-9

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidArgumentError("alpha must lie in (0, 1]")


def couple(v_cleft, c: CouplingSpec):
    return c.alpha * v_cleft


@dataclass(frozen=True)
class PixelDevice:
    """Sensor transistor M1 with its mismatch draw and calibration memory.

    ``beta`` already includes the mismatch factor. ``v_gate_stored`` and
    ``i_cal`` are ``None`` until the pixel is calibrated.
    """

    vth0: float = 0.7
    delta_vth: float = 0.0
    beta: float = 100e-6
    v_gate_stored: float | None = None
    i_cal: float | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgumentError("beta must be positive")

    @property
    def vth(self) -> float:
        return self.vth0 + self.delta_vth

    @property
    def calibrated(self) -> bool:
        return self.v_gate_stored is not None

    @property
    def gm(self) -> float:
        """Small-signal transconductance at the calibrated operating point."""
        if self.i_cal is None:
            raise StateError("pixel is not calibrated")
        return math.sqrt(2.0 * self.beta * self.i_cal)


def device_current(p: PixelDevice, v_gate):
    """Saturation drain current ``beta/2 * max(0, v_gate - vth)^2``."""
    v_ov = np.maximum(np.asarray(v_gate, dtype=float) - p.vth, 0.0)
    i = 0.5 * p.beta * v_ov * v_ov
    return float(i) if i.ndim == 0 else i


def calibrate_pixel(p: PixelDevice, i_cal: float, quantization: float = 0.0) -> PixelDevice:
    """Force ``i_cal`` through M1 and store the resulting gate voltage.

    ``quantization`` (volts, 0 = ideal) rounds the stored voltage to a grid,
    modelling a finite-resolution storage node.
    """
    if not i_cal > 0:
        raise InvalidArgumentError("calibration current must be positive")
    if quantization < 0:
        raise InvalidArgumentError("quantization must be non-negative")
    v = p.vth + math.sqrt(2.0 * i_cal / p.beta)
    if quantization > 0:
        v = round(v / quantization) * quantization
    return replace(p, v_gate_stored=v, i_cal=float(i_cal))


def quiescent_offset(p: PixelDevice, i_source: float) -> float:
    """``I_M1(v_stored) - i_source``; rounding-level residues are reported as 0."""
    off = device_current(p, p.v_gate_stored) - i_source
    return 0.0 if abs(off) <= SOLVER_TOL * i_source else off


def readout_pixel(
    p: PixelDevice,
    v_cleft,
    c: CouplingSpec,
    i_source: float | None = None,
    v_gate_shift: float = 0.0,
):
    """Difference current between M1 and the source M2 for a cleft voltage.

    ``i_source`` defaults to the pixel's calibration current (M2 keeps the
    calibration current in readout). ``v_gate_shift`` adds a voltage error on
    the storage node, e.g. droop since the last calibration.
    """
    if not p.calibrated:
        raise StateError("readout of an uncalibrated pixel")
    if i_source is None:
        i_source = p.i_cal
    u = couple(np.asarray(v_cleft, dtype=float), c) + v_gate_shift
    v_ov = p.v_gate_stored - p.vth
    # (I(v_ov + u) - I(v_ov)) written so that u = 0 gives exactly 0
    delta = 0.5 * p.beta * u * (2.0 * v_ov + u)
    di = np.where(v_ov + u > 0, delta + quiescent_offset(p, i_source), -i_source)
    return float(di) if di.ndim == 0 else di


@dataclass(frozen=True)
class GainStage:
    """Current gain stage; raw response ``gain_nominal*(1+gain_error)*i + offset``.

    Calibration records the raw response at zero and at a reference input
    and stores a zero/scale correction so that the corrected output is
    ``gain_nominal * i``.
    """

    gain_nominal: float
    gain_error: float = 0.0
    offset: float = 0.0
    calibrated: bool = False
    cal_zero: float = 0.0
    cal_scale: float = 1.0

    def __post_init__(self):
        if not self.gain_nominal > 0:
            raise InvalidArgumentError("gain_nominal must be positive")
        if not self.gain_nominal * (1 + self.gain_error) > 0:
            raise InvalidArgumentError("effective gain must be positive")

    def raw(self, i_in):
        return self.gain_nominal * (1.0 + self.gain_error) * i_in + self.offset


I_REF_GAIN_CAL = 100e-9


def calibrate_gain_stage(s: GainStage, i_ref: float = I_REF_GAIN_CAL) -> GainStage:
    """Measure the raw stage response at 0 and ``i_ref`` and store the correction."""
    r0 = s.raw(0.0)
    r1 = s.raw(i_ref)
    return replace(
        s, calibrated=True, cal_zero=r0, cal_scale=s.gain_nominal * i_ref / (r1 - r0)
    )


def apply_gain(s: GainStage, i_in):
    out = s.raw(i_in)
    if s.calibrated:
        out = (out - s.cal_zero) * s.cal_scale
    return out


def apply_chain(stages, i_in):
    out = i_in
    for s in stages:
        out = apply_gain(s, out)
    return out


def nominal_gain(stages) -> float:
    g = 1.0
    for s in stages:
        g *= s.gain_nominal
    return g


def default_stages(calibrated: bool = True) -> list[GainStage]:
    """Three stages, 10 x 10 x 4 = 400 overall (arbitrary illustrative split)."""
    stages = [GainStage(10.0), GainStage(10.0), GainStage(4.0)]
    return [calibrate_gain_stage(s) for s in stages] if calibrated else stages
