"""
128x128 neural recording array.

Calibration and readout both follow a column-sequential schedule: during
column slot ``c`` every row of column ``c`` is handled at once. A frame is one
sweep over all columns, so the sample of pixel ``(r, c)`` in frame ``k`` is
taken at ``k / frame_rate + c * column_slot`` (rolling shutter).

Stream file (``.nra``): a 16-byte little-endian header ``b"NRA1"``, rows
(uint32), cols (uint32), frame rate (float32), followed by the frames as
row-major float32 little-endian output currents in amperes.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .electro import MismatchSpec, draw_mismatch
from .engine import RngHandle
from .errors import DecodeError, FrameLengthError, FrameMagicError, InvalidArgumentError, StateError
from .neuro_frontend import (
    SOLVER_TOL,
    CleftSignal,
    CouplingSpec,
    PixelDevice,
    action_potential,
    apply_chain,
    nominal_gain,
)

NRA_MAGIC = b"NRA1"
NRA_HEADER = struct.Struct("<4sIIf")


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 128
    cols: int = 128
    pitch: float = 7.8e-6

    def __post_init__(self):
        if self.rows * self.cols != 16384:
            raise InvalidArgumentError("the array has 128 x 128 = 16384 positions")
        if abs(self.pitch * self.cols - 1e-3) > 1e-5:
            raise InvalidArgumentError("pitch * cols must be 1 mm within 1 %")

    @property
    def sensor_area(self) -> float:
        return (self.rows * self.pitch) * (self.cols * self.pitch)


@dataclass(frozen=True)
class ScheduleConfig:
    frame_rate: float = 2000.0
    cols: int = 128
    calib_period: int = 2000

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise InvalidArgumentError("frame_rate must be positive")
        if self.cols < 1:
            raise InvalidArgumentError("cols must be positive")
        if self.calib_period < 1:
            raise InvalidArgumentError("calib_period must be at least 1 frame")

    @property
    def column_slot(self) -> float:
        return 1.0 / (self.frame_rate * self.cols)

    @property
    def frame_period(self) -> float:
        return 1.0 / self.frame_rate

    def sample_time(self, frame, col):
        """Timestamp of the samples of column ``col`` in frame ``frame``."""
        return np.asarray(frame) / self.frame_rate + np.asarray(col) * self.column_slot

    def is_calibration_frame(self, frame):
        k = np.asarray(frame)
        return (k > 0) & (k % self.calib_period == 0)


@dataclass
class PixelArray:
    """Struct-of-arrays view of all ``PixelDevice``s of the chip."""

    geom: ArrayGeometry
    vth0: float
    beta0: float
    delta_vth: np.ndarray
    beta_factor: np.ndarray
    v_gate_stored: np.ndarray | None = None
    i_cal: float | None = None
    quantization: float = 0.0

    @property
    def beta(self) -> np.ndarray:
        return self.beta0 * self.beta_factor

    @property
    def vth(self) -> np.ndarray:
        return self.vth0 + self.delta_vth

    @property
    def calibrated(self) -> bool:
        return self.v_gate_stored is not None

    @property
    def gm(self) -> np.ndarray:
        if self.i_cal is None:
            raise StateError("array is not calibrated")
        return np.sqrt(2.0 * self.beta * self.i_cal)

    def pixel(self, row: int, col: int) -> PixelDevice:
        return PixelDevice(
            vth0=self.vth0,
            delta_vth=float(self.delta_vth[row, col]),
            beta=float(self.beta[row, col]),
            v_gate_stored=None if self.v_gate_stored is None else float(self.v_gate_stored[row, col]),
            i_cal=self.i_cal,
        )

    def quiescent_offset(self, i_source: float | None = None) -> np.ndarray:
        """Per-pixel ``I_M1(v_stored) - i_source`` with rounding residues zeroed."""
        if not self.calibrated:
            raise StateError("array is not calibrated")
        i_source = self.i_cal if i_source is None else i_source
        v_ov = np.maximum(self.v_gate_stored - self.vth, 0.0)
        off = 0.5 * self.beta * v_ov * v_ov - i_source
        return np.where(np.abs(off) <= SOLVER_TOL * i_source, 0.0, off)


def build_array(
    geom: ArrayGeometry,
    mismatch: MismatchSpec,
    rng: RngHandle,
    vth0: float = 0.7,
    beta0: float = 100e-6,
) -> PixelArray:
    """Draw an independent mismatch pair for every pixel from stream ``(row, col)``."""
    dvth = np.empty((geom.rows, geom.cols))
    bfac = np.empty((geom.rows, geom.cols))
    for r in range(geom.rows):
        for c in range(geom.cols):
            dvth[r, c], bfac[r, c] = draw_mismatch(mismatch, rng.substream(r, c))
    return PixelArray(geom, vth0, beta0, dvth, bfac)


@dataclass(frozen=True)
class CalibrationReport:
    """When each column was calibrated, relative to the start of the sweep."""

    column_times: np.ndarray
    column_slot: float

    @property
    def duration(self) -> float:
        return len(self.column_times) * self.column_slot


def calibrate_array(
    pixels: PixelArray,
    i_cal: float,
    sched: ScheduleConfig,
    quantization: float = 0.0,
    t_start: float = 0.0,
) -> tuple[PixelArray, CalibrationReport]:
    """One calibration sweep: column ``c`` (all rows at once) during slot ``c``.

    Stores ``vth + sqrt(2 i_cal / beta)`` on every gate, optionally rounded to a
    ``quantization`` grid.
    """
    if not i_cal > 0:
        raise InvalidArgumentError("calibration current must be positive")
    if sched.cols != pixels.geom.cols:
        raise InvalidArgumentError("schedule and geometry disagree on the column count")
    v = pixels.vth + np.sqrt(2.0 * i_cal / pixels.beta)
    if quantization > 0:
        v = np.round(v / quantization) * quantization
    times = t_start + np.arange(sched.cols) * sched.column_slot
    out = replace(pixels, v_gate_stored=v, i_cal=float(i_cal), quantization=quantization)
    return out, CalibrationReport(times, sched.column_slot)


class Placement(NamedTuple):
    row: int
    col: int
    signal: CleftSignal
    radius: int = 0


MAX_FOOTPRINT_RADIUS = 6


def footprint_radius(diameter: float, pitch: float = 7.8e-6) -> int:
    """Disc radius in pixels covered by a cell of the given diameter."""
    return int(round(0.5 * diameter / pitch))


@dataclass
class StimulusMap:
    placements: list = field(default_factory=list)

    def __post_init__(self):
        self.placements = [Placement(*p) for p in self.placements]
        for p in self.placements:
            if not 0 <= p.radius <= MAX_FOOTPRINT_RADIUS:
                raise InvalidArgumentError(
                    f"footprint radius {p.radius} outside 0..{MAX_FOOTPRINT_RADIUS} pixels"
                )

    def check_bounds(self, geom: ArrayGeometry) -> None:
        for p in self.placements:
            if not (0 <= p.row < geom.rows and 0 <= p.col < geom.cols):
                raise InvalidArgumentError(f"placement ({p.row}, {p.col}) outside the array")

    def footprint(self, p: Placement, geom: ArrayGeometry):
        """Pixels under the uniform disc of placement ``p``, clipped to the array."""
        out = []
        for dr in range(-p.radius, p.radius + 1):
            for dc in range(-p.radius, p.radius + 1):
                r, c = p.row + dr, p.col + dc
                if dr * dr + dc * dc <= p.radius * p.radius and 0 <= r < geom.rows and 0 <= c < geom.cols:
                    out.append((r, c))
        return out


@dataclass
class FrameStream:
    """Recorded output currents, shape ``(n_frames, rows, cols)``, float32 amperes."""

    frames: np.ndarray
    frame_rate: float
    cols: int
    calib_frames: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def column_slot(self) -> float:
        return 1.0 / (self.frame_rate * self.cols)

    @property
    def frame_period(self) -> float:
        return 1.0 / self.frame_rate

    def sample_time(self, frame, col):
        return np.asarray(frame) / self.frame_rate + np.asarray(col) * self.column_slot

    def timestamps(self) -> np.ndarray:
        """``(n_frames, cols)`` sample times; identical for all rows of a column."""
        k = np.arange(self.n_frames)[:, None]
        c = np.arange(self.cols)[None, :]
        return self.sample_time(k, c)


def run_recording(
    pixels: PixelArray,
    stim: StimulusMap,
    coupling: CouplingSpec,
    stages,
    sched: ScheduleConfig,
    duration: float,
    droop_rate: float = 0.0,
    chunk_frames: int = 64,
) -> FrameStream:
    """Record ``round(duration * frame_rate)`` rolling-shutter frames.

    Every sample is the gain-chain output of the pixel's difference current at
    the cleft voltage present at its column slot. Frames whose index is a
    positive multiple of ``sched.calib_period`` are spent on a calibration
    sweep: they read zero and are flagged in ``calib_frames``. ``droop_rate``
    [V/s] lowers the stored gate voltages linearly with the time since the
    last sweep.
    """
    if not pixels.calibrated:
        raise StateError("recording needs a calibrated array")
    if not duration > 0:
        raise InvalidArgumentError("duration must be positive")
    geom = pixels.geom
    if sched.cols != geom.cols:
        raise InvalidArgumentError("schedule and geometry disagree on the column count")
    stim.check_bounds(geom)
    n_frames = int(round(duration * sched.frame_rate))
    if n_frames < 1:
        raise InvalidArgumentError("duration shorter than half a frame")

    frames_idx = np.arange(n_frames)
    t = sched.sample_time(frames_idx[:, None], np.arange(geom.cols)[None, :])
    is_cal = sched.is_calibration_frame(frames_idx)

    # cleft voltage at every stimulated pixel, superposed over placements
    drive = {}
    for p in stim.placements:
        for r, c in stim.footprint(p, geom):
            wave = action_potential(t[:, c], p.signal)
            drive[(r, c)] = drive.get((r, c), 0.0) + wave

    # the initial sweep occupies the frame just before frame 0
    last_cal = np.maximum.accumulate(np.where(is_cal, frames_idx, -1))
    age = (frames_idx - last_cal) / sched.frame_rate

    beta = pixels.beta
    v_ov = pixels.v_gate_stored - pixels.vth
    offset = pixels.quiescent_offset()
    i_src = pixels.i_cal
    if drive:
        keys = list(drive)
        rr = np.array([k[0] for k in keys])
        cc = np.array([k[1] for k in keys])
        waves = np.stack([drive[k] for k in keys], axis=1)
    out = np.zeros((n_frames, geom.rows, geom.cols), dtype=np.float32)
    for k0 in range(0, n_frames, chunk_frames):
        k1 = min(k0 + chunk_frames, n_frames)
        u = np.zeros((k1 - k0, geom.rows, geom.cols))
        if drive:
            u[:, rr, cc] = coupling.alpha * waves[k0:k1]
        if droop_rate:
            u -= droop_rate * age[k0:k1, None, None]
        delta = 0.5 * beta * u * (2.0 * v_ov + u)
        di = np.where(v_ov + u > 0, delta + offset, -i_src)
        block = apply_chain(stages, di)
        block[is_cal[k0:k1]] = 0.0
        out[k0:k1] = block
    return FrameStream(out, sched.frame_rate, geom.cols, is_cal)


class Event(NamedTuple):
    frame: int
    row: int
    col: int
    peak: float
    t: float


def detect_events(stream: FrameStream, threshold: float) -> list[Event]:
    """One event per connected above-threshold region, reported at its peak.

    Regions are connected in time and space (26-neighbourhood); magnitude is
    compared, so both polarities count. Sorted by frame, row, col.
    """
    if not threshold > 0:
        raise InvalidArgumentError("threshold must be positive")
    mag = np.abs(stream.frames)
    mask = mag > threshold
    if not mask.any():
        return []
    labels, n = ndimage.label(mask, structure=np.ones((3, 3, 3), dtype=bool))
    peaks = ndimage.maximum_position(mag, labels, index=np.arange(1, n + 1))
    events = []
    for k, r, c in peaks:
        events.append(
            Event(int(k), int(r), int(c), float(stream.frames[k, r, c]),
                  float(stream.sample_time(k, c)))
        )
    return sorted(events)


def expected_peak(pixels: PixelArray, row: int, col: int, amplitude: float,
                  coupling: CouplingSpec, stages) -> float:
    """Small-signal end-to-end output for a cleft amplitude: ``G * gm * alpha * v``."""
    return nominal_gain(stages) * float(pixels.gm[row, col]) * coupling.alpha * amplitude


def _spread(x: np.ndarray) -> float:
    # shift by one element first so a uniform array gives exactly 0
    return float(np.std(x - x.flat[0]))


def calibration_spread(pixels: PixelArray, i_cal: float, quantization: float = 0.0) -> dict:
    """Pixel-to-pixel current spread before and after calibration.

    Before calibration every gate sits at the voltage that gives ``i_cal`` in a
    mismatch-free device; after calibration the zero-signal difference current
    is the residual. Spreads are standard deviations relative to ``i_cal``.
    """
    v_nom = pixels.vth0 + math.sqrt(2.0 * i_cal / pixels.beta0)
    v_ov = np.maximum(v_nom - pixels.vth, 0.0)
    pre = 0.5 * pixels.beta * v_ov * v_ov
    cal, _ = calibrate_array(pixels, i_cal, ScheduleConfig(cols=pixels.geom.cols),
                             quantization=quantization)
    post = cal.quiescent_offset()
    pre_std, post_std = _spread(pre), _spread(post)
    pre_rel, post_rel = pre_std / i_cal, post_std / i_cal
    gm_nom = math.sqrt(2.0 * pixels.beta0 * i_cal)
    return {
        "n_pixels": int(pre.size),
        "i_cal_A": i_cal,
        "gm_nominal_A_per_V": gm_nom,
        "pre_std_A": pre_std,
        "pre_rel_std": pre_rel,
        "post_std_A": post_std,
        "post_rel_std": post_rel,
        "post_max_abs_A": float(np.max(np.abs(post))),
        "post_over_pre": post_rel / pre_rel if pre_rel > 0 else float("nan"),
        "quantization_V": quantization,
        "quantization_model_std_A": gm_nom * quantization / math.sqrt(12.0),
    }


def write_nra(path, stream: FrameStream) -> None:
    rows, cols = stream.frames.shape[1:]
    with open(path, "wb") as fh:
        fh.write(NRA_HEADER.pack(NRA_MAGIC, rows, cols, stream.frame_rate))
        fh.write(np.ascontiguousarray(stream.frames, dtype="<f4").tobytes())


def read_nra(path) -> FrameStream:
    data = Path(path).read_bytes()
    if len(data) < NRA_HEADER.size:
        raise FrameLengthError(f"{path}: shorter than the stream header")
    magic, rows, cols, rate = NRA_HEADER.unpack_from(data)
    if magic != NRA_MAGIC:
        raise FrameMagicError(f"{path}: bad magic {magic!r}")
    body = len(data) - NRA_HEADER.size
    frame_bytes = rows * cols * 4
    if frame_bytes == 0 or body % frame_bytes:
        raise FrameLengthError(f"{path}: body is not a whole number of {rows}x{cols} frames")
    frames = np.frombuffer(data, dtype="<f4", offset=NRA_HEADER.size).reshape(-1, rows, cols)
    if not math.isfinite(rate) or rate <= 0:
        raise DecodeError(f"{path}: invalid frame rate {rate}")
    return FrameStream(frames.astype(np.float32), float(rate), cols)


def write_events_csv(path, events) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "row", "col", "peak_A", "t_s"])
        for e in events:
            w.writerow([e.frame, e.row, e.col, repr(e.peak), repr(e.t)])


def write_pixel_map_csv(path, pixels: PixelArray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "delta_vth_V", "beta_factor", "v_stored_V"])
        stored = pixels.v_gate_stored
        for r in range(pixels.geom.rows):
            for c in range(pixels.geom.cols):
                vs = "" if stored is None else repr(float(stored[r, c]))
                w.writerow([r, c, repr(float(pixels.delta_vth[r, c])),
                            repr(float(pixels.beta_factor[r, c])), vs])


def write_calibration_csv(path, report: CalibrationReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "t_s"])
        for c, t in enumerate(report.column_times):
            w.writerow([c, repr(float(t))])
