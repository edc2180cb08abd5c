"""
16x8 DNA microarray chip: per-site signal chain, match calling and the serial
frame format used to ship count frames off chip.

Orientation is rows x cols = 16 x 8, stored row-major (row 0 col 0 first)
everywhere: count matrices, CSV files and serial payloads.

Serial frame layout (393 bytes, big-endian)::

    offset  size  field
    0       4     magic b"BSA1"
    4       1     chip type, 0x01 = DNA
    5       2     frame index
    7       384   128 counts, 3 bytes each, row-major
    391     2     CRC-16/CCITT (poly 0x1021, init 0xFFFF) over bytes 0..390
"""

from __future__ import annotations

import binascii
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adc as adc_mod
from .adc import AdcConfig
from .electro import (
    DNA_COLS,
    DNA_ROWS,
    RedoxConfig,
    TestSite,
    hybridize,
    redox_current,
    shot_noise_std,
)
from .engine import RngHandle, make_grid
from .errors import (
    EncodingError,
    FrameCRCError,
    FrameLengthError,
    FrameMagicError,
    FrameTypeError,
    InputFileError,
    InvalidArgumentError,
)

ROWS = DNA_ROWS
COLS = DNA_COLS
N_SITES = ROWS * COLS

MAGIC = b"BSA1"
CHIP_TYPE_DNA = 0x01
HEADER_LEN = 7
COUNT_BYTES = 3
FRAME_LEN = HEADER_LEN + N_SITES * COUNT_BYTES + 2  # 393
MAX_COUNT = 2 ** (8 * COUNT_BYTES) - 1

DEFAULT_BANDWIDTH = 1e3


@dataclass(frozen=True)
class ChipLayout:
    """Probe assignment for all 128 sites, kept in row-major order."""

    sites: tuple

    def __post_init__(self):
        by_pos = {}
        for s in self.sites:
            if not isinstance(s, TestSite):
                raise InvalidArgumentError("layout entries must be TestSite objects")
            if (s.row, s.col) in by_pos:
                raise InvalidArgumentError(f"duplicate site ({s.row}, {s.col})")
            by_pos[(s.row, s.col)] = s
        if len(by_pos) != N_SITES:
            missing = N_SITES - len(by_pos)
            raise InvalidArgumentError(f"layout must cover all 128 sites ({missing} missing)")
        object.__setattr__(self, "sites", tuple(by_pos[k] for k in sorted(by_pos)))

    def site(self, row: int, col: int) -> TestSite:
        return self.sites[row * COLS + col]

    def probes(self) -> list[str]:
        return [s.probe for s in self.sites]

    @classmethod
    def from_probes(cls, probes) -> "ChipLayout":
        """Build from 128 probe strings in row-major order."""
        probes = list(probes)
        if len(probes) != N_SITES:
            raise InvalidArgumentError("need exactly 128 probes")
        return cls(tuple(TestSite(k // COLS, k % COLS, p) for k, p in enumerate(probes)))


@dataclass(frozen=True, eq=False)
class CountFrame:
    """One 16x8 matrix of counter values.

    Frames compare equal when their counts do: the converter configuration and
    timestamp are run metadata that the serial format does not carry.
    """

    counts: np.ndarray
    adc: AdcConfig | None = None
    timestamp: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (ROWS, COLS):
            raise InvalidArgumentError(f"count frame must be {ROWS}x{COLS}, got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            raise InvalidArgumentError("counts must be integers")
        if np.any(c < 0):
            raise InvalidArgumentError("counts must be non-negative")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __eq__(self, other):
        if not isinstance(other, CountFrame):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    __hash__ = None


@dataclass
class AssayResult:
    frame: CountFrame
    fractions: np.ndarray = field(repr=False)
    currents: np.ndarray = field(repr=False)


def site_currents(layout: ChipLayout, sample, redox: RedoxConfig, cross_talk: float = 0.0):
    """Hybridize every site and map the fractions to electrode currents (16x8 arrays)."""
    # one search per site: the separator is not a base, so no match spans two targets
    pool = ("|".join(sample),)
    fractions = np.array(
        [hybridize(s, pool, cross_talk).hybridized_fraction for s in layout.sites]
    ).reshape(ROWS, COLS)
    return fractions, redox_current(fractions, redox)


def _noise_matrix(rng: RngHandle, n_steps: int) -> np.ndarray:
    # one stream per site so the noise a site sees does not depend on scan order
    z = np.empty((n_steps, ROWS, COLS))
    for r in range(ROWS):
        for c in range(COLS):
            z[:, r, c] = rng.substream(r, c).generator().standard_normal(n_steps)
    return z


def run_assay_detailed(
    layout: ChipLayout,
    sample,
    redox: RedoxConfig,
    adc: AdcConfig,
    noise_on: bool = False,
    rng: RngHandle | None = None,
    cross_talk: float = 0.0,
    bandwidth: float = DEFAULT_BANDWIDTH,
    timestamp: float = 0.0,
) -> AssayResult:
    """Like :func:`run_assay` but also returns the per-site fractions and currents."""
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be positive")
    if noise_on and rng is None:
        raise InvalidArgumentError("noisy assay needs an RngHandle")
    fractions, currents = site_currents(layout, sample, redox, cross_talk)

    # the input waveform is sampled at the Nyquist rate of the noise bandwidth
    grid = make_grid(min(0.5 / bandwidth, adc.t_meas), adc.t_meas)
    waveform = np.broadcast_to(currents, (grid.n_steps, ROWS, COLS))
    if noise_on:
        sigma = shot_noise_std(currents, bandwidth)
        waveform = waveform + _noise_matrix(rng, grid.n_steps) * sigma
        # Gaussian tail below zero is unphysical for the regulated electrode
        waveform = np.maximum(waveform, 0.0)
    state = adc_mod.integrate_array(waveform, grid.dt, adc)
    frame = CountFrame(state.counter(adc), adc, timestamp)
    return AssayResult(frame, fractions, currents)


def run_assay(
    layout: ChipLayout,
    sample,
    redox: RedoxConfig,
    adc: AdcConfig,
    noise_on: bool = False,
    rng: RngHandle | None = None,
    cross_talk: float = 0.0,
    bandwidth: float = DEFAULT_BANDWIDTH,
    timestamp: float = 0.0,
) -> CountFrame:
    """Flood the chip with ``sample``, wash, and count every site for ``adc.t_meas``.

    Each site runs hybridize -> redox current -> (optional shot noise at
    ``bandwidth``) -> current-to-frequency conversion. Deterministic for a
    fixed ``rng`` seed.
    """
    return run_assay_detailed(
        layout, sample, redox, adc, noise_on, rng, cross_talk, bandwidth, timestamp
    ).frame


def call_matches(frame: CountFrame, threshold: float) -> np.ndarray:
    """Boolean 16x8 matrix, true where the count reaches ``threshold``."""
    if not threshold > 0:
        raise InvalidArgumentError("threshold must be positive")
    return frame.counts >= threshold


def default_threshold(redox: RedoxConfig, adc: AdcConfig, cross_talk: float = 0.0) -> float:
    """Geometric mean of the expected mismatch and match counts.

    A site with no expected floor counts contributes 1 instead of 0 so the
    threshold stays positive.
    """
    lo = redox_current(cross_talk, redox) * adc.t_meas / adc.q_count
    hi = redox.i_full * adc.t_meas / adc.q_count
    return math.sqrt(max(math.floor(lo), 1) * math.floor(hi))


def crc16_ccitt(data: bytes) -> int:
    return binascii.crc_hqx(data, 0xFFFF)


def serialize_frame(frame: CountFrame, index: int) -> bytes:
    """Encode ``frame`` as a 393-byte serial frame."""
    if not 0 <= index <= 0xFFFF:
        raise EncodingError(f"frame index {index} does not fit in 16 bits")
    counts = frame.counts
    if np.any(counts > MAX_COUNT):
        raise EncodingError(f"count exceeds 24-bit range (max {int(counts.max())})")
    payload = counts.astype(">u4").reshape(-1).view(np.uint8).reshape(-1, 4)[:, 1:].tobytes()
    body = MAGIC + bytes([CHIP_TYPE_DNA]) + index.to_bytes(2, "big") + payload
    return body + crc16_ccitt(body).to_bytes(2, "big")


def deserialize_frame(data: bytes) -> tuple[CountFrame, int]:
    """Decode and validate one serial frame; returns ``(frame, index)``."""
    data = bytes(data)
    if len(data) != FRAME_LEN:
        raise FrameLengthError(f"serial frame must be {FRAME_LEN} bytes, got {len(data)}")
    if data[:4] != MAGIC:
        raise FrameMagicError(f"bad magic {data[:4]!r}")
    if crc16_ccitt(data[:-2]) != int.from_bytes(data[-2:], "big"):
        raise FrameCRCError("CRC mismatch")
    if data[4] != CHIP_TYPE_DNA:
        raise FrameTypeError(f"unknown chip type 0x{data[4]:02x}")
    index = int.from_bytes(data[5:7], "big")
    raw = np.frombuffer(data[HEADER_LEN:-2], dtype=np.uint8).reshape(N_SITES, COUNT_BYTES)
    counts = (
        (raw[:, 0].astype(np.int64) << 16) | (raw[:, 1].astype(np.int64) << 8) | raw[:, 2]
    )
    return CountFrame(counts.reshape(ROWS, COLS)), index


def write_capture(path, frames) -> None:
    """Write a ``.bsa`` capture; ``frames`` yields ``(CountFrame, index)`` pairs."""
    with open(path, "wb") as fh:
        for frame, index in frames:
            fh.write(serialize_frame(frame, index))


def read_capture(path) -> list[tuple[CountFrame, int]]:
    data = Path(path).read_bytes()
    if len(data) % FRAME_LEN:
        raise FrameLengthError(
            f"{path}: capture length {len(data)} is not a multiple of {FRAME_LEN}"
        )
    return [deserialize_frame(data[k : k + FRAME_LEN]) for k in range(0, len(data), FRAME_LEN)]


def write_matrix_csv(path, matrix) -> None:
    """16 lines of 8 comma-separated integers (booleans written as 0/1)."""
    m = np.asarray(matrix).astype(np.int64)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(m.tolist())


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        rows = [line for line in path.read_text().splitlines() if line.strip()]
    except FileNotFoundError:
        raise InputFileError(path, "file not found") from None
    try:
        m = np.array([[int(x) for x in line.split(",")] for line in rows], dtype=np.int64)
    except ValueError as exc:
        raise InputFileError(path, str(exc)) from None
    if m.shape != (ROWS, COLS):
        raise InputFileError(path, f"expected {ROWS}x{COLS} values, got {m.shape}")
    return m
