"""
Neural recording with the 128 x 128 array
=========================================

Cells on the chip surface produce millivolt-scale cleft signals. Each pixel
transistor turns that into a current change around its calibrated operating
point; three gain stages amplify it. The array is read column by column at
2000 frames per second.

Run:  python demos/03_neural_recording.py
"""

import time

import numpy as np

from cmosbio.electro import MismatchSpec
from cmosbio.engine import RngHandle
from cmosbio.neuro_array import (
    ArrayGeometry,
    Placement,
    ScheduleConfig,
    StimulusMap,
    build_array,
    calibrate_array,
    detect_events,
    expected_peak,
    footprint_radius,
    run_recording,
)
from cmosbio.neuro_frontend import CleftSignal, CouplingSpec, default_stages

geom = ArrayGeometry()
sched = ScheduleConfig()
print(f"{geom.rows} x {geom.cols} pixels at {geom.pitch * 1e6:.1f} um pitch, "
      f"column slot {sched.column_slot * 1e6:.3f} us\n")

# %%
# Build and calibrate
# -------------------
# Every pixel gets its own threshold and beta mismatch. Calibration stores the
# gate voltage that makes each transistor carry exactly 12.5 uA.

t0 = time.perf_counter()
pixels = build_array(geom, MismatchSpec(sigma_vth=20e-3, sigma_beta_rel=0.05), RngHandle(1, 2))
pixels, report = calibrate_array(pixels, 12.5e-6, sched)
print(f"threshold spread {np.std(pixels.delta_vth) * 1e3:.2f} mV, "
      f"calibration sweep {report.duration * 1e3:.2f} ms, "
      f"quiescent offsets all zero: {not pixels.quiescent_offset().any()}\n")

# %%
# Place some cells
# ----------------
# A 50 um cell covers a disc of about 3 pixels radius; small ones cover a
# single pixel.

print(f"50 um cell -> footprint radius {footprint_radius(50e-6)} px")
stim = StimulusMap([
    Placement(20, 30, CleftSignal(1e-3, t_onset=0.005)),
    Placement(64, 64, CleftSignal(3e-3, t_onset=0.015), radius=footprint_radius(50e-6)),
    Placement(100, 10, CleftSignal(200e-6, t_onset=0.030)),
    Placement(100, 12, CleftSignal(150e-6, t_onset=0.0305)),
])
coupling, stages = CouplingSpec(alpha=0.8), default_stages()
stream = run_recording(pixels, stim, coupling, stages, sched, duration=0.05)
print(f"recorded {stream.n_frames} frames in {time.perf_counter() - t0:.2f} s\n")

# %%
# Detect events
# -------------
# The two weak cells near (100, 10) are two columns apart, so their regions
# do not touch and they come out as separate events. A footprint reports one
# event at whichever of its pixels peaked highest.

events = detect_events(stream, threshold=500e-9)
amplitude_at = {rc: p.signal.amplitude for p in stim.placements for rc in stim.footprint(p, geom)}
print(f"{'frame':>5} {'row':>4} {'col':>4} {'peak':>10} {'expected':>10}")
for e in events:
    ref = expected_peak(pixels, e.row, e.col, amplitude_at[(e.row, e.col)], coupling, stages)
    print(f"{e.frame:5d} {e.row:4d} {e.col:4d} {e.peak:10.3e} {ref:10.3e}")

# %%
# Rolling shutter
# ---------------
# Columns are sampled one slot apart, so across the big cell's footprint the
# same frame catches the waveform at slightly different times.

k = events[1].frame
ts = stream.timestamps()[k, 61:68]
vals = stream.frames[k, 64, 61:68]
print(f"\nframe {k}, row 64:")
for c, t, v in zip(range(61, 68), ts, vals):
    print(f"  col {c}: t = {t * 1e3:.4f} ms, output {v:.4e} A")
