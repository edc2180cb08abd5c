"""
Why the pixels need calibration
===============================

Without calibration every gate sits at the same voltage and threshold
mismatch alone gives a pixel-to-pixel current spread of gm * sigma_vth. The
store-on-gate calibration removes it completely, unless the stored voltage is
itself quantized, in which case a uniform residual of gm * q / sqrt(12) is
left.

Run:  python demos/04_calibration_spread.py
"""

import math

from cmosbio.electro import MismatchSpec
from cmosbio.engine import RngHandle
from cmosbio.neuro_array import ArrayGeometry, build_array, calibration_spread

I_CAL = 12.5e-6
geom = ArrayGeometry()

print(f"{'sigma_vth':>10} {'sigma_beta':>10} {'pre':>10} {'first order':>12} {'post':>10}")
for s_vth, s_beta in [(0.0, 0.0), (5e-3, 0.0), (20e-3, 0.0), (20e-3, 0.05), (50e-3, 0.2)]:
    pixels = build_array(geom, MismatchSpec(s_vth, s_beta), RngHandle(4, 2))
    st = calibration_spread(pixels, I_CAL)
    gm = st["gm_nominal_A_per_V"]
    first = math.hypot(gm * s_vth, s_beta * I_CAL) / I_CAL
    print(f"{s_vth * 1e3:8.1f}mV {s_beta:10.2f} {st['pre_rel_std']:10.3%} {first:12.3%} "
          f"{st['post_rel_std']:10.1e}")

# %%
# Quantized storage
# -----------------
# If the stored gate voltage is rounded to a grid, the residual no longer
# vanishes.

pixels = build_array(geom, MismatchSpec(20e-3, 0.05), RngHandle(4, 2))
print(f"\n{'grid':>8} {'residual':>12} {'gm q / sqrt(12)':>16}")
for q in (0.1e-3, 0.5e-3, 1e-3, 2e-3):
    st = calibration_spread(pixels, I_CAL, quantization=q)
    print(f"{q * 1e3:6.1f}mV {st['post_std_A']:12.3e} {st['quantization_model_std_A']:16.3e}")
