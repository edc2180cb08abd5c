"""
Current-to-frequency converter: transfer curve over five decades
================================================================

Each DNA site integrates its electrode current on a capacitor. When the
integrator reaches the comparator level it is reset and a counter ticks, so
the pulse rate is I / (C dV). Here we sweep 1 pA to 100 nA and look at how
well the count tracks the current, with and without a reset dead time.

Run:  python demos/01_adc_transfer_curve.py
"""

import numpy as np

from cmosbio.adc import (
    AdcConfig,
    decade_window,
    estimate_current,
    fit_proportionality,
    ideal_frequency,
    simulate,
    transfer_curve,
    with_window,
)

# %%
# One converter, one current
# --------------------------
# 100 fF and a 1 V swing make one count worth 100 fC, so 1 nA ticks at 10 kHz.

cfg = AdcConfig(c_int=100e-15, v_reset=0.0, v_comp=1.0, t_meas=1e-3)
state = simulate(1e-9, cfg)
print(f"1 nA for 1 ms: {state.count} counts, integrator left at {state.v_int:.3f} V")
print(f"charge in the counter {state.count * cfg.q_count:.3e} C "
      f"+ on the capacitor {state.residual_charge(cfg):.3e} C = {1e-9 * 1e-3:.3e} C\n")

# %%
# Per-decade windows
# ------------------
# A fixed window cannot serve 1 pA and 100 nA at once: either the low end
# yields no counts or the high end overflows. Each decade gets a window long
# enough for 1000 counts at its lower edge.

currents = np.logspace(-12, -7, 11)
print(f"{'current':>10} {'window':>10} {'count':>8} {'estimate':>10} {'error':>8}")
points = []
for i in currents:
    c = with_window(cfg, decade_window(i, cfg, min_counts=1000))
    pts = transfer_curve(c, [i])
    points += pts
    est = estimate_current(pts[0].count, c)
    print(f"{i:10.3e} {c.t_meas:9.3g}s {pts[0].count:8d} {est:10.3e} {est / i - 1:+8.2%}")

slope, intercept, r2 = fit_proportionality(points)
print(f"\nfit: f = {slope:.5e} Hz/A * I + {intercept:.3g} Hz,  R^2 = {r2:.7f}")
print(f"ideal slope 1/(C dV) = {1 / cfg.q_count:.5e} Hz/A\n")

# %%
# Reset dead time
# ---------------
# A reset that takes t_dead bends the curve: f = 1 / (C dV / I + t_dead).
# At 100 nA the ramp itself lasts 1 us, so a 1 us reset halves the rate.

dead = AdcConfig(t_dead=1e-6)
print(f"{'current':>10} {'simulated':>12} {'closed form':>12}")
for i in np.logspace(-9, -7, 5):
    c = with_window(dead, decade_window(i, dead, min_counts=1000))
    (p,) = transfer_curve(c, [i])
    print(f"{i:10.3e} {p.frequency:12.5g} {ideal_frequency(i, dead):12.5g}")
