"""
DNA assay on the 16 x 8 chip
============================

The demo chip in ``data/chip_layout.txt`` carries 128 random 20-base probes.
The sample in ``data/sample.txt`` holds targets complementary to 12 of them,
embedded in random flanks, plus unrelated strands. We flood the chip, convert
each site's redox current, call matches and send the frame over the serial
link.

Run:  python demos/02_dna_assay.py
"""

from pathlib import Path

import numpy as np

from cmosbio.adc import AdcConfig
from cmosbio.dna_array import (
    ChipLayout,
    call_matches,
    default_threshold,
    deserialize_frame,
    run_assay_detailed,
    serialize_frame,
)
from cmosbio.electro import RedoxConfig, read_layout, read_sample
from cmosbio.engine import RngHandle

DATA = Path(__file__).resolve().parent / "data"

layout = ChipLayout(tuple(read_layout(DATA / "chip_layout.txt")))
sample = read_sample(DATA / "sample.txt")
print(f"{len(layout.sites)} probes, {len(sample)} target strands in the sample\n")

# %%
# Run the assay
# -------------
# A matched site sits at 10 nA, an unmatched one at the 100 pA floor.
# Shot noise is drawn per site from its own random stream.

redox = RedoxConfig(i_floor=100e-12, i_full=10e-9)
adc = AdcConfig(t_meas=0.1)
res = run_assay_detailed(layout, sample, redox, adc, noise_on=True, rng=RngHandle(7, 1))
counts = res.frame.counts

with np.printoptions(linewidth=120):
    print("counts (rows 0..15, cols 0..7):")
    print(counts)

# %%
# Call matches
# ------------
# The default threshold is the geometric mean of the two expected counts, so
# it sits a factor of 10 away from both populations.

thr = default_threshold(redox, adc)
calls = call_matches(res.frame, thr)
hits = list(zip(*np.nonzero(calls)))
print(f"\nthreshold {thr:.0f} counts -> {len(hits)} matches at {[(int(r), int(c)) for r, c in hits]}")
print(f"matched counts {counts[calls == 1].min()}..{counts[calls == 1].max()}, "
      f"background {counts[calls == 0].min()}..{counts[calls == 0].max()}\n")

# %%
# Serial link
# -----------
# A frame is 393 bytes: magic, type, index, 128 x 24-bit counts, CRC-16.

wire = serialize_frame(res.frame, index=1)
back, index = deserialize_frame(wire)
print(f"frame {index}: {len(wire)} bytes, header {wire[:7].hex()}, crc {wire[-2:].hex()}, "
      f"round trip {'ok' if back == res.frame else 'FAILED'}")
