"""Behavioral simulator of two CMOS biosensor arrays.

* DNA microarray: hybridization -> redox-cycling current -> in-pixel
  current-to-frequency converter -> 16x8 count frames and serial framing.
* Neural recording array: cleft voltage -> capacitively coupled sensor
  transistor with store-on-gate mismatch calibration -> calibrated current gain
  -> 128x128 rolling-shutter frames at 2 kframes/s.
"""

from .adc import AdcConfig, AdcPixelState, convert, estimate_current, step, transfer_curve
from .dna_array import (
    ChipLayout,
    CountFrame,
    call_matches,
    deserialize_frame,
    run_assay,
    serialize_frame,
)
from .electro import (
    MismatchSpec,
    RedoxConfig,
    TestSite,
    complement,
    draw_mismatch,
    hybridize,
    is_match,
    redox_current,
    shot_noise_current,
)
from .engine import RngHandle, SweepSpec, TimeGrid, make_grid, run_sweep
from .neuro_array import (
    ArrayGeometry,
    FrameStream,
    Placement,
    ScheduleConfig,
    StimulusMap,
    build_array,
    calibrate_array,
    detect_events,
    run_recording,
)
from .neuro_frontend import (
    CleftSignal,
    CouplingSpec,
    GainStage,
    PixelDevice,
    action_potential,
    apply_gain,
    calibrate_gain_stage,
    calibrate_pixel,
    couple,
    default_stages,
    device_current,
    readout_pixel,
)

__version__ = "0.1.0"
