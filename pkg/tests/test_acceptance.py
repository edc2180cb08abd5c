"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time
from pathlib import Path

import numpy as np

from oracles import (
    closed_form_frequency,
    crc16_ccitt_bitwise,
    event_count,
    finite_difference_gm,
    r_squared,
)

from cmosbio.adc import (
    AdcConfig,
    TransferPoint,
    decade_window,
    default_dt,
    estimate_current,
    fit_proportionality,
    simulate,
    with_window,
)
from cmosbio.cli import main
from cmosbio.dna_array import (
    ChipLayout,
    CountFrame,
    call_matches,
    default_threshold,
    deserialize_frame,
    run_assay,
    serialize_frame,
)
from cmosbio.electro import MismatchSpec, RedoxConfig, draw_mismatch, random_sequence, reverse_complement
from cmosbio.engine import RngHandle
from cmosbio.errors import DecodeError
from cmosbio.neuro_array import (
    ArrayGeometry,
    Placement,
    ScheduleConfig,
    StimulusMap,
    build_array,
    calibrate_array,
    detect_events,
    expected_peak,
    run_recording,
)
from cmosbio.neuro_frontend import (
    CleftSignal,
    CouplingSpec,
    PixelDevice,
    calibrate_pixel,
    default_stages,
    device_current,
    readout_pixel,
)

# charge-conservation residuals gathered while criteria 1 and 2 run
CONSERVATION = []


def conserve(current, cfg, state, dt):
    """Record ``|I t_int - (count q + residual)| / (I dt)``; must not exceed 1."""
    if current == 0:
        CONSERVATION.append(0.0)
        return
    err = abs(current * state.t_int - (state.count * cfg.q_count + state.residual_charge(cfg)))
    CONSERVATION.append(err / (current * dt))


def test_01_adc_range_and_proportionality(verdict):
    t0 = time.perf_counter()
    base = AdcConfig()
    currents = np.logspace(-12, -7, 100)
    worst = 0.0
    points = []
    for i in currents:
        cfg = with_window(base, decade_window(i, base, min_counts=1000))
        st = simulate(i, cfg)
        conserve(i, cfg, st, default_dt(i, cfg))
        est = estimate_current(st.count, cfg)
        tol = max(cfg.q_count / cfg.t_meas, 0.01 * i)
        worst = max(worst, abs(est - i) / tol)
        points.append(TransferPoint(i, st.count, st.count / cfg.t_meas))
    slope, _, r2 = fit_proportionality(points)
    r2_oracle = r_squared(currents, [p.frequency for p in points])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and r2 >= 0.9999 and abs(r2 - r2_oracle) < 1e-9 and elapsed < 10
    verdict(1, "ADC round trip over 1 pA..100 nA, linear fit", ok,
            f"worst error/tolerance {worst:.3f}, R2 {r2:.7f}, slope {slope:.4g} Hz/A, {elapsed:.1f} s")


def test_02_adc_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    gen = np.random.default_rng(20)
    mismatches = 0
    for _ in range(1000):
        i = 10 ** gen.uniform(-12, -7)
        c_int = 10 ** gen.uniform(-14, -12)
        v_reset = gen.uniform(-0.5, 0.5)
        dv = gen.uniform(0.2, 2.0)
        q = c_int * dv
        t_meas = 10 ** gen.uniform(0, math.log10(5000)) * q / i  # 1..5000 ramps
        cfg = AdcConfig(c_int=c_int, v_reset=v_reset, v_comp=v_reset + dv, t_meas=t_meas)
        dt = t_meas / int(gen.integers(1, 2000))
        st = simulate(i, cfg, dt)
        conserve(i, cfg, st, dt)
        mismatches += st.count != event_count(i, c_int, cfg.dv, t_meas)

    worst_f = 0.0
    for _ in range(100):
        i = 10 ** gen.uniform(-10, -7)
        t_dead = 10 ** gen.uniform(-8, -6)
        cfg = AdcConfig(t_dead=t_dead)
        f_ref = closed_form_frequency(i, cfg.c_int, cfg.dv, t_dead)
        cfg = with_window(cfg, 300 / f_ref)  # ~300 pulses resolves 1 % comfortably
        dt = cfg.t_meas / int(gen.integers(1, 200))
        st = simulate(i, cfg, dt)
        conserve(i, cfg, st, dt)
        worst_f = max(worst_f, abs(st.count / cfg.t_meas / f_ref - 1))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst_f <= 0.01 and elapsed < 30
    verdict(2, "ADC grid stepping equals event-scheduled oracle", ok,
            f"{mismatches} count mismatches in 1000, worst dead-time frequency error {worst_f:.2%}, {elapsed:.1f} s")


def test_03_charge_conservation(verdict):
    if not CONSERVATION:  # run on its own: regenerate the residuals
        test_01_adc_range_and_proportionality(lambda *a, **k: None)
        test_02_adc_oracle_equivalence(lambda *a, **k: None)
    worst = max(CONSERVATION)
    verdict(3, "charge conservation after every ADC run of criteria 1-2", worst <= 1.0,
            f"{len(CONSERVATION)} runs, worst residual {worst:.3g} I*dt")


def _random_assay_case(gen):
    probes = [random_sequence(int(gen.integers(15, 31)), gen) for _ in range(128)]
    layout = ChipLayout.from_probes(probes)
    picks = gen.choice(128, size=int(gen.integers(0, 33)), replace=False)
    sample = [random_sequence(int(gen.integers(0, 20)), gen) + reverse_complement(probes[k])
              + random_sequence(int(gen.integers(0, 20)), gen) for k in picks]
    sample += [random_sequence(60, gen) for _ in range(int(gen.integers(0, 10)))]
    truth = np.zeros(128, dtype=bool)
    truth[picks] = True
    return layout, sample, truth.reshape(16, 8)


def test_04_dna_classification(verdict):
    t0 = time.perf_counter()
    gen = np.random.default_rng(40)
    redox = RedoxConfig(1e-9, 100e-9)  # I_full / I_floor = 100
    adc = AdcConfig(t_meas=0.01)  # 100 counts at the floor
    thr = default_threshold(redox, adc)
    correct_noisy = correct_clean = total = 0
    for k in range(10_000):
        layout, sample, truth = _random_assay_case(gen)
        noisy = run_assay(layout, sample, redox, adc, noise_on=True, rng=RngHandle(k, 4), bandwidth=1e3)
        clean = run_assay(layout, sample, redox, adc)
        correct_noisy += int((call_matches(noisy, thr) == truth).sum())
        correct_clean += int((call_matches(clean, thr) == truth).sum())
        total += truth.size
    elapsed = time.perf_counter() - t0
    acc_n, acc_c = correct_noisy / total, correct_clean / total
    ok = acc_n >= 0.99 and acc_c == 1.0 and elapsed < 120
    verdict(4, "DNA match calls on 1e4 random layouts", ok,
            f"noisy accuracy {acc_n:.5f}, noiseless {acc_c:.5f}, {elapsed:.1f} s")


def test_05_serial_framing(verdict):
    gen = np.random.default_rng(50)
    round_trips = 0
    for _ in range(1000):
        frame = CountFrame(gen.integers(0, 2**24, size=(16, 8)))
        idx = int(gen.integers(0, 2**16))
        back, back_idx = deserialize_frame(serialize_frame(frame, idx))
        round_trips += back == frame and back_idx == idx
    detected = 0
    for _ in range(1000):
        data = bytearray(serialize_frame(CountFrame(gen.integers(0, 2**24, size=(16, 8))), 7))
        bit = int(gen.integers(0, 8 * len(data)))
        data[bit // 8] ^= 1 << (bit % 8)
        crc_flags = crc16_ccitt_bitwise(bytes(data[:-2])) != int.from_bytes(data[-2:], "big")
        try:
            deserialize_frame(bytes(data))
            rejected = False
        except DecodeError:
            rejected = True
        detected += crc_flags and rejected
    verdict(5, "serial frames round-trip, single-bit corruptions caught", round_trips == 1000 and detected == 1000,
            f"{round_trips}/1000 round trips, {detected}/1000 corruptions detected")


def test_06_calibration_null(verdict):
    handle = RngHandle(60)
    dvth, bfac = draw_mismatch(MismatchSpec(50e-3, 0.2), handle, size=10_000)
    i_cal = 12.5e-6
    worst = 0.0
    idempotent = True
    for d, b in zip(dvth, bfac):
        p = calibrate_pixel(PixelDevice(0.7, float(d), 100e-6 * float(b)), i_cal)
        diff = abs(device_current(p, p.v_gate_stored) - i_cal)
        worst = max(worst, diff / i_cal, abs(readout_pixel(p, 0.0, CouplingSpec())) / i_cal)
        idempotent &= calibrate_pixel(p, i_cal) == p
    ok = worst <= 1e-9 and idempotent
    verdict(6, "calibration null over 1e4 mismatch draws", ok,
            f"worst relative zero-signal current {worst:.2e}, idempotent {idempotent}")


def _chip():
    raw = build_array(ArrayGeometry(), MismatchSpec(20e-3, 0.05), RngHandle(7, 2))
    return calibrate_array(raw, 12.5e-6, ScheduleConfig())


def test_07_small_signal_consistency(verdict):
    gen = np.random.default_rng(70)
    worst_gm = 0.0
    for _ in range(1000):
        d, b = draw_mismatch(MismatchSpec(50e-3, 0.2), gen)
        i_cal = 10 ** gen.uniform(-6, -4.5)
        p = calibrate_pixel(PixelDevice(0.7, d, 100e-6 * b), i_cal)
        gm = math.sqrt(2 * p.beta * i_cal)
        worst_gm = max(worst_gm, abs(finite_difference_gm(p.beta, p.vth, p.v_gate_stored) / gm - 1))

    chip, _ = _chip()
    sched, coupling, stages = ScheduleConfig(), CouplingSpec(), default_stages()
    amps = np.geomspace(100e-6, 5e-3, 12)
    gains = []
    for a in amps:
        sig = CleftSignal(float(a))
        sig = CleftSignal(float(a), t_onset=float(sched.sample_time(6, 50)) - sig.t_peak)
        stream = run_recording(chip, StimulusMap([Placement(30, 50, sig)]), coupling, stages, sched, 0.01)
        gains.append(float(stream.frames[:, 30, 50].max()) / a)
    gains = np.array(gains)
    lin = float(np.max(np.abs(gains / gains.mean() - 1)))
    ok = worst_gm <= 0.005 and lin <= 0.02
    verdict(7, "gm matches finite difference, end-to-end linearity 100 uV..5 mV", ok,
            f"worst gm error {worst_gm:.2e}, worst gain deviation {lin:.2%}")


def test_08_frame_timing(verdict):
    chip, report = _chip()
    sched = ScheduleConfig()
    stream = run_recording(chip, StimulusMap(), CouplingSpec(), default_stages(), sched, 1.0)
    ts = stream.timestamps()
    k = np.arange(2000)[:, None]
    c = np.arange(128)[None, :]
    exact = bool(np.array_equal(ts, k / 2000 + c * (1 / (2000 * 128))))
    sweep = report.duration
    ok = stream.frames.shape == (2000, 128, 128) and exact and math.isclose(sweep, 0.5e-3, rel_tol=1e-12)
    verdict(8, "1 s gives 2000 frames, exact timestamps, 0.5 ms calibration sweep", ok,
            f"shape {stream.frames.shape}, timestamps exact {exact}, sweep {sweep * 1e3:.6f} ms")


def test_09_event_localization(verdict):
    chip, _ = _chip()
    sched, coupling, stages = ScheduleConfig(), CouplingSpec(), default_stages()
    gen = np.random.default_rng(90)
    spots = []
    while len(spots) < 20:
        r, c = (int(v) for v in gen.integers(0, 128, size=2))
        if all(max(abs(r - r2), abs(c - c2)) > 1 for r2, c2 in spots):
            spots.append((r, c))
    amps = gen.uniform(100e-6, 5e-3, size=20)
    onsets = gen.uniform(0.0, 0.08, size=20)
    placements = [Placement(r, c, CleftSignal(float(a), t_onset=float(t)))
                  for (r, c), a, t in zip(spots, amps, onsets)]
    threshold = 500e-9
    stream = run_recording(chip, StimulusMap(placements), coupling, stages, sched, 0.1)
    events = detect_events(stream, threshold)
    found = {(e.row, e.col): e for e in events}
    located = len(events) == 20 and set(found) == set(spots)
    worst = 0.0
    for (r, c), a in zip(spots, amps):
        if (r, c) in found:
            ref = expected_peak(chip, r, c, float(a), coupling, stages)
            worst = max(worst, abs(found[(r, c)].peak / ref - 1))
        else:
            worst = math.inf
    quiet = run_recording(chip, StimulusMap(), coupling, stages, sched, 0.1)
    false_events = len(detect_events(quiet, threshold))
    ok = located and worst <= 0.05 and false_events == 0
    verdict(9, "20 random APs located once each, peak within 5 %", ok,
            f"{len(events)} events, worst peak error {worst:.2%}, {false_events} false events")


def test_10_determinism_and_throughput(verdict, tmp_path):
    demos = Path(__file__).resolve().parent.parent / "demos"
    commands = [
        ["dna-assay", "--config", str(demos / "configs" / "assay.yaml")],
        ["adc-sweep", "--set", "sweep.n_points=11"],
        ["neuro-record", "--config", str(demos / "configs" / "record.yaml")],
        ["calib-report"],
    ]
    identical = True
    for n, argv in enumerate(commands):
        outs = [tmp_path / f"{n}{tag}" for tag in "ab"]
        for out in outs:
            assert main(argv + ["--seed", "123", "--out", str(out)]) == 0
        for f in sorted(outs[0].iterdir()):
            identical &= f.read_bytes() == (outs[1] / f.name).read_bytes()

    t0 = time.perf_counter()
    chip, _ = _chip()
    stim = StimulusMap([Placement(64, 64, CleftSignal(1e-3, t_onset=0.3), radius=6),
                        Placement(10, 100, CleftSignal(2e-3, t_onset=0.7))])
    stream = run_recording(chip, stim, CouplingSpec(), default_stages(), ScheduleConfig(), 1.0)
    elapsed = time.perf_counter() - t0
    ok = identical and stream.n_frames == 2000 and elapsed < 60
    verdict(10, "byte-identical reruns, 1 s full-array recording under 60 s", ok,
            f"artifacts identical {identical}, 1 s recording simulated in {elapsed:.2f} s")
