"""Command-line front end.

    cmosbio dna-assay    --config run.yaml --seed 1 --out results/
    cmosbio adc-sweep    --set adc.t_dead_s=1e-6
    cmosbio neuro-record --config rec.yaml
    cmosbio calib-report --set frontend.storage_quantization_V=1e-3

Exit codes: 0 success, 2 input error, 3 validation error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import adc as adc_mod
from . import config as config_mod
from . import dna_array, electro, neuro_array
from .engine import RngHandle
from .errors import BiosensorError, DecodeError, InputFileError, InvalidArgumentError
from .neuro_frontend import CleftSignal

log = logging.getLogger("cmosbio")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VALIDATION = 3
EXIT_INTERNAL = 4

# stream ids keep the random streams of different commands apart
STREAM_DNA = 1
STREAM_NEURO = 2


def _echo_config(out: Path, cfg: dict) -> None:
    (out / "resolved_config.yaml").write_text(config_mod.dump(cfg))


def cmd_dna_assay(cfg: dict, out: Path) -> int:
    a = cfg["assay"]
    for key in ("layout_path", "sample_path"):
        if a[key] is None:
            raise config_mod.ConfigError(f"assay.{key} is required for dna-assay")
    sites = electro.read_layout(a["layout_path"])
    sample = electro.read_sample(a["sample_path"])
    try:
        layout = dna_array.ChipLayout(tuple(sites))
    except InvalidArgumentError as exc:
        raise InputFileError(a["layout_path"], str(exc)) from None
    adc = config_mod.adc_config(cfg)
    redox = config_mod.redox_config(cfg)
    frame = dna_array.run_assay(
        layout,
        sample,
        redox,
        adc,
        noise_on=bool(a["noise"]),
        rng=RngHandle(cfg["seed"], STREAM_DNA),
        cross_talk=float(a["cross_talk"]),
        bandwidth=float(a["bandwidth_Hz"]),
    )
    threshold = a["threshold_counts"]
    if threshold is None:
        threshold = dna_array.default_threshold(redox, adc, float(a["cross_talk"]))
    calls = dna_array.call_matches(frame, threshold)
    out.mkdir(parents=True, exist_ok=True)
    dna_array.write_matrix_csv(out / "counts.csv", frame.counts)
    dna_array.write_matrix_csv(out / "matches.csv", calls)
    dna_array.write_capture(out / "capture.bsa", [(frame, int(a["frame_index"]))])
    _echo_config(out, cfg)
    log.info("dna-assay: %d of 128 sites called as matches (threshold %.4g counts)",
             int(calls.sum()), threshold)
    return EXIT_OK


def sweep_currents(cfg: dict) -> list[float]:
    s = cfg["sweep"]
    if s["currents_A"] is not None:
        currents = [float(i) for i in s["currents_A"]]
    else:
        lo, hi, n = float(s["i_min_A"]), float(s["i_max_A"]), int(s["n_points"])
        if not (0 < lo <= hi) or n < 1:
            raise config_mod.ConfigError("sweep needs 0 < i_min_A <= i_max_A and n_points >= 1")
        currents = list(np.logspace(np.log10(lo), np.log10(hi), n))
    if not currents:
        raise config_mod.ConfigError("sweep current list is empty")
    for i in currents:
        if not 0 <= i <= 1e-6:
            raise config_mod.ConfigError(f"sweep current {i!r} A outside [0, 1 uA]")
    positive = [i for i in currents if i > 0]
    if len(currents) > 1 and (not positive or max(positive) / min(positive) < 10 * (1 - 1e-9)):
        raise config_mod.ConfigError("sweep currents must span at least one decade")
    return currents


def run_adc_sweep(cfg: dict) -> tuple[list, tuple | None]:
    base = config_mod.adc_config(cfg)
    s = cfg["sweep"]
    points = []
    for i in sweep_currents(cfg):
        c = base
        if s["per_decade_windows"] and i > 0:
            c = adc_mod.with_window(base, adc_mod.decade_window(i, base, int(s["min_counts"])))
        points.extend(adc_mod.transfer_curve(c, [i]))
    fit = adc_mod.fit_proportionality(points) if len(points) > 1 else None
    return points, fit


def cmd_adc_sweep(cfg: dict, out: Path) -> int:
    points, fit = run_adc_sweep(cfg)
    out.mkdir(parents=True, exist_ok=True)
    adc_mod.write_transfer_csv(out / "transfer_curve.csv", points, fit)
    _echo_config(out, cfg)
    if fit is not None:
        log.info("adc-sweep: slope %.6g Hz/A, R^2 %.8f", fit[0], fit[2])
    return EXIT_OK


def stimulus_map(cfg: dict) -> neuro_array.StimulusMap:
    placements = []
    for e in config_mod.stimulus_entries(cfg):
        sig_kw = {}
        for src, dst in (("t_onset_s", "t_onset"), ("tau_rise_s", "tau_rise"), ("tau_fall_s", "tau_fall")):
            if src in e:
                sig_kw[dst] = e[src]
        sig = CleftSignal(e["amplitude_V"], **sig_kw)
        placements.append(neuro_array.Placement(e["row"], e["col"], sig, e.get("radius_px", 0)))
    return neuro_array.StimulusMap(placements)


def _build_calibrated(cfg: dict):
    f = cfg["frontend"]
    geom = neuro_array.ArrayGeometry()
    sched = config_mod.schedule_config(cfg)
    pixels = neuro_array.build_array(
        geom,
        config_mod.mismatch_spec(cfg),
        RngHandle(cfg["seed"], STREAM_NEURO),
        vth0=float(f["vth0_V"]),
        beta0=float(f["beta_A_per_V2"]),
    )
    pixels, report = neuro_array.calibrate_array(
        pixels, float(f["i_cal_A"]), sched, quantization=float(f["storage_quantization_V"])
    )
    return pixels, report, sched


def cmd_neuro_record(cfg: dict, out: Path) -> int:
    stim = stimulus_map(cfg)
    stim.check_bounds(neuro_array.ArrayGeometry())
    pixels, report, sched = _build_calibrated(cfg)
    stream = neuro_array.run_recording(
        pixels,
        stim,
        config_mod.coupling_spec(cfg),
        config_mod.gain_stages(cfg),
        sched,
        float(cfg["recording"]["duration_s"]),
        droop_rate=float(cfg["frontend"]["droop_V_per_s"]),
    )
    events = neuro_array.detect_events(stream, float(cfg["recording"]["event_threshold_A"]))
    out.mkdir(parents=True, exist_ok=True)
    neuro_array.write_nra(out / "stream.nra", stream)
    neuro_array.write_events_csv(out / "events.csv", events)
    neuro_array.write_calibration_csv(out / "calibration.csv", report)
    neuro_array.write_pixel_map_csv(out / "pixel_map.csv", pixels)
    _echo_config(out, cfg)
    log.info("neuro-record: %d frames, %d events", stream.n_frames, len(events))
    return EXIT_OK


def cmd_calib_report(cfg: dict, out: Path) -> int:
    f = cfg["frontend"]
    pixels = neuro_array.build_array(
        neuro_array.ArrayGeometry(),
        config_mod.mismatch_spec(cfg),
        RngHandle(cfg["seed"], STREAM_NEURO),
        vth0=float(f["vth0_V"]),
        beta0=float(f["beta_A_per_V2"]),
    )
    stats = neuro_array.calibration_spread(
        pixels, float(f["i_cal_A"]), float(f["storage_quantization_V"])
    )
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "calib_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "value"])
        for k, v in stats.items():
            w.writerow([k, repr(v)])
    _echo_config(out, cfg)
    log.info("calib-report: pre %.3g, post %.3g relative std",
             stats["pre_rel_std"], stats["post_rel_std"])
    return EXIT_OK


COMMANDS = {
    "dna-assay": cmd_dna_assay,
    "adc-sweep": cmd_adc_sweep,
    "neuro-record": cmd_neuro_record,
    "calib-report": cmd_calib_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmosbio", description="CMOS biosensor array simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config value, e.g. adc.t_meas_s=0.5")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = config_mod.load_config(args.config, args.overrides, args.seed)
        return COMMANDS[args.command](cfg, args.out)
    except (InputFileError, DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvalidArgumentError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BiosensorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # anything else is a bug, not bad input
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
