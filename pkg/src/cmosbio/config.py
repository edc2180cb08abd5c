"""
Run configuration: a YAML file layered over defaults, then ``--set`` overrides.

Every physical key carries its SI unit as a suffix (``c_int_F``, ``t_meas_s``).
Unknown keys are rejected. The resolved configuration (all defaults filled in,
seed included) is what a command echoes next to its outputs.
"""

from __future__ import annotations

import copy
import re
from pathlib import Path

import yaml

from .adc import AdcConfig
from .electro import MismatchSpec, RedoxConfig
from .errors import InputFileError, InvalidArgumentError
from .neuro_array import ScheduleConfig
from .neuro_frontend import CouplingSpec, GainStage, calibrate_gain_stage

DEFAULTS = {
    "seed": 0,
    "adc": {
        "c_int_F": 100e-15,
        "v_reset_V": 0.0,
        "v_comp_V": 1.0,
        "t_dead_s": 0.0,
        "t_meas_s": 0.1,
        "counter_bits": 24,
    },
    "redox": {
        "i_floor_A": 100e-12,
        "i_full_A": 10e-9,
    },
    "assay": {
        "layout_path": None,
        "sample_path": None,
        "cross_talk": 0.0,
        "noise": True,
        "bandwidth_Hz": 1000.0,
        "threshold_counts": None,
        "frame_index": 0,
    },
    "sweep": {
        "currents_A": None,
        "i_min_A": 1e-12,
        "i_max_A": 100e-9,
        "n_points": 51,
        "per_decade_windows": True,
        "min_counts": 1000,
    },
    "mismatch": {
        "sigma_vth_V": 0.02,
        "sigma_beta_rel": 0.05,
    },
    "coupling": {
        "alpha": 0.8,
        "cleft_height_m": 60e-9,
    },
    "frontend": {
        "vth0_V": 0.7,
        "beta_A_per_V2": 100e-6,
        "i_cal_A": 12.5e-6,
        "storage_quantization_V": 0.0,
        "droop_V_per_s": 0.0,
        "gain_stages": [10.0, 10.0, 4.0],
        "gain_errors": [0.0, 0.0, 0.0],
        "gain_offsets_A": [0.0, 0.0, 0.0],
        "calibrate_gain_stages": True,
    },
    "schedule": {
        "frame_rate_Hz": 2000.0,
        "calib_period_frames": 2000,
    },
    "recording": {
        "duration_s": 0.1,
        "event_threshold_A": 500e-9,
        "stimulus": [],
    },
}

STIMULUS_KEYS = {
    "row": int,
    "col": int,
    "amplitude_V": float,
    "t_onset_s": float,
    "tau_rise_s": float,
    "tau_fall_s": float,
    "radius_px": int,
}
STIMULUS_REQUIRED = {"row", "col", "amplitude_V"}

# keys holding file paths, resolved relative to the config file
PATH_KEYS = {("assay", "layout_path"), ("assay", "sample_path")}


class ConfigError(InvalidArgumentError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-6`` (no dot) as a float, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


def _merge(base: dict, update: dict, where: str = "") -> None:
    for key, value in update.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {name!r} must be a mapping")
            _merge(base[key], value, name + ".")
        else:
            base[key] = value


def parse_override(text: str) -> dict:
    """Turn ``section.key=value`` into a nested dict (value parsed as YAML)."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    value = _load_yaml(raw) if raw.strip() else None
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def load_config(path=None, overrides=(), seed=None) -> dict:
    """Resolve defaults <- file <- overrides <- seed flag."""
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError:
            raise InputFileError(path, "config file not found") from None
        try:
            data = _load_yaml(text) or {}
        except yaml.YAMLError as exc:
            line = getattr(getattr(exc, "problem_mark", None), "line", None)
            raise InputFileError(path, f"YAML syntax error: {exc}",
                                 None if line is None else line + 1) from None
        if not isinstance(data, dict):
            raise InputFileError(path, "top level must be a mapping")
        _merge(cfg, data)
        base_dir = path.resolve().parent
    for text in overrides:
        _merge(cfg, parse_override(text))
    if seed is not None:
        cfg["seed"] = seed
    for section, key in PATH_KEYS:
        p = cfg[section][key]
        if p is not None:
            cfg[section][key] = str((base_dir / p).resolve()) if not Path(p).is_absolute() else p
    validate(cfg)
    return cfg


def _num(cfg, section, key):
    v = cfg[section][key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {v!r}")
    return float(v)


def validate(cfg: dict) -> None:
    """Build every nested config once so physical bounds are checked up front."""
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    adc_config(cfg)
    redox_config(cfg)
    mismatch_spec(cfg)
    coupling_spec(cfg)
    schedule_config(cfg)
    gain_stages(cfg)
    stimulus_entries(cfg)
    a = cfg["assay"]
    if not 0 <= _num(cfg, "assay", "cross_talk") < 0.5:
        raise ConfigError("assay.cross_talk must lie in [0, 0.5)")
    if _num(cfg, "assay", "bandwidth_Hz") <= 0:
        raise ConfigError("assay.bandwidth_Hz must be positive")
    if a["threshold_counts"] is not None and _num(cfg, "assay", "threshold_counts") <= 0:
        raise ConfigError("assay.threshold_counts must be positive")
    for key in ("i_cal_A", "beta_A_per_V2"):
        if _num(cfg, "frontend", key) <= 0:
            raise ConfigError(f"frontend.{key} must be positive")
    if _num(cfg, "frontend", "storage_quantization_V") < 0:
        raise ConfigError("frontend.storage_quantization_V must be non-negative")
    if _num(cfg, "recording", "duration_s") <= 0:
        raise ConfigError("recording.duration_s must be positive")
    if _num(cfg, "recording", "event_threshold_A") <= 0:
        raise ConfigError("recording.event_threshold_A must be positive")


def adc_config(cfg) -> AdcConfig:
    a = cfg["adc"]
    return AdcConfig(
        c_int=_num(cfg, "adc", "c_int_F"),
        v_reset=_num(cfg, "adc", "v_reset_V"),
        v_comp=_num(cfg, "adc", "v_comp_V"),
        t_dead=_num(cfg, "adc", "t_dead_s"),
        t_meas=_num(cfg, "adc", "t_meas_s"),
        counter_bits=int(a["counter_bits"]),
    )


def redox_config(cfg) -> RedoxConfig:
    return RedoxConfig(_num(cfg, "redox", "i_floor_A"), _num(cfg, "redox", "i_full_A"))


def mismatch_spec(cfg) -> MismatchSpec:
    return MismatchSpec(_num(cfg, "mismatch", "sigma_vth_V"), _num(cfg, "mismatch", "sigma_beta_rel"))


def coupling_spec(cfg) -> CouplingSpec:
    return CouplingSpec(_num(cfg, "coupling", "alpha"), _num(cfg, "coupling", "cleft_height_m"))


def schedule_config(cfg) -> ScheduleConfig:
    return ScheduleConfig(
        frame_rate=_num(cfg, "schedule", "frame_rate_Hz"),
        calib_period=int(cfg["schedule"]["calib_period_frames"]),
    )


def gain_stages(cfg) -> list[GainStage]:
    f = cfg["frontend"]
    gains, errs, offs = f["gain_stages"], f["gain_errors"], f["gain_offsets_A"]
    if not (isinstance(gains, list) and len(gains) == len(errs) == len(offs)):
        raise ConfigError("gain_stages, gain_errors and gain_offsets_A must be lists of equal length")
    stages = [GainStage(float(g), float(e), float(o)) for g, e, o in zip(gains, errs, offs)]
    if f["calibrate_gain_stages"]:
        stages = [calibrate_gain_stage(s) for s in stages]
    return stages


def stimulus_entries(cfg) -> list[dict]:
    entries = cfg["recording"]["stimulus"]
    if not isinstance(entries, list):
        raise ConfigError("recording.stimulus must be a list")
    out = []
    for n, e in enumerate(entries):
        if not isinstance(e, dict):
            raise ConfigError(f"recording.stimulus[{n}] must be a mapping")
        unknown = set(e) - set(STIMULUS_KEYS)
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)} in recording.stimulus[{n}]")
        missing = STIMULUS_REQUIRED - set(e)
        if missing:
            raise ConfigError(f"recording.stimulus[{n}] lacks {sorted(missing)}")
        out.append({k: STIMULUS_KEYS[k](v) for k, v in e.items()})
    return out


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
