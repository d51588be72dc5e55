"""Experiment configuration: JSON file -> validated dataclasses.

One config file describes one experiment end to end: stimulus,
nonlinearity, noise, pipeline choice and tunables, duration, output
names, and optional sweep axes. Validation is all-at-once: every
problem in the file is collected and reported in a single error, and
unknown keys are errors rather than warnings since a silently ignored
typo in a tunable would invalidate the experiment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .signals import make_nonlinearity

__all__ = [
    "ConfigError",
    "StimulusConfig",
    "NonlinearityConfig",
    "NoiseConfig",
    "PipelineConfig",
    "ThdConfig",
    "SweepConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

_STIMULUS_KINDS = ("sine", "triangle")
_PIPELINE_KINDS = ("rbf", "pwl", "offline")

# default output file name per role; all paths resolve under --output
_DEFAULT_OUTPUTS = {
    "clean": "clean.csv",
    "distorted": "distorted.csv",
    "codes": "codes.csv",
    "compensated": "compensated.csv",
    "telemetry": "telemetry.csv",
    "sigma_profile": "sigma_profile.csv",
    "inverse_table": "inverse_table.csv",
    "linearity": "linearity.csv",
    "results": "results.csv",
}


class ConfigError(ValueError):
    """A config file failed validation; the message lists every problem."""


@dataclass
class StimulusConfig:
    kind: str = "sine"
    freq_hz: float = 997.0
    amplitude: float = 0.9


@dataclass
class NonlinearityConfig:
    kind: str = "identity"
    params: dict = field(default_factory=dict)


@dataclass
class NoiseConfig:
    sigma: float = 0.01
    seed: int = 0


@dataclass
class PipelineConfig:
    kind: str = "rbf"
    # shared estimator timing
    block_size: int = 4
    block_interval: int = 128
    cutoff_hz: float | None = None
    # rbf table
    n_pieces: int = 256
    alpha: float = 0.01
    alpha_ref: float = 1e-3
    boundary_scale: float = 2.0
    epsilon_floor: float = 1e-4
    sigma_floor: float | None = None
    reintegrate_period: int = 1024
    y_min: float = -1.0
    y_max: float = 1.0
    # pwl feedback
    n_ranges: int = 32
    input_bits: int = 10
    output_bits: int = 12
    w_max: int | None = None
    deadband_shift: int = 4
    shift_constant: int = 8
    ref_frac_bits: int = 16
    ma_len: int = 64
    telemetry_period: int = 1024
    pwl_seed: int = 1
    # offline identification
    n_bins: int = 256
    min_count: int = 8
    normalization: str = "endpoints"
    code_bits: int = 8


@dataclass
class ThdConfig:
    f0_hz: float | None = None  # defaults to the stimulus frequency
    n_harmonics: int = 9


@dataclass
class SweepConfig:
    drives: list = field(default_factory=list)
    freqs_hz: list = field(default_factory=list)
    block_sizes: list = field(default_factory=list)

    def points(self, base_drive, base_freq, base_block):
        """Cartesian grid; an empty axis pins that coordinate to the base."""
        drives = self.drives or [base_drive]
        freqs = self.freqs_hz or [base_freq]
        blocks = self.block_sizes or [base_block]
        return [(d, f, b) for d in drives for f in freqs for b in blocks]

    @property
    def is_empty(self):
        return not (self.drives or self.freqs_hz or self.block_sizes)


@dataclass
class ExperimentConfig:
    sample_rate_hz: float
    duration_samples: int
    stimulus: StimulusConfig
    nonlinearity: NonlinearityConfig
    noise: NoiseConfig
    pipeline: PipelineConfig
    thd: ThdConfig
    sweep: SweepConfig
    outputs: dict

    @property
    def thd_f0(self) -> float:
        return self.thd.f0_hz if self.thd.f0_hz is not None else self.stimulus.freq_hz

    def make_model(self, drive: float | None = None):
        """Instantiate the configured nonlinearity, optionally overriding drive."""
        params = dict(self.nonlinearity.params)
        if drive is not None:
            params["drive"] = drive
        return make_nonlinearity(self.nonlinearity.kind, **params)


class _Section:
    # pops known keys from a raw dict, records anything left over
    def __init__(self, raw, name, errors):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            errors.append(f"{name}: expected an object, got {type(raw).__name__}")
            raw = {}
        self.raw = dict(raw)
        self.name = name
        self.errors = errors

    def take(self, key, default, kind, check=None, describe=""):
        if key not in self.raw:
            return default
        value = self.raw.pop(key)
        where = f"{self.name}.{key}" if self.name else key
        if kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif kind is str:
            ok = isinstance(value, str)
        elif kind is list:
            ok = isinstance(value, list)
        elif kind is dict:
            ok = isinstance(value, dict)
        else:
            raise AssertionError(kind)
        if not ok:
            self.errors.append(f"{where}: expected {kind.__name__}, got {value!r}")
            return default
        if kind is float and not math.isfinite(value):
            self.errors.append(f"{where}: must be finite, got {value!r}")
            return default
        if check is not None and not check(value):
            self.errors.append(f"{where}: {describe}, got {value!r}")
            return default
        return value

    def finish(self):
        for key in self.raw:
            where = f"{self.name}.{key}" if self.name else key
            self.errors.append(f"unknown key {where!r}")


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping; raises ConfigError listing all faults."""
    errors: list[str] = []
    top = _Section(raw, "", errors)

    sample_rate = top.take("sample_rate_hz", None, float, lambda v: v > 0, "must be > 0")
    duration = top.take("duration_samples", None, int, lambda v: v >= 1, "must be >= 1")
    if "sample_rate_hz" not in raw:
        errors.append("sample_rate_hz is required")
    if "duration_samples" not in raw:
        errors.append("duration_samples is required")

    st = _Section(top.raw.pop("stimulus", None), "stimulus", errors)
    stimulus = StimulusConfig(
        kind=st.take("kind", "sine", str, lambda v: v in _STIMULUS_KINDS,
                     f"must be one of {_STIMULUS_KINDS}"),
        freq_hz=st.take("freq_hz", 997.0, float, lambda v: v > 0, "must be > 0"),
        amplitude=st.take("amplitude", 0.9, float, lambda v: v > 0, "must be > 0"),
    )
    st.finish()

    nl = _Section(top.raw.pop("nonlinearity", None), "nonlinearity", errors)
    nl_kind = nl.take("kind", "identity", str)
    nl_params = dict(nl.raw)  # remaining keys are model parameters
    nl.raw = {}
    nl.finish()
    nonlinearity = NonlinearityConfig(kind=nl_kind, params=nl_params)
    try:
        make_nonlinearity(nl_kind, **nl_params)
    except (ValueError, TypeError) as exc:
        errors.append(f"nonlinearity: {exc}")

    nz = _Section(top.raw.pop("noise", None), "noise", errors)
    noise = NoiseConfig(
        sigma=nz.take("sigma", 0.01, float, lambda v: v >= 0, "must be >= 0"),
        seed=nz.take("seed", 0, int, lambda v: 0 <= v < 2 ** 64,
                     "must fit in an unsigned 64-bit value"),
    )
    nz.finish()

    pl = _Section(top.raw.pop("pipeline", None), "pipeline", errors)
    pipeline = PipelineConfig(
        kind=pl.take("kind", "rbf", str, lambda v: v in _PIPELINE_KINDS,
                     f"must be one of {_PIPELINE_KINDS}"),
        block_size=pl.take("block_size", 4, int, lambda v: v >= 2, "must be >= 2"),
        block_interval=pl.take("block_interval", 128, int, lambda v: v >= 2, "must be >= 2"),
        cutoff_hz=pl.take("cutoff_hz", None, float, lambda v: v > 0, "must be > 0"),
        n_pieces=pl.take("n_pieces", 256, int, lambda v: v >= 2, "must be >= 2"),
        alpha=pl.take("alpha", 0.01, float, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
        alpha_ref=pl.take("alpha_ref", 1e-3, float, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
        boundary_scale=pl.take("boundary_scale", 2.0, float, lambda v: v >= 1, "must be >= 1"),
        epsilon_floor=pl.take("epsilon_floor", 1e-4, float, lambda v: v > 0, "must be > 0"),
        sigma_floor=pl.take("sigma_floor", None, float, lambda v: v > 0, "must be > 0"),
        reintegrate_period=pl.take("reintegrate_period", 1024, int, lambda v: v >= 1, "must be >= 1"),
        y_min=pl.take("y_min", -1.0, float),
        y_max=pl.take("y_max", 1.0, float),
        n_ranges=pl.take("n_ranges", 32, int, lambda v: v >= 2, "must be >= 2"),
        input_bits=pl.take("input_bits", 10, int, lambda v: 2 <= v <= 24, "must lie in [2, 24]"),
        output_bits=pl.take("output_bits", 12, int, lambda v: 2 <= v <= 24, "must lie in [2, 24]"),
        w_max=pl.take("w_max", None, int, lambda v: v >= 1, "must be >= 1"),
        deadband_shift=pl.take("deadband_shift", 4, int, lambda v: v >= 0, "must be >= 0"),
        shift_constant=pl.take("shift_constant", 8, int, lambda v: v >= 0, "must be >= 0"),
        ref_frac_bits=pl.take("ref_frac_bits", 16, int, lambda v: 1 <= v <= 32, "must lie in [1, 32]"),
        ma_len=pl.take("ma_len", 64, int, lambda v: v >= 2, "must be >= 2"),
        telemetry_period=pl.take("telemetry_period", 1024, int, lambda v: v >= 1, "must be >= 1"),
        pwl_seed=pl.take("pwl_seed", 1, int, lambda v: v >= 0, "must be >= 0"),
        n_bins=pl.take("n_bins", 256, int, lambda v: v >= 2, "must be >= 2"),
        min_count=pl.take("min_count", 8, int, lambda v: v >= 2, "must be >= 2"),
        normalization=pl.take("normalization", "endpoints", str,
                              lambda v: v in ("endpoints", "physical"),
                              "must be 'endpoints' or 'physical'"),
        code_bits=pl.take("code_bits", 8, int, lambda v: 2 <= v <= 24, "must lie in [2, 24]"),
    )
    pl.finish()
    if pipeline.y_max <= pipeline.y_min:
        errors.append("pipeline: y_max must exceed y_min")
    if pipeline.block_interval < pipeline.block_size:
        errors.append("pipeline: block_interval must be >= block_size")

    th = _Section(top.raw.pop("thd", None), "thd", errors)
    thd_cfg = ThdConfig(
        f0_hz=th.take("f0_hz", None, float, lambda v: v > 0, "must be > 0"),
        n_harmonics=th.take("n_harmonics", 9, int, lambda v: v >= 2, "must be >= 2"),
    )
    th.finish()

    sw = _Section(top.raw.pop("sweep", None), "sweep", errors)
    num = lambda seq: all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq)
    sweep = SweepConfig(
        drives=sw.take("drives", [], list, num, "must be a list of numbers"),
        freqs_hz=sw.take("freqs_hz", [], list,
                         lambda seq: num(seq) and all(v > 0 for v in seq),
                         "must be a list of positive numbers"),
        block_sizes=sw.take("block_sizes", [], list,
                            lambda seq: all(isinstance(v, int) and not isinstance(v, bool) and v >= 2 for v in seq),
                            "must be a list of integers >= 2"),
    )
    sw.finish()
    if sweep.drives and nonlinearity.kind != "scaled-tanh":
        errors.append("sweep.drives: only meaningful for the scaled-tanh nonlinearity")

    out = _Section(top.raw.pop("outputs", None), "outputs", errors)
    outputs = dict(_DEFAULT_OUTPUTS)
    for role in _DEFAULT_OUTPUTS:
        outputs[role] = out.take(role, outputs[role], str)
    out.finish()

    top.finish()

    if sample_rate is not None and stimulus.freq_hz >= sample_rate / 2:
        errors.append("stimulus.freq_hz must lie below the Nyquist frequency")

    if errors:
        raise ConfigError(
            "invalid config ({} problem{}):\n  ".format(len(errors), "s" if len(errors) > 1 else "")
            + "\n  ".join(errors)
        )
    return ExperimentConfig(
        sample_rate_hz=sample_rate,
        duration_samples=duration,
        stimulus=stimulus,
        nonlinearity=nonlinearity,
        noise=noise,
        pipeline=pipeline,
        thd=thd_cfg,
        sweep=sweep,
        outputs=outputs,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(raw)
