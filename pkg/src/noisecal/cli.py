"""Experiment harness CLI.

Subcommands:
  simulate    generate clean/distorted streams from a config
  identify    offline identification: sigma profile, inverse table, DNL/INL
  compensate  run the rbf or pwl pipeline over an input stream
  thd-sweep   THD before/after over a grid of drives/frequencies/block sizes

Every command is a pure function of (config file, input files, seed):
re-running produces byte-identical outputs. THD for compensate/thd-sweep
is measured on the second half of the stream so the reported figure
reflects the converged pipeline rather than the adaptation transient.

Exit codes: 0 success, 1 validation error, 2 runtime/numeric error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import multiprocessing
import os
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .fileio import (
    StreamFormatError,
    _parse_meta,
    read_code_stream,
    read_float_stream,
    write_code_stream,
    write_float_stream,
    write_table,
)
from .dsp import block_stats, split_signal_noise
from .ident import estimate_sigma_profile, integrate_inverse, linearity_report
from .metrics import thd
from .pwl import PwlPipeline, _splitmix64
from .rbf import RbfPipeline
from .signals import NoiseSpec, SignalFrame, distort, gen_sine, gen_triangle, quantize

__all__ = ["main"]

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _point_seed(master: int, index: int) -> int:
    # independent per-point streams: splitmix applied to a strided state
    return _splitmix64((master + (index + 1) * _GOLDEN) & _MASK64)


def _make_stimulus(cfg: ExperimentConfig, freq_hz=None, amplitude=None) -> SignalFrame:
    gen = gen_sine if cfg.stimulus.kind == "sine" else gen_triangle
    return gen(
        freq_hz if freq_hz is not None else cfg.stimulus.freq_hz,
        amplitude if amplitude is not None else cfg.stimulus.amplitude,
        cfg.duration_samples,
        cfg.sample_rate_hz,
    )


def _make_rbf(cfg: ExperimentConfig, block_size=None) -> RbfPipeline:
    p = cfg.pipeline
    return RbfPipeline(
        cfg.sample_rate_hz,
        y_min=p.y_min,
        y_max=p.y_max,
        n_pieces=p.n_pieces,
        block_size=block_size if block_size is not None else p.block_size,
        block_interval=p.block_interval,
        reintegrate_period=p.reintegrate_period,
        alpha=p.alpha,
        alpha_ref=p.alpha_ref,
        boundary_scale=p.boundary_scale,
        epsilon_floor=p.epsilon_floor,
        sigma_floor=p.sigma_floor,
        cutoff_hz=p.cutoff_hz,
    )


def _make_pwl(cfg: ExperimentConfig, block_size=None) -> PwlPipeline:
    p = cfg.pipeline
    return PwlPipeline(
        block_size=block_size if block_size is not None else p.block_size,
        block_interval=p.block_interval,
        ma_len=p.ma_len,
        telemetry_period=p.telemetry_period,
        n_ranges=p.n_ranges,
        input_bits=p.input_bits,
        output_bits=p.output_bits,
        w_max=p.w_max,
        deadband_shift=p.deadband_shift,
        shift_constant=p.shift_constant,
        ref_frac_bits=p.ref_frac_bits,
        seed=p.pwl_seed,
    )


def _thd_db(samples: np.ndarray, rate: float, f0: float, n_harmonics: int) -> float:
    x = np.asarray(samples, dtype=np.float64)
    seg = x[x.size // 2:]
    return thd(SignalFrame(seg - seg.mean(), rate), f0, n_harmonics).thd_db


def _out(outdir: str, cfg: ExperimentConfig, role: str) -> str:
    return os.path.join(outdir, cfg.outputs[role])


def cmd_simulate(cfg: ExperimentConfig, outdir: str) -> None:
    clean = _make_stimulus(cfg)
    model = cfg.make_model()
    distorted = distort(model, clean, NoiseSpec(cfg.noise.sigma, cfg.noise.seed))
    write_float_stream(_out(outdir, cfg, "clean"), clean)
    write_float_stream(_out(outdir, cfg, "distorted"), distorted)
    if cfg.pipeline.kind == "pwl":
        codes = quantize(distorted, cfg.pipeline.input_bits)
        write_code_stream(
            _out(outdir, cfg, "codes"), codes, cfg.pipeline.input_bits,
            sample_rate=cfg.sample_rate_hz,
        )


def cmd_identify(cfg: ExperimentConfig, input_path: str, outdir: str) -> None:
    frame = read_float_stream(input_path)
    p = cfg.pipeline
    level, noise, _ = split_signal_noise(frame, cutoff_hz=p.cutoff_hz)
    blocks = block_stats(level, noise, p.block_size, p.block_interval)
    profile = estimate_sigma_profile(blocks, p.y_min, p.y_max, p.n_bins, p.min_count)
    write_table(
        _out(outdir, cfg, "sigma_profile"),
        {
            "bin": np.arange(profile.y_centers.size),
            "y_center": profile.y_centers,
            "sigma_o": profile.sigma_o,
            "count": profile.counts,
            "valid": profile.valid.astype(np.int64),
        },
        meta={"n_blocks": len(blocks), "min_count": p.min_count},
    )
    table = integrate_inverse(profile)
    write_table(
        _out(outdir, cfg, "inverse_table"),
        {"y": table.y_grid, "g": table.g_values},
        meta={"normalization": table.normalization},
    )
    codes = quantize(frame, p.code_bits)
    hist = np.bincount(codes, minlength=1 << p.code_bits)
    if cfg.stimulus.kind == "sine":
        # amplitude/offset from the exercised code range, so the arcsine
        # density covers every interior code even after distortion
        nz = np.flatnonzero(hist)
        n_codes = hist.size
        edge_lo = -1.0 + 2.0 * nz[0] / n_codes
        edge_hi = -1.0 + 2.0 * (nz[-1] + 1) / n_codes
        report = linearity_report(
            hist, stimulus="sine",
            amplitude=0.5 * (edge_hi - edge_lo),
            offset=0.5 * (edge_hi + edge_lo),
            full_scale=(-1.0, 1.0),
        )
    else:
        report = linearity_report(hist, stimulus="uniform", full_scale=(-1.0, 1.0))
    write_table(
        _out(outdir, cfg, "linearity"),
        {"code": report.codes, "dnl": report.dnl, "inl": report.inl},
        meta={
            "first_code": report.first_code,
            "last_code": report.last_code,
            "n_samples": report.n_samples,
        },
    )


def cmd_compensate(cfg: ExperimentConfig, input_path: str, outdir: str) -> None:
    kind = cfg.pipeline.kind
    if kind == "offline":
        raise ConfigError("compensate needs pipeline.kind 'rbf' or 'pwl'")
    if kind == "pwl":
        # wrong stream type is a config/usage problem, not a parse failure
        if "bits" not in _parse_meta(input_path):
            raise ConfigError(
                "pwl pipeline accepts integer-code streams only; "
                f"{input_path} has no '# bits=' header"
            )
        stream = read_code_stream(input_path)
        if stream.bits != cfg.pipeline.input_bits:
            raise ConfigError(
                f"input stream is {stream.bits}-bit but pipeline.input_bits="
                f"{cfg.pipeline.input_bits}"
            )
        pipe = _make_pwl(cfg)
        out = pipe.process(stream.codes)
        write_code_stream(
            _out(outdir, cfg, "compensated"), out, cfg.pipeline.output_bits,
            sample_rate=stream.sample_rate,
        )
        snaps = pipe.snapshots
        cols = {
            "blocks_seen": np.array([s.blocks_seen for s in snaps], dtype=np.int64),
            "ref_var": np.array([s.ref_var for s in snaps], dtype=np.int64),
            "increments": np.array([s.increments for s in snaps], dtype=np.int64),
            "decrements": np.array([s.decrements for s in snaps], dtype=np.int64),
            "saturated_narrow": np.array([s.saturated_narrow for s in snaps], dtype=np.int64),
            "saturated_widen": np.array([s.saturated_widen for s in snaps], dtype=np.int64),
            "partner_failures": np.array([s.partner_failures for s in snaps], dtype=np.int64),
        }
        for j in range(cfg.pipeline.n_ranges):
            cols[f"span_{j:02d}"] = np.array([s.spans[j] for s in snaps], dtype=np.int64)
        write_table(_out(outdir, cfg, "telemetry"), cols,
                    meta={"telemetry_period_blocks": cfg.pipeline.telemetry_period})
    else:
        frame = read_float_stream(input_path)
        pipe = _make_rbf(cfg)
        out = pipe.process(frame)
        write_float_stream(_out(outdir, cfg, "compensated"), out)
        recs = pipe.reintegrations
        weights = np.array([r.weights for r in recs]) if recs else np.empty((0, 0))
        cols = {
            "ordinal": np.array([r.ordinal for r in recs], dtype=np.int64),
            "at_sample": np.array([r.at_sample for r in recs], dtype=np.int64),
            "blocks_seen": np.array([r.blocks_seen for r in recs], dtype=np.int64),
            "discarded_blocks": np.array([r.discarded_blocks for r in recs], dtype=np.int64),
            "sigma_ref": np.array([r.sigma_ref for r in recs], dtype=np.float64),
            "weight_min": weights.min(axis=1) if recs else np.empty(0),
            "weight_max": weights.max(axis=1) if recs else np.empty(0),
            "weight_rms_dev": (np.sqrt(np.mean((weights - weights.mean(axis=1, keepdims=True)) ** 2, axis=1))
                               if recs else np.empty(0)),
        }
        write_table(_out(outdir, cfg, "telemetry"), cols,
                    meta={"reintegrate_period_blocks": cfg.pipeline.reintegrate_period})


def _sweep_point(args):
    cfg, index, drive, freq, block_size = args
    seed = _point_seed(cfg.noise.seed, index)
    row = {
        "drive": float(drive) if drive is not None else float("nan"),
        "freq_hz": float(freq),
        "block_size": int(block_size),
        "seed": seed,
        "thd_in_db": float("nan"),
        "thd_out_db": float("nan"),
        "improvement_db": float("nan"),
        "error": "",
    }
    try:
        clean = _make_stimulus(cfg, freq_hz=freq)
        model = cfg.make_model(drive=drive)
        distorted = distort(model, clean, NoiseSpec(cfg.noise.sigma, seed))
        f0 = freq
        nh = cfg.thd.n_harmonics
        if cfg.pipeline.kind == "pwl":
            codes = quantize(distorted, cfg.pipeline.input_bits)
            row["thd_in_db"] = _thd_db(codes, cfg.sample_rate_hz, f0, nh)
            pipe = _make_pwl(cfg, block_size=block_size)
            out = pipe.process(codes)
            row["thd_out_db"] = _thd_db(out, cfg.sample_rate_hz, f0, nh)
        else:
            row["thd_in_db"] = _thd_db(distorted.samples, cfg.sample_rate_hz, f0, nh)
            pipe = _make_rbf(cfg, block_size=block_size)
            out = pipe.process(distorted)
            row["thd_out_db"] = _thd_db(out.samples, cfg.sample_rate_hz, f0, nh)
        row["improvement_db"] = row["thd_in_db"] - row["thd_out_db"]
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        # record and move on; one bad grid point must not kill the sweep
        msg = f"{type(exc).__name__}: {exc}"
        row["error"] = msg.replace(",", ";").replace("\n", " ")
    return row


def cmd_thd_sweep(cfg: ExperimentConfig, outdir: str, parallel: int) -> None:
    if cfg.sweep.is_empty:
        raise ConfigError("thd-sweep needs at least one non-empty sweep axis")
    if cfg.pipeline.kind == "offline":
        raise ConfigError("thd-sweep needs pipeline.kind 'rbf' or 'pwl'")
    base_drive = cfg.nonlinearity.params.get("drive") if cfg.nonlinearity.kind == "scaled-tanh" else None
    points = cfg.sweep.points(base_drive, cfg.stimulus.freq_hz, cfg.pipeline.block_size)
    jobs = [(cfg, i, d, f, b) for i, (d, f, b) in enumerate(points)]
    if parallel > 1:
        with multiprocessing.Pool(parallel) as pool:
            rows = pool.map(_sweep_point, jobs)
    else:
        rows = [_sweep_point(job) for job in jobs]
    write_table(
        _out(outdir, cfg, "results"),
        {
            "drive": np.array([r["drive"] for r in rows]),
            "freq_hz": np.array([r["freq_hz"] for r in rows]),
            "block_size": np.array([r["block_size"] for r in rows], dtype=np.int64),
            "seed": np.array([r["seed"] for r in rows], dtype=np.uint64),
            "thd_in_db": np.array([r["thd_in_db"] for r in rows]),
            "thd_out_db": np.array([r["thd_out_db"] for r in rows]),
            "improvement_db": np.array([r["improvement_db"] for r in rows]),
            "error": np.array([r["error"] for r in rows], dtype=object),
        },
        meta={"master_seed": cfg.noise.seed, "n_points": len(rows)},
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisecal",
        description="Noise-profile nonlinearity identification and compensation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input):
        p.add_argument("--config", required=True, help="JSON experiment config")
        if needs_input:
            p.add_argument("--input", required=True, help="input stream file")
        p.add_argument("--output", default=".", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None,
                       help="override noise.seed from the config")

    common(sub.add_parser("simulate", help="generate clean/distorted streams"), False)
    common(sub.add_parser("identify", help="offline sigma profile, inverse table, DNL/INL"), True)
    common(sub.add_parser("compensate", help="run a pipeline over a stream"), True)
    p_sweep = sub.add_parser("thd-sweep", help="THD improvement over a parameter grid")
    common(p_sweep, False)
    p_sweep.add_argument("--parallel", type=int, default=1, metavar="N",
                         help="run sweep points across N processes")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not (0 <= args.seed < 2 ** 64):
                raise ConfigError("--seed must fit in an unsigned 64-bit value")
            cfg.noise.seed = args.seed
        outdir = args.output
        os.makedirs(outdir, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, outdir)
        elif args.command == "identify":
            cmd_identify(cfg, args.input, outdir)
        elif args.command == "compensate":
            cmd_compensate(cfg, args.input, outdir)
        elif args.command == "thd-sweep":
            if args.parallel < 1:
                raise ConfigError("--parallel must be >= 1")
            cmd_thd_sweep(cfg, outdir, args.parallel)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StreamFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
