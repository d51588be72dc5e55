"""Integer-only feedback compensator on piecewise-linear spans.

This is the form of the compensator that fits in fixed-point hardware:
the input code range is cut into a power-of-two number of equal ranges,
each mapped linearly onto an integer span of output codes.  Every
arithmetic step is integer (shifts, adds, one multiply per sample), so
the whole loop can run in an FPGA or a small MCU exactly as it runs
here; both software backends and any such port produce bit-identical
output streams.

Adaptation is a conservative exchange: when the short-block noise
variance in the key range sits above the slow reference, that range
donates one output code of span to a randomly drawn partner that has
room, and the mirror move when the variance sits below.  The total span
is therefore conserved unconditionally, and all randomness comes from an
explicit xorshift64* generator held in the model state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import _pyref
from ._kernels._layout import (
    MASK64,
    PP_BLOCK,
    PP_DEADBAND_SHIFT,
    PP_FRAC_BITS,
    PP_INTERVAL,
    PP_LOG2_BLOCK,
    PP_LOG2_MA,
    PP_MA_LEN,
    PP_PARAM_LEN,
    PP_N_RANGES,
    PP_RANGE_SHIFT,
    PP_SHIFT_CONST,
    PP_TELEM_PERIOD,
    PP_W_MAX,
    PWL_BLOCKS,
    PWL_DEC,
    PWL_INC,
    PWL_PARTNER_FAIL,
    PWL_RNG,
    PWL_SAMPLE_IDX,
    PWL_SAT_NARROW,
    PWL_SAT_WIDEN,
    PWL_STATE_LEN,
    SNAP_BLOCKS,
    SNAP_DEC,
    SNAP_INC,
    SNAP_META_LEN,
    SNAP_PARTNER_FAIL,
    SNAP_REF_VAR,
    SNAP_SAT_NARROW,
    SNAP_SAT_WIDEN,
)

__all__ = ["PwlModel", "PwlSnapshot", "PwlPipeline"]


def _is_pow2(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


def _splitmix64(v: int) -> int:
    v = (v + 0x9E3779B97F4A7C15) & MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & MASK64
    return v ^ (v >> 31)


class PwlModel:
    """Span table, reference-variance filter and update rule.

    ``spans[i]`` output codes are assigned to input range i; ``cum`` is
    the exclusive prefix sum, so a full-scale input always maps to the
    full output range.  All mutable loop state (reference accumulator,
    RNG, counters) lives in an int64 vector shared with the streaming
    kernel.
    """

    def __init__(
        self,
        n_ranges: int = 32,
        input_bits: int = 10,
        output_bits: int = 12,
        w_max: int | None = None,
        deadband_shift: int = 4,
        shift_constant: int = 8,
        ref_frac_bits: int = 16,
        seed: int = 1,
    ):
        if not _is_pow2(n_ranges) or n_ranges < 2:
            raise ValueError(f"n_ranges must be a power of two >= 2, got {n_ranges}")
        if not (2 <= input_bits <= 24) or not (2 <= output_bits <= 24):
            raise ValueError("input_bits and output_bits must lie in [2, 24]")
        if n_ranges > (1 << input_bits):
            raise ValueError("n_ranges cannot exceed the number of input codes")
        n_out = 1 << output_bits
        if n_out % n_ranges:
            raise ValueError("output codes must divide evenly over the ranges")
        span0 = n_out // n_ranges
        if w_max is None:
            w_max = 4 * span0
        if not (span0 <= w_max <= n_out):
            raise ValueError(f"w_max must lie in [{span0}, {n_out}], got {w_max}")
        if not (0 <= deadband_shift <= 16):
            raise ValueError(f"deadband_shift must lie in [0, 16], got {deadband_shift}")
        if not (0 <= shift_constant <= 24):
            raise ValueError(f"shift_constant must lie in [0, 24], got {shift_constant}")
        # the rounded readout is exact only while the settling band of the
        # floored shift stays below half an output unit
        if not (shift_constant < ref_frac_bits <= 32):
            raise ValueError("need shift_constant < ref_frac_bits <= 32")

        self.n_ranges = int(n_ranges)
        self.input_bits = int(input_bits)
        self.output_bits = int(output_bits)
        self.range_width = (1 << input_bits) // n_ranges
        self.range_shift = int(self.range_width.bit_length() - 1)
        self.n_out = n_out
        self.w_max = int(w_max)

        self.spans = np.full(self.n_ranges, span0, dtype=np.int64)
        self.cum = np.concatenate(([0], np.cumsum(self.spans)))
        self.state = np.zeros(PWL_STATE_LEN, dtype=np.int64)
        rng0 = _splitmix64(seed & MASK64)
        if rng0 == 0:
            rng0 = 0x9E3779B97F4A7C15
        self.state[PWL_RNG] = _pyref._to_i64(rng0)
        self.params = np.zeros(PP_PARAM_LEN, dtype=np.int64)
        self.params[PP_RANGE_SHIFT] = self.range_shift
        self.params[PP_DEADBAND_SHIFT] = deadband_shift
        self.params[PP_SHIFT_CONST] = shift_constant
        self.params[PP_FRAC_BITS] = ref_frac_bits
        self.params[PP_W_MAX] = self.w_max
        self.params[PP_N_RANGES] = self.n_ranges

    def eval(self, codes):
        """Map input codes through the span table.

        Pure integer: out = cum[i] + (residual * spans[i]) >> range_shift.
        Rejects codes outside [0, 2^input_bits).
        """
        arr = np.asarray(codes)
        if not np.issubdtype(arr.dtype, np.integer):
            raise TypeError(f"codes must be integers, got dtype {arr.dtype}")
        arr = arr.astype(np.int64, copy=False)
        if arr.size and (arr.min() < 0 or arr.max() >= (1 << self.input_bits)):
            raise ValueError(f"codes must lie in [0, {1 << self.input_bits})")
        i = arr >> self.range_shift
        r = arr - (i << self.range_shift)
        out = self.cum[i] + ((r * self.spans[i]) >> self.range_shift)
        return int(out) if np.isscalar(codes) else out

    @property
    def ref_var(self) -> int:
        return _pyref.pwl_ref_var(self.state, self.params)

    def update_reference(self, block_var: int):
        """Fold one block variance into the slow reference filter."""
        if block_var < 0:
            raise ValueError(f"block_var must be >= 0, got {block_var}")
        _pyref.pwl_update_reference(self.state, self.params, block_var)

    def feedback_update(self, block_var: int, range_index: int):
        """One conservative span exchange keyed to ``range_index``."""
        if block_var < 0:
            raise ValueError(f"block_var must be >= 0, got {block_var}")
        if not (0 <= range_index < self.n_ranges):
            raise ValueError(f"range_index must lie in [0, {self.n_ranges}), got {range_index}")
        _pyref.pwl_feedback_update(
            self.spans, self.cum, self.state, self.params, block_var, range_index
        )

    @property
    def counters(self) -> dict:
        return {
            "saturated_narrow": int(self.state[PWL_SAT_NARROW]),
            "saturated_widen": int(self.state[PWL_SAT_WIDEN]),
            "partner_failures": int(self.state[PWL_PARTNER_FAIL]),
            "increments": int(self.state[PWL_INC]),
            "decrements": int(self.state[PWL_DEC]),
        }


@dataclass
class PwlSnapshot:
    """Periodic telemetry row from the streaming loop."""

    blocks_seen: int
    ref_var: int
    saturated_narrow: int
    saturated_widen: int
    partner_failures: int
    increments: int
    decrements: int
    spans: np.ndarray = field(repr=False)


class PwlPipeline:
    """Streaming wrapper: moving-average split, block variance, feedback.

    The signal level is a boxcar moving average over the last ``ma_len``
    compensated samples (power of two, so the divide is a shift) and the
    noise is the deviation from it.  The first ``block_size`` samples of
    every ``block_interval`` form a measurement block; at its last sample
    the block variance updates the reference filter and then the span
    table, keyed by the range the block's mean level fell in.  Output
    depends only on the input stream and the seed, never on how the
    stream is sliced across calls.
    """

    def __init__(
        self,
        model: PwlModel | None = None,
        block_size: int = 4,
        block_interval: int = 128,
        ma_len: int = 64,
        telemetry_period: int = 1024,
        **model_kwargs,
    ):
        self.model = model if model is not None else PwlModel(**model_kwargs)
        if not _is_pow2(block_size) or block_size < 2:
            raise ValueError(f"block_size must be a power of two >= 2, got {block_size}")
        if block_interval < block_size:
            raise ValueError(
                f"block_interval ({block_interval}) must be >= block_size ({block_size})"
            )
        if not _is_pow2(ma_len):
            raise ValueError(f"ma_len must be a power of two, got {ma_len}")
        if telemetry_period < 0:
            raise ValueError(f"telemetry_period must be >= 0, got {telemetry_period}")
        self.block_size = int(block_size)
        self.block_interval = int(block_interval)
        self.ma_len = int(ma_len)
        self.telemetry_period = int(telemetry_period)
        p = self.model.params
        p[PP_BLOCK] = block_size
        p[PP_LOG2_BLOCK] = block_size.bit_length() - 1
        p[PP_INTERVAL] = block_interval
        p[PP_MA_LEN] = ma_len
        p[PP_LOG2_MA] = ma_len.bit_length() - 1
        p[PP_TELEM_PERIOD] = telemetry_period
        self._ring = np.zeros(self.ma_len, dtype=np.int64)
        self._devbuf = np.zeros(self.block_size, dtype=np.int64)
        self.span_sums = np.zeros(self.model.n_ranges, dtype=np.int64)
        self.snapshots: list[PwlSnapshot] = []

    def process(self, codes) -> np.ndarray:
        """Compensate a slice of input codes, adapting as it goes."""
        arr = np.asarray(codes)
        if not np.issubdtype(arr.dtype, np.integer):
            # guard against silent float contamination of the integer path
            raise TypeError(f"codes must be an integer array, got dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= (1 << self.model.input_bits)):
            raise ValueError(f"codes must lie in [0, {1 << self.model.input_bits})")

        if self.telemetry_period > 0:
            max_snaps = arr.size // (self.block_interval * self.telemetry_period) + 2
        else:
            max_snaps = 0
        snap_spans = np.zeros((max_snaps, self.model.n_ranges), dtype=np.int64)
        snap_meta = np.zeros((max_snaps, SNAP_META_LEN), dtype=np.int64)

        out, n_snaps = _kernels.pwl_run(
            arr,
            self.model.spans,
            self.model.cum,
            self.span_sums,
            self._ring,
            self._devbuf,
            self.model.state,
            self.model.params,
            snap_spans,
            snap_meta,
        )
        for i in range(n_snaps):
            self.snapshots.append(
                PwlSnapshot(
                    blocks_seen=int(snap_meta[i, SNAP_BLOCKS]),
                    ref_var=int(snap_meta[i, SNAP_REF_VAR]),
                    saturated_narrow=int(snap_meta[i, SNAP_SAT_NARROW]),
                    saturated_widen=int(snap_meta[i, SNAP_SAT_WIDEN]),
                    partner_failures=int(snap_meta[i, SNAP_PARTNER_FAIL]),
                    increments=int(snap_meta[i, SNAP_INC]),
                    decrements=int(snap_meta[i, SNAP_DEC]),
                    spans=snap_spans[i].copy(),
                )
            )
        return out

    @property
    def blocks_seen(self) -> int:
        return int(self.model.state[PWL_BLOCKS])

    @property
    def samples_seen(self) -> int:
        return int(self.model.state[PWL_SAMPLE_IDX])

    @property
    def span_time_average(self) -> np.ndarray:
        """Per-range span averaged over all completed blocks."""
        if self.blocks_seen == 0:
            return self.model.spans.astype(np.float64)
        return self.span_sums / self.blocks_seen
