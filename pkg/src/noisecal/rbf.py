"""Adaptive compensator built on an integrated triangular-basis model.

The derivative of the compensating function is expanded over triangular
(hat) basis functions on a uniform grid of the output range; the weights
adapt online so each basis tracks sigma_ref / sigma_hat at its level,
i.e. the reciprocal of the local gain.  Integrating the hat expansion
analytically gives a table of quadratic segments (values join C0/C1 at
the knots by construction), renormalized after every integration so the
compensator maps [y_min, y_max] onto itself.  Compensation is then a
single table lookup per sample, cheap enough for real time.

The model keeps n_pieces + 1 weights: one basis per knot, including both
endpoints, so the hat functions sum to one everywhere on the range and a
flat weight vector reproduces the identity map exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dsp import BlockStats, butterworth2_lowpass, biquad_process
from .signals import SignalFrame

__all__ = ["RbfModel", "QuadSegmentTable", "ReintegrationRecord", "RbfPipeline"]


@dataclass(frozen=True)
class QuadSegmentTable:
    """Immutable piecewise-quadratic compensation table.

    Segment n covers [y_min + n*delta, y_min + (n+1)*delta] and evaluates
    a_n + b_n*t + c_n*t^2 with t the offset into the segment.  Inputs
    outside the range clamp to the endpoint values.
    """

    y_min: float
    y_max: float
    delta: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for arr in (self.a, self.b, self.c):
            arr.flags.writeable = False

    @property
    def n_segments(self) -> int:
        return self.a.size

    @property
    def knot_values(self) -> np.ndarray:
        """Table values at the n_segments + 1 knots."""
        end = self.a[-1] + self.delta * (self.b[-1] + self.delta * self.c[-1])
        return np.concatenate((self.a, [end]))

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        out, _ = _kernels.quad_eval(
            self.a, self.b, self.c, self.y_min, self.y_max, self.delta, np.asarray(y, dtype=np.float64)
        )
        return out

    def evaluate_counted(self, y: np.ndarray):
        """Like evaluate, but also reports how many inputs were clamped."""
        return _kernels.quad_eval(
            self.a, self.b, self.c, self.y_min, self.y_max, self.delta, np.asarray(y, dtype=np.float64)
        )


class RbfModel:
    """Weight vector of the derivative expansion plus its update rule."""

    def __init__(
        self,
        y_min: float = -1.0,
        y_max: float = 1.0,
        n_pieces: int = 256,
        alpha: float = 0.01,
        boundary_scale: float = 2.0,
        epsilon_floor: float = 1e-4,
        sigma_floor: float | None = None,
    ):
        if not (y_max > y_min):
            raise ValueError(f"need y_max > y_min, got [{y_min}, {y_max}]")
        if n_pieces < 2:
            raise ValueError(f"n_pieces must be >= 2, got {n_pieces}")
        if not (0 < alpha <= 1):
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if not (epsilon_floor > 0):
            raise ValueError(f"epsilon_floor must be positive, got {epsilon_floor}")
        self.y_min = float(y_min)
        self.y_max = float(y_max)
        self.n_pieces = int(n_pieces)
        self.delta = (self.y_max - self.y_min) / self.n_pieces
        self.alpha = float(alpha)
        self.boundary_scale = float(boundary_scale)
        self.epsilon_floor = float(epsilon_floor)
        # default floor: 1e-6 of full scale, guards the w_obs division
        self.sigma_floor = float(sigma_floor) if sigma_floor is not None else 1e-6 * (self.y_max - self.y_min)
        self.weights = np.ones(self.n_pieces + 1)
        self.update_counts = np.zeros(self.n_pieces + 1, dtype=np.int64)

    def basis(self, y: float):
        """Active segment and the two hat activations at level y.

        Returns (n, a_lo, a_hi): basis n gets a_lo, basis n+1 gets a_hi.
        In range the two activations sum to one; outside the range the
        nearest endpoint basis takes full activation.
        """
        if y < self.y_min:
            return 0, 1.0, 0.0
        if y > self.y_max:
            return self.n_pieces - 1, 0.0, 1.0
        n = int((y - self.y_min) / self.delta)
        if n > self.n_pieces - 1:
            n = self.n_pieces - 1
        a_hi = (y - self.y_min - n * self.delta) / self.delta
        return n, 1.0 - a_hi, a_hi

    def update_weights(self, block: BlockStats, sigma_ref: float) -> bool:
        """Relax the two active weights toward sigma_ref / sigma_hat.

        The step is alpha scaled by each basis activation (doubled for the
        endpoint bases, which only ever see half a hat), capped at a full
        replacement.  Returns False without touching anything if the block
        level is outside the table range.
        """
        lv = float(block.y_level)
        sg = float(block.sigma_hat)
        if not (self.y_min <= lv <= self.y_max):
            return False
        w_obs = sigma_ref / (sg if sg > self.sigma_floor else self.sigma_floor)
        n, a_lo, a_hi = self.basis(lv)
        for k, act in ((n, a_lo), (n + 1, a_hi)):
            if act <= 0.0:
                continue
            eff = self.alpha * act
            if k == 0 or k == self.n_pieces:
                eff *= self.boundary_scale
            if eff > 1.0:
                eff = 1.0
            w = (1.0 - eff) * self.weights[k] + eff * w_obs
            self.weights[k] = w if w > self.epsilon_floor else self.epsilon_floor
            self.update_counts[k] += 1
        return True

    def reintegrate(self) -> QuadSegmentTable:
        """Integrate the current weights into a fresh compensation table.

        Knot values accumulate the trapezoid of adjacent weights; the
        whole table is then rescaled and shifted so it maps
        [y_min, y_max] onto itself (the absolute gain and offset of a
        compensating function are not observable, so we pin them).
        """
        w = self.weights
        seg = 0.5 * self.delta * (w[:-1] + w[1:])
        knots = np.concatenate(([0.0], np.cumsum(seg)))
        scale = (self.y_max - self.y_min) / knots[-1]
        return QuadSegmentTable(
            y_min=self.y_min,
            y_max=self.y_max,
            delta=self.delta,
            a=self.y_min + scale * knots[:-1],
            b=scale * w[:-1],
            c=scale * (w[1:] - w[:-1]) / (2.0 * self.delta),
        )


@dataclass
class ReintegrationRecord:
    """Telemetry captured every time the table is rebuilt."""

    ordinal: int
    at_sample: int
    blocks_seen: int
    discarded_blocks: int
    sigma_ref: float
    weights: np.ndarray = field(repr=False)


class RbfPipeline:
    """Streaming estimator + compensator around one RbfModel.

    Feed distorted frames through :meth:`process`; each frame is filtered
    into level and noise paths, block statistics update the weights, the
    table is re-integrated every ``reintegrate_period`` blocks, and the
    raw samples are passed through the current table.  Processing a
    stream in slices of any size gives the same output as one call.
    """

    def __init__(
        self,
        sample_rate: float,
        y_min: float = -1.0,
        y_max: float = 1.0,
        n_pieces: int = 256,
        block_size: int = 4,
        block_interval: int = 128,
        reintegrate_period: int = 1024,
        alpha: float = 0.01,
        alpha_ref: float = 1e-3,
        boundary_scale: float = 2.0,
        epsilon_floor: float = 1e-4,
        sigma_floor: float | None = None,
        cutoff_hz: float | None = None,
    ):
        if block_size < 2:
            raise ValueError(f"block_size must be >= 2, got {block_size}")
        if block_interval < block_size:
            raise ValueError(
                f"block_interval ({block_interval}) must be >= block_size ({block_size})"
            )
        if reintegrate_period < 1:
            raise ValueError(f"reintegrate_period must be >= 1, got {reintegrate_period}")
        if not (0 < alpha_ref <= 1):
            raise ValueError(f"alpha_ref must lie in (0, 1], got {alpha_ref}")
        self.sample_rate = float(sample_rate)
        self.block_size = int(block_size)
        self.block_interval = int(block_interval)
        self.reintegrate_period = int(reintegrate_period)
        self.alpha_ref = float(alpha_ref)
        self.model = RbfModel(
            y_min=y_min,
            y_max=y_max,
            n_pieces=n_pieces,
            alpha=alpha,
            boundary_scale=boundary_scale,
            epsilon_floor=epsilon_floor,
            sigma_floor=sigma_floor,
        )
        self.coeffs = butterworth2_lowpass(
            cutoff_hz if cutoff_hz is not None else self.sample_rate / 64.0, self.sample_rate
        )
        self.table = self.model.reintegrate()
        self.sigma_ref = -1.0  # cold start: seeded by the first block
        self.blocks_seen = 0
        self.discarded_blocks = 0
        self.clamped_samples = 0
        self.reintegrations: list[ReintegrationRecord] = []
        self._filter_state: np.ndarray | None = None
        self._global = 0
        self._next_block_start = 0
        self._pend_sig = np.empty(0)
        self._pend_noise = np.empty(0)

    def process(self, frame: SignalFrame) -> SignalFrame:
        if frame.sample_rate != self.sample_rate:
            raise ValueError(
                f"frame sample rate {frame.sample_rate} does not match pipeline rate {self.sample_rate}"
            )
        x = frame.samples
        if not np.isfinite(x).all():
            raise ValueError("frame contains non-finite samples")

        level, self._filter_state = biquad_process(self.coeffs, x, self._filter_state)
        noise = x - level

        g0 = self._global
        n = x.size
        B = self.block_size
        I = self.block_interval

        levels = []
        sigmas = []
        completions = []

        s = self._next_block_start
        if self._pend_sig.size:
            need = B - self._pend_sig.size
            if n >= need:
                sig_b = np.concatenate((self._pend_sig, level[:need]))
                noi_b = np.concatenate((self._pend_noise, noise[:need]))
                levels.append(np.array([sig_b.mean()]))
                sigmas.append(np.array([noi_b.std(ddof=1)]))
                completions.append(np.array([s + B - 1]))
                self._pend_sig = np.empty(0)
                self._pend_noise = np.empty(0)
                s += I
            else:
                self._pend_sig = np.concatenate((self._pend_sig, level))
                self._pend_noise = np.concatenate((self._pend_noise, noise))

        if not self._pend_sig.size and s + B <= g0 + n:
            starts = np.arange(s, g0 + n - B + 1, I, dtype=np.int64)
            lv, sg = _kernels.block_gather_stats(level, noise, starts - g0, B)
            levels.append(lv)
            sigmas.append(sg)
            completions.append(starts + B - 1)
            s = int(starts[-1]) + I

        if not self._pend_sig.size and s < g0 + n:
            self._pend_sig = level[s - g0 :].copy()
            self._pend_noise = noise[s - g0 :].copy()
        self._next_block_start = s

        out = np.empty(n)
        seg_lo = 0
        if levels:
            all_lv = np.concatenate(levels)
            all_sg = np.concatenate(sigmas)
            all_cmpl = np.concatenate(completions)
            m = self.model
            bpos = 0
            while bpos < all_lv.size:
                room = self.reintegrate_period - (self.blocks_seen % self.reintegrate_period)
                gcount = min(room, all_lv.size - bpos)
                self.sigma_ref, disc = _kernels.weight_update_run(
                    m.weights,
                    m.update_counts,
                    all_lv[bpos : bpos + gcount],
                    all_sg[bpos : bpos + gcount],
                    m.y_min,
                    m.y_max,
                    m.delta,
                    m.alpha,
                    m.boundary_scale,
                    m.epsilon_floor,
                    m.sigma_floor,
                    self.sigma_ref,
                    self.alpha_ref,
                )
                self.discarded_blocks += disc
                self.blocks_seen += gcount
                bpos += gcount
                if self.blocks_seen % self.reintegrate_period == 0:
                    # new table takes effect on the sample after the block
                    # that completed the period
                    seg_hi = int(all_cmpl[bpos - 1]) + 1 - g0
                    vals, ncl = self.table.evaluate_counted(x[seg_lo:seg_hi])
                    out[seg_lo:seg_hi] = vals
                    self.clamped_samples += ncl
                    seg_lo = seg_hi
                    self.table = self.model.reintegrate()
                    self.reintegrations.append(
                        ReintegrationRecord(
                            ordinal=len(self.reintegrations) + 1,
                            at_sample=g0 + seg_hi,
                            blocks_seen=self.blocks_seen,
                            discarded_blocks=self.discarded_blocks,
                            sigma_ref=self.sigma_ref,
                            weights=self.model.weights.copy(),
                        )
                    )

        vals, ncl = self.table.evaluate_counted(x[seg_lo:])
        out[seg_lo:] = vals
        self.clamped_samples += ncl
        self._global += n
        return SignalFrame(out, self.sample_rate)
