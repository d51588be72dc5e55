"""Streaming DSP blocks: the signal/noise splitting filter and block stats.

The estimator needs the instantaneous signal level and the amplitude of
the high-frequency noise riding on it.  Both come from one second-order
Butterworth low-pass: the filter output is the level, and input minus
output is the noise path (exactly complementary, so nothing is lost
between the two).  Noise amplitude is then measured as the sample
standard deviation of short blocks of the noise path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .signals import SignalFrame

__all__ = [
    "BiquadCoeffs",
    "BlockStats",
    "butterworth2_lowpass",
    "biquad_process",
    "split_signal_noise",
    "block_stats",
    "iir_smooth",
]


@dataclass(frozen=True)
class BiquadCoeffs:
    """Normalized biquad coefficients (a0 = 1): y += b*x - a*y."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def is_stable(self) -> bool:
        # Poles strictly inside the unit circle: |a2| < 1 and |a1| < 1 + a2.
        return abs(self.a2) < 1.0 and abs(self.a1) < 1.0 + self.a2


def butterworth2_lowpass(cutoff_hz: float, sample_rate: float) -> BiquadCoeffs:
    """Second-order Butterworth low-pass via the prewarped bilinear transform.

    DC gain is exactly one by construction (b0+b1+b2 == 1+a1+a2) and the
    response is -3.01 dB at the cutoff.
    """
    if not (0 < cutoff_hz < sample_rate / 2):
        raise ValueError(
            f"cutoff_hz must lie in (0, sample_rate/2) = (0, {sample_rate / 2}), got {cutoff_hz}"
        )
    k = np.tan(np.pi * cutoff_hz / sample_rate)
    d = 1.0 + np.sqrt(2.0) * k + k * k
    b0 = k * k / d
    return BiquadCoeffs(
        b0=b0,
        b1=2.0 * b0,
        b2=b0,
        a1=2.0 * (k * k - 1.0) / d,
        a2=(1.0 - np.sqrt(2.0) * k + k * k) / d,
    )


def biquad_process(
    coeffs: BiquadCoeffs, samples: np.ndarray, state: np.ndarray | None = None
):
    """Filter a slice of samples, direct form II transposed.

    ``state`` is the two-element delay line; pass the returned state back
    in to continue a stream.  Feeding a stream in slices produces the same
    output as one call (bit for bit).
    """
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if state is None:
        z1 = z2 = 0.0
    else:
        z1, z2 = float(state[0]), float(state[1])
    y, z1, z2 = _kernels.biquad_df2t(coeffs.b0, coeffs.b1, coeffs.b2, coeffs.a1, coeffs.a2, x, z1, z2)
    return y, np.array([z1, z2])


def split_signal_noise(
    frame: SignalFrame,
    cutoff_hz: float | None = None,
    state: np.ndarray | None = None,
):
    """Split a frame into its low-pass level and the residual noise path.

    The default cutoff is sample_rate/64.  Returns (level, noise, state);
    level + noise reconstructs the input to within float rounding.
    """
    if cutoff_hz is None:
        cutoff_hz = frame.sample_rate / 64.0
    coeffs = butterworth2_lowpass(cutoff_hz, frame.sample_rate)
    level, state = biquad_process(coeffs, frame.samples, state)
    noise = frame.samples - level
    return SignalFrame(level, frame.sample_rate), SignalFrame(noise, frame.sample_rate), state


@dataclass
class BlockStats:
    """Level and noise amplitude measured over one short block."""

    block_index: int
    y_level: float
    sigma_hat: float
    n_samples: int


def block_stats(
    signal: SignalFrame | np.ndarray,
    noise: SignalFrame | np.ndarray,
    block_size: int = 4,
    block_interval: int = 128,
) -> list[BlockStats]:
    """Block mean of ``signal`` and n-1 standard deviation of ``noise``.

    Blocks of ``block_size`` samples start every ``block_interval``
    samples; a trailing partial block is dropped.  The n-1 (sample)
    deviation keeps the estimate unbiased in variance for the tiny blocks
    used here.
    """
    sig = signal.samples if isinstance(signal, SignalFrame) else np.asarray(signal, dtype=np.float64)
    noi = noise.samples if isinstance(noise, SignalFrame) else np.asarray(noise, dtype=np.float64)
    if sig.shape != noi.shape:
        raise ValueError("signal and noise must have the same length")
    if block_size < 2:
        raise ValueError(f"block_size must be >= 2 for an n-1 deviation, got {block_size}")
    if block_interval < block_size:
        raise ValueError(
            f"block_interval ({block_interval}) must be >= block_size ({block_size})"
        )
    n_blocks = (sig.size - block_size) // block_interval + 1 if sig.size >= block_size else 0
    if n_blocks <= 0:
        return []
    starts = np.arange(n_blocks, dtype=np.intp) * block_interval
    levels, sigmas = _kernels.block_gather_stats(
        np.ascontiguousarray(sig), np.ascontiguousarray(noi), starts, block_size
    )
    return [
        BlockStats(block_index=i, y_level=float(levels[i]), sigma_hat=float(sigmas[i]), n_samples=block_size)
        for i in range(n_blocks)
    ]


def iir_smooth(previous: float, observation: float, alpha: float) -> float:
    """One step of the slow exponential average used for reference levels."""
    if not (0 < alpha <= 1):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return (1.0 - alpha) * previous + alpha * observation
