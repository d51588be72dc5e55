"""Test signal generation and ground-truth nonlinearities.

This module provides the stimulus side of the experiment harness: periodic
test signals, a Gaussian input-noise description, and a small family of
static nonlinearities used as the "device under test".  Every nonlinearity
exposes both the forward map and its analytic derivative so the rest of the
library can be checked against exact ground truth.

All nonlinearities fix f(0) = 0.  Models that are meant to be invertible
additionally verify strict monotonicity over their admissible domain at
construction time, so downstream code can rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SignalFrame",
    "NoiseSpec",
    "Identity",
    "ScaledTanh",
    "OddPolynomial",
    "HardClip",
    "MonotoneTable",
    "make_nonlinearity",
    "gen_sine",
    "gen_triangle",
    "distort",
    "quantize",
]


@dataclass
class SignalFrame:
    """A contiguous batch of samples tagged with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("SignalFrame samples must be one-dimensional")
        if self.samples.size == 0:
            raise ValueError("SignalFrame must contain at least one sample")
        if not (self.sample_rate > 0):
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return self.samples.size


@dataclass
class NoiseSpec:
    """White Gaussian input noise: standard deviation and generator seed."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma >= 0):
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")


class Nonlinearity:
    """Base class for static (memoryless) nonlinearities.

    Subclasses implement __call__ and derivative as vectorized maps and set
    ``domain`` to the admissible input interval and ``monotone`` to whether
    the map is strictly increasing on that interval.
    """

    domain: tuple[float, float] = (-np.inf, np.inf)
    monotone: bool = True

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def _check_monotone(self, n_grid: int = 4097):
        lo, hi = self.domain
        if not np.isfinite([lo, hi]).all():
            lo, hi = max(lo, -8.0), min(hi, 8.0)
        grid = np.linspace(lo, hi, n_grid)
        if np.any(self.derivative(grid) <= 0):
            raise ValueError(f"{type(self).__name__} is not strictly increasing on its domain")


class Identity(Nonlinearity):
    """f(x) = x.  The null case: a perfectly linear system."""

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64).copy()

    def derivative(self, x):
        return np.ones_like(np.asarray(x, dtype=np.float64))


class ScaledTanh(Nonlinearity):
    """Soft saturation f(x) = tanh(g*x) / tanh(g), normalized so f(1) = 1.

    ``drive`` g controls how hard the curve saturates; g -> 0 approaches
    identity.  The analytic inverse is artanh(y * tanh(g)) / g, which makes
    this the reference model for closed-form checks.
    """

    def __init__(self, drive: float):
        if not (drive > 0):
            raise ValueError(f"drive must be positive, got {drive}")
        self.drive = float(drive)
        self._norm = np.tanh(self.drive)

    def __call__(self, x):
        return np.tanh(self.drive * np.asarray(x, dtype=np.float64)) / self._norm

    def derivative(self, x):
        t = np.tanh(self.drive * np.asarray(x, dtype=np.float64))
        return self.drive * (1.0 - t * t) / self._norm

    def inverse(self, y):
        return np.arctanh(np.asarray(y, dtype=np.float64) * self._norm) / self.drive


class OddPolynomial(Nonlinearity):
    """f(x) = c1*x + c3*x^3 + c5*x^5 + ...  (odd powers only, so f(0) = 0).

    Coefficients are given lowest order first.  Construction fails if the
    polynomial is not strictly increasing on the admissible domain.
    """

    def __init__(self, coeffs, domain: tuple[float, float] = (-1.25, 1.25)):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        if self.coeffs.size == 0:
            raise ValueError("need at least one coefficient")
        self.domain = (float(domain[0]), float(domain[1]))
        self._check_monotone()

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        x2 = x * x
        acc = np.zeros_like(x)
        for c in self.coeffs[::-1]:
            acc = acc * x2 + c
        return acc * x

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        x2 = x * x
        acc = np.zeros_like(x)
        for j in range(self.coeffs.size - 1, -1, -1):
            acc = acc * x2 + (2 * j + 1) * self.coeffs[j]
        return acc


class HardClip(Nonlinearity):
    """f(x) = clip(x, -t, t).  Not invertible; used for failure-mode tests."""

    monotone = False

    def __init__(self, threshold: float = 1.0):
        if not (threshold > 0):
            raise ValueError(f"threshold must be positive, got {threshold}")
        self.threshold = float(threshold)

    def __call__(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), -self.threshold, self.threshold)

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(np.abs(x) < self.threshold, 1.0, 0.0)


class MonotoneTable(Nonlinearity):
    """Piecewise-linear map through (x_break, y_break) pairs.

    Breakpoints must be strictly increasing in both coordinates and the
    table must pass through the origin.  Evaluation interpolates linearly;
    the derivative is the slope of the segment containing x (the right-hand
    segment exactly at an interior breakpoint).
    """

    def __init__(self, x_breaks, y_breaks):
        self.x_breaks = np.asarray(x_breaks, dtype=np.float64)
        self.y_breaks = np.asarray(y_breaks, dtype=np.float64)
        if self.x_breaks.ndim != 1 or self.x_breaks.shape != self.y_breaks.shape:
            raise ValueError("x_breaks and y_breaks must be 1-d arrays of equal length")
        if self.x_breaks.size < 2:
            raise ValueError("need at least two breakpoints")
        if np.any(np.diff(self.x_breaks) <= 0) or np.any(np.diff(self.y_breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing in x and y")
        if self.x_breaks[0] > 0 or self.x_breaks[-1] < 0:
            raise ValueError("table must contain x = 0")
        if abs(np.interp(0.0, self.x_breaks, self.y_breaks)) > 1e-12:
            raise ValueError("table must map 0 to 0")
        self.domain = (float(self.x_breaks[0]), float(self.x_breaks[-1]))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=np.float64), self.x_breaks, self.y_breaks)

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        slopes = np.diff(self.y_breaks) / np.diff(self.x_breaks)
        idx = np.clip(np.searchsorted(self.x_breaks, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]


_MODEL_KINDS = {
    "identity": Identity,
    "scaled-tanh": ScaledTanh,
    "odd-polynomial": OddPolynomial,
    "hard-clip": HardClip,
    "monotone-table": MonotoneTable,
}


def make_nonlinearity(kind: str, **params) -> Nonlinearity:
    """Construct a nonlinearity by name; used by the config layer."""
    try:
        cls = _MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(
            f"unknown nonlinearity kind {kind!r}; expected one of {sorted(_MODEL_KINDS)}"
        ) from None
    return cls(**params)


def _check_gen_args(freq_hz: float, amplitude: float, n_samples: int, sample_rate: float):
    if not (sample_rate > 0):
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    if not (0 < freq_hz < sample_rate / 2):
        raise ValueError(
            f"freq_hz must lie in (0, sample_rate/2) = (0, {sample_rate / 2}), got {freq_hz}"
        )
    if not (amplitude >= 0):
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")


def gen_sine(
    freq_hz: float,
    amplitude: float,
    n_samples: int,
    sample_rate: float,
    phase: float = 0.0,
) -> SignalFrame:
    """Sampled sine amplitude*sin(2*pi*freq*t + phase), t = k/sample_rate."""
    _check_gen_args(freq_hz, amplitude, n_samples, sample_rate)
    k = np.arange(n_samples, dtype=np.float64)
    samples = amplitude * np.sin(2.0 * np.pi * freq_hz / sample_rate * k + phase)
    return SignalFrame(samples, sample_rate)


def gen_triangle(
    freq_hz: float, amplitude: float, n_samples: int, sample_rate: float
) -> SignalFrame:
    """Symmetric triangle wave, peak +-amplitude, starting at 0 and rising.

    The triangle spends equal time at every level, which makes it the
    stimulus of choice for code-density linearity tests.
    """
    _check_gen_args(freq_hz, amplitude, n_samples, sample_rate)
    k = np.arange(n_samples, dtype=np.float64)
    phase = np.mod(freq_hz / sample_rate * k, 1.0)
    tri = np.where(phase < 0.25, 4.0 * phase, np.where(phase < 0.75, 2.0 - 4.0 * phase, 4.0 * phase - 4.0))
    return SignalFrame(amplitude * tri, sample_rate)


def quantize(frame: SignalFrame, bits: int) -> np.ndarray:
    """Map [-1, 1) samples to unsigned codes of the given bit width.

    code = floor((x + 1) * 2^(bits-1)), clipped to [0, 2^bits - 1].  This
    is the converter between float streams and the integer-code streams
    the fixed-point pipeline consumes.
    """
    if not (2 <= bits <= 24):
        raise ValueError(f"bits must lie in [2, 24], got {bits}")
    half = float(1 << (bits - 1))
    codes = np.floor((frame.samples + 1.0) * half)
    return np.clip(codes, 0, 2 * half - 1).astype(np.int64)


def distort(model: Nonlinearity, clean: SignalFrame, noise: NoiseSpec) -> SignalFrame:
    """Pass clean + Gaussian noise through a static nonlinearity.

    Returns f(x + n) where n is white Gaussian noise drawn from a PCG64
    generator seeded with ``noise.seed`` (same seed, same samples).  The
    frame is rejected if the noisy excursion can leave the model's
    admissible domain: the clean extremes padded by five sigma must stay
    inside it.
    """
    x = clean.samples
    lo, hi = model.domain
    pad = 5.0 * noise.sigma
    if x.min() - pad < lo or x.max() + pad > hi:
        raise ValueError(
            f"signal excursion [{x.min() - pad:.6g}, {x.max() + pad:.6g}] leaves the "
            f"admissible domain [{lo:.6g}, {hi:.6g}] of {type(model).__name__}"
        )
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        x = x + rng.normal(0.0, noise.sigma, x.size)
    return SignalFrame(model(x), clean.sample_rate)
