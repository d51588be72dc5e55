"""Offline identification: noise-amplitude profile and its integral inverse.

Given block statistics from a distorted record, ``estimate_sigma_profile``
bins the noise amplitude against output level.  Since the observed noise
amplitude is |f'(x)| times the input noise amplitude, integrating
sigma_in / sigma_out over output level reproduces the compensating
function up to an affine map; ``integrate_inverse`` does that with the
trapezoid rule.  The module also carries the standard code-density
linearity metrics (DNL/INL) used to grade converters before and after
compensation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dsp import BlockStats

__all__ = [
    "SigmaProfile",
    "InverseTable",
    "LinearityReport",
    "estimate_sigma_profile",
    "integrate_inverse",
    "compute_dnl",
    "compute_inl",
    "linearity_report",
]


@dataclass
class SigmaProfile:
    """Noise amplitude binned against output level.

    ``sigma_o[k]`` is the RMS of the block sigmas whose level fell in bin
    k (RMS because sigma estimates combine in quadrature); bins with fewer
    than ``min_count`` blocks are marked invalid and carry NaN.
    """

    y_centers: np.ndarray
    sigma_o: np.ndarray
    counts: np.ndarray
    valid: np.ndarray
    y_min: float
    y_max: float
    min_count: int


def estimate_sigma_profile(
    blocks: Sequence[BlockStats],
    y_min: float,
    y_max: float,
    n_bins: int = 256,
    min_count: int = 8,
) -> SigmaProfile:
    """Aggregate block statistics into a sigma-vs-level profile.

    Blocks whose level falls outside [y_min, y_max] are ignored; a level
    exactly at y_max lands in the last bin.
    """
    if not (y_max > y_min):
        raise ValueError(f"need y_max > y_min, got [{y_min}, {y_max}]")
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    levels = np.fromiter((b.y_level for b in blocks), dtype=np.float64, count=len(blocks))
    sigmas = np.fromiter((b.sigma_hat for b in blocks), dtype=np.float64, count=len(blocks))

    width = (y_max - y_min) / n_bins
    keep = (levels >= y_min) & (levels <= y_max)
    idx = ((levels[keep] - y_min) / width).astype(np.intp)
    np.minimum(idx, n_bins - 1, out=idx)

    counts = np.bincount(idx, minlength=n_bins)
    sumsq = np.bincount(idx, weights=sigmas[keep] ** 2, minlength=n_bins)
    valid = counts >= min_count
    sigma_o = np.full(n_bins, np.nan)
    sigma_o[valid] = np.sqrt(sumsq[valid] / counts[valid])

    centers = y_min + (np.arange(n_bins) + 0.5) * width
    return SigmaProfile(
        y_centers=centers,
        sigma_o=sigma_o,
        counts=counts,
        valid=valid,
        y_min=float(y_min),
        y_max=float(y_max),
        min_count=min_count,
    )


@dataclass
class InverseTable:
    """Tabulated compensating function g(y) on a uniform level grid.

    ``normalization`` records how the affine freedom was fixed:
    "endpoints" pins g to the profile's level span (input noise amplitude
    unknown), "physical" anchors the start and keeps the physical slope
    (input noise amplitude supplied).
    """

    y_grid: np.ndarray
    g_values: np.ndarray
    normalization: str

    def evaluate(self, y):
        return np.interp(np.asarray(y, dtype=np.float64), self.y_grid, self.g_values)


def integrate_inverse(profile: SigmaProfile, sigma_in: float | None = None) -> InverseTable:
    """Trapezoid-integrate sigma_in / sigma_o(y) into the compensating map.

    Uses the profile's contiguous run of valid bins (gaps in the interior
    are an error: the integral cannot jump them).  With ``sigma_in``
    unknown the result is normalized so its endpoints match the level
    grid; the compensating function is only ever defined up to an affine
    map, so this loses nothing.
    """
    valid_idx = np.flatnonzero(profile.valid)
    if valid_idx.size < 2:
        raise ValueError("profile has fewer than two valid bins; nothing to integrate")
    first, last = valid_idx[0], valid_idx[-1]
    if valid_idx.size != last - first + 1:
        missing = np.setdiff1d(np.arange(first, last + 1), valid_idx)
        raise ValueError(
            f"profile has underpopulated interior bins at indices {missing.tolist()}; "
            "collect more data or coarsen the binning"
        )
    sigma = profile.sigma_o[first : last + 1]
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("valid bins must carry finite positive sigma")

    y = profile.y_centers[first : last + 1]
    scale = 1.0 if sigma_in is None else float(sigma_in)
    integrand = scale / sigma
    g = np.concatenate(([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(y))))

    if sigma_in is None:
        span = g[-1] - g[0]
        if span <= 0:
            raise ValueError("integral failed to increase; profile is degenerate")
        g = y[0] + (g - g[0]) * (y[-1] - y[0]) / span
        norm = "endpoints"
    else:
        g = y[0] + g
        norm = "physical"
    if np.any(np.diff(g) <= 0):
        raise ValueError("compensating map is not strictly increasing")
    return InverseTable(y_grid=y, g_values=g, normalization=norm)


@dataclass
class LinearityReport:
    """Code-density linearity: DNL/INL over the exercised code range."""

    codes: np.ndarray
    dnl: np.ndarray
    inl: np.ndarray
    first_code: int
    last_code: int
    n_samples: int


def compute_dnl(
    code_histogram: np.ndarray,
    stimulus: str = "uniform",
    amplitude: float = 1.0,
    offset: float = 0.0,
    full_scale: tuple[float, float] = (-1.0, 1.0),
) -> tuple[np.ndarray, int, int]:
    """Per-code differential nonlinearity from a code-density histogram.

    ``stimulus`` is "uniform" (triangle/ramp: flat hit density) or "sine"
    (arcsine hit density with the given amplitude/offset in input units;
    codes are assumed to span ``full_scale`` uniformly).  The first and
    last exercised codes absorb the stimulus tails and are excluded.
    Returns (dnl, first_code, last_code) where dnl covers codes
    first_code+1 .. last_code-1 and averages to zero by construction.
    """
    hist = np.asarray(code_histogram, dtype=np.float64)
    if hist.ndim != 1 or hist.size < 4:
        raise ValueError("code_histogram must be 1-d with at least 4 codes")
    total = hist.sum()
    if total < 1e5:
        raise ValueError(f"need at least 1e5 samples for a code-density estimate, got {int(total)}")
    nonzero = np.flatnonzero(hist)
    first, last = int(nonzero[0]), int(nonzero[-1])
    if last - first + 1 < 4:
        raise ValueError("fewer than 4 codes exercised")
    inner = hist[first + 1 : last]
    if np.any(inner == 0):
        raise ValueError("missing codes inside the exercised range; cannot form widths")

    if stimulus == "uniform":
        widths = inner.copy()
    elif stimulus == "sine":
        n_codes = hist.size
        lo, hi = full_scale
        edges = lo + (hi - lo) * np.arange(n_codes + 1) / n_codes
        z = np.clip((edges - offset) / amplitude, -1.0, 1.0)
        cdf = np.arcsin(z) / np.pi + 0.5
        p = np.diff(cdf)[first + 1 : last]
        if np.any(p <= 0):
            raise ValueError("sine stimulus does not cover the exercised code range")
        widths = inner / (p * total)
    else:
        raise ValueError(f"stimulus must be 'uniform' or 'sine', got {stimulus!r}")

    dnl = widths / widths.mean() - 1.0
    return dnl, first, last


def compute_inl(dnl: np.ndarray) -> np.ndarray:
    """Integral nonlinearity from DNL, endpoint-anchored.

    Accumulates DNL and removes the straight line through the endpoints,
    so the first and last entries of the underlying transfer map carry no
    error by definition.  When the DNL sums to zero this reduces to a
    plain running sum.
    """
    dnl = np.asarray(dnl, dtype=np.float64)
    csum = np.cumsum(dnl)
    m = dnl.size
    return csum - csum[-1] * np.arange(1, m + 1) / m


def linearity_report(
    code_histogram: np.ndarray,
    stimulus: str = "uniform",
    amplitude: float = 1.0,
    offset: float = 0.0,
    full_scale: tuple[float, float] = (-1.0, 1.0),
) -> LinearityReport:
    """Bundle DNL and INL over the exercised code range."""
    hist = np.asarray(code_histogram)
    dnl, first, last = compute_dnl(hist, stimulus, amplitude, offset, full_scale)
    return LinearityReport(
        codes=np.arange(first + 1, last),
        dnl=dnl,
        inl=compute_inl(dnl),
        first_code=first,
        last_code=last,
        n_samples=int(hist.sum()),
    )
