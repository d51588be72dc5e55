"""Noise-driven calibration of static measurement nonlinearities.

A measurement chain with a smooth monotone distortion f scales whatever
noise rides on its input by the local gain |f'|.  Watching how the output
noise amplitude varies with output level therefore reveals the shape of
f without any access to the input, and integrating the reciprocal of
that profile yields a compensating function g with g(f(x)) affine in x.

The package provides the full experiment chain: test-signal synthesis
and ground-truth nonlinearities (:mod:`noisecal.signals`), the streaming
level/noise split and block statistics (:mod:`noisecal.dsp`), offline
profile estimation and integration plus DNL/INL metrology
(:mod:`noisecal.ident`), an adaptive floating-point compensator
(:mod:`noisecal.rbf`), an integer-only feedback compensator fit for
fixed-point hardware (:mod:`noisecal.pwl`), THD instrumentation
(:mod:`noisecal.metrics`), and a config-driven command line harness
(:mod:`noisecal.cli`).
"""

from ._kernels import BACKEND as kernel_backend
from .dsp import (
    BiquadCoeffs,
    BlockStats,
    biquad_process,
    block_stats,
    butterworth2_lowpass,
    iir_smooth,
    split_signal_noise,
)
from .ident import (
    InverseTable,
    LinearityReport,
    SigmaProfile,
    compute_dnl,
    compute_inl,
    estimate_sigma_profile,
    integrate_inverse,
    linearity_report,
)
from .metrics import ThdReport, rms_linearity_error, thd, thd_improvement
from .pwl import PwlModel, PwlPipeline, PwlSnapshot
from .rbf import QuadSegmentTable, RbfModel, RbfPipeline, ReintegrationRecord
from .signals import (
    HardClip,
    Identity,
    MonotoneTable,
    NoiseSpec,
    OddPolynomial,
    ScaledTanh,
    SignalFrame,
    distort,
    gen_sine,
    gen_triangle,
    make_nonlinearity,
    quantize,
)

__version__ = "0.1.0"

__all__ = [
    "kernel_backend",
    "BiquadCoeffs",
    "BlockStats",
    "biquad_process",
    "block_stats",
    "butterworth2_lowpass",
    "iir_smooth",
    "split_signal_noise",
    "InverseTable",
    "LinearityReport",
    "SigmaProfile",
    "compute_dnl",
    "compute_inl",
    "estimate_sigma_profile",
    "integrate_inverse",
    "linearity_report",
    "ThdReport",
    "rms_linearity_error",
    "thd",
    "thd_improvement",
    "PwlModel",
    "PwlPipeline",
    "PwlSnapshot",
    "QuadSegmentTable",
    "RbfModel",
    "RbfPipeline",
    "ReintegrationRecord",
    "HardClip",
    "Identity",
    "MonotoneTable",
    "NoiseSpec",
    "OddPolynomial",
    "ScaledTanh",
    "SignalFrame",
    "distort",
    "gen_sine",
    "gen_triangle",
    "make_nonlinearity",
    "quantize",
    "__version__",
]
