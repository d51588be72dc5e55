"""Stimulus generation, quantization and ground-truth nonlinearities."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from noisecal import (
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


def test_signal_frame_validation():
    with pytest.raises(ValueError):
        SignalFrame(np.empty(0), 48000.0)
    with pytest.raises(ValueError):
        SignalFrame(np.zeros((4, 4)), 48000.0)
    with pytest.raises(ValueError):
        SignalFrame(np.zeros(4), 0.0)
    frame = SignalFrame([0, 1, 2], 8000.0)
    assert frame.samples.dtype == np.float64
    assert len(frame) == 3


def test_gen_sine_basic():
    frame = gen_sine(1000.0, 0.5, 48000, 48000.0)
    assert len(frame) == 48000
    assert frame.samples[0] == 0.0
    assert_allclose(frame.samples.max(), 0.5, atol=1e-6)
    # exactly 1000 cycles in one second: spectrum peaks at bin 1000
    spec = np.abs(np.fft.rfft(frame.samples))
    assert spec.argmax() == 1000


def test_gen_sine_phase():
    frame = gen_sine(997.0, 1.0, 100, 48000.0, phase=np.pi / 2)
    assert_allclose(frame.samples[0], 1.0)


def test_gen_sine_rejects_bad_args():
    with pytest.raises(ValueError):
        gen_sine(30000.0, 1.0, 100, 48000.0)  # above Nyquist
    with pytest.raises(ValueError):
        gen_sine(0.0, 1.0, 100, 48000.0)
    with pytest.raises(ValueError):
        gen_sine(1000.0, -0.1, 100, 48000.0)
    with pytest.raises(ValueError):
        gen_sine(1000.0, 1.0, 0, 48000.0)


def test_gen_triangle_shape():
    fs = 48000.0
    frame = gen_triangle(100.0, 0.8, 4800, fs)  # ten periods
    x = frame.samples
    assert x[0] == 0.0
    assert_allclose(x.max(), 0.8, atol=0.8 * 4 * 100.0 / fs)
    assert_allclose(x.min(), -0.8, atol=0.8 * 4 * 100.0 / fs)
    # constant slew magnitude everywhere except the two turnarounds
    slew = np.abs(np.diff(x))
    expected = 0.8 * 4.0 * 100.0 / fs
    assert np.sum(np.abs(slew - expected) > 1e-9) <= 2 * 10


def test_gen_triangle_level_density_uniform():
    frame = gen_triangle(313.0, 1.0, 1_000_000, 48000.0)
    hist, _ = np.histogram(frame.samples, bins=20, range=(-1.0, 1.0))
    assert hist.min() > 0.9 * hist.mean()
    assert hist.max() < 1.1 * hist.mean()


def test_quantize_grid_and_clipping():
    frame = SignalFrame([-1.0, -0.5, 0.0, 0.5, 1.0 - 2**-9, 1.5], 1.0)
    codes = quantize(frame, 10)
    assert codes.dtype == np.int64
    assert list(codes) == [0, 256, 512, 768, 1023, 1023]
    with pytest.raises(ValueError):
        quantize(frame, 1)
    with pytest.raises(ValueError):
        quantize(frame, 25)


def test_quantize_is_monotone():
    x = np.sort(np.random.default_rng(0).uniform(-1.2, 1.2, 1000))
    codes = quantize(SignalFrame(x, 1.0), 8)
    assert np.all(np.diff(codes) >= 0)


def test_identity_model():
    model = Identity()
    x = np.linspace(-2, 2, 11)
    assert_allclose(model(x), x)
    assert_allclose(model.derivative(x), 1.0)


def test_scaled_tanh_normalization_and_inverse():
    model = ScaledTanh(2.0)
    assert model(0.0) == 0.0
    assert_allclose(model(1.0), 1.0, rtol=1e-15)
    x = np.linspace(-0.99, 0.99, 101)
    assert_allclose(model.inverse(model(x)), x, atol=1e-12)


@pytest.mark.parametrize("model", [ScaledTanh(3.0), OddPolynomial([1.0, 0.2, 0.05])])
def test_analytic_derivative_matches_numeric(model):
    x = np.linspace(-0.9, 0.9, 201)
    h = 1e-6
    numeric = (model(x + h) - model(x - h)) / (2 * h)
    assert_allclose(model.derivative(x), numeric, rtol=1e-8, atol=1e-8)


def test_scaled_tanh_rejects_nonpositive_drive():
    with pytest.raises(ValueError):
        ScaledTanh(0.0)


def test_odd_polynomial_rejects_nonmonotone():
    # f'(x) = 1 - 3x^2 turns negative inside the default domain
    with pytest.raises(ValueError):
        OddPolynomial([1.0, -1.0])


def test_hard_clip():
    model = HardClip(0.5)
    assert not model.monotone
    assert_allclose(model(np.array([-1.0, 0.2, 1.0])), [-0.5, 0.2, 0.5])
    assert_allclose(model.derivative(np.array([0.0, 0.9])), [1.0, 0.0])


def test_monotone_table():
    table = MonotoneTable([-1.0, 0.0, 1.0], [-2.0, 0.0, 1.0])
    assert table.domain == (-1.0, 1.0)
    assert_allclose(table(np.array([-0.5, 0.5])), [-1.0, 0.5])
    assert_allclose(table.derivative(np.array([-0.5, 0.5])), [2.0, 1.0])
    with pytest.raises(ValueError):
        MonotoneTable([0.5, 1.0], [0.5, 1.0])  # does not contain 0
    with pytest.raises(ValueError):
        MonotoneTable([-1.0, 0.0, 1.0], [-1.0, 0.5, 1.0])  # f(0) != 0
    with pytest.raises(ValueError):
        MonotoneTable([-1.0, 0.0, 1.0], [-1.0, 0.0, -0.5])  # decreasing


def test_make_nonlinearity():
    model = make_nonlinearity("scaled-tanh", drive=2.0)
    assert isinstance(model, ScaledTanh)
    with pytest.raises(ValueError, match="unknown nonlinearity"):
        make_nonlinearity("cubic")


def test_distort_deterministic_and_noise_level():
    clean = gen_sine(997.0, 0.5, 100000, 48000.0)
    a = distort(Identity(), clean, NoiseSpec(0.01, 42))
    b = distort(Identity(), clean, NoiseSpec(0.01, 42))
    assert np.array_equal(a.samples, b.samples)
    resid = a.samples - clean.samples
    assert_allclose(resid.std(), 0.01, rtol=0.02)


def test_distort_zero_sigma_is_exact():
    clean = gen_sine(997.0, 0.5, 1000, 48000.0)
    out = distort(ScaledTanh(2.0), clean, NoiseSpec(0.0))
    assert_allclose(out.samples, ScaledTanh(2.0)(clean.samples), rtol=0, atol=0)


def test_distort_rejects_domain_excursion():
    # 5 sigma of headroom is required against the model domain
    clean = gen_sine(313.0, 1.2, 1000, 48000.0)
    model = MonotoneTable([-1.25, 0.0, 1.25], [-1.25, 0.0, 1.25])
    with pytest.raises(ValueError, match="admissible domain"):
        distort(model, clean, NoiseSpec(0.02))
    distort(model, clean, NoiseSpec(0.005))  # 1.2 + 5*0.005 fits
