"""Splitting filter and block statistics."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.signal import lfilter

from noisecal import (
    SignalFrame,
    biquad_process,
    block_stats,
    butterworth2_lowpass,
    gen_sine,
    iir_smooth,
    split_signal_noise,
)


def _gain_db(c, freq_hz, fs):
    z = np.exp(-2j * np.pi * freq_hz / fs)
    h = (c.b0 + c.b1 * z + c.b2 * z * z) / (1.0 + c.a1 * z + c.a2 * z * z)
    return 20.0 * np.log10(abs(h))


def test_butterworth_quarter_rate_coefficients():
    # at fc = fs/4 the prewarped k is exactly 1 and the coefficients
    # reduce to closed forms in sqrt(2)
    c = butterworth2_lowpass(12000.0, 48000.0)
    d = 2.0 + np.sqrt(2.0)
    assert_allclose(c.b0, 1.0 / d, rtol=0, atol=1e-15)
    assert_allclose(c.b1, 2.0 / d, rtol=0, atol=1e-15)
    assert_allclose(c.b2, 1.0 / d, rtol=0, atol=1e-15)
    assert_allclose(c.a1, 0.0, rtol=0, atol=1e-15)
    assert_allclose(c.a2, (2.0 - np.sqrt(2.0)) / d, rtol=0, atol=1e-15)


@pytest.mark.parametrize("fc,fs", [(750.0, 48000.0), (1000.0, 44100.0), (24218.75, 1.55e6)])
def test_butterworth_cutoff_and_dc(fc, fs):
    c = butterworth2_lowpass(fc, fs)
    assert abs(_gain_db(c, fc, fs) + 3.0103) < 0.05
    assert abs((c.b0 + c.b1 + c.b2) / (1.0 + c.a1 + c.a2) - 1.0) < 1e-12
    assert c.is_stable()


def test_butterworth_rejects_bad_cutoff():
    with pytest.raises(ValueError):
        butterworth2_lowpass(0.0, 48000.0)
    with pytest.raises(ValueError):
        butterworth2_lowpass(24000.0, 48000.0)


def test_biquad_matches_lfilter():
    rng = np.random.default_rng(3)
    x = rng.normal(size=4096)
    c = butterworth2_lowpass(1000.0, 48000.0)
    y, _ = biquad_process(c, x)
    ref = lfilter([c.b0, c.b1, c.b2], [1.0, c.a1, c.a2], x)
    assert_allclose(y, ref, rtol=1e-12, atol=1e-15)


def test_biquad_streaming_invariance():
    """Filtering in arbitrary slices must reproduce the one-shot result."""
    rng = np.random.default_rng(4)
    x = rng.normal(size=10000)
    c = butterworth2_lowpass(750.0, 48000.0)
    whole, _ = biquad_process(c, x)
    pieces = []
    state = None
    for chunk in np.split(x, [1, 8, 9, 4000, 9999]):
        if chunk.size == 0:
            continue
        y, state = biquad_process(c, chunk, state)
        pieces.append(y)
    assert np.array_equal(np.concatenate(pieces), whole)


def test_split_signal_noise_is_complementary():
    frame = gen_sine(997.0, 0.9, 20000, 48000.0)
    level, noise, _ = split_signal_noise(frame)
    # complementary by construction, up to one rounding of the subtraction
    err = np.abs(level.samples + noise.samples - frame.samples)
    assert err.max() < 1e-14


def test_split_signal_noise_separates_bands():
    fs = 48000.0
    k = np.arange(200000)
    slow = 0.5 * np.sin(2 * np.pi * 50.0 / fs * k)
    rng = np.random.default_rng(9)
    fast = 0.01 * rng.normal(size=k.size)
    level, noise, _ = split_signal_noise(SignalFrame(slow + fast, fs), cutoff_hz=750.0)
    # the 50 Hz line survives the level path at full amplitude (the filter
    # lags it by its group delay, so compare amplitude, not waveforms)
    iq = np.exp(-2j * np.pi * 50.0 / fs * k)
    amp = 2.0 * np.abs(np.mean(level.samples * iq))
    assert_allclose(amp, 0.5, rtol=0.01)
    # only the sub-cutoff sliver of the white floor leaks into the level
    # path: sigma * sqrt(ENBW/nyquist) ~ 0.0019 for a 2nd order filter
    ref, _ = biquad_process(butterworth2_lowpass(750.0, fs), slow)
    assert np.sqrt(np.mean((level.samples - ref) ** 2)) < 0.003


def test_block_stats_hand_case():
    sig = np.array([1.0, 1.0, 2.0, 2.0, 5.0, 5.0, 7.0, 7.0])
    noi = np.array([0.0, 2.0, 0.0, 2.0, 1.0, 3.0, 0.0, 0.0])
    blocks = block_stats(sig, noi, block_size=2, block_interval=4)
    assert len(blocks) == 2
    assert blocks[0].y_level == 1.0
    assert_allclose(blocks[0].sigma_hat, np.sqrt(2.0))
    assert blocks[1].y_level == 5.0
    assert_allclose(blocks[1].sigma_hat, np.sqrt(2.0))
    assert blocks[1].block_index == 1


def test_block_stats_drops_trailing_partial():
    x = np.arange(10.0)
    blocks = block_stats(x, x, block_size=4, block_interval=8)
    assert len(blocks) == 1  # second block would need samples 8..11


def test_block_stats_validation():
    x = np.zeros(16)
    with pytest.raises(ValueError):
        block_stats(x, np.zeros(8))
    with pytest.raises(ValueError):
        block_stats(x, x, block_size=1)
    with pytest.raises(ValueError):
        block_stats(x, x, block_size=8, block_interval=4)
    assert block_stats(np.zeros(2), np.zeros(2), 4, 8) == []


def test_iir_smooth():
    assert iir_smooth(1.0, 3.0, 0.5) == 2.0
    v = 0.0
    for _ in range(5000):
        v = iir_smooth(v, 1.0, 0.01)
    assert_allclose(v, 1.0, atol=1e-4)
    with pytest.raises(ValueError):
        iir_smooth(0.0, 1.0, 0.0)
