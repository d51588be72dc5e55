"""Parity between the compiled kernels and the NumPy reference backend.

Integer kernels must produce bit-identical streams; float kernels agree
to rounding error. Each backend is driven through its own state buffers
since suspended state is not portable across backends.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from noisecal import PwlPipeline
from noisecal._kernels import _pyref
from noisecal._kernels._layout import SNAP_META_LEN

_fast = pytest.importorskip(
    "noisecal._kernels._fastloops", reason="compiled extension not built"
)

BACKENDS = (_pyref, _fast)


def _rand_signal(n=8192, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 0.3, n)


def test_biquad_parity_and_state():
    x = _rand_signal()
    res = [impl.biquad_df2t(0.067, 0.134, 0.067, -1.143, 0.412, x, 0.0, 0.0)
           for impl in BACKENDS]
    (y_py, z1_py, z2_py), (y_c, z1_c, z2_c) = res
    assert_allclose(y_c, y_py, rtol=1e-12, atol=1e-15)
    assert_allclose([z1_c, z2_c], [z1_py, z2_py], rtol=1e-12)


def test_biquad_chunked_equals_whole_each_backend():
    x = _rand_signal(4096, seed=1)
    for impl in BACKENDS:
        whole, _, _ = impl.biquad_df2t(0.1, 0.2, 0.1, -0.9, 0.3, x, 0.0, 0.0)
        z1 = z2 = 0.0
        parts = []
        for chunk in np.split(x, [7, 100, 101, 3000]):
            y, z1, z2 = impl.biquad_df2t(0.1, 0.2, 0.1, -0.9, 0.3, chunk, z1, z2)
            parts.append(y)
        assert np.array_equal(np.concatenate(parts), whole)


def test_block_gather_stats_parity():
    sig = _rand_signal(5000, seed=2)
    noi = _rand_signal(5000, seed=3)
    starts = np.arange(0, 4992, 128, dtype=np.intp)
    lv_py, sg_py = _pyref.block_gather_stats(sig, noi, starts, 8)
    lv_c, sg_c = _fast.block_gather_stats(sig, noi, starts, 8)
    assert_allclose(lv_c, lv_py, rtol=1e-13)
    assert_allclose(sg_c, sg_py, rtol=1e-12)


def test_quad_eval_parity():
    rng = np.random.default_rng(4)
    n_seg = 32
    a = np.cumsum(rng.uniform(0.01, 0.1, n_seg))
    b = rng.uniform(0.5, 2.0, n_seg)
    c = rng.normal(0.0, 1.0, n_seg)
    y = rng.uniform(-1.5, 1.5, 10000)  # includes out-of-range points
    out_py, ncl_py = _pyref.quad_eval(a, b, c, -1.0, 1.0, 2.0 / n_seg, y)
    out_c, ncl_c = _fast.quad_eval(a, b, c, -1.0, 1.0, 2.0 / n_seg, y)
    assert ncl_c == ncl_py
    assert_allclose(out_c, out_py, rtol=1e-12, atol=1e-15)


def test_weight_update_run_parity():
    rng = np.random.default_rng(5)
    n_blocks = 4000
    levels = rng.uniform(-1.1, 1.1, n_blocks)  # some blocks out of range
    sigmas = np.exp(rng.normal(np.log(0.01), 0.4, n_blocks))
    results = []
    for impl in BACKENDS:
        w = np.ones(65)
        counts = np.zeros(65, dtype=np.int64)
        sref, disc = impl.weight_update_run(
            w, counts, levels, sigmas, -1.0, 1.0, 2.0 / 64,
            0.05, 2.0, 1e-4, 1e-6, -1.0, 1e-3,
        )
        results.append((w, counts, sref, disc))
    (w_py, n_py, s_py, d_py), (w_c, n_c, s_c, d_c) = results
    assert d_c == d_py
    assert np.array_equal(n_c, n_py)
    assert_allclose(s_c, s_py, rtol=1e-12)
    assert_allclose(w_c, w_py, rtol=1e-12, atol=1e-15)


def _pwl_buffers(codes, seed):
    pipe = PwlPipeline(
        block_size=4, block_interval=32, ma_len=16, telemetry_period=8,
        seed=seed, w_max=512, deadband_shift=2,
    )
    n_snaps = codes.size // (32 * 8) + 2
    snap_spans = np.zeros((n_snaps, pipe.model.n_ranges), dtype=np.int64)
    snap_meta = np.zeros((n_snaps, SNAP_META_LEN), dtype=np.int64)
    return pipe, snap_spans, snap_meta


def _pwl_codes(n=40000, seed=6):
    rng = np.random.default_rng(seed)
    x = 512 + 350 * np.sin(np.arange(n) * 2e-3) + rng.normal(0, 6, n)
    return np.clip(x, 0, 1023).astype(np.int64)


def test_pwl_run_bit_identical_across_backends():
    codes = _pwl_codes()
    results = []
    for impl in BACKENDS:
        pipe, snap_spans, snap_meta = _pwl_buffers(codes, seed=3)
        out, n_snaps = impl.pwl_run(
            codes, pipe.model.spans, pipe.model.cum, pipe.span_sums,
            pipe._ring, pipe._devbuf, pipe.model.state, pipe.model.params,
            snap_spans, snap_meta,
        )
        results.append((out, n_snaps, pipe, snap_spans, snap_meta))
    (o_py, n_py, p_py, ss_py, sm_py), (o_c, n_c, p_c, ss_c, sm_c) = results
    assert np.array_equal(o_c, o_py)
    assert n_c == n_py
    assert np.array_equal(p_c.model.spans, p_py.model.spans)
    assert np.array_equal(p_c.model.cum, p_py.model.cum)
    assert np.array_equal(p_c.model.state, p_py.model.state)
    assert np.array_equal(p_c.span_sums, p_py.span_sums)
    assert np.array_equal(ss_c[:n_c], ss_py[:n_py])
    assert np.array_equal(sm_c[:n_c], sm_py[:n_py])


def test_pwl_run_chunked_equals_whole_each_backend():
    """Slicing the stream may not change anything, on either backend."""
    codes = _pwl_codes(20000, seed=7)
    for impl in BACKENDS:
        pipe_w, ss_w, sm_w = _pwl_buffers(codes, seed=11)
        whole, _ = impl.pwl_run(
            codes, pipe_w.model.spans, pipe_w.model.cum, pipe_w.span_sums,
            pipe_w._ring, pipe_w._devbuf, pipe_w.model.state,
            pipe_w.model.params, ss_w, sm_w,
        )
        pipe_s, ss_s, sm_s = _pwl_buffers(codes, seed=11)
        parts = []
        for chunk in np.split(codes, [1, 3, 37, 38, 12345]):
            if chunk.size == 0:
                continue
            out, _ = impl.pwl_run(
                np.ascontiguousarray(chunk), pipe_s.model.spans,
                pipe_s.model.cum, pipe_s.span_sums, pipe_s._ring,
                pipe_s._devbuf, pipe_s.model.state, pipe_s.model.params,
                ss_s, sm_s,
            )
            parts.append(out)
        assert np.array_equal(np.concatenate(parts), whole)
        assert np.array_equal(pipe_s.model.state, pipe_w.model.state)
        assert np.array_equal(pipe_s.model.spans, pipe_w.model.spans)
