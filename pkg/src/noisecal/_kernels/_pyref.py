"""NumPy/SciPy reference implementations of the streaming kernels.

This backend is always importable and serves two roles: the fallback when
the compiled extension is missing, and the behavioural reference the
extension is tested against.  The integer update rules (``pwl_*``) live
here as plain-Python functions; the Cython versions mirror them operation
for operation, and the parity tests require bit-identical streams.

Throughput notes: the integer feedback loop is chunked between block
completions (the model can only change at a completion, so everything in
between vectorizes), and the IIR filter delegates to scipy.signal.lfilter,
whose direct-form II transposed recurrence matches the compiled loop
bit for bit.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from ._layout import (
    MASK64,
    PP_BLOCK,
    PP_DEADBAND_SHIFT,
    PP_FRAC_BITS,
    PP_INTERVAL,
    PP_LOG2_BLOCK,
    PP_LOG2_MA,
    PP_MA_LEN,
    PP_RANGE_SHIFT,
    PP_SHIFT_CONST,
    PP_TELEM_PERIOD,
    PP_W_MAX,
    PWL_BLOCKS,
    PWL_DEC,
    PWL_INC,
    PWL_PARTNER_FAIL,
    PWL_REF_ACC,
    PWL_RNG,
    PWL_SAMPLE_IDX,
    PWL_SAT_NARROW,
    PWL_SAT_WIDEN,
    PWL_SIG_ACC,
    PWL_STARTED,
    PWL_WINDOW_SUM,
    SNAP_BLOCKS,
    SNAP_DEC,
    SNAP_INC,
    SNAP_PARTNER_FAIL,
    SNAP_REF_VAR,
    SNAP_SAT_NARROW,
    SNAP_SAT_WIDEN,
    XS_MULT,
)


def biquad_df2t(b0, b1, b2, a1, a2, x, z1, z2):
    """One biquad section, direct form II transposed.

    Returns (y, z1, z2) where z1/z2 are the final delay-line values, so a
    stream can be filtered in arbitrary slices.
    """
    y, zf = lfilter([b0, b1, b2], [1.0, a1, a2], x, zi=np.array([z1, z2], dtype=np.float64))
    return y, float(zf[0]), float(zf[1])


def block_gather_stats(signal, noise, starts, block_size):
    """Per-block mean of ``signal`` and n-1 std of ``noise``.

    ``starts`` are block start indices into both arrays; every block must
    lie fully inside them and block_size must be >= 2 (caller checks).
    """
    idx = np.asarray(starts, dtype=np.intp)[:, None] + np.arange(block_size)
    levels = signal[idx].mean(axis=1)
    sigmas = noise[idx].std(axis=1, ddof=1)
    return levels, sigmas


def quad_eval(a, b, c, y_min, y_max, delta, y):
    """Evaluate a piecewise-quadratic segment table at ``y``.

    Inputs outside [y_min, y_max] are clamped to the endpoint values and
    counted.  Returns (values, n_clamped).
    """
    n_seg = a.size
    yc = np.clip(y, y_min, y_max)
    q = (yc - y_min) / delta
    idx = q.astype(np.intp)
    np.minimum(idx, n_seg - 1, out=idx)
    t = yc - y_min - idx * delta
    out = a[idx] + t * (b[idx] + t * c[idx])
    n_clamped = int(np.count_nonzero((y < y_min) | (y > y_max)))
    return out, n_clamped


def weight_update_run(
    weights,
    counts,
    levels,
    sigmas,
    y_min,
    y_max,
    delta,
    alpha,
    boundary_scale,
    eps_floor,
    sigma_floor,
    sigma_ref,
    alpha_ref,
):
    """Apply a run of block observations to the basis weights, in order.

    For each block: levels outside [y_min, y_max] are discarded; otherwise
    the slow reference sigma is updated first and the two active weights
    relax toward sigma_ref / sigma_hat.  ``sigma_ref < 0`` marks a cold
    start (it is seeded with the first accepted block's sigma).  Returns
    (sigma_ref, n_discarded).
    """
    n_bases = weights.size
    n_seg = n_bases - 1
    discarded = 0
    for i in range(levels.size):
        lv = float(levels[i])
        sg = float(sigmas[i])
        if not (y_min <= lv <= y_max):
            discarded += 1
            continue
        if sigma_ref < 0.0:
            sigma_ref = sg
        else:
            sigma_ref = (1.0 - alpha_ref) * sigma_ref + alpha_ref * sg
        w_obs = sigma_ref / (sg if sg > sigma_floor else sigma_floor)
        q = (lv - y_min) / delta
        n = int(q)
        if n > n_seg - 1:
            n = n_seg - 1
        a_hi = (lv - y_min - n * delta) / delta
        a_lo = 1.0 - a_hi
        for k, act in ((n, a_lo), (n + 1, a_hi)):
            if act <= 0.0:
                continue
            eff = alpha * act
            if k == 0 or k == n_seg:
                eff *= boundary_scale
            if eff > 1.0:
                eff = 1.0
            w = (1.0 - eff) * weights[k] + eff * w_obs
            weights[k] = w if w > eps_floor else eps_floor
            counts[k] += 1
    return sigma_ref, discarded


# ---------------------------------------------------------------------------
# Integer feedback compensator.  These plain-Python update rules are the
# canonical definition of the transition behaviour; pwl_run below and the
# Cython kernel both implement exactly this.
# ---------------------------------------------------------------------------


def _xs64(u):
    """xorshift64* step on a uint64 held in a Python int."""
    u ^= u >> 12
    u = (u ^ (u << 25)) & MASK64
    u ^= u >> 27
    return u, (u * XS_MULT) & MASK64


def _to_i64(u):
    return u - (1 << 64) if u >= (1 << 63) else u


def pwl_ref_var(state, params):
    """Rounded readout of the reference-variance accumulator."""
    frac = int(params[PP_FRAC_BITS])
    return (int(state[PWL_REF_ACC]) + (1 << (frac - 1))) >> frac


def pwl_update_reference(state, params, block_var):
    """First-order low-pass of the block variance, fractional accumulator.

    acc += (var * 2^F - acc) >> shift.  The shift floors, so the
    accumulator settles within 2^shift of the target from below and
    exactly on it from above; the rounded readout (F > shift) is exact
    either way.  An all-zero accumulator marks a cold start and is seeded
    with the observation directly, so early blocks are not all read as
    above-reference while the filter ramps up.
    """
    frac = int(params[PP_FRAC_BITS])
    shift = int(params[PP_SHIFT_CONST])
    acc = int(state[PWL_REF_ACC])
    if acc == 0:
        acc = int(block_var) << frac
    else:
        acc += ((int(block_var) << frac) - acc) >> shift
    state[PWL_REF_ACC] = acc


def _draw_partner(state, params, spans, j, widen):
    """Draw a donor/recipient range, at most 16 tries.

    A draw equal to the key range or an ineligible partner consumes a try.
    ``widen=True`` looks for a range that can grow (span < w_max),
    ``widen=False`` for one that can shrink (span > 1).  Returns the range
    index or -1.
    """
    n_ranges = spans.size
    w_max = int(params[PP_W_MAX])
    u = int(state[PWL_RNG]) & MASK64
    k = -1
    for _ in range(16):
        u, val = _xs64(u)
        cand = (val >> 32) & (n_ranges - 1)
        if cand == j:
            continue
        if widen:
            if spans[cand] < w_max:
                k = cand
                break
        else:
            if spans[cand] > 1:
                k = cand
                break
    state[PWL_RNG] = _to_i64(u)
    return k


def pwl_feedback_update(spans, cum, state, params, block_var, range_index):
    """One conservative span update keyed to ``range_index``.

    If the block variance exceeds the reference by more than the deadband
    the key span narrows by one code and a random partner widens; the
    mirror case widens the key span.  Saturated moves and failed partner
    draws are counted and leave the model untouched, so sum(spans) is
    conserved unconditionally.
    """
    j = int(range_index)
    ref = pwl_ref_var(state, params)
    deadband = ref >> int(params[PP_DEADBAND_SHIFT])
    diff = int(block_var) - ref
    w_max = int(params[PP_W_MAX])
    if diff > deadband:
        if spans[j] <= 1:
            state[PWL_SAT_NARROW] += 1
            return
        k = _draw_partner(state, params, spans, j, widen=True)
        if k < 0:
            state[PWL_PARTNER_FAIL] += 1
            return
        spans[j] -= 1
        spans[k] += 1
        state[PWL_DEC] += 1
    elif diff < -deadband:
        if spans[j] >= w_max:
            state[PWL_SAT_WIDEN] += 1
            return
        k = _draw_partner(state, params, spans, j, widen=False)
        if k < 0:
            state[PWL_PARTNER_FAIL] += 1
            return
        spans[j] += 1
        spans[k] -= 1
        state[PWL_INC] += 1
    else:
        return
    lo = min(j, k)
    cum[lo + 1 :] = cum[lo] + np.cumsum(spans[lo:])


def pwl_run(codes, spans, cum, span_sums, ring, devbuf, state, params, snap_spans, snap_meta):
    """Run the integer compensator over a slice of input codes.

    Mutates spans/cum/span_sums/ring/devbuf/state in place and fills
    telemetry snapshot rows; returns (out_codes, n_snaps).  The chunking
    below cuts the stream at block completions, where the model is the
    only thing that can change, so each chunk evaluates with a fixed
    table.

    This backend keeps the moving-average window in ``ring`` in
    chronological order (oldest first), unlike the compiled backend's
    true circular buffer, so a suspended state is only resumable on the
    backend that produced it.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    n = codes.size
    out = np.empty(n, dtype=np.int64)
    n_snaps = 0
    if n == 0:
        return out, 0

    rshift = int(params[PP_RANGE_SHIFT])
    block = int(params[PP_BLOCK])
    log2b = int(params[PP_LOG2_BLOCK])
    interval = int(params[PP_INTERVAL])
    ma_len = int(params[PP_MA_LEN])
    log2m = int(params[PP_LOG2_MA])
    period = int(params[PP_TELEM_PERIOD])
    n_ranges = spans.size

    pos = 0
    while pos < n:
        g = int(state[PWL_SAMPLE_IDX])
        phase = g % interval
        if phase < block:
            next_cmpl = g + (block - 1 - phase)
        else:
            next_cmpl = g + (interval - phase) + (block - 1)
        take = min(next_cmpl + 1 - g, n - pos)
        chunk = codes[pos : pos + take]

        i_arr = chunk >> rshift
        resid = chunk - (i_arr << rshift)
        o = cum[i_arr] + ((resid * spans[i_arr]) >> rshift)

        if not state[PWL_STARTED]:
            ring[:] = o[0]
            state[PWL_WINDOW_SUM] = int(o[0]) << log2m
            state[PWL_STARTED] = 1

        ext = np.concatenate((ring, o))
        cs = np.concatenate(([0], np.cumsum(ext)))
        ma = (cs[ma_len + 1 : ma_len + 1 + take] - cs[1 : 1 + take]) >> log2m
        ring[:] = ext[take:]
        state[PWL_WINDOW_SUM] = int(cs[ma_len + take] - cs[take])

        phases = (g + np.arange(take)) % interval
        bmask = phases < block
        if bmask.any():
            bph = phases[bmask]
            if bph[0] == 0:
                state[PWL_SIG_ACC] = 0
            devbuf[bph] = o[bmask] - ma[bmask]
            state[PWL_SIG_ACC] += int(ma[bmask].sum())

        if take == next_cmpl + 1 - g:
            sig_level = int(state[PWL_SIG_ACC]) >> log2b
            m = int(devbuf.sum()) >> log2b
            d = devbuf - m
            var = int((d * d).sum()) >> log2b
            pwl_update_reference(state, params, var)
            j = int(np.searchsorted(cum, sig_level, side="right")) - 1
            if j < 0:
                j = 0
            elif j > n_ranges - 1:
                j = n_ranges - 1
            pwl_feedback_update(spans, cum, state, params, var, j)
            span_sums += spans
            state[PWL_BLOCKS] += 1
            if period > 0 and state[PWL_BLOCKS] % period == 0 and n_snaps < snap_spans.shape[0]:
                snap_spans[n_snaps] = spans
                snap_meta[n_snaps, SNAP_BLOCKS] = state[PWL_BLOCKS]
                snap_meta[n_snaps, SNAP_REF_VAR] = pwl_ref_var(state, params)
                snap_meta[n_snaps, SNAP_SAT_NARROW] = state[PWL_SAT_NARROW]
                snap_meta[n_snaps, SNAP_SAT_WIDEN] = state[PWL_SAT_WIDEN]
                snap_meta[n_snaps, SNAP_PARTNER_FAIL] = state[PWL_PARTNER_FAIL]
                snap_meta[n_snaps, SNAP_INC] = state[PWL_INC]
                snap_meta[n_snaps, SNAP_DEC] = state[PWL_DEC]
                n_snaps += 1

        out[pos : pos + take] = o
        state[PWL_SAMPLE_IDX] = g + take
        pos += take

    return out, n_snaps
