# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-sample loops.

_pyref.py is the behavioural reference for everything in this file; the
parity tests require bit-identical integer streams and last-ulp float
agreement (the extension is built with -ffp-contract=off so the float
expressions round exactly like the NumPy ones).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

# Mirrors _layout.py; test_kernel_parity asserts the two stay in sync.
cdef enum:
    PWL_WINDOW_SUM = 0
    PWL_SAMPLE_IDX = 1
    PWL_REF_ACC = 2
    PWL_RNG = 3
    PWL_BLOCKS = 4
    PWL_SAT_NARROW = 5
    PWL_SAT_WIDEN = 6
    PWL_PARTNER_FAIL = 7
    PWL_INC = 8
    PWL_DEC = 9
    PWL_STARTED = 10
    PWL_SIG_ACC = 11

cdef enum:
    PP_RANGE_SHIFT = 0
    PP_BLOCK = 1
    PP_LOG2_BLOCK = 2
    PP_INTERVAL = 3
    PP_MA_LEN = 4
    PP_LOG2_MA = 5
    PP_DEADBAND_SHIFT = 6
    PP_SHIFT_CONST = 7
    PP_FRAC_BITS = 8
    PP_W_MAX = 9
    PP_N_RANGES = 10
    PP_TELEM_PERIOD = 11

cdef enum:
    SNAP_BLOCKS = 0
    SNAP_REF_VAR = 1
    SNAP_SAT_NARROW = 2
    SNAP_SAT_WIDEN = 3
    SNAP_PARTNER_FAIL = 4
    SNAP_INC = 5
    SNAP_DEC = 6

cdef unsigned long long XS_MULT = 0x2545F4914F6CDD1DULL


def biquad_df2t(double b0, double b1, double b2, double a1, double a2,
                const double[::1] x, double z1, double z2):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef double y
    for i in range(n):
        y = z1 + x[i] * b0
        z1 = z2 + x[i] * b1 - y * a1
        z2 = x[i] * b2 - y * a2
        o[i] = y
    return out, z1, z2


def block_gather_stats(const double[::1] signal, const double[::1] noise,
                       const cnp.intp_t[::1] starts, Py_ssize_t block_size):
    cdef Py_ssize_t nb = starts.shape[0]
    levels = np.empty(nb, dtype=np.float64)
    sigmas = np.empty(nb, dtype=np.float64)
    cdef double[::1] lv = levels
    cdef double[::1] sg = sigmas
    cdef Py_ssize_t j, k, s
    cdef double msig, mnoi, ss, d
    for j in range(nb):
        s = starts[j]
        msig = 0.0
        mnoi = 0.0
        for k in range(block_size):
            msig += signal[s + k]
            mnoi += noise[s + k]
        msig /= block_size
        mnoi /= block_size
        ss = 0.0
        for k in range(block_size):
            d = noise[s + k] - mnoi
            ss += d * d
        lv[j] = msig
        sg[j] = sqrt(ss / (block_size - 1))
    return levels, sigmas


def quad_eval(const double[::1] a, const double[::1] b, const double[::1] c,
              double y_min, double y_max, double delta, const double[::1] y):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t n_seg = a.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, idx
    cdef double yc, t
    cdef long long ncl = 0
    for i in range(n):
        yc = y[i]
        if yc < y_min:
            yc = y_min
            ncl += 1
        elif yc > y_max:
            yc = y_max
            ncl += 1
        idx = <Py_ssize_t>((yc - y_min) / delta)
        if idx > n_seg - 1:
            idx = n_seg - 1
        t = yc - y_min - idx * delta
        o[i] = a[idx] + t * (b[idx] + t * c[idx])
    return out, int(ncl)


def weight_update_run(double[::1] weights, long long[::1] counts,
                      const double[::1] levels, const double[::1] sigmas,
                      double y_min, double y_max, double delta,
                      double alpha, double boundary_scale,
                      double eps_floor, double sigma_floor,
                      double sigma_ref, double alpha_ref):
    cdef Py_ssize_t n_bases = weights.shape[0]
    cdef Py_ssize_t n_seg = n_bases - 1
    cdef long long discarded = 0
    cdef Py_ssize_t i, n, k, side
    cdef double lv, sg, w_obs, a_hi, a_lo, act, eff, w
    for i in range(levels.shape[0]):
        lv = levels[i]
        sg = sigmas[i]
        if not (y_min <= lv <= y_max):
            discarded += 1
            continue
        if sigma_ref < 0.0:
            sigma_ref = sg
        else:
            sigma_ref = (1.0 - alpha_ref) * sigma_ref + alpha_ref * sg
        w_obs = sigma_ref / (sg if sg > sigma_floor else sigma_floor)
        n = <Py_ssize_t>((lv - y_min) / delta)
        if n > n_seg - 1:
            n = n_seg - 1
        a_hi = (lv - y_min - n * delta) / delta
        a_lo = 1.0 - a_hi
        for side in range(2):
            if side == 0:
                k = n
                act = a_lo
            else:
                k = n + 1
                act = a_hi
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
    return sigma_ref, int(discarded)


cdef inline unsigned long long _xs64_step(unsigned long long u) nogil:
    u ^= u >> 12
    u ^= u << 25
    u ^= u >> 27
    return u


def pwl_run(const long long[::1] codes,
            long long[::1] spans, long long[::1] cum, long long[::1] span_sums,
            long long[::1] ring, long long[::1] devbuf,
            long long[::1] state, long long[::1] params,
            long long[:, ::1] snap_spans, long long[:, ::1] snap_meta):
    cdef Py_ssize_t n = codes.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out

    cdef long long rshift = params[PP_RANGE_SHIFT]
    cdef long long block = params[PP_BLOCK]
    cdef long long log2b = params[PP_LOG2_BLOCK]
    cdef long long interval = params[PP_INTERVAL]
    cdef long long ma_len = params[PP_MA_LEN]
    cdef long long log2m = params[PP_LOG2_MA]
    cdef long long dshift = params[PP_DEADBAND_SHIFT]
    cdef long long shift_c = params[PP_SHIFT_CONST]
    cdef long long frac = params[PP_FRAC_BITS]
    cdef long long w_max = params[PP_W_MAX]
    cdef long long period = params[PP_TELEM_PERIOD]
    cdef Py_ssize_t n_ranges = spans.shape[0]
    cdef Py_ssize_t snap_cap = snap_spans.shape[0]

    cdef long long wsum = state[PWL_WINDOW_SUM]
    cdef long long g = state[PWL_SAMPLE_IDX]
    cdef long long acc = state[PWL_REF_ACC]
    cdef unsigned long long rng = <unsigned long long>state[PWL_RNG]
    cdef long long blocks = state[PWL_BLOCKS]
    cdef long long sat_narrow = state[PWL_SAT_NARROW]
    cdef long long sat_widen = state[PWL_SAT_WIDEN]
    cdef long long partner_fail = state[PWL_PARTNER_FAIL]
    cdef long long incs = state[PWL_INC]
    cdef long long decs = state[PWL_DEC]
    cdef long long started = state[PWL_STARTED]
    cdef long long sig_acc = state[PWL_SIG_ACC]

    cdef Py_ssize_t i, k2, pos, n_snaps = 0
    cdef long long code, ri, r, ov, ma, phase, dev, dsum, m, var, refv
    cdef long long level, deadband, diff
    cdef long long j, cand, partner, lo, hi, mid, lomin
    cdef int t, moved
    cdef unsigned long long val

    for i in range(n):
        code = codes[i]
        ri = code >> rshift
        r = code - (ri << rshift)
        ov = cum[ri] + ((r * spans[ri]) >> rshift)

        if not started:
            for k2 in range(ma_len):
                ring[k2] = ov
            wsum = ov << log2m
            started = 1

        pos = <Py_ssize_t>(g & (ma_len - 1))
        wsum += ov - ring[pos]
        ring[pos] = ov
        ma = wsum >> log2m

        phase = g % interval
        if phase < block:
            if phase == 0:
                sig_acc = 0
            dev = ov - ma
            devbuf[phase] = dev
            sig_acc += ma
            if phase == block - 1:
                dsum = 0
                for k2 in range(block):
                    dsum += devbuf[k2]
                m = dsum >> log2b
                var = 0
                for k2 in range(block):
                    dev = devbuf[k2] - m
                    var += dev * dev
                var >>= log2b

                # zero accumulator marks cold start; seed it directly
                if acc == 0:
                    acc = var << frac
                else:
                    acc += ((var << frac) - acc) >> shift_c
                refv = (acc + ((<long long>1) << (frac - 1))) >> frac

                # largest j with cum[j] <= level, clamped to a valid range
                level = sig_acc >> log2b
                lo = 0
                hi = n_ranges + 1
                while hi - lo > 1:
                    mid = (lo + hi) >> 1
                    if cum[mid] <= level:
                        lo = mid
                    else:
                        hi = mid
                j = lo
                if j > n_ranges - 1:
                    j = n_ranges - 1

                deadband = refv >> dshift
                diff = var - refv
                moved = 0
                if diff > deadband:
                    if spans[j] <= 1:
                        sat_narrow += 1
                    else:
                        partner = -1
                        for t in range(16):
                            rng = _xs64_step(rng)
                            val = rng * XS_MULT
                            cand = <long long>((val >> 32) & <unsigned long long>(n_ranges - 1))
                            if cand == j:
                                continue
                            if spans[cand] < w_max:
                                partner = cand
                                break
                        if partner < 0:
                            partner_fail += 1
                        else:
                            spans[j] -= 1
                            spans[partner] += 1
                            decs += 1
                            moved = 1
                elif diff < -deadband:
                    if spans[j] >= w_max:
                        sat_widen += 1
                    else:
                        partner = -1
                        for t in range(16):
                            rng = _xs64_step(rng)
                            val = rng * XS_MULT
                            cand = <long long>((val >> 32) & <unsigned long long>(n_ranges - 1))
                            if cand == j:
                                continue
                            if spans[cand] > 1:
                                partner = cand
                                break
                        if partner < 0:
                            partner_fail += 1
                        else:
                            spans[j] += 1
                            spans[partner] -= 1
                            incs += 1
                            moved = 1
                if moved:
                    lomin = j if j < partner else partner
                    for k2 in range(lomin + 1, n_ranges + 1):
                        cum[k2] = cum[k2 - 1] + spans[k2 - 1]

                for k2 in range(n_ranges):
                    span_sums[k2] += spans[k2]
                blocks += 1
                if period > 0 and blocks % period == 0 and n_snaps < snap_cap:
                    for k2 in range(n_ranges):
                        snap_spans[n_snaps, k2] = spans[k2]
                    snap_meta[n_snaps, SNAP_BLOCKS] = blocks
                    snap_meta[n_snaps, SNAP_REF_VAR] = refv
                    snap_meta[n_snaps, SNAP_SAT_NARROW] = sat_narrow
                    snap_meta[n_snaps, SNAP_SAT_WIDEN] = sat_widen
                    snap_meta[n_snaps, SNAP_PARTNER_FAIL] = partner_fail
                    snap_meta[n_snaps, SNAP_INC] = incs
                    snap_meta[n_snaps, SNAP_DEC] = decs
                    n_snaps += 1

        o[i] = ov
        g += 1

    state[PWL_WINDOW_SUM] = wsum
    state[PWL_SAMPLE_IDX] = g
    state[PWL_REF_ACC] = acc
    state[PWL_RNG] = <long long>rng
    state[PWL_BLOCKS] = blocks
    state[PWL_SAT_NARROW] = sat_narrow
    state[PWL_SAT_WIDEN] = sat_widen
    state[PWL_PARTNER_FAIL] = partner_fail
    state[PWL_INC] = incs
    state[PWL_DEC] = decs
    state[PWL_STARTED] = started
    state[PWL_SIG_ACC] = sig_acc
    return out, n_snaps
