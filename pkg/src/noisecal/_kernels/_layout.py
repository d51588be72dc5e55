"""Shared state/parameter vector layout for the streaming kernels.

Both kernel backends index the caller-owned int64 state and parameter
vectors with these constants, so a run can be suspended and resumed
across calls with plain arrays.
"""

# pwl_run state vector
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
PWL_STATE_LEN = 12

# pwl_run parameter vector
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
PP_PARAM_LEN = 12

# pwl_run telemetry snapshot columns
SNAP_BLOCKS = 0
SNAP_REF_VAR = 1
SNAP_SAT_NARROW = 2
SNAP_SAT_WIDEN = 3
SNAP_PARTNER_FAIL = 4
SNAP_INC = 5
SNAP_DEC = 6
SNAP_META_LEN = 7

MASK64 = (1 << 64) - 1
XS_MULT = 0x2545F4914F6CDD1D
