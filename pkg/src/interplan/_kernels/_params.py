"""Packed-parameter layout shared by the compiled and fallback kernels."""

PAR_VPREF = 0      # preferred cruise speed
PAR_KV = 1         # gap controller velocity gain
PAR_KS = 2         # gap controller position gain
PAR_LMIN = 3       # gap controller bumper margin
PAR_TSAFE = 4      # gap controller safe headway
PAR_LSAFE = 5      # preferred lateral obstacle clearance
PAR_LD_GAIN = 6    # pure pursuit lookahead gain
PAR_LD_MIN = 7
PAR_LD_MAX = 8
PAR_STEER_MAX = 9
PAR_RHO = 10       # response time
PAR_ACC_MAX = 11   # accel during response time
PAR_BRK_MIN = 12
PAR_BRK_MAX = 13
PAR_LAT_ACC = 14   # lateral fluctuation accel
PAR_LAT_BRK = 15   # lateral min brake
PAR_LAT_MU = 16    # lateral fluctuation margin
PAR_AHARD = 17     # hard accel clamp
PAR_VMAX = 18      # speed cap for safe-interval reporting
N_PAR = 19

MODE_CLOSED_LOOP = 0
MODE_NO_EGO = 1
MODE_EGO_VS_FROZEN = 2
MODE_OPEN_LOOP = 3
MODE_EXTERNAL_EGO = 4
