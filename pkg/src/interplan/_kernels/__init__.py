"""Rollout kernel backends.

The compiled extension is preferred; the pure-Python twin is selected at
import time when the extension is missing (e.g. no compiler at install
time).  Set INTERPLAN_FORCE_PYTHON_KERNEL=1 to force the fallback.
"""

import os

from ._params import (MODE_CLOSED_LOOP, MODE_EGO_VS_FROZEN, MODE_EXTERNAL_EGO,
                      MODE_NO_EGO, MODE_OPEN_LOOP, N_PAR, PAR_ACC_MAX, PAR_AHARD,
                      PAR_BRK_MAX, PAR_BRK_MIN, PAR_KS, PAR_KV, PAR_LAT_ACC,
                      PAR_LAT_BRK, PAR_LAT_MU, PAR_LD_GAIN, PAR_LD_MAX,
                      PAR_LD_MIN, PAR_LMIN, PAR_LSAFE, PAR_RHO, PAR_STEER_MAX,
                      PAR_TSAFE, PAR_VMAX, PAR_VPREF)
from . import _fallback

if os.environ.get("INTERPLAN_FORCE_PYTHON_KERNEL") == "1":
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
        if not hasattr(_impl, "rollout"):
            _impl = _fallback
    except ImportError:
        _impl = _fallback

rollout = _impl.rollout
BACKEND = _impl.BACKEND

__all__ = [
    "rollout", "BACKEND",
    "MODE_CLOSED_LOOP", "MODE_NO_EGO", "MODE_EGO_VS_FROZEN", "MODE_OPEN_LOOP",
    "MODE_EXTERNAL_EGO",
    "N_PAR", "PAR_VPREF", "PAR_KV", "PAR_KS", "PAR_LMIN", "PAR_TSAFE",
    "PAR_LSAFE", "PAR_LD_GAIN", "PAR_LD_MIN", "PAR_LD_MAX", "PAR_STEER_MAX",
    "PAR_RHO", "PAR_ACC_MAX", "PAR_BRK_MIN", "PAR_BRK_MAX", "PAR_LAT_ACC",
    "PAR_LAT_BRK", "PAR_LAT_MU", "PAR_AHARD", "PAR_VMAX",
]
