"""Select the compiled kernels when available, else the Python fallback.

Set ``INVDP_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("INVDP_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import (accumulate_k_transitions, negbin_draw,  # noqa: F401
                              simulate_days, snap_inventory)
    COMPILED = False
else:
    try:
        from ._kernels import (accumulate_k_transitions, negbin_draw,  # noqa: F401
                               simulate_days, snap_inventory)
        COMPILED = True
    except ImportError:
        from ._kernels_py import (accumulate_k_transitions, negbin_draw,  # noqa: F401
                                  simulate_days, snap_inventory)
        COMPILED = False

BACKEND = "cython" if COMPILED else "python"
