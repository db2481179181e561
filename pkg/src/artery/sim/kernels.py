"""Step-kernel selection.

The compiled extension is preferred when importable; setting
ARTERY_PURE_PY=1 forces the pure-Python kernel.  Both kernels produce
bit-identical trajectories, so the choice only affects speed.
"""

from __future__ import annotations

import os

from . import _kernel_py

FREE_ROAD = _kernel_py.FREE_ROAD

if os.environ.get("ARTERY_PURE_PY", "") not in ("", "0"):
    _impl = _kernel_py
    KERNEL_NAME = "python"
else:
    try:
        from . import _stepcore as _impl

        KERNEL_NAME = "compiled"
    except ImportError:
        _impl = _kernel_py
        KERNEL_NAME = "python"

step_lane = _impl.step_lane


def available_kernels():
    """Names of the kernels importable in this environment."""
    names = {"python": _kernel_py.step_lane}
    try:
        from . import _stepcore

        names["compiled"] = _stepcore.step_lane
    except ImportError:
        pass
    return names
