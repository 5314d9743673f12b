"""Backend selection for the integration kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``SESLAM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("SESLAM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
attitude_step = _impl.attitude_step
attitude_run = _impl.attitude_run
truth_step = _impl.truth_step
observer_step = _impl.observer_step
observer_run = _impl.observer_run

python_backend = _kernels_py


def compiled_backend():
    """The compiled module, or ``None`` when it is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
