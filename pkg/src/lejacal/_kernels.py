"""Kernel backend selection.

The compiled extension is preferred when present; setting the environment
variable LEJACAL_PURE_PYTHON forces the numpy fallback.  Both backends
expose the same callables with identical semantics, so everything above
this module is backend-agnostic.  `BACKEND` reports which one is live.
"""

import os

from ._slowkern import KIND_BETA, KIND_NORMAL, KIND_UNIFORM  # noqa: F401

if os.environ.get("LEJACAL_PURE_PYTHON"):
    from . import _slowkern as _impl
    BACKEND = "python"
else:
    try:
        from . import _fastkern as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _slowkern as _impl
        BACKEND = "python"

leja_extend_1d = _impl.leja_extend_1d
bary_log_weights = _impl.bary_log_weights
lebesgue_logsum = _impl.lebesgue_logsum
lebesgue_sweep = _impl.lebesgue_sweep
