"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback
implements the same semantics (see _kernels_np).  Set XSEP_BACKEND to
"compiled" or "numpy" to force a choice; forcing "compiled" raises if the
extension is missing.
"""

import os

from . import _kernels_np

_requested = os.environ.get("XSEP_BACKEND", "").strip().lower()

if _requested == "numpy":
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_np
        BACKEND = "numpy"

conv2d_raw = _impl.conv2d
filter_grad_raw = _impl.filter_grad
conv_bank_raw = _impl.conv_bank
stack_conv_sum_raw = _impl.stack_conv_sum
filter_grad_bank_stack_raw = _impl.filter_grad_bank_stack
filter_grad_bank_shared_raw = _impl.filter_grad_bank_shared
frob_sq_raw = _impl.frob_sq
l1_raw = _impl.l1
inner_raw = _impl.inner
