"""Kernel backend selection.

The compiled extension (`attnwalk._core`, Cython) is preferred; the numpy
fallback (`attnwalk._core_py`) is used when the extension is unavailable or
when ATTNWALK_PURE_PYTHON is set in the environment. Both implement the
same contract; see `benchmarks/bench_kernels.py` for a speed comparison.
"""

from __future__ import annotations

import os

if os.environ.get("ATTNWALK_PURE_PYTHON"):
    from attnwalk import _core_py as _impl
else:
    try:
        from attnwalk import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from attnwalk import _core_py as _impl

backend_name = _impl.backend_name
linear_forward = _impl.linear_forward
linear_input_grad = _impl.linear_input_grad
accumulate_param_grads = _impl.accumulate_param_grads
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward
lstm_forward = _impl.lstm_forward
lstm_gate_grads = _impl.lstm_gate_grads
softmax_rows = _impl.softmax_rows
adam_step = _impl.adam_step
all_finite = _impl.all_finite
