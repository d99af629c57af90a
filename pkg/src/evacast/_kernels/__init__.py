"""Training-kernel backend selection.

The compiled extension is preferred when it imported cleanly; the
pure-NumPy module is the fallback. `EVACAST_KERNEL_BACKEND=python|compiled`
forces a choice (forcing `compiled` raises if the extension is missing).
"""

import os

from . import _pyops

_forced = os.environ.get("EVACAST_KERNEL_BACKEND")

if _forced == "python":
    _impl, BACKEND = _pyops, "python"
else:
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl, BACKEND = _pyops, "python"


def get_backend(name: str):
    """Return a specific backend module, for benchmarks and equivalence tests."""
    if name == "python":
        return _pyops
    if name == "compiled":
        from . import _speedups
        return _speedups
    raise ValueError(f"unknown backend {name!r}")


lstm_step_forward = _impl.lstm_step_forward
lstm_step_backward = _impl.lstm_step_backward
rnn_step_forward = _impl.rnn_step_forward
rnn_step_backward = _impl.rnn_step_backward
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward
adam_update = _impl.adam_update
