"""Hurricane-evacuation traffic prediction.

Long-term congestion-state classification (6-hour periods over a 7-day
landfall window) and short-term link-speed regression (1-6 h horizons)
with MC-dropout uncertainty, trained on a calibrated synthetic generator.
"""

import os

# The training GEMMs are far too small to parallelize profitably; threaded
# BLAS only adds synchronization overhead. Must be set before NumPy loads.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend

__all__ = ["kernel_backend", "__version__"]
