"""Kernel selection: compiled extension if importable, else pure Python.

Set ``TICERT_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("TICERT_BACKEND", "").lower() != "python":
    try:
        from . import _kernels

        kernels = _kernels
        BACKEND = "compiled"
    except ImportError:  # extension not built
        pass

transport_simplex = kernels.transport_simplex
simulate_time_averages = kernels.simulate_time_averages
