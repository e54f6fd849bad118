"""Backend selection for the numerical kernels.

The compiled extension is preferred; setting ``RISKSTRAT_PURE_PYTHON=1``
forces the NumPy fallback (useful for benchmarking and debugging).
"""

import os

try:
    if os.environ.get("RISKSTRAT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from riskstrat import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    from riskstrat import _kernels_py as _impl

    BACKEND = "python"

rank_auc = _impl.rank_auc
pava = _impl.pava
coalition_values_linear = _impl.coalition_values_linear
shapley_from_values = _impl.shapley_from_values

__all__ = ["BACKEND", "rank_auc", "pava", "coalition_values_linear", "shapley_from_values"]
