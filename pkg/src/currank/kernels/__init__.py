"""Backend selection for the hot numeric kernels.

The numba backend is used when importable. Set ``CURRANK_NUMBA=0`` to
force the pure-NumPy fallback, or ``CURRANK_NUMBA=1`` to require numba
(import errors then propagate). ``benchmarks/bench_kernels.py`` compares
the two backends directly.
"""

from __future__ import annotations

import os
import warnings

_flag = os.environ.get("CURRANK_NUMBA", "auto").strip().lower()

if _flag in ("0", "false", "no", "off"):
    _use_numba = False
elif _flag in ("1", "true", "yes", "on"):
    from . import jit as _impl  # noqa: F401  (fail loudly if numba missing)

    _use_numba = True
else:
    try:
        from . import jit as _impl  # noqa: F401

        _use_numba = True
    except ImportError:
        warnings.warn("numba unavailable; falling back to the NumPy kernel backend")
        _use_numba = False

if not _use_numba:
    from . import npy as _impl  # noqa: F401

BACKEND = "numba" if _use_numba else "numpy"

erf_as = _impl.erf_as
normal_cdf = _impl.normal_cdf
kde_cdf_many = _impl.kde_cdf_many
mlp_scores = _impl.mlp_scores
pointwise_loss_grad = _impl.pointwise_loss_grad
pairwise_loss_grad = _impl.pairwise_loss_grad
adam_update = _impl.adam_update
bm25_accumulate = _impl.bm25_accumulate

__all__ = [
    "BACKEND",
    "erf_as",
    "normal_cdf",
    "kde_cdf_many",
    "mlp_scores",
    "pointwise_loss_grad",
    "pairwise_loss_grad",
    "adam_update",
    "bm25_accumulate",
]
