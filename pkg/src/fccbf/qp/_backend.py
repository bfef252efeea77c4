"""Picks the compiled kernel when it is importable; ``FCCBF_PURE_PYTHON=1`` forces the fallback."""
import os

import numpy as np

from . import _dense_py

BACKEND = "python"
_compiled = None
if not os.environ.get("FCCBF_PURE_PYTHON"):
    try:
        from . import _dense as _compiled  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _compiled = None


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def solve_dense(G: np.ndarray, A: np.ndarray, b: np.ndarray, warm=(), max_iter: int = 200, backend: str | None = None):
    """Dispatch to a kernel. ``G`` is ``n x n``, ``A`` is ``m x n``."""
    n = G.shape[0]
    m = A.shape[0]
    name = backend or BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        return _compiled.solve_dense(
            np.ascontiguousarray(G, dtype=float).reshape(-1),
            np.ascontiguousarray(A, dtype=float).reshape(-1),
            np.ascontiguousarray(b, dtype=float).reshape(-1),
            n, m, tuple(warm), max_iter,
        )
    if name != "python":
        raise ValueError(f"unknown backend {name!r}")
    return _dense_py.solve_dense(
        np.asarray(G, dtype=float).reshape(-1).tolist(),
        np.asarray(A, dtype=float).reshape(-1).tolist(),
        np.asarray(b, dtype=float).reshape(-1).tolist(),
        n, m, tuple(warm), max_iter,
    )
