"""Backend selection for the simulation hot loop.

The compiled extension is used when it imports; ``EPIFLUX_PURE_PYTHON=1``
forces the numpy fallback.  Both expose ``run_thinning`` with one signature.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available_backends():
    return ["compiled", "python"] if _compiled is not None else ["python"]


def get_backend(name=None):
    if name is None:
        name = "python" if os.environ.get("EPIFLUX_PURE_PYTHON") == "1" else "auto"
    if name == "auto":
        return _compiled if _compiled is not None else _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not built; run `pip install -e .`")
        return _compiled
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


def backend_name(mod=None):
    mod = mod or get_backend()
    return "compiled" if mod is _compiled and mod is not None else "python"


def pack_families(fs):
    """Flatten per-trait families into the arrays the kernel expects."""
    codes = np.array([f.code for f in fs], dtype=np.int64)
    params = np.ascontiguousarray(np.stack([f.kernel_params() for f in fs]), dtype=np.float64)
    xs, ys, off = [], [], [0]
    for f in fs:
        x, y = f.table()
        xs.append(x)
        ys.append(y)
        off.append(off[-1] + len(x))
    tx = np.ascontiguousarray(np.concatenate(xs) if off[-1] else np.zeros(1), dtype=np.float64)
    ty = np.ascontiguousarray(np.concatenate(ys) if off[-1] else np.zeros(1), dtype=np.float64)
    return codes, params, tx, ty, np.array(off, dtype=np.int64)
