"""Hot numerical kernels with a compiled backend and a pure-Python fallback.

The compiled extension (``trfc._kernels``) is used when it was built at
install time; otherwise the pure-Python module with identical contracts is
used. :func:`use_backend` switches explicitly, e.g. for benchmarks.
"""

from __future__ import annotations

import importlib
from types import ModuleType

import numpy as np

from trfc import _kernels_py
from trfc._kernels_py import (  # noqa: F401  (re-exported layout)
    N_PARAMS,
    P_AMAX,
    P_AMIN,
    P_APREV,
    P_BDEC,
    P_BUFG,
    P_BUFI,
    P_DT,
    P_EAMP,
    P_EFLO,
    P_EWID,
    P_FMAX,
    P_GAPMIN,
    P_IA,
    P_IB,
    P_IDELTA,
    P_IS0,
    P_IT,
    P_IV0,
    P_LEN,
    P_RHO,
    P_SHARP,
    P_TDEC,
    P_V0,
    P_WOSC,
    P_X0,
)


def _load_compiled() -> ModuleType | None:
    try:
        return importlib.import_module("trfc._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()
_active: ModuleType = _compiled if _compiled is not None else _kernels_py


def compiled_available() -> bool:
    return _compiled is not None


def backend() -> str:
    return _active.BACKEND


def use_backend(name: str) -> None:
    """Select ``"compiled"`` or ``"python"`` kernels for subsequent calls."""
    global _active
    if name == "python":
        _active = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; reinstall with Cython available")
        _active = _compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def fit_sse_grad(B: float, C: float, D: float, kappa, force) -> tuple[float, float, float]:
    return _active.fit_sse_grad(float(B), float(C), float(D), _f64(kappa), _f64(force))


def plan_cost_grad(a, params, xp, vp, xf, vf) -> tuple[float, np.ndarray]:
    a = _f64(a).copy()
    grad = np.zeros_like(a)
    cost = _active.plan_cost_grad(a, _f64(params), _f64(xp), _f64(vp), _f64(xf), _f64(vf), grad)
    return cost, grad


def plan_descend(a, params, xp, vp, xf, vf, max_iter: int = 300, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Projected-gradient descent from ``a``; returns the new iterate and its cost."""
    a = _f64(a).copy()
    cost = _active.plan_descend(a, _f64(params), _f64(xp), _f64(vp), _f64(xf), _f64(vf),
                                int(max_iter), float(tol))
    return a, cost


def plan_check(a, params, xp, vp, xf, vf) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact rollout; returns (largest constraint value, ego positions, ego speeds)."""
    a = _f64(a)
    x = np.empty(a.size + 1)
    v = np.empty(a.size + 1)
    worst = _active.plan_check(a, _f64(params), _f64(xp), _f64(vp), _f64(xf), _f64(vf), x, v)
    return worst, x, v
