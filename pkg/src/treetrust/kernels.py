"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations exist: numba-compiled scalar loops
(default when numba imports cleanly) and a pure-numpy fallback. Selection:

* env var ``TREETRUST_BACKEND`` = ``auto`` | ``numba`` | ``numpy``
  (read once at import; ``auto`` prefers numba),
* or :func:`set_backend` at runtime, which the benchmark uses to compare
  both sides on the same process.
"""

import os

from ._kernels_common import MODE_GINI, MODE_SECOND_ORDER, MODE_VARIANCE

__all__ = [
    "MODE_VARIANCE", "MODE_GINI", "MODE_SECOND_ORDER",
    "available_backends", "get_backend", "set_backend",
    "scan_splits", "predict_tree", "shap_tree_batch",
]

_impl = None
_name = ""


def available_backends():
    names = []
    try:
        import numba  # noqa: F401
        names.append("numba")
    except ImportError:
        pass
    names.append("numpy")
    return names


def set_backend(name):
    """Activate a kernel backend by name ('numba', 'numpy', or 'auto')."""
    global _impl, _name
    if name == "auto":
        name = available_backends()[0]
    if name == "numba":
        from . import _kernels_numba as mod
    elif name == "numpy":
        from . import _kernels_numpy as mod
    else:
        raise ValueError(f"unknown kernel backend {name!r}; "
                         "expected 'auto', 'numba', or 'numpy'")
    _impl = mod
    _name = name
    return _name


def get_backend():
    return _name


def scan_splits(X, a, b, cols, min_leaf, mode, lam, min_child_b=0.0):
    return _impl.scan_splits(X, a, b, cols, min_leaf, mode, lam, min_child_b)


def predict_tree(children_left, children_right, feature, threshold, value,
                 X, out):
    return _impl.predict_tree(children_left, children_right, feature,
                              threshold, value, X, out)


def shap_tree_batch(children_left, children_right, feature, threshold, value,
                    cover, max_depth, X, phi):
    return _impl.shap_tree_batch(children_left, children_right, feature,
                                 threshold, value, cover, max_depth, X, phi)


set_backend(os.environ.get("TREETRUST_BACKEND", "auto").strip().lower())
