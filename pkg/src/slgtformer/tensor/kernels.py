"""Backend selection for the fused row kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback takes over.  Set ``SLGT_KERNELS=python`` to force the fallback.
"""

import os

from . import _kernels_py

_FUNCS = (
    "softmax_rows",
    "softmax_rows_backward",
    "layer_norm_rows",
    "layer_norm_rows_backward",
    "gelu",
    "gelu_backward",
)


def _load(name):
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _default_backend():
    forced = os.environ.get("SLGT_KERNELS", "").strip().lower()
    if forced:
        return forced
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return "python"
    return "cython"


BACKEND = _default_backend()
_impl = _load(BACKEND)


def use_backend(name):
    """Switch the active backend at runtime ("cython" or "python")."""
    global BACKEND, _impl
    _impl = _load(name)
    BACKEND = name
    _bind()


def available_backends():
    names = ["python"]
    try:
        _load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _bind():
    g = globals()
    for fn in _FUNCS:
        g[fn] = getattr(_impl, fn)


softmax_rows = softmax_rows_backward = None
layer_norm_rows = layer_norm_rows_backward = None
gelu = gelu_backward = None
_bind()
