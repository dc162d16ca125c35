"""Backend dispatch for the hot numeric kernels (3D convolution and pooling).

Two interchangeable implementations exist:

* ``jit``       -- numba ``@njit`` loop kernels (default)
* ``reference`` -- pure numpy, patch-gather lowering to matrix multiply

The backend is selected by the ``VID3D_BACKEND`` environment variable
("numba" or "numpy") at import time and can be switched at runtime with
:func:`use_backend`. Both backends implement the same naive-loop semantics;
results agree to floating-point roundoff. Within one backend, results are
bit-deterministic: every output element has a fixed reduction order,
independent of thread count.
"""

import os
import warnings

from ..errors import ConfigError

_BACKENDS = ("numba", "numpy")
_impl = None
_name = None


def _load(name):
    if name == "numpy":
        from . import reference
        return reference
    if name == "numba":
        from . import jit
        return jit
    raise ConfigError(f"unknown kernel backend {name!r}, expected one of {_BACKENDS}")


def use_backend(name):
    """Switch the active kernel backend ("numba" or "numpy")."""
    global _impl, _name
    _impl = _load(name)
    _name = name
    return _name


def active_backend():
    return _name


def _init_default():
    requested = os.environ.get("VID3D_BACKEND", "numba").lower()
    if requested not in _BACKENDS:
        raise ConfigError(f"VID3D_BACKEND={requested!r} not in {_BACKENDS}")
    try:
        use_backend(requested)
    except ImportError:
        warnings.warn("numba unavailable, falling back to the numpy kernel backend")
        use_backend("numpy")


def conv3d_forward(x, w, b):
    return _impl.conv3d_forward(x, w, b)


def conv3d_grad_input(grad_out, w, input_shape):
    return _impl.conv3d_grad_input(grad_out, w, input_shape)


def conv3d_grad_weights(x, grad_out, d, k):
    return _impl.conv3d_grad_weights(x, grad_out, d, k)


def maxpool3d_forward(x, kernel):
    return _impl.maxpool3d_forward(x, kernel)


def maxpool3d_backward(switches, grad_out, input_shape):
    return _impl.maxpool3d_backward(switches, grad_out, input_shape)


_init_default()
