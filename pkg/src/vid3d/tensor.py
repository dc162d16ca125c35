"""Dense float64 tensors with deterministic construction.

A tensor is a contiguous row-major ``numpy.ndarray`` of float64. The 5D
layout convention everywhere in this package is (batch n, channels c,
temporal length l, height h, width w).
"""

import math

import numpy as np

from .errors import ShapeError

# Element counts must stay addressable as byte offsets on 64-bit platforms.
MAX_ELEMENTS = 2**60


def check_shape(shape):
    """Validate extents (1-5 dims, all >= 1, count in range) and return a tuple."""
    dims = tuple(int(d) for d in shape)
    if not 1 <= len(dims) <= 5:
        raise ShapeError(f"shape must have 1-5 dims, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all extents must be >= 1, got {dims}")
    if math.prod(dims) > MAX_ELEMENTS:
        raise ShapeError(f"element count of {dims} exceeds addressable range")
    return dims


def element_count(shape):
    return math.prod(check_shape(shape))


def tensor_new(shape, fill=0.0):
    """New contiguous float64 tensor with every element equal to `fill`."""
    return np.full(check_shape(shape), float(fill), dtype=np.float64)


def fan_in(shape):
    """Product of all non-output-channel extents of a weight shape.

    Axis 0 is the output-channel axis by convention, so a (co, ci, d, k, k)
    conv kernel has fan_in ci*d*k*k and a (dout, din) matrix has fan_in din.
    """
    dims = check_shape(shape)
    if len(dims) == 1:
        return dims[0]
    return math.prod(dims[1:])


def random_init(shape, scheme="uniform-fan-in", seed=0):
    """Deterministic parameter initialization.

    scheme is the string "uniform-fan-in" (draw U(-b, b) with
    b = sqrt(1/fan_in)), a ("uniform-fan-in", gain) pair scaling that bound,
    or a ("constant", c) pair. The result is a pure function of
    (shape, scheme, seed).
    """
    dims = check_shape(shape)
    gain = None
    if scheme == "uniform-fan-in":
        gain = 1.0
    elif isinstance(scheme, tuple) and len(scheme) == 2 and scheme[0] == "uniform-fan-in":
        gain = float(scheme[1])
    if gain is not None:
        bound = gain * math.sqrt(1.0 / fan_in(dims))
        rng = np.random.default_rng(seed)
        return rng.uniform(-bound, bound, size=dims).astype(np.float64)
    if isinstance(scheme, tuple) and len(scheme) == 2 and scheme[0] == "constant":
        return tensor_new(dims, scheme[1])
    raise ShapeError(f"unknown init scheme {scheme!r}")


def reshape(t, new_shape):
    """Same data sequence under a new shape; element counts must match."""
    dims = check_shape(new_shape)
    if t.size != math.prod(dims):
        raise ShapeError(f"cannot reshape {t.shape} ({t.size} elements) to {dims}")
    return np.ascontiguousarray(t, dtype=np.float64).reshape(dims)


def as_tensor(data, shape=None):
    """Coerce to a contiguous float64 array, optionally checking the shape."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def assert_finite(t, context=""):
    """NaN/Inf anywhere is a contract violation in this package."""
    if not np.isfinite(t).all():
        raise FloatingPointError(f"non-finite values{' in ' + context if context else ''}")
    return t
