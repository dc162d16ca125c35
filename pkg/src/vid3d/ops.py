"""Forward and backward passes for every layer type.

3D convolution is cross-correlation (no kernel flip) at stride 1 with
same-padding, so output extents equal input extents. Max pooling is
non-overlapping (stride = kernel) in ceiling mode: trailing partial windows
are kept and the output extent per axis is ceil(in / kernel). Pooling
records switches: the flat input index of each window's argmax, ties going
to the lowest flat index.
"""

import math

import numpy as np

from . import kernels
from .errors import ShapeError


def _check_conv_args(x, w, b):
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeError(f"conv3d expects 5D input and weights, got {x.ndim}D/{w.ndim}D")
    co, ci, d, k, k2 = w.shape
    if k != k2:
        raise ShapeError(f"conv3d spatial kernel must be square, got {k}x{k2}")
    if d % 2 == 0 or k % 2 == 0:
        raise ShapeError(f"conv3d kernel extents must be odd, got d={d}, k={k}")
    if x.shape[1] != ci:
        raise ShapeError(f"conv3d input has {x.shape[1]} channels, weights expect {ci}")
    if b.shape != (co,):
        raise ShapeError(f"conv3d bias shape {b.shape} != ({co},)")


def conv3d_forward(x, w, b):
    """Same-padded stride-1 cross-correlation.

    x: (n, ci, l, h, w); w: (co, ci, d, k, k); b: (co,). Returns
    (n, co, l, h, w).
    """
    _check_conv_args(x, w, b)
    return kernels.conv3d_forward(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64))


def conv3d_backward(x, w, b, grad_out):
    """Exact gradients of conv3d_forward. Returns (grad_x, grad_w, grad_b)."""
    _check_conv_args(x, w, b)
    expected = (x.shape[0], w.shape[0]) + x.shape[2:]
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {expected}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    go = np.ascontiguousarray(grad_out, dtype=np.float64)
    gx = kernels.conv3d_grad_input(go, w, x.shape)
    gw, gb = kernels.conv3d_grad_weights(x, go, w.shape[2], w.shape[3])
    return gx, gw, gb


def conv3d_transposed(r, w):
    """Backprojection of a signal through a conv layer's own (unflipped)
    weights, no bias: the transpose of the forward map. r: (n, co, l, h, w)
    returns (n, ci, l, h, w)."""
    if r.shape[1] != w.shape[0]:
        raise ShapeError(f"signal has {r.shape[1]} channels, weights produce {w.shape[0]}")
    in_shape = (r.shape[0], w.shape[1]) + r.shape[2:]
    return kernels.conv3d_grad_input(
        np.ascontiguousarray(r, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64), in_shape)


def pool_output_shape(input_shape, kernel):
    """Ceiling-mode extents: (n, c, ceil(l/kl), ceil(h/kh), ceil(w/kw))."""
    n, c, l, h, w = input_shape
    kl, kh, kw = kernel
    return (n, c, math.ceil(l / kl), math.ceil(h / kh), math.ceil(w / kw))


def maxpool3d_forward(x, kernel):
    """Non-overlapping ceiling-mode max pool. Returns (output, switches)."""
    if x.ndim != 5:
        raise ShapeError(f"maxpool3d expects 5D input, got {x.ndim}D")
    if any(int(k) < 1 for k in kernel):
        raise ShapeError(f"pool kernel extents must be >= 1, got {tuple(kernel)}")
    return kernels.maxpool3d_forward(
        np.ascontiguousarray(x, dtype=np.float64), tuple(int(k) for k in kernel))


def maxpool3d_backward(switches, grad_out, input_shape):
    """Route grad_out to the recorded argmax positions; zero elsewhere."""
    if switches.shape != grad_out.shape:
        raise ShapeError(f"switches shape {switches.shape} != grad_out {grad_out.shape}")
    return kernels.maxpool3d_backward(
        switches, np.ascontiguousarray(grad_out, dtype=np.float64), tuple(input_shape))


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return np.where(x > 0.0, grad_out, 0.0)


def linear_forward(x, w, b):
    """y = x @ w.T + b with x: (n, din), w: (dout, din), b: (dout,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"linear expects 2D input and weights, got {x.ndim}D/{w.ndim}D")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear input width {x.shape[1]} != weight din {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"linear bias shape {b.shape} != ({w.shape[0]},)")
    return x @ w.T + b


def linear_backward(x, w, grad_out):
    if grad_out.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(f"grad_out shape {grad_out.shape} != ({x.shape[0]}, {w.shape[0]})")
    gx = grad_out @ w
    gw = grad_out.T @ x
    gb = grad_out.sum(axis=0)
    return gx, gw, gb


def softmax(logits):
    """Row-wise softmax, stabilized by max subtraction."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean negative log-likelihood over the batch.

    Returns (loss, probs, grad_logits) with grad_logits = (probs - onehot)/n.
    """
    n, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeError(f"label out of range [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
    probs = softmax(logits)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, probs, grad
