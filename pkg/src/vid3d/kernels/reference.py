"""Pure-numpy kernel implementations.

Convolution is lowered to one BLAS matrix multiply per kernel offset
(d*k*k small gemms) instead of a single giant im2col buffer, which keeps
peak memory at roughly one extra copy of the input. Pooling uses a
window-reshape with -inf padding for the ceiling-mode partial windows.
"""

import math

import numpy as np


def _pad_input(x, pt, ps):
    n, ci, l, h, w = x.shape
    xp = np.zeros((n, ci, l + 2 * pt, h + 2 * ps, w + 2 * ps), dtype=np.float64)
    xp[:, :, pt:pt + l, ps:ps + h, ps:ps + w] = x
    return xp


def conv3d_forward(x, w, b):
    n, ci, l, h, wd = x.shape
    co, _, d, k, _ = w.shape
    pt, ps = (d - 1) // 2, (k - 1) // 2
    xp = _pad_input(x, pt, ps)
    p = l * h * wd
    acc = np.zeros((n, co, p), dtype=np.float64)
    for dt in range(d):
        for dy in range(k):
            for dx in range(k):
                xs = np.ascontiguousarray(
                    xp[:, :, dt:dt + l, dy:dy + h, dx:dx + wd]).reshape(n, ci, p)
                acc += np.matmul(w[:, :, dt, dy, dx], xs)
    acc += b[None, :, None]
    return acc.reshape(n, co, l, h, wd)


def conv3d_grad_input(grad_out, w, input_shape):
    n, ci, l, h, wd = input_shape
    co, _, d, k, _ = w.shape
    pt, ps = (d - 1) // 2, (k - 1) // 2
    go = np.ascontiguousarray(grad_out).reshape(n, co, l * h * wd)
    gxp = np.zeros((n, ci, l + 2 * pt, h + 2 * ps, wd + 2 * ps), dtype=np.float64)
    for dt in range(d):
        for dy in range(k):
            for dx in range(k):
                contrib = np.matmul(w[:, :, dt, dy, dx].T, go)
                gxp[:, :, dt:dt + l, dy:dy + h, dx:dx + wd] += contrib.reshape(
                    n, ci, l, h, wd)
    return np.ascontiguousarray(gxp[:, :, pt:pt + l, ps:ps + h, ps:ps + wd])


def conv3d_grad_weights(x, grad_out, d, k):
    n, ci, l, h, wd = x.shape
    co = grad_out.shape[1]
    pt, ps = (d - 1) // 2, (k - 1) // 2
    xp = _pad_input(x, pt, ps)
    p = l * h * wd
    go = np.ascontiguousarray(grad_out).reshape(n, co, p)
    gw = np.zeros((co, ci, d, k, k), dtype=np.float64)
    for dt in range(d):
        for dy in range(k):
            for dx in range(k):
                xs = np.ascontiguousarray(
                    xp[:, :, dt:dt + l, dy:dy + h, dx:dx + wd]).reshape(n, ci, p)
                gw[:, :, dt, dy, dx] = np.matmul(go, xs.transpose(0, 2, 1)).sum(axis=0)
    gb = grad_out.sum(axis=(0, 2, 3, 4))
    return gw, gb


def maxpool3d_forward(x, kernel):
    kl, kh, kw = kernel
    n, c, l, h, w = x.shape
    lo, ho, wo = math.ceil(l / kl), math.ceil(h / kh), math.ceil(w / kw)
    xp = np.full((n, c, lo * kl, ho * kh, wo * kw), -np.inf, dtype=np.float64)
    xp[:, :, :l, :h, :w] = x
    win = xp.reshape(n, c, lo, kl, ho, kh, wo, kw)
    win = win.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(n, c, lo, ho, wo, kl * kh * kw)
    local = win.argmax(axis=-1)  # argmax returns the first maximum: lowest flat index
    out = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]

    dt, rem = np.divmod(local, kh * kw)
    dy, dx = np.divmod(rem, kw)
    ii, cc, tt, yy, xx = np.ix_(np.arange(n), np.arange(c), np.arange(lo) * kl,
                                np.arange(ho) * kh, np.arange(wo) * kw)
    switches = (((ii * c + cc) * l + (tt + dt)) * h + (yy + dy)) * w + (xx + dx)
    return np.ascontiguousarray(out), np.ascontiguousarray(switches.astype(np.int64))


def maxpool3d_backward(switches, grad_out, input_shape):
    gx = np.zeros(int(np.prod(input_shape)), dtype=np.float64)
    np.add.at(gx, switches.ravel(), grad_out.ravel())
    return gx.reshape(input_shape)
