"""Numba loop kernels.

Parallelism is over disjoint output slices only (batch x channel), and each
output element keeps one fixed reduction order, so results are identical for
any thread count. The innermost loops run over the contiguous width axis so
LLVM can vectorize them.
"""

import warnings

import numpy as np

# numba probes TBB at import; the fallback threading layer is fine for us
warnings.filterwarnings("ignore", message=".*TBB.*")

from numba import njit, prange


def _pad_input(x, pt, ps):
    n, ci, l, h, w = x.shape
    xp = np.zeros((n, ci, l + 2 * pt, h + 2 * ps, w + 2 * ps), dtype=np.float64)
    xp[:, :, pt:pt + l, ps:ps + h, ps:ps + w] = x
    return xp


@njit(cache=True, parallel=True)
def _conv_fwd(xp, w, b, out):
    n, co, l, h, wd = out.shape
    ci, d, k = w.shape[1], w.shape[2], w.shape[3]
    for idx in prange(n * co):
        i = idx // co
        o = idx % co
        for t in range(l):
            for y in range(h):
                row = out[i, o, t, y]
                for x in range(wd):
                    row[x] = b[o]
                for c in range(ci):
                    for dt in range(d):
                        for dy in range(k):
                            xrow = xp[i, c, t + dt, y + dy]
                            for dx in range(k):
                                wv = w[o, c, dt, dy, dx]
                                for x in range(wd):
                                    row[x] += xrow[x + dx] * wv


@njit(cache=True, parallel=True)
def _conv_grad_input(go, w, gxp):
    n, co, l, h, wd = go.shape
    ci, d, k = w.shape[1], w.shape[2], w.shape[3]
    for idx in prange(n * ci):
        i = idx // ci
        c = idx % ci
        for o in range(co):
            for t in range(l):
                for y in range(h):
                    gorow = go[i, o, t, y]
                    for dt in range(d):
                        for dy in range(k):
                            gxrow = gxp[i, c, t + dt, y + dy]
                            for dx in range(k):
                                wv = w[o, c, dt, dy, dx]
                                for x in range(wd):
                                    gxrow[x + dx] += gorow[x] * wv


@njit(cache=True, parallel=True)
def _conv_grad_weights(xp, go, gw):
    co, ci, d, k = gw.shape[0], gw.shape[1], gw.shape[2], gw.shape[3]
    n, _, l, h, wd = go.shape
    for idx in prange(co * ci):
        o = idx // ci
        c = idx % ci
        for dt in range(d):
            for dy in range(k):
                for dx in range(k):
                    acc = 0.0
                    for i in range(n):
                        for t in range(l):
                            for y in range(h):
                                xrow = xp[i, c, t + dt, y + dy]
                                gorow = go[i, o, t, y]
                                for x in range(wd):
                                    acc += xrow[x + dx] * gorow[x]
                    gw[o, c, dt, dy, dx] = acc


@njit(cache=True, parallel=True)
def _pool_fwd(x, kl, kh, kw, out, switches):
    n, c, l, h, w = x.shape
    lo, ho, wo = out.shape[2], out.shape[3], out.shape[4]
    for idx in prange(n * c):
        i = idx // c
        ch = idx % c
        for ot in range(lo):
            t0 = ot * kl
            t1 = min(t0 + kl, l)
            for oy in range(ho):
                y0 = oy * kh
                y1 = min(y0 + kh, h)
                for ox in range(wo):
                    x0 = ox * kw
                    x1 = min(x0 + kw, w)
                    best = x[i, ch, t0, y0, x0]
                    bt, by, bx = t0, y0, x0
                    for t in range(t0, t1):
                        for y in range(y0, y1):
                            for xx in range(x0, x1):
                                v = x[i, ch, t, y, xx]
                                if v > best:  # strict: ties keep the lowest flat index
                                    best = v
                                    bt, by, bx = t, y, xx
                    out[i, ch, ot, oy, ox] = best
                    switches[i, ch, ot, oy, ox] = (((i * c + ch) * l + bt) * h + by) * w + bx


@njit(cache=True)
def _pool_bwd(switches_flat, go_flat, gx_flat):
    for j in range(switches_flat.shape[0]):
        gx_flat[switches_flat[j]] += go_flat[j]


def conv3d_forward(x, w, b):
    n, ci, l, h, wd = x.shape
    co, _, d, k, _ = w.shape
    xp = _pad_input(x, (d - 1) // 2, (k - 1) // 2)
    out = np.empty((n, co, l, h, wd), dtype=np.float64)
    _conv_fwd(xp, w, b, out)
    return out


def conv3d_grad_input(grad_out, w, input_shape):
    n, ci, l, h, wd = input_shape
    co, _, d, k, _ = w.shape
    pt, ps = (d - 1) // 2, (k - 1) // 2
    gxp = np.zeros((n, ci, l + 2 * pt, h + 2 * ps, wd + 2 * ps), dtype=np.float64)
    _conv_grad_input(np.ascontiguousarray(grad_out), w, gxp)
    return np.ascontiguousarray(gxp[:, :, pt:pt + l, ps:ps + h, ps:ps + wd])


def conv3d_grad_weights(x, grad_out, d, k):
    ci = x.shape[1]
    co = grad_out.shape[1]
    xp = _pad_input(x, (d - 1) // 2, (k - 1) // 2)
    gw = np.empty((co, ci, d, k, k), dtype=np.float64)
    _conv_grad_weights(xp, np.ascontiguousarray(grad_out), gw)
    gb = grad_out.sum(axis=(0, 2, 3, 4))
    return gw, gb


def maxpool3d_forward(x, kernel):
    kl, kh, kw = kernel
    n, c, l, h, w = x.shape
    lo = -(-l // kl)
    ho = -(-h // kh)
    wo = -(-w // kw)
    out = np.empty((n, c, lo, ho, wo), dtype=np.float64)
    switches = np.empty((n, c, lo, ho, wo), dtype=np.int64)
    _pool_fwd(np.ascontiguousarray(x), kl, kh, kw, out, switches)
    return out, switches


def maxpool3d_backward(switches, grad_out, input_shape):
    gx = np.zeros(int(np.prod(input_shape)), dtype=np.float64)
    _pool_bwd(switches.ravel(), np.ascontiguousarray(grad_out).ravel(), gx)
    return gx.reshape(input_shape)
