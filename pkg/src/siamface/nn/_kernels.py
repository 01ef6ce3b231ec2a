"""Compiled loops for convolution and batch normalisation. Arrays must be C-contiguous."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def conv_forward(x, w, out):
    n_img, c_in, _, _ = x.shape
    c_out, _, k, _ = w.shape
    ho, wo = out.shape[2], out.shape[3]
    for n in range(n_img):
        for o in range(c_out):
            for c in range(c_in):
                for i in range(k):
                    for j in range(k):
                        wv = w[o, c, i, j]
                        for h in range(ho):
                            for q in range(wo):
                                out[n, o, h, q] += wv * x[n, c, h + i, q + j]


@numba.njit(cache=True, nogil=True)
def conv_grad_input(g, w, gx):
    n_img, c_out, ho, wo = g.shape
    c_in, k = w.shape[1], w.shape[2]
    for n in range(n_img):
        for c in range(c_in):
            for o in range(c_out):
                for i in range(k):
                    for j in range(k):
                        wv = w[o, c, i, j]
                        for h in range(ho):
                            for q in range(wo):
                                gx[n, c, h + i, q + j] += wv * g[n, o, h, q]


@numba.njit(cache=True, nogil=True, fastmath={"reassoc", "nsz"})
def conv_grad_weight(g, x, gw):
    n_img, c_out, ho, wo = g.shape
    c_in, k = x.shape[1], gw.shape[2]
    for n in range(n_img):
        for o in range(c_out):
            for c in range(c_in):
                for i in range(k):
                    for j in range(k):
                        s = 0.0
                        for h in range(ho):
                            for q in range(wo):
                                s += g[n, o, h, q] * x[n, c, h + i, q + j]
                        gw[o, c, i, j] += s


@numba.njit(cache=True, nogil=True)
def channel_stats(x):
    """Per-channel mean and biased variance over N, H, W, accumulated in float64."""
    n_img, c_n, h, w = x.shape
    mean = np.zeros(c_n)
    var = np.zeros(c_n)
    m = n_img * h * w
    for c in range(c_n):
        s = 0.0
        for n in range(n_img):
            for i in range(h):
                for j in range(w):
                    s += x[n, c, i, j]
        mu = s / m
        ss = 0.0
        for n in range(n_img):
            for i in range(h):
                for j in range(w):
                    d = x[n, c, i, j] - mu
                    ss += d * d
        mean[c] = mu
        var[c] = ss / m
    return mean, var


@numba.njit(cache=True, nogil=True)
def bn_apply(x, mean, inv_std, gamma, beta, xhat, out):
    n_img, c_n, h, w = x.shape
    for n in range(n_img):
        for c in range(c_n):
            mu = mean[c]
            s = inv_std[c]
            ga = gamma[c]
            be = beta[c]
            for i in range(h):
                for j in range(w):
                    v = (x[n, c, i, j] - mu) * s
                    xhat[n, c, i, j] = v
                    out[n, c, i, j] = v * ga + be


@numba.njit(cache=True, nogil=True)
def bn_backward(g, xhat, gamma, inv_std, training, dx, dgamma, dbeta):
    n_img, c_n, h, w = g.shape
    m = n_img * h * w
    for c in range(c_n):
        sg = 0.0
        sgx = 0.0
        for n in range(n_img):
            for i in range(h):
                for j in range(w):
                    sg += g[n, c, i, j]
                    sgx += g[n, c, i, j] * xhat[n, c, i, j]
        dgamma[c] = sgx
        dbeta[c] = sg
        k = gamma[c] * inv_std[c]
        if training:
            a = sg / m
            b = sgx / m
            for n in range(n_img):
                for i in range(h):
                    for j in range(w):
                        dx[n, c, i, j] = k * (g[n, c, i, j] - a - xhat[n, c, i, j] * b)
        else:
            for n in range(n_img):
                for i in range(h):
                    for j in range(w):
                        dx[n, c, i, j] = k * g[n, c, i, j]


@numba.njit(cache=True, nogil=True)
def sgd_update(p, g, v, lr, momentum):
    """In place: ``v = momentum * v + g`` then ``p -= lr * v``; flat views only."""
    for i in range(p.size):
        vi = momentum * v[i] + g[i]
        v[i] = vi
        p[i] -= lr * vi
