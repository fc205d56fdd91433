"""Numba-compiled twins of the kernels in ``currank.kernels.npy``.

Written as explicit loops so nopython compilation is guaranteed and the
accumulation order is fixed. Signatures and parameter layout match the
NumPy backend exactly; see that module for the math.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_ERF_P = 0.3275911
_ERF_A1 = 0.254829592
_ERF_A2 = -0.284496736
_ERF_A3 = 1.421413741
_ERF_A4 = -1.453152027
_ERF_A5 = 1.061405429

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@njit(cache=True)
def _erf_scalar(x):
    sign = 1.0
    if x < 0.0:
        sign = -1.0
        x = -x
    t = 1.0 / (1.0 + _ERF_P * x)
    poly = ((((_ERF_A5 * t + _ERF_A4) * t + _ERF_A3) * t + _ERF_A2) * t + _ERF_A1) * t
    return sign * (1.0 - poly * np.exp(-x * x))


@njit(cache=True)
def erf_as(x):
    out = np.empty(x.shape[0], dtype=np.float64)
    for i in range(x.shape[0]):
        out[i] = _erf_scalar(x[i])
    return out


@njit(cache=True)
def normal_cdf(z):
    out = np.empty(z.shape[0], dtype=np.float64)
    for i in range(z.shape[0]):
        out[i] = 0.5 * (1.0 + _erf_scalar(z[i] * _INV_SQRT2))
    return out


@njit(cache=True)
def kde_cdf_many(points, bandwidth, xs):
    n = points.shape[0]
    out = np.empty(xs.shape[0], dtype=np.float64)
    for i in range(xs.shape[0]):
        acc = 0.0
        for j in range(n):
            z = (xs[i] - points[j]) / bandwidth
            acc += 0.5 * (1.0 + _erf_scalar(z * _INV_SQRT2))
        out[i] = acc / n
    return out


@njit(cache=True)
def mlp_scores(theta, d, h, x):
    n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    b2 = theta[h * d + 2 * h]
    for i in range(n):
        score = b2
        for j in range(h):
            pre = theta[h * d + j]  # b1[j]
            for k in range(d):
                pre += theta[j * d + k] * x[i, k]
            score += theta[h * d + h + j] * np.tanh(pre)
        out[i] = score
    return out


@njit(cache=True)
def pointwise_loss_grad(theta, d, h, x, targets, weights):
    n = x.shape[0]
    grad = np.zeros(h * d + 2 * h + 1, dtype=np.float64)
    hid = np.empty(h, dtype=np.float64)
    loss = 0.0
    for i in range(n):
        score = theta[h * d + 2 * h]
        for j in range(h):
            pre = theta[h * d + j]
            for k in range(d):
                pre += theta[j * d + k] * x[i, k]
            hid[j] = np.tanh(pre)
            score += theta[h * d + h + j] * hid[j]
        err = targets[i] - score
        loss += weights[i] * err * err
        c = (-2.0 / n) * weights[i] * err
        grad[h * d + 2 * h] += c
        for j in range(h):
            grad[h * d + h + j] += c * hid[j]
            dpre = c * theta[h * d + h + j] * (1.0 - hid[j] * hid[j])
            grad[h * d + j] += dpre
            for k in range(d):
                grad[j * d + k] += dpre * x[i, k]
    return loss / n, grad


@njit(cache=True)
def pairwise_loss_grad(theta, d, h, xpos, xneg, weights):
    n = xpos.shape[0]
    grad = np.zeros(h * d + 2 * h + 1, dtype=np.float64)
    hid_p = np.empty(h, dtype=np.float64)
    hid_n = np.empty(h, dtype=np.float64)
    loss = 0.0
    for i in range(n):
        sp = 0.0
        sn = 0.0
        for j in range(h):
            pre_p = theta[h * d + j]
            pre_n = theta[h * d + j]
            for k in range(d):
                pre_p += theta[j * d + k] * xpos[i, k]
                pre_n += theta[j * d + k] * xneg[i, k]
            hid_p[j] = np.tanh(pre_p)
            hid_n[j] = np.tanh(pre_n)
            sp += theta[h * d + h + j] * hid_p[j]
            sn += theta[h * d + h + j] * hid_n[j]
        z = sp - sn
        za = abs(z)
        if z >= 0.0:
            loss_i = np.log1p(np.exp(-za))
            sig = 1.0 / (1.0 + np.exp(-za))
        else:
            loss_i = za + np.log1p(np.exp(-za))
            sig = np.exp(-za) / (1.0 + np.exp(-za))
        loss += weights[i] * loss_i
        c = weights[i] * (sig - 1.0) / n
        for j in range(h):
            grad[h * d + h + j] += c * (hid_p[j] - hid_n[j])
            dpre_p = c * theta[h * d + h + j] * (1.0 - hid_p[j] * hid_p[j])
            dpre_n = -c * theta[h * d + h + j] * (1.0 - hid_n[j] * hid_n[j])
            grad[h * d + j] += dpre_p + dpre_n
            for k in range(d):
                grad[j * d + k] += dpre_p * xpos[i, k] + dpre_n * xneg[i, k]
    return loss / n, grad


@njit(cache=True)
def adam_update(theta, grad, mom1, mom2, t, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for j in range(theta.shape[0]):
        mom1[j] = beta1 * mom1[j] + (1.0 - beta1) * grad[j]
        mom2[j] = beta2 * mom2[j] + (1.0 - beta2) * grad[j] * grad[j]
        mhat = mom1[j] / c1
        vhat = mom2[j] / c2
        theta[j] -= lr * mhat / (np.sqrt(vhat) + eps)


@njit(cache=True)
def bm25_accumulate(scores, doc_ids, tfs, idf, k1, norm):
    for i in range(doc_ids.shape[0]):
        doc = doc_ids[i]
        tf = tfs[i]
        scores[doc] += idf * tf * (k1 + 1.0) / (tf + k1 * norm[doc])
