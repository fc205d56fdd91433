"""Vectorized NumPy implementations of the hot numeric kernels.

This is the fallback backend; ``currank.kernels.jit`` holds the
numba-compiled twins. Both backends implement the same math with the
same parameter layout, so they agree to floating-point rounding.

MLP parameter layout (flat float64 vector ``theta``)::

    theta = [W1 (h*d, row-major), b1 (h), w2 (h), b2 (1)]

with score(x) = w2 . tanh(W1 x + b1) + b2.
"""

from __future__ import annotations

import numpy as np

# Abramowitz & Stegun 7.1.26 rational approximation coefficients.
_ERF_P = 0.3275911
_ERF_A1 = 0.254829592
_ERF_A2 = -0.284496736
_ERF_A3 = 1.421413741
_ERF_A4 = -1.453152027
_ERF_A5 = 1.061405429

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def erf_as(x: np.ndarray) -> np.ndarray:
    """erf via the A&S 7.1.26 rational approximation (|err| <= 1.5e-7)."""
    x = np.asarray(x, dtype=np.float64)
    sign = np.where(x < 0.0, -1.0, 1.0)
    ax = np.abs(x)
    t = 1.0 / (1.0 + _ERF_P * ax)
    poly = ((((_ERF_A5 * t + _ERF_A4) * t + _ERF_A3) * t + _ERF_A2) * t + _ERF_A1) * t
    return sign * (1.0 - poly * np.exp(-ax * ax))


def normal_cdf(z: np.ndarray) -> np.ndarray:
    """Standard normal CDF built on :func:`erf_as`."""
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * (1.0 + erf_as(z * _INV_SQRT2))


def kde_cdf_many(points: np.ndarray, bandwidth: float, xs: np.ndarray) -> np.ndarray:
    """CDF of a Gaussian mixture centered at ``points``, evaluated at ``xs``."""
    points = np.asarray(points, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    z = (xs[:, None] - points[None, :]) / bandwidth
    return normal_cdf(z).sum(axis=1) / points.shape[0]


def _unpack(theta: np.ndarray, d: int, h: int):
    w1 = theta[: h * d].reshape(h, d)
    b1 = theta[h * d : h * d + h]
    w2 = theta[h * d + h : h * d + 2 * h]
    b2 = theta[h * d + 2 * h]
    return w1, b1, w2, b2


def mlp_scores(theta: np.ndarray, d: int, h: int, x: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = _unpack(theta, d, h)
    hid = np.tanh(x @ w1.T + b1)
    return hid @ w2 + b2


def _pack_grad(gw1, gb1, gw2, gb2, d: int, h: int) -> np.ndarray:
    grad = np.empty(h * d + 2 * h + 1, dtype=np.float64)
    grad[: h * d] = gw1.ravel()
    grad[h * d : h * d + h] = gb1
    grad[h * d + h : h * d + 2 * h] = gw2
    grad[h * d + 2 * h] = gb2
    return grad


def pointwise_loss_grad(theta, d, h, x, targets, weights):
    """Mean weighted squared error over a batch, with its gradient.

    loss = (1/n) sum_i w_i (s_i - score(x_i))^2
    """
    w1, b1, w2, b2 = _unpack(theta, d, h)
    n = x.shape[0]
    hid = np.tanh(x @ w1.T + b1)
    scores = hid @ w2 + b2
    err = targets - scores
    loss = float(np.sum(weights * err * err) / n)
    # dloss/dscore_i = -2 w_i err_i / n
    c = (-2.0 / n) * weights * err
    gw2 = hid.T @ c
    gb2 = float(np.sum(c))
    gpre = (c[:, None] * w2[None, :]) * (1.0 - hid * hid)
    gw1 = gpre.T @ x
    gb1 = gpre.sum(axis=0)
    return loss, _pack_grad(gw1, gb1, gw2, gb2, d, h)


def pairwise_loss_grad(theta, d, h, xpos, xneg, weights):
    """Mean weighted softmax cross-entropy over (positive, negative) pairs.

    Per pair: z = score(pos) - score(neg), loss = log(1 + exp(-z)),
    evaluated in the overflow-safe branch form.
    """
    w1, b1, w2, b2 = _unpack(theta, d, h)
    n = xpos.shape[0]
    hid_p = np.tanh(xpos @ w1.T + b1)
    hid_n = np.tanh(xneg @ w1.T + b1)
    z = (hid_p @ w2 + b2) - (hid_n @ w2 + b2)
    pos_branch = z >= 0.0
    za = np.abs(z)
    losses = np.where(pos_branch, np.log1p(np.exp(-za)), za + np.log1p(np.exp(-za)))
    loss = float(np.sum(weights * losses) / n)
    # dloss/dz = sigmoid(z) - 1, computed stably.
    sig = np.where(pos_branch, 1.0 / (1.0 + np.exp(-za)), np.exp(-za) / (1.0 + np.exp(-za)))
    c = weights * (sig - 1.0) / n
    gw2 = hid_p.T @ c - hid_n.T @ c
    gb2 = 0.0  # b2 cancels in the score difference
    gpre_p = (c[:, None] * w2[None, :]) * (1.0 - hid_p * hid_p)
    gpre_n = (-c[:, None] * w2[None, :]) * (1.0 - hid_n * hid_n)
    gw1 = gpre_p.T @ xpos + gpre_n.T @ xneg
    gb1 = gpre_p.sum(axis=0) + gpre_n.sum(axis=0)
    return loss, _pack_grad(gw1, gb1, gw2, gb2, d, h)


def adam_update(theta, grad, mom1, mom2, t, lr, beta1, beta2, eps):
    """One Adam step, in place on ``theta`` and the moment buffers."""
    mom1 *= beta1
    mom1 += (1.0 - beta1) * grad
    mom2 *= beta2
    mom2 += (1.0 - beta2) * grad * grad
    mhat = mom1 / (1.0 - beta1**t)
    vhat = mom2 / (1.0 - beta2**t)
    theta -= lr * mhat / (np.sqrt(vhat) + eps)


def bm25_accumulate(scores, doc_ids, tfs, idf, k1, norm):
    """Add one query term's contribution to per-document scores, in place.

    ``norm[j] = 1 - b + b * len_j / avg_len`` is precomputed per document;
    ``doc_ids``/``tfs`` are one posting list.
    """
    contrib = idf * tfs * (k1 + 1.0) / (tfs + k1 * norm[doc_ids])
    scores[doc_ids] += contrib
