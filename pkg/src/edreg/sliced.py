"""Sliced energy-distance engine with O(n log n) cost per direction.

A 1D sum ``sum_j w_j |x_i - x_j|`` over sorted positions is two prefix sums
away, so every direction costs one sort plus linear work. The d-dimensional
ED convolution is the sphere average of its 1D projections times ``c_d``.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from . import _line
from .core import DirectionSet, DiscreteVectorMeasure, as_points

__all__ = [
    "sorted_line_convolve",
    "line_convolve_at",
    "c_d",
    "sliced_convolve",
    "sliced_ed_loss",
    "sliced_ed_loss_and_grad",
    "op_counts",
    "reset_op_counts",
]

_CHUNK_ENTRIES = 2 ** 21

_ops: Counter = Counter()


def op_counts() -> dict:
    """Counts of sorts, sorted elements and prefix-sum elements since last reset."""
    return dict(_ops)


def reset_op_counts() -> None:
    _ops.clear()


def c_d(d: int) -> float:
    """Slicing constant ``sqrt(pi) Gamma((d+1)/2) / Gamma(d/2)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.exp(0.5 * math.log(math.pi) + math.lgamma((d + 1) / 2) - math.lgamma(d / 2))


def sorted_line_convolve(positions, weights) -> np.ndarray:
    """``out[i] = sum_j weights[j] * |positions[i] - positions[j]|`` in O(n).

    Uses ``out[i] = a_i x_i - b_i`` with the forward recurrences
    ``a_{i+1} = a_i + w_i + w_{i+1}`` and ``b_{i+1} = b_i + w_i x_i + w_{i+1} x_{i+1}``.
    ``weights`` may carry extra trailing columns, convolved independently.
    """
    x = np.asarray(positions, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.ndim != 1 or w.shape[0] != x.shape[0]:
        raise ValueError("positions must be 1D and match weights along axis 0")
    if x.shape[0] > 1 and np.any(x[1:] < x[:-1]):
        raise ValueError("positions must be sorted in nondecreasing order")
    n = x.shape[0]
    if n == 0:
        return np.zeros_like(w)
    xs = x.reshape((n,) + (1,) * (w.ndim - 1))
    wx = w * xs
    a = np.empty_like(w)
    b = np.empty_like(w)
    a[0] = -np.sum(w[1:], axis=0)
    b[0] = -np.sum(wx[1:], axis=0)
    if n > 1:
        a[1:] = a[0] + np.cumsum(w[:-1] + w[1:], axis=0)
        b[1:] = b[0] + np.cumsum(wx[:-1] + wx[1:], axis=0)
    _ops["prefix_elements"] += 2 * n
    return a * xs - b


# -- batched primitives over directions -------------------------------------
#
# s: (P, N) projected positions sorted per row, with the sorting permutations.


def _project_sorted(Z: np.ndarray, thetas: np.ndarray):
    s = thetas @ Z.T  # rows contiguous per direction
    s -= np.mean(s, axis=1)[:, None]  # centering only reduces cancellation
    order = np.argsort(s, axis=1)
    s_sorted = np.take_along_axis(s, order, axis=1)
    _ops["sorts"] += s.shape[0]
    _ops["sorted_elements"] += s.size
    return order, s_sorted


def _chunks(P: int, N: int, k: int):
    step = max(1, _CHUNK_ENTRIES // max(N * k, 1))
    for start in range(0, P, step):
        yield slice(start, min(P, start + step))


def _directions(dirs) -> np.ndarray:
    return dirs.directions if isinstance(dirs, DirectionSet) else np.atleast_2d(np.asarray(dirs, float))


def line_convolve_at(source_pos, weights, target_pos) -> np.ndarray:
    """1D convolution ``sum_j w_j |t_k - x_j|`` at arbitrary targets.

    Targets are merged with the sources as zero-weight atoms, one sort is done
    for all of them and the result is scattered back to the target order.
    """
    x = np.asarray(source_pos, dtype=np.float64).ravel()
    t = np.asarray(target_pos, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64)
    if w.shape[0] != x.shape[0]:
        raise ValueError("weights must match source positions")
    z = np.concatenate([x, t])
    shift = np.mean(z) if z.size else 0.0
    wz = np.concatenate([w, np.zeros((t.shape[0],) + w.shape[1:])], axis=0)
    order = np.argsort(z)
    _ops["sorts"] += 1
    _ops["sorted_elements"] += z.size
    conv = sorted_line_convolve(z[order] - shift, wz[order])
    out = np.empty_like(conv)
    out[order] = conv
    return out[x.shape[0]:]


def sliced_convolve(measure, targets, dirs) -> np.ndarray:
    """Sliced estimate of ``K * Gamma`` at ``targets`` for ``K = -|x - y|``.

    Each direction projects sources and targets to the line, runs one merged
    sort and the sorted convolution for every moment component, and the
    results are averaged and scaled by ``c_d``.
    """
    src = as_points(measure.points)
    gam = np.asarray(measure.moments, dtype=np.float64)
    tgt = as_points(targets)
    thetas = _directions(dirs)
    d = src.shape[1]
    if tgt.shape[1] != d or thetas.shape[1] != d:
        raise ValueError("dimension mismatch between sources, targets and directions")
    n, k = gam.shape
    Z = np.concatenate([src, tgt])
    W = np.concatenate([gam, np.zeros((tgt.shape[0], k))])
    acc = np.zeros((Z.shape[0], k))
    for sl in _chunks(thetas.shape[0], Z.shape[0], k):
        order, s = _project_sorted(Z, thetas[sl])
        _ops["prefix_elements"] += 2 * s.size * k
        # fixed reduction order: by direction index
        acc += _line.field_velocity(s, order, W)
    return -(c_d(d) / thetas.shape[0]) * acc[n:]


def _signed_weights(N: int, M: int) -> np.ndarray:
    return np.concatenate([np.full(N, 1.0 / N), np.full(M, -1.0 / M)])[:, None]


def sliced_ed_loss(X, Y, dirs) -> float:
    """``(c_d / P) sum_p <pi_p rho, K * pi_p rho>`` for the empirical difference ``rho``.

    Value only: both clouds carry constant weights, so each is sorted on its
    own (no permutation needed) and the cross term is a linear merge.
    """
    X, Y = as_points(X), as_points(Y)
    thetas = _directions(dirs)
    N, M, d = X.shape[0], Y.shape[0], X.shape[1]
    if Y.shape[1] != d or thetas.shape[1] != d:
        raise ValueError("dimension mismatch between clouds and directions")
    total = 0.0
    for sl in _chunks(thetas.shape[0], N + M, 1):
        th = thetas[sl]
        sx, sy = th @ X.T, th @ Y.T
        mid = (sx.sum(axis=1) + sy.sum(axis=1)) / (N + M)
        sx -= mid[:, None]
        sy -= mid[:, None]
        sx.sort(axis=1)
        sy.sort(axis=1)
        _ops["sorts"] += th.shape[0]
        _ops["sorted_elements"] += th.shape[0] * (N + M)
        _ops["prefix_elements"] += th.shape[0] * (N + M)
        total += _line.sorted_loss(sx, sy)
    return c_d(d) / thetas.shape[0] * total


def sliced_ed_loss_and_grad(X, Y, dirs, grad: bool = True):
    """Sliced ED loss and its gradient with respect to the points of ``X``."""
    X, Y = as_points(X), as_points(Y)
    thetas = np.ascontiguousarray(_directions(dirs))
    N, M, d = X.shape[0], Y.shape[0], X.shape[1]
    if Y.shape[1] != d or thetas.shape[1] != d:
        raise ValueError("dimension mismatch between clouds and directions")
    Z = np.concatenate([X, Y])
    w = _signed_weights(N, M)[:, 0]
    total = 0.0
    g = np.zeros((N, d))
    for sl in _chunks(thetas.shape[0], N + M, 1):
        order, s = _project_sorted(Z, thetas[sl])
        _ops["prefix_elements"] += (4 if grad else 2) * s.size
        part, gp = _line.loss_and_grad(s, order, w, N, thetas[sl], grad)
        total += part
        g += gp
    scale = c_d(d) / thetas.shape[0]
    return scale * total, (scale * g if grad else None)


# -- field primitives used by the flow and its adjoint ---------------------------


def field_velocity(X: np.ndarray, Q: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Sliced ``K_X Q`` with sources and targets both equal to ``X``."""
    n, d = X.shape
    Q = np.ascontiguousarray(Q)
    acc = np.zeros_like(Q)
    for sl in _chunks(thetas.shape[0], n, 1):
        order, s = _project_sorted(X, thetas[sl])
        _ops["prefix_elements"] += 2 * s.size
        acc += _line.field_velocity(s, order, Q)
    return -(c_d(d) / thetas.shape[0]) * acc


def field_evaluate(X: np.ndarray, Q: np.ndarray, Z: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Sliced field generated by momenta ``Q`` at ``X`` evaluated at points ``Z``."""
    return sliced_convolve(DiscreteVectorMeasure(X, Q), Z, thetas)


def field_vjp(X: np.ndarray, Q: np.ndarray, W: np.ndarray, U: np.ndarray, thetas: np.ndarray):
    """Pullbacks through ``V = K_X Q`` (sliced, ``K = -|<x - y, theta>|``).

    Returns ``(gX, gQ)`` where ``gQ = K_X U`` and
    ``gX_l = sum_j grad phi(x_l - x_j) [W_l . Q_j + W_j . Q_l]``.
    """
    n, d = X.shape
    c = np.ascontiguousarray
    Q, W, U = c(Q), c(W), c(U)
    gX = np.zeros((n, d))
    gQ = np.zeros((n, d))
    for sl in _chunks(thetas.shape[0], n, 1):
        order, s = _project_sorted(X, thetas[sl])
        _ops["prefix_elements"] += 4 * s.size
        gx, gq = _line.field_vjp(s, order, Q, W, U, c(thetas[sl]))
        gX += gx
        gQ += gq
    scale = c_d(d) / thetas.shape[0]
    # d/dz of -|<z, theta>| is -sign(<z, theta>) theta
    return -scale * gX, -scale * gQ
