"""Exact kernel evaluation, Gram matrices, direct convolutions and MMD losses.

These are quadratic-cost reference computations. Pair sums are evaluated in
row blocks and reduced with numpy's pairwise summation so that accuracy holds
for clouds of 10^4 points and more.
"""

from __future__ import annotations

import math

import numpy as np

from .core import ENERGY_DISTANCE, GAUSSIAN, MS_SPLINE, KernelSpec, as_points

__all__ = [
    "radial_profile",
    "eval_kernel",
    "gram",
    "cross_gram",
    "exact_convolve",
    "exact_ed_loss",
    "gaussian_mmd_loss",
    "mmd_loss",
]

_BLOCK_ENTRIES = 2 ** 20


def _spline_branch(spec: KernelSpec, d: int):
    nu = spec.spline_exponent(d)
    k = round(nu)
    if abs(nu - k) < 1e-12 and k >= 1:
        return True, float(k), float((-1) ** (k + 1))
    return False, nu, float((-1) ** math.ceil(nu))


def radial_profile(spec: KernelSpec, r: np.ndarray, d: int) -> np.ndarray:
    """Kernel value as a function of the distance ``r = |x - y|``."""
    r = np.asarray(r, dtype=np.float64)
    if spec.kind == ENERGY_DISTANCE:
        return -r
    if spec.kind == GAUSSIAN:
        return np.exp(-(r * r) / (2.0 * spec.sigma ** 2))
    if spec.kind == MS_SPLINE:
        spec.validate_dimension(d)
        is_log, nu, sign = _spline_branch(spec, d)
        if is_log:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = sign * r ** (2 * nu) * np.log(r)
            # r^{2 nu} log r -> 0 as r -> 0
            return np.where(r > 0, out, 0.0)
        return sign * r ** (2 * nu)
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError("x and y must have the same dimension")
    r = math.sqrt(float(np.sum((x - y) ** 2)))
    return float(radial_profile(spec, np.array(r), x.shape[0]))


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def cross_gram(spec: KernelSpec, X, Z) -> np.ndarray:
    """``out[i, j] = K(x_i, z_j)``."""
    X, Z = as_points(X), as_points(Z)
    return radial_profile(spec, _distances(X, Z), X.shape[1])


def gram(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric Gram matrix ``K_X``."""
    X = as_points(X)
    K = cross_gram(spec, X, X)
    # force exact symmetry (the distance computation already is, up to fp order)
    return 0.5 * (K + K.T)


def _row_blocks(m: int, n: int):
    step = max(1, _BLOCK_ENTRIES // max(n, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


def exact_convolve(spec: KernelSpec, measure, targets) -> np.ndarray:
    """Direct double sum ``out[k] = sum_j gamma_j K(targets_k, x_j)``."""
    src = as_points(measure.points)
    gam = np.asarray(measure.moments, dtype=np.float64)
    tgt = as_points(targets)
    if tgt.shape[1] != src.shape[1]:
        raise ValueError("targets and sources live in different dimensions")
    out = np.empty((tgt.shape[0], gam.shape[1]))
    for rows in _row_blocks(tgt.shape[0], src.shape[0]):
        K = radial_profile(spec, _distances(tgt[rows], src), src.shape[1])
        out[rows] = K @ gam
    return out


def _pair_sum(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> float:
    """``sum_{i, j} K(a_i, b_j)`` accumulated block by block."""
    partial = []
    for rows in _row_blocks(A.shape[0], B.shape[0]):
        K = radial_profile(spec, _distances(A[rows], B), A.shape[1])
        partial.append(np.sum(K))
    return float(np.sum(np.array(partial)))


def mmd_loss(spec: KernelSpec, X, Y) -> float:
    """``<rho, K * rho>`` with ``rho`` the difference of the two empirical measures."""
    X, Y = as_points(X), as_points(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("X and Y live in different dimensions")
    N, M = X.shape[0], Y.shape[0]
    xx = _pair_sum(spec, X, X) / (N * N)
    yy = _pair_sum(spec, Y, Y) / (M * M)
    xy = _pair_sum(spec, X, Y) / (N * M)
    return xx + yy - 2.0 * xy


def exact_ed_loss(X, Y) -> float:
    """Energy-distance loss ``<rho, K * rho>`` for ``K(x, y) = -|x - y|``."""
    return mmd_loss(KernelSpec.energy_distance(), X, Y)


def gaussian_mmd_loss(X, Y, sigma: float) -> float:
    """Squared MMD with the Gaussian kernel of width ``sigma``."""
    return mmd_loss(KernelSpec.gaussian(sigma), X, Y)
