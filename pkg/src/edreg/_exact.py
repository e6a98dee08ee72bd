"""Compiled pair-sum loops for exact-mode flows and their adjoint.

Kernels are radial, ``K(x, y) = phi(|x - y|)``; every routine takes a kernel
code and two parameters, see :func:`kernel_code`. ``grad phi(z) = g(|z|) z``
and ``g`` is taken as 0 at ``z = 0`` for kernels that are not smooth there.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .core import ENERGY_DISTANCE, GAUSSIAN, MS_SPLINE, KernelSpec

ED, GAUSS, POWER, POWER_LOG = 0, 1, 2, 3


def kernel_code(spec: KernelSpec, d: int):
    """Return ``(code, p0, p1)`` for the compiled loops."""
    if spec.kind == ENERGY_DISTANCE:
        return ED, 0.0, 0.0
    if spec.kind == GAUSSIAN:
        return GAUSS, float(spec.sigma), 0.0
    if spec.kind == MS_SPLINE:
        spec.validate_dimension(d)
        nu = spec.spline_exponent(d)
        k = round(nu)
        if abs(nu - k) < 1e-12 and k >= 1:
            return POWER_LOG, 2.0 * k, float((-1) ** (k + 1))
        return POWER, 2.0 * nu, float((-1) ** math.ceil(nu))
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


@nb.njit(cache=True, inline="always")
def _phi(code, r, p0, p1):
    if code == ED:
        return -r
    if code == GAUSS:
        return math.exp(-r * r / (2.0 * p0 * p0))
    if r == 0.0:
        return 0.0
    if code == POWER:
        return p1 * r ** p0
    return p1 * r ** p0 * math.log(r)


@nb.njit(cache=True, inline="always")
def _gfac(code, r, p0, p1):
    if code == GAUSS:
        return -math.exp(-r * r / (2.0 * p0 * p0)) / (p0 * p0)
    if r == 0.0:
        return 0.0
    if code == ED:
        return -1.0 / r
    if code == POWER:
        return p1 * p0 * r ** (p0 - 2.0)
    return p1 * r ** (p0 - 2.0) * (p0 * math.log(r) + 1.0)


@nb.njit(cache=True)
def convolve(X, Q, Z, code, p0, p1):
    """``out[k] = sum_j phi(|z_k - x_j|) q_j``."""
    m, d = Z.shape
    n = X.shape[0]
    k = Q.shape[1]
    out = np.zeros((m, k))
    for i in range(m):
        for j in range(n):
            r2 = 0.0
            for a in range(d):
                diff = Z[i, a] - X[j, a]
                r2 += diff * diff
            ph = _phi(code, math.sqrt(r2), p0, p1)
            for a in range(k):
                out[i, a] += ph * Q[j, a]
    return out


@nb.njit(cache=True)
def _step_velocity(X, Q, code, p0, p1, V):
    n, d = X.shape
    for i in range(n):
        for a in range(d):
            V[i, a] = 0.0
    # symmetric kernel: visit each pair once
    for i in range(n):
        ph0 = _phi(code, 0.0, p0, p1)
        for a in range(d):
            V[i, a] += ph0 * Q[i, a]
        for j in range(i + 1, n):
            r2 = 0.0
            for a in range(d):
                diff = X[i, a] - X[j, a]
                r2 += diff * diff
            ph = _phi(code, math.sqrt(r2), p0, p1)
            for a in range(d):
                V[i, a] += ph * Q[j, a]
                V[j, a] += ph * Q[i, a]


@nb.njit(cache=True)
def forward(X0, Qbar, alpha, use_alpha, code, p0, p1):
    """Euler recursion ``X_{t+1} = X_t + (K_{X_t} Qbar_t + alpha_t) / T``.

    Returns the trajectory and ``<Qbar_t, K_{X_t} Qbar_t>`` per step.
    """
    T, n, d = Qbar.shape
    traj = np.empty((T + 1, n, d))
    energy = np.zeros(T)
    traj[0] = X0
    V = np.empty((n, d))
    h = 1.0 / T
    for t in range(T):
        X = traj[t]
        _step_velocity(X, Qbar[t], code, p0, p1, V)
        e = 0.0
        for i in range(n):
            for a in range(d):
                e += Qbar[t, i, a] * V[i, a]
                v = V[i, a]
                if use_alpha:
                    v += alpha[t, a]
                traj[t + 1, i, a] = X[i, a] + h * v
        energy[t] = e
    return traj, energy


@nb.njit(cache=True)
def backward(traj, Qbar, adj_final, energy_weight, code, p0, p1):
    """Reverse sweep through :func:`forward`.

    The objective part handled here is ``J(X_T) + energy_weight * sum_t E_t``
    with ``E_t = <Qbar_t, K_{X_t} Qbar_t>``; ``adj_final = dJ/dX_T``.
    Returns ``(dQbar, dalpha, dX0)``.
    """
    T, n, d = Qbar.shape
    h = 1.0 / T
    A = adj_final.copy()
    gQ = np.zeros((T, n, d))
    galpha = np.zeros((T, d))
    W = np.empty((n, d))
    U = np.empty((n, d))
    gX = np.empty((n, d))
    for t in range(T - 1, -1, -1):
        X = traj[t]
        q = Qbar[t]
        for i in range(n):
            for a in range(d):
                galpha[t, a] += h * A[i, a]
                W[i, a] = h * A[i, a] + energy_weight * q[i, a]
                U[i, a] = h * A[i, a] + 2.0 * energy_weight * q[i, a]
                gX[i, a] = 0.0
        # gQ = K U ; gX_l = sum_j grad phi(x_l - x_j) [W_l . q_j + W_j . q_l]
        ph0 = _phi(code, 0.0, p0, p1)
        for i in range(n):
            for a in range(d):
                gQ[t, i, a] += ph0 * U[i, a]
            for j in range(i + 1, n):
                r2 = 0.0
                for a in range(d):
                    diff = X[i, a] - X[j, a]
                    r2 += diff * diff
                r = math.sqrt(r2)
                ph = _phi(code, r, p0, p1)
                gf = _gfac(code, r, p0, p1)
                c = 0.0
                for a in range(d):
                    gQ[t, i, a] += ph * U[j, a]
                    gQ[t, j, a] += ph * U[i, a]
                    c += W[i, a] * q[j, a] + W[j, a] * q[i, a]
                if gf != 0.0:
                    for a in range(d):
                        z = gf * (X[i, a] - X[j, a]) * c
                        gX[i, a] += z
                        gX[j, a] -= z
        for i in range(n):
            for a in range(d):
                A[i, a] += gX[i, a]
    return gQ, galpha, A


@nb.njit(cache=True)
def mmd_value_and_grad(X, Y, code, p0, p1):
    """``<rho, K rho>`` for ``rho = mean(delta_X) - mean(delta_Y)`` and its X-gradient."""
    N, d = X.shape
    M = Y.shape[0]
    wx = 1.0 / N
    wy = -1.0 / M
    g = np.zeros((N, d))
    xx = 0.0
    xy = 0.0
    yy = 0.0
    ph0 = _phi(code, 0.0, p0, p1)
    for i in range(N):
        xx += ph0
        for j in range(i + 1, N):
            r2 = 0.0
            for a in range(d):
                diff = X[i, a] - X[j, a]
                r2 += diff * diff
            r = math.sqrt(r2)
            xx += 2.0 * _phi(code, r, p0, p1)
            gf = _gfac(code, r, p0, p1)
            for a in range(d):
                z = 2.0 * wx * wx * gf * (X[i, a] - X[j, a])
                g[i, a] += z
                g[j, a] -= z
        for j in range(M):
            r2 = 0.0
            for a in range(d):
                diff = X[i, a] - Y[j, a]
                r2 += diff * diff
            r = math.sqrt(r2)
            xy += _phi(code, r, p0, p1)
            gf = _gfac(code, r, p0, p1)
            for a in range(d):
                g[i, a] += 2.0 * wx * wy * gf * (X[i, a] - Y[j, a])
    for i in range(M):
        yy += ph0
        for j in range(i + 1, M):
            r2 = 0.0
            for a in range(d):
                diff = Y[i, a] - Y[j, a]
                r2 += diff * diff
            yy += 2.0 * _phi(code, math.sqrt(r2), p0, p1)
    value = wx * wx * xx + wy * wy * yy + 2.0 * wx * wy * xy
    return value, g
