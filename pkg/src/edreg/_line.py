"""Compiled per-direction loops for the sliced field, its pullback and the sliced loss.

Callers pass the projected positions already sorted per direction, ``s`` of
shape ``(P, n)``, with the sorting permutations ``orders``; each direction then
costs a constant number of linear passes. Results are reduced over directions
in index order, so outputs are bit-reproducible. Scaling by ``c_d / P`` is left to the callers.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _abs_accumulate(s, order, Wt, out):
    """``out[order[i]] += sum_j Wt[order[j]] * |s_i - s_j|`` (sorted ``s``)."""
    n = s.shape[0]
    k = Wt.shape[1]
    ctot = np.zeros(k)
    btot = np.zeros(k)
    for i in range(n):
        for a in range(k):
            w = Wt[order[i], a]
            ctot[a] += w
            btot[a] += w * s[i]
    c = np.zeros(k)
    b = np.zeros(k)
    for i in range(n):
        oi = order[i]
        si = s[i]
        for a in range(k):
            w = Wt[oi, a]
            c[a] += w
            b[a] += w * si
            out[oi, a] += si * (2.0 * c[a] - w - ctot[a]) - (2.0 * b[a] - w * si - btot[a])


@nb.njit(cache=True)
def field_velocity(S, orders, Q):
    """``sum_p sum_j |<x_i - x_j, theta_p>| q_j`` (unscaled, positive sign)."""
    acc = np.zeros(Q.shape)
    for p in range(S.shape[0]):
        _abs_accumulate(S[p], orders[p], Q, acc)
    return acc


@nb.njit(cache=True)
def field_vjp(S, orders, Q, W, U, thetas):
    """Unscaled pullback pieces ``(gX, gQ)`` of the sliced field.

    ``gQ = sum_p |.| U`` and ``gX_l = sum_p theta_p * coef_l`` with
    ``coef_l = sum_j sign(s_l - s_j) (W_l . Q_j + W_j . Q_l)``.
    """
    n, d = Q.shape
    gX = np.zeros((n, d))
    gQ = np.zeros((n, d))
    tq = np.zeros(d)
    tw = np.zeros(d)
    cq = np.zeros(d)
    cw = np.zeros(d)
    gq = np.zeros(d)
    gw = np.zeros(d)
    for p in range(thetas.shape[0]):
        th = thetas[p]
        s, order = S[p], orders[p]
        _abs_accumulate(s, order, U, gQ)
        tq[:] = 0.0
        tw[:] = 0.0
        for i in range(n):
            for a in range(d):
                tq[a] += Q[order[i], a]
                tw[a] += W[order[i], a]
        cq[:] = 0.0
        cw[:] = 0.0
        i = 0
        while i < n:
            # group of tied positions [i, j): ties contribute sign 0
            j = i + 1
            while j < n and s[j] == s[i]:
                j += 1
            gq[:] = 0.0
            gw[:] = 0.0
            for m in range(i, j):
                for a in range(d):
                    gq[a] += Q[order[m], a]
                    gw[a] += W[order[m], a]
            for m in range(i, j):
                om = order[m]
                coef = 0.0
                for a in range(d):
                    sig_q = cq[a] - (tq[a] - cq[a] - gq[a])
                    sig_w = cw[a] - (tw[a] - cw[a] - gw[a])
                    coef += W[om, a] * sig_q + Q[om, a] * sig_w
                for a in range(d):
                    gX[om, a] += coef * th[a]
            for a in range(d):
                cq[a] += gq[a]
                cw[a] += gw[a]
            i = j
    return gX, gQ


@nb.njit(cache=True)
def loss_and_grad(S, orders, w, N, thetas, want_grad):
    """Unscaled ``sum_p -<w, |.| w>`` over the merged cloud and its gradient
    with respect to the first ``N`` points."""
    n, d = S.shape[1], thetas.shape[1]
    g = np.zeros((N, d))
    total = 0.0
    w2 = w.reshape(n, 1)
    conv = np.zeros((n, 1))
    for p in range(thetas.shape[0]):
        th = thetas[p]
        s, order = S[p], orders[p]
        conv[:, 0] = 0.0
        _abs_accumulate(s, order, w2, conv)
        part = 0.0
        for i in range(n):
            part -= w[i] * conv[i, 0]
        total += part
        if not want_grad:
            continue
        tot = 0.0
        for i in range(n):
            tot += w[order[i]]
        c = 0.0
        i = 0
        while i < n:
            j = i + 1
            while j < n and s[j] == s[i]:
                j += 1
            grp = 0.0
            for m in range(i, j):
                grp += w[order[m]]
            sig = c - (tot - c - grp)
            for m in range(i, j):
                om = order[m]
                if om < N:
                    f = -2.0 * w[om] * sig
                    for a in range(d):
                        g[om, a] += f * th[a]
            c += grp
            i = j
    return total, g


@nb.njit(cache=True)
def sorted_loss(SX, SY):
    """Unscaled ``sum_p -<w, |.| w>`` from separately sorted projections of
    the two clouds (weights ``1/N`` and ``-1/M``), by a linear merge."""
    P, N = SX.shape
    M = SY.shape[1]
    total = 0.0
    for p in range(P):
        x, y = SX[p], SY[p]
        sxx = 0.0
        for i in range(N):
            sxx += (2.0 * i - (N - 1)) * x[i]
        syy = 0.0
        ytot = 0.0
        for j in range(M):
            syy += (2.0 * j - (M - 1)) * y[j]
            ytot += y[j]
        # cross = sum_i x_i (2 k_i - M) - 2 C_{k_i} + C_M, k_i = #{y_j < x_i}
        cross = 0.0
        k = 0
        c = 0.0
        for i in range(N):
            xi = x[i]
            while k < M and y[k] < xi:
                c += y[k]
                k += 1
            cross += xi * (2.0 * k - M) - 2.0 * c + ytot
        total -= 2.0 * sxx / (N * N) + 2.0 * syy / (M * M) - 2.0 * cross / (N * M)
    return total
