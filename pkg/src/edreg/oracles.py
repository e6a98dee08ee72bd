"""Independent reference solutions used by the tests and the acceptance runs.

Nothing here imports the fast paths; the loops are deliberately naive.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["two_particle_solution", "two_particle_path", "brute_force_mmd_gradient", "brute_force_mmd"]


def two_particle_solution(r0: float, eps: float, t: float):
    """Closed-form geodesic squeezing two particles from distance ``r0`` to ``eps``.

    Returns ``(gamma_t, r_t, energy)``: momentum magnitude, gap and the
    (time-constant) kinetic energy ``gamma_t^2 r_t``.
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    if not 0 < eps < r0:
        raise ValueError("need 0 < eps < r0")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    g0 = 1.0 - math.sqrt(eps / r0)
    s = 1.0 - g0 * t
    gamma_t = g0 / s
    r_t = r0 * s * s
    return gamma_t, r_t, gamma_t * gamma_t * r_t


def two_particle_path(r0: float, eps: float, T: int, d: int = 2):
    """Initial cloud ``(+-r0/2, 0, ...)`` and the analytic momenta sampled at ``t/T``.

    Particle 0 sits at ``-r0/2`` and receives ``+gamma_t e_1``; particle 1 the
    opposite, so the pair moves together.
    """
    X0 = np.zeros((2, d))
    X0[0, 0] = -r0 / 2
    X0[1, 0] = r0 / 2
    P = np.zeros((T, 2, d))
    for t in range(T):
        g = two_particle_solution(r0, eps, t / T)[0]
        P[t, 0, 0] = g
        P[t, 1, 0] = -g
    return X0, P


def _dist(a, b):
    return math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b)))


def _phi(kernel, r):
    kind = kernel if isinstance(kernel, str) else kernel.kind
    if kind == "energy_distance":
        return -r
    if kind == "gaussian":
        s = kernel.sigma
        return math.exp(-r * r / (2 * s * s))
    raise ValueError(f"oracle supports energy_distance and gaussian kernels, got {kind!r}")


def _dphi(kernel, r):
    kind = kernel if isinstance(kernel, str) else kernel.kind
    if kind == "energy_distance":
        return -1.0
    s = kernel.sigma
    return -r / (s * s) * math.exp(-r * r / (2 * s * s))


def brute_force_mmd(X, Y, kernel) -> float:
    """``<rho, K rho>`` by the plain double loop over all ordered pairs (compensated sum)."""
    X, Y = [list(map(float, x)) for x in np.atleast_2d(X)], [list(map(float, y)) for y in np.atleast_2d(Y)]
    N, M = len(X), len(Y)
    terms = []
    for a in X:
        for b in X:
            terms.append(_phi(kernel, _dist(a, b)) / (N * N))
    for a in Y:
        for b in Y:
            terms.append(_phi(kernel, _dist(a, b)) / (M * M))
    for a in X:
        for b in Y:
            terms.append(-2.0 * _phi(kernel, _dist(a, b)) / (N * M))
    return math.fsum(terms)


def brute_force_mmd_gradient(X, Y, kernel) -> np.ndarray:
    """Gradient of :func:`brute_force_mmd` in ``X``, differentiating each pair term.

    The radial derivative at distance 0 is taken as 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    N, d = X.shape
    M = Y.shape[0]
    g = np.zeros((N, d))
    for i in range(N):
        for j in range(N):
            r = _dist(X[i], X[j])
            if r == 0.0:
                continue
            # x_i appears in the pair (i, j) and in (j, i)
            for a in range(d):
                g[i, a] += 2.0 * _dphi(kernel, r) * (X[i, a] - X[j, a]) / r / (N * N)
        for j in range(M):
            r = _dist(X[i], Y[j])
            if r == 0.0:
                continue
            for a in range(d):
                g[i, a] -= 2.0 * _dphi(kernel, r) * (X[i, a] - Y[j, a]) / r / (N * M)
    return g
