"""Kernel interpolation and ridge regression with PD and CPD kernels.

For a CPD kernel of order ``degree + 1`` the interpolant of data ``Y`` on
``X`` is ``f = sum_i gamma_i K(., x_i) + sum_j alpha_j p_j`` with the
coefficients constrained by ``P_X^T gamma = 0``. ``gamma^T K_X gamma`` is the
induced semi-metric; it vanishes exactly on polynomial data.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .core import as_points, diameter, min_pairwise_distance
from .kernels import cross_gram, gram

__all__ = [
    "InterpolationError",
    "DuplicatePoints",
    "NotUnisolvent",
    "SingularSystem",
    "PolynomialBasis",
    "CpdSolution",
    "check_unisolvent",
    "solve_exact_cpd",
    "solve_ridge_pd",
    "solve_ridge_cpd",
    "induced_metric",
    "evaluate_interpolant",
]

COND_LIMIT = 1e14


class InterpolationError(ValueError):
    pass


class DuplicatePoints(InterpolationError):
    pass


class NotUnisolvent(InterpolationError):
    pass


class SingularSystem(InterpolationError):
    pass


@dataclass(frozen=True)
class PolynomialBasis:
    """All monomials in ``d`` variables of total degree at most ``degree``.

    ``degree = -1`` is the empty space (positive definite kernels).
    """

    degree: int
    d: int

    def __post_init__(self):
        if self.degree < -1 or self.d < 1:
            raise ValueError("need degree >= -1 and d >= 1")

    @property
    def exponents(self) -> np.ndarray:
        exps = [
            e
            for total in range(self.degree + 1)
            for e in _compositions(total, self.d)
        ]
        return np.array(exps, dtype=np.int64).reshape(-1, self.d)

    @property
    def size(self) -> int:
        return comb(self.degree + self.d, self.d) if self.degree >= 0 else 0

    def evaluate(self, X) -> np.ndarray:
        """Evaluation matrix ``P_X`` of shape ``(n, l)``."""
        X = as_points(X)
        if X.shape[1] != self.d:
            raise ValueError(f"expected points in dimension {self.d}")
        exps = self.exponents
        return np.prod(X[:, None, :] ** exps[None, :, :], axis=2)


def _compositions(total: int, d: int):
    # exponent tuples of length d summing to total, in lexicographic order
    for bars in itertools.combinations(range(total + d - 1), d - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + d - 1 - prev - 1)
        yield tuple(reversed(out))


@dataclass(frozen=True)
class CpdSolution:
    gamma: np.ndarray
    alpha: np.ndarray
    semi_norm_sq: np.ndarray


def check_unisolvent(X, degree: int) -> bool:
    X = as_points(X)
    if X.shape[0] < 1:
        raise ValueError("need at least one point")
    P = PolynomialBasis(degree, X.shape[1]).evaluate(X)
    if P.shape[1] == 0:
        return True
    if P.shape[0] < P.shape[1]:
        return False
    sv = np.linalg.svd(P, compute_uv=False)
    return bool(sv[0] > 0 and np.sum(sv > 1e-10 * sv[0]) == P.shape[1])


def _as_values(Y, n: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != n:
        raise ValueError(f"values must have {n} rows")
    return Y


def _check_points(X: np.ndarray, degree: Optional[int]) -> None:
    if X.shape[0] > 1:
        diam = diameter(X)
        if min_pairwise_distance(X) <= 1e-12 * diam:
            raise DuplicatePoints("interpolation nodes must be pairwise distinct")
    if degree is not None and not check_unisolvent(X, degree):
        raise NotUnisolvent(f"points are not unisolvent for degree {degree}")


def _check_cond(M: np.ndarray) -> None:
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"condition number estimate {cond:.3g} exceeds {COND_LIMIT:.0e}")


def _semi_norms(K: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    return np.einsum("ik,ik->k", gamma, K @ gamma)


def solve_exact_cpd(spec, X, Y, degree: int) -> CpdSolution:
    """Interpolate ``Y`` on ``X`` via the bordered saddle system."""
    X = as_points(X)
    Y = _as_values(Y, X.shape[0])
    _check_points(X, degree)
    K = gram(spec, X)
    P = PolynomialBasis(degree, X.shape[1]).evaluate(X)
    n, l = P.shape
    M = np.zeros((n + l, n + l))
    M[:n, :n] = K
    M[:n, n:] = P
    M[n:, :n] = P.T
    _check_cond(M)
    rhs = np.vstack([Y, np.zeros((l, Y.shape[1]))])
    sol = sla.solve(M, rhs, assume_a="sym")
    gamma, alpha = sol[:n], sol[n:]
    return CpdSolution(gamma, alpha, _semi_norms(K, gamma))


def solve_ridge_pd(spec, X, Y, lam: float) -> np.ndarray:
    """Ridge coefficients ``(K_X + lam I)^{-1} Y`` for a positive definite kernel."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    X = as_points(X)
    Y = _as_values(Y, X.shape[0])
    _check_points(X, None)
    A = gram(spec, X) + lam * np.eye(X.shape[0])
    _check_cond(A)
    return sla.solve(A, Y, assume_a="sym")


def solve_ridge_cpd(spec, X, Y, degree: int, lam: float) -> CpdSolution:
    """Ridge regression with a polynomial part, solved through the Schur complement.

    ``alpha = (P^T A^{-1} P)^{-1} P^T A^{-1} Y`` and ``gamma = A^{-1}(Y - P alpha)``
    with ``A = K_X + lam I``.
    """
    if not lam > 0:
        raise ValueError("lam must be > 0")
    X = as_points(X)
    Y = _as_values(Y, X.shape[0])
    _check_points(X, degree)
    K = gram(spec, X)
    P = PolynomialBasis(degree, X.shape[1]).evaluate(X)
    A = K + lam * np.eye(X.shape[0])
    _check_cond(A)
    lu = sla.lu_factor(A)
    AiP = sla.lu_solve(lu, P)
    AiY = sla.lu_solve(lu, Y)
    if P.shape[1]:
        S = P.T @ AiP
        _check_cond(S)
        alpha = np.linalg.solve(S, P.T @ AiY)
    else:
        alpha = np.zeros((0, Y.shape[1]))
    gamma = sla.lu_solve(lu, Y - P @ alpha)
    return CpdSolution(gamma, alpha, _semi_norms(K, gamma))


def induced_metric(spec, X, Y, degree: int, lam_poly: Optional[float] = None) -> float:
    """``gamma^T K_X gamma`` summed over components, plus ``lam_poly |P_X alpha|^2``."""
    X = as_points(X)
    sol = solve_exact_cpd(spec, X, Y, degree)
    g = float(np.sum(sol.semi_norm_sq))
    if lam_poly is not None:
        Pa = PolynomialBasis(degree, X.shape[1]).evaluate(X) @ sol.alpha
        g += float(lam_poly) * float(np.sum(Pa * Pa))
    return g


def evaluate_interpolant(spec, X, sol: CpdSolution, degree: int, queries) -> np.ndarray:
    X = as_points(X)
    Q = as_points(queries)
    gamma = np.asarray(sol.gamma, dtype=np.float64).reshape(X.shape[0], -1)
    out = cross_gram(spec, Q, X) @ gamma
    alpha = np.asarray(sol.alpha, dtype=np.float64)
    if alpha.size:
        out = out + PolynomialBasis(degree, X.shape[1]).evaluate(Q) @ alpha.reshape(-1, gamma.shape[1])
    return out
