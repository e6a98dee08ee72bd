"""Deterministic synthetic point clouds for experiments and tests."""

from __future__ import annotations

import numpy as np

from .oracles import two_particle_path

__all__ = [
    "circle",
    "perturbed_circle",
    "grid",
    "two_particles",
    "blob_3d",
    "deformed_blob_3d",
]


def circle(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(theta), np.sin(theta)]) * radius + np.asarray(center, float)


def perturbed_circle(n: int, amplitude: float = 0.15, lobes: int = 3, shift=(0.3, 0.1), phase: float = 0.4) -> np.ndarray:
    """Star-shaped curve ``r(theta) = 1 + amplitude * cos(lobes * theta + phase)``, translated."""
    theta = 2.0 * np.pi * np.arange(n) / n
    r = 1.0 + amplitude * np.cos(lobes * theta + phase)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)]) + np.asarray(shift, float)


def grid(lo, hi, k: int = 40) -> np.ndarray:
    """``k x k`` (or ``k^d``) regular grid on the box ``[lo, hi]``; rows in C order."""
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def two_particles(r0: float = 1.0, eps: float = 0.04, d: int = 2):
    """Source pair at gap ``r0`` and target pair at gap ``eps``, both centered at 0."""
    X0 = two_particle_path(r0, eps, 1, d)[0]
    return X0, X0 * (eps / r0)


def blob_3d(n: int = 10000, seed: int = 0) -> np.ndarray:
    """Points on a lumpy closed surface in R^3 (a stand-in for a scanned shape)."""
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x, y, z = v.T
    r = 1.0 + 0.25 * np.sin(3.0 * x) * np.cos(2.0 * y) + 0.15 * z ** 2
    return v * r[:, None] * np.array([1.0, 0.8, 0.6])


def deformed_blob_3d(n: int = 10000, seed: int = 0) -> np.ndarray:
    """A smooth bend, twist and shift of :func:`blob_3d`, with its own sampling."""
    X = blob_3d(n, seed + 1)
    x, y, z = X.T
    angle = 0.35 * z
    c, s = np.cos(angle), np.sin(angle)
    out = np.column_stack([c * x - s * y, s * x + c * y, z + 0.15 * x ** 2])
    return out * 1.1 + np.array([0.2, -0.1, 0.05])
