"""Forward Euler landmark flows, passive advection and inverse flows.

The velocity at step ``t`` is ``v_t = K_{X_t} Pbar_t (+ alpha_t)`` where
``Pbar_t`` is the zero-mean projection of the momenta for the energy-distance
kernel (translations are then carried by ``alpha_t``) and the raw momenta for
any other kernel. Positions advance by ``v_t / T``.

Energies use the kinetic normalization ``(1/2) <Pbar_t, K_{X_t} Pbar_t>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from . import _exact
from . import sliced as _sliced
from .core import KernelSpec, MomentPath, as_points, sample_sphere, zero_mean_project

__all__ = [
    "FlowMode",
    "FlowResult",
    "FlowDivergenceError",
    "euler_flow",
    "advect_points",
    "inverse_flow",
    "bilipschitz_bounds",
    "effective_momenta",
]


class FlowDivergenceError(FloatingPointError):
    """Raised when a trajectory leaves the finite range."""

    def __init__(self, step: int, index: int):
        super().__init__(f"non-finite position at step {step}, point {index}")
        self.step = step
        self.index = index


@dataclass(frozen=True)
class FlowMode:
    """How the velocity field is evaluated.

    ``exact`` uses the direct pair sums; ``sliced`` draws ``projections``
    directions per time step from the stream ``(seed, purpose, prefix + (t,))``.
    """

    kind: str = "exact"
    projections: int = 0
    seed: int = 0
    purpose: str = "flow"
    prefix: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("exact", "sliced"):
            raise ValueError(f"unknown flow mode {self.kind!r}")
        if self.kind == "sliced" and self.projections < 1:
            raise ValueError("sliced mode needs projections >= 1")

    @classmethod
    def exact(cls) -> "FlowMode":
        return cls("exact")

    @classmethod
    def sliced(cls, projections: int, seed: int = 0) -> "FlowMode":
        return cls("sliced", int(projections), int(seed))

    @property
    def is_sliced(self) -> bool:
        return self.kind == "sliced"

    def directions(self, t: int, d: int) -> np.ndarray:
        dirs = sample_sphere(self.seed, self.purpose, self.prefix + (t,), self.projections, d)
        return dirs.directions


def _as_mode(mode) -> FlowMode:
    if mode is None or mode == "exact":
        return FlowMode.exact()
    if isinstance(mode, FlowMode):
        return mode
    raise ValueError(f"cannot interpret flow mode {mode!r}")


@dataclass(frozen=True)
class FlowResult:
    trajectories: np.ndarray
    kernel_energy: float
    tv_integral: float
    per_step_energy: np.ndarray
    per_step_tv: np.ndarray
    momenta: np.ndarray = field(repr=False)
    translations: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.per_step_energy.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.trajectories[-1]


def effective_momenta(spec: KernelSpec, path: MomentPath):
    """Coefficients that actually enter the field, and the translation path."""
    if spec.is_energy_distance:
        alpha = path.translations if path.translations is not None else np.zeros((path.T, path.d))
        return zero_mean_project(path.momenta), np.ascontiguousarray(alpha)
    if path.translations is not None and np.any(path.translations != 0):
        raise ValueError("translations are only meaningful for the energy-distance kernel")
    return np.ascontiguousarray(path.momenta), None


@dataclass
class _ForwardState:
    traj: np.ndarray
    qbar: np.ndarray
    alpha: Optional[np.ndarray]
    raw_energy: np.ndarray
    thetas: Optional[List[np.ndarray]]


def _check_finite(traj: np.ndarray) -> None:
    bad = ~np.isfinite(traj)
    if bad.any():
        t, i = np.argwhere(bad.any(axis=2))[0]
        raise FlowDivergenceError(int(t), int(i))


def _forward(spec: KernelSpec, X0: np.ndarray, path: MomentPath, mode: FlowMode) -> _ForwardState:
    X0 = np.ascontiguousarray(X0, dtype=np.float64)
    if path.n != X0.shape[0] or path.d != X0.shape[1]:
        raise ValueError(
            f"path shape (n={path.n}, d={path.d}) does not match cloud {X0.shape}"
        )
    qbar, alpha = effective_momenta(spec, path)
    T, n, d = qbar.shape
    if not mode.is_sliced:
        code, p0, p1 = _exact.kernel_code(spec, d)
        a = alpha if alpha is not None else np.zeros((T, d))
        with np.errstate(all="ignore"):
            traj, energy = _exact.forward(X0, qbar, a, alpha is not None, code, p0, p1)
        _check_finite(traj)
        return _ForwardState(traj, qbar, alpha, energy, None)
    if not spec.is_energy_distance:
        raise ValueError("sliced evaluation is only available for the energy-distance kernel")
    traj = np.empty((T + 1, n, d))
    traj[0] = X0
    energy = np.empty(T)
    thetas = []
    with np.errstate(all="ignore"):
        for t in range(T):
            th = mode.directions(t, d)
            thetas.append(th)
            V = _sliced.field_velocity(traj[t], qbar[t], th)
            energy[t] = np.sum(qbar[t] * V)
            traj[t + 1] = traj[t] + (V + alpha[t]) / T
            if not np.all(np.isfinite(traj[t + 1])):
                _check_finite(traj[: t + 2])
    return _ForwardState(traj, qbar, alpha, energy, thetas)


def _result(state: _ForwardState) -> FlowResult:
    T = state.qbar.shape[0]
    per_energy = 0.5 * state.raw_energy
    per_tv = np.sum(np.sqrt(np.sum(state.qbar ** 2, axis=2)), axis=1)
    traj = state.traj
    traj.setflags(write=False)
    return FlowResult(
        trajectories=traj,
        kernel_energy=float(np.sum(per_energy) / T),
        tv_integral=float(np.sum(per_tv) / T),
        per_step_energy=per_energy,
        per_step_tv=per_tv,
        momenta=state.qbar,
        translations=state.alpha,
    )


def euler_flow(spec: KernelSpec, X0, path: MomentPath, mode: Union[str, FlowMode] = "exact") -> FlowResult:
    """Integrate the landmark trajectories with explicit Euler steps of size ``1/T``."""
    return _result(_forward(spec, as_points(X0), path, _as_mode(mode)))


def _field_at(spec, mode, state: _ForwardState, t: int, Z: np.ndarray) -> np.ndarray:
    X = state.traj[t]
    q = state.qbar[t]
    if mode.is_sliced:
        v = _sliced.field_evaluate(X, q, Z, state.thetas[t])
    else:
        code, p0, p1 = _exact.kernel_code(spec, X.shape[1])
        v = _exact.convolve(X, q, np.ascontiguousarray(Z), code, p0, p1)
    if state.alpha is not None:
        v = v + state.alpha[t]
    return v


def advect_points(spec: KernelSpec, X0, path: MomentPath, passive, mode="exact") -> np.ndarray:
    """Carry passive points along with the landmark-generated field.

    Passive points never influence the field. Returns an array of shape
    ``(T + 1, m, d)``.
    """
    mode = _as_mode(mode)
    state = _forward(spec, as_points(X0), path, mode)
    Z = np.array(as_points(passive), dtype=np.float64)
    T = state.qbar.shape[0]
    out = np.empty((T + 1,) + Z.shape)
    out[0] = Z
    with np.errstate(all="ignore"):
        for t in range(T):
            out[t + 1] = out[t] + _field_at(spec, mode, state, t, out[t]) / T
    _check_finite(out)
    return out


def inverse_flow(spec: KernelSpec, X0, path: MomentPath, queries, mode="exact") -> np.ndarray:
    """Approximate inverse map: follow the negated field backwards in time.

    Step ``k`` uses the forward field of interval ``T - 1 - k`` (landmarks at
    that step), so the round trip error is first order in ``1/T``.
    """
    mode = _as_mode(mode)
    state = _forward(spec, as_points(X0), path, mode)
    Z = np.array(as_points(queries), dtype=np.float64)
    T = state.qbar.shape[0]
    with np.errstate(all="ignore"):
        for t in range(T - 1, -1, -1):
            Z = Z - _field_at(spec, mode, state, t, Z) / T
    _check_finite(Z[None])
    return Z


def bilipschitz_bounds(result: FlowResult) -> Tuple[float, float]:
    """Distortion bounds ``(exp(-tv), exp(tv))`` from the TV time integral."""
    tv = result.tv_integral
    return float(np.exp(-tv)), float(np.exp(tv))
