"""Augmented-Lagrangian registration of point clouds.

The optimization variable is a :class:`~edreg.core.MomentPath`. Each outer
iteration minimizes

    rho/2 * L(X_1, Y)^2 + lam * L(X_1, Y) + E(P) + R(P)

with LBFGS, where ``E`` is the kinetic energy of the Euler flow and ``R`` an
optional momentum regularizer, then updates ``lam += rho * L`` and grows
``rho`` while the loss is above tolerance. Gradients are exact for the
discretized objective (reverse sweep through the Euler recursion).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional

import numpy as np

from . import _exact
from . import sliced as _sliced
from .core import KernelSpec, MomentPath, as_points, sample_sphere, zero_mean_project
from .flow import FlowDivergenceError, FlowMode, FlowResult, _forward, _result

__all__ = [
    "LossSpec",
    "Regularization",
    "InnerConfig",
    "RegistrationConfig",
    "RegistrationResult",
    "LbfgsResult",
    "make_loss",
    "objective",
    "gradient",
    "lbfgs_minimize",
    "register",
]

log = logging.getLogger(__name__)

LOSS_KINDS = ("sliced_ed", "exact_ed", "gaussian_mmd")
REG_KINDS = ("none", "tv_squared", "l2_momentum")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "exact_ed"
    projections: int = 200
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "sliced_ed" and self.projections < 1:
            raise ValueError("sliced_ed loss needs projections >= 1")
        if self.kind == "gaussian_mmd" and not (self.sigma and self.sigma > 0):
            raise ValueError("gaussian_mmd loss needs sigma > 0")


@dataclass(frozen=True)
class Regularization:
    kind: str = "none"
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise ValueError(f"unknown regularization {self.kind!r}")
        if self.kind != "none" and not self.weight > 0:
            raise ValueError(f"{self.kind} needs a positive weight")


@dataclass(frozen=True)
class InnerConfig:
    lbfgs_memory: int = 10
    max_inner_iters: int = 50
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    grad_tol: float = 1e-8
    max_backtracks: int = 50


@dataclass(frozen=True)
class RegistrationConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec.energy_distance)
    loss: LossSpec = field(default_factory=LossSpec)
    T: int = 10
    k_max: int = 50
    epsilon: float = 1e-3
    rho_init: float = 1.0
    rho_growth: float = 1.2
    rho_cap: float = 1e8
    regularization: Regularization = field(default_factory=Regularization)
    seed: int = 0
    inner: InnerConfig = field(default_factory=InnerConfig)
    mode: str = "exact"
    kernel_projections: int = 32

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.rho_init > 0:
            raise ValueError("rho_init must be > 0")
        if self.T < 1 or self.k_max < 1:
            raise ValueError("T and k_max must be >= 1")
        if self.mode not in ("exact", "sliced"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "sliced" and not self.kernel.is_energy_distance:
            raise ValueError("sliced kernel evaluation requires the energy-distance kernel")

    def kernel_mode(self, outer: int) -> FlowMode:
        if self.mode == "exact":
            return FlowMode.exact()
        return FlowMode("sliced", self.kernel_projections, self.seed, "outer-kernel", (outer,))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kernel"] = {k: v for k, v in out["kernel"].items() if v is not None}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RegistrationConfig":
        """Build from a JSON-like mapping; unknown keys raise ``ValueError``."""
        nested = {"kernel": KernelSpec, "loss": LossSpec,
                  "regularization": Regularization, "inner": InnerConfig}
        return _strict(cls, data, nested)


def _strict(cls, data, nested=None):
    if not isinstance(data, dict):
        raise ValueError(f"{cls.__name__} expects a JSON object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if nested and key in nested:
            value = _strict(nested[key], value)
        kwargs[key] = value
    return cls(**kwargs)


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    status: str
    history: List[float]

    @property
    def success(self) -> bool:
        return self.status == "converged"


@dataclass
class RegistrationResult:
    path: MomentPath
    flow: FlowResult
    loss_history: np.ndarray
    energy_history: np.ndarray
    lambda_final: float
    rho_final: float
    converged: bool
    rho_history: np.ndarray = field(default=None, repr=False)
    lambda_history: np.ndarray = field(default=None, repr=False)
    inner: List[LbfgsResult] = field(default_factory=list, repr=False)

    @property
    def final_loss(self) -> float:
        return float(self.loss_history[-1])


# -- losses ----------------------------------------------------------------------

LossFn = Callable[[np.ndarray], tuple]


def make_loss(spec: LossSpec, Y0, seed: int = 0, outer: int = 1) -> LossFn:
    """Loss ``X -> (L(X, Y0), dL/dX)`` with any sliced directions frozen."""
    Y = np.ascontiguousarray(as_points(Y0), dtype=np.float64)
    if spec.kind == "sliced_ed":
        thetas = sample_sphere(seed, "outer-loss", outer, spec.projections, Y.shape[1]).directions

        def loss(X):
            return _sliced.sliced_ed_loss_and_grad(X, Y, thetas)

        return loss
    kernel = KernelSpec.energy_distance() if spec.kind == "exact_ed" else KernelSpec.gaussian(spec.sigma)
    code, p0, p1 = _exact.kernel_code(kernel, Y.shape[1])

    def loss(X):
        return _exact.mmd_value_and_grad(np.ascontiguousarray(X), Y, code, p0, p1)

    return loss


# -- objective and its adjoint ------------------------------------------------------


def _regularizer(reg: Regularization, qbar: np.ndarray, want_grad: bool):
    T = qbar.shape[0]
    if reg.kind == "none":
        return 0.0, None
    if reg.kind == "l2_momentum":
        val = reg.weight / T * float(np.sum(qbar * qbar))
        return val, (2.0 * reg.weight / T) * qbar if want_grad else None
    norms = np.sqrt(np.sum(qbar * qbar, axis=2))
    tv = np.sum(norms, axis=1)
    val = reg.weight / T * float(np.sum(tv * tv))
    if not want_grad:
        return val, None
    safe = np.where(norms > 0, norms, 1.0)
    unit = np.where(norms[:, :, None] > 0, qbar / safe[:, :, None], 0.0)
    return val, (2.0 * reg.weight / T) * tv[:, None, None] * unit


class _Problem:
    """Objective and gradient for fixed ``(lam, rho)`` and frozen directions."""

    def __init__(self, cfg: RegistrationConfig, X0, Y0, lam: float, rho: float, outer: int = 1):
        self.cfg = cfg
        self.X0 = np.ascontiguousarray(as_points(X0), dtype=np.float64)
        self.Y0 = np.ascontiguousarray(as_points(Y0), dtype=np.float64)
        if self.X0.shape[1] != self.Y0.shape[1]:
            raise ValueError("source and target live in different dimensions")
        self.lam = float(lam)
        self.rho = float(rho)
        self.mode = cfg.kernel_mode(outer)
        self.loss = make_loss(cfg.loss, self.Y0, cfg.seed, outer)
        self.T, (self.n, self.d) = cfg.T, self.X0.shape
        self.translations = cfg.kernel.needs_translations
        self._key = None
        self._cache = None

    def path(self, x: np.ndarray) -> MomentPath:
        return MomentPath.from_vector(x, self.T, self.n, self.d, self.translations)

    def _evaluate(self, x: np.ndarray):
        key = x.tobytes()
        if key == self._key:
            return self._cache
        state = _forward(self.cfg.kernel, self.X0, self.path(x), self.mode)
        L, gL = self.loss(state.traj[-1])
        energy = 0.5 * float(np.sum(state.raw_energy)) / self.T
        reg, _ = _regularizer(self.cfg.regularization, state.qbar, False)
        value = 0.5 * self.rho * L * L + self.lam * L + energy + reg
        self._key, self._cache = key, (value, L, energy, state, gL)
        return self._cache

    def value(self, x: np.ndarray) -> float:
        try:
            return self._evaluate(x)[0]
        except FlowDivergenceError:
            return np.inf

    def loss_and_energy(self, x: np.ndarray):
        _, L, energy, state, _ = self._evaluate(x)
        return L, energy, state

    def grad(self, x: np.ndarray) -> np.ndarray:
        _, L, _, state, gL = self._evaluate(x)
        T = self.T
        adj = np.ascontiguousarray((self.rho * L + self.lam) * gL)
        c_energy = 0.5 / T
        if not self.mode.is_sliced:
            code, p0, p1 = _exact.kernel_code(self.cfg.kernel, self.d)
            gQ, galpha, _ = _exact.backward(state.traj, state.qbar, adj, c_energy, code, p0, p1)
        else:
            gQ = np.empty_like(state.qbar)
            galpha = np.empty((T, self.d))
            A = adj.copy()
            for t in range(T - 1, -1, -1):
                q = state.qbar[t]
                galpha[t] = A.sum(axis=0) / T
                W = A / T + c_energy * q
                U = A / T + 2.0 * c_energy * q
                gX, gQ[t] = _sliced.field_vjp(state.traj[t], q, W, U, state.thetas[t])
                A = A + gX
        _, greg = _regularizer(self.cfg.regularization, state.qbar, True)
        if greg is not None:
            gQ = gQ + greg
        if self.translations:
            gP = zero_mean_project(gQ)
            out = np.concatenate([gP.ravel(), galpha.ravel()])
        else:
            out = gQ.ravel().copy()
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite gradient")
        return out


def _vector(path: MomentPath, cfg: RegistrationConfig) -> np.ndarray:
    if cfg.kernel.needs_translations and path.translations is None:
        path = MomentPath(path.momenta, np.zeros((path.T, path.d)))
    if not cfg.kernel.needs_translations and path.translations is not None:
        raise ValueError("translations are only supported by the energy-distance kernel")
    if path.T != cfg.T:
        raise ValueError(f"path has T={path.T} but config has T={cfg.T}")
    return path.to_vector()


def objective(path: MomentPath, lam: float, rho: float, cfg: RegistrationConfig, X0, Y0, outer: int = 1) -> float:
    """Augmented Lagrangian value for a given path (flow errors propagate)."""
    prob = _Problem(cfg, X0, Y0, lam, rho, outer)
    return prob._evaluate(_vector(path, cfg))[0]


def gradient(path: MomentPath, lam: float, rho: float, cfg: RegistrationConfig, X0, Y0, outer: int = 1) -> MomentPath:
    """Exact gradient of :func:`objective` with respect to momenta and translations."""
    prob = _Problem(cfg, X0, Y0, lam, rho, outer)
    g = prob.grad(_vector(path, cfg))
    return MomentPath.from_vector(g, cfg.T, prob.n, prob.d, prob.translations)


# -- LBFGS -------------------------------------------------------------------------


def _two_loop(g: np.ndarray, S, Yv) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(list(zip(S, Yv, (1.0 / np.dot(y, s) for s, y in zip(S, Yv))))):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append((a, rho, s, y))
    s, y = S[-1], Yv[-1]
    q *= np.dot(s, y) / np.dot(y, y)
    for a, rho, s, y in reversed(alphas):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(f, grad, x0, options: Optional[InnerConfig] = None, **overrides) -> LbfgsResult:
    """Limited-memory BFGS with Armijo backtracking.

    ``f(x) -> float`` and ``grad(x) -> array``. Stops on ``max|grad| <= grad_tol``,
    the iteration cap, or a failed line search; a failure is reported through
    ``status`` and the best iterate is returned. Accepted steps never increase f.
    """
    opts = options or InnerConfig()
    if overrides:
        opts = InnerConfig(**{**asdict(opts), **overrides})
    x = np.array(x0, dtype=np.float64, copy=True)
    fx = float(f(x))
    if not np.isfinite(fx):
        raise FloatingPointError("objective is not finite at the starting point")
    g = np.asarray(grad(x), dtype=np.float64)
    nfev = 1
    history = [fx]
    S: deque = deque(maxlen=opts.lbfgs_memory)
    Yv: deque = deque(maxlen=opts.lbfgs_memory)
    status = "max_iter"
    nit = 0
    for nit in range(opts.max_inner_iters + 1):
        if np.max(np.abs(g), initial=0.0) <= opts.grad_tol:
            status = "converged"
            break
        if nit == opts.max_inner_iters:
            break
        if S:
            direction = _two_loop(g, S, Yv)
        else:
            direction = -g * min(1.0, 1.0 / np.linalg.norm(g))
        slope = float(np.dot(g, direction))
        if not slope < 0:
            S.clear()
            Yv.clear()
            direction = -g * min(1.0, 1.0 / np.linalg.norm(g))
            slope = float(np.dot(g, direction))
        step = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            x_new = x + step * direction
            f_new = float(f(x_new))
            nfev += 1
            if np.isfinite(f_new) and f_new <= fx + opts.armijo_c1 * step * slope:
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            status = "line_search_failed"
            break
        g_new = np.asarray(grad(x_new), dtype=np.float64)
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Yv.append(y)
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
    return LbfgsResult(x, fx, g, nit, nfev, status, history)


# -- driver ------------------------------------------------------------------------


def register(X0, Y0, cfg: RegistrationConfig, callback=None) -> RegistrationResult:
    """Match ``X0`` onto ``Y0``.

    Starts from zero momenta, ``lam = 0`` and ``rho = rho_init``. Sliced loss and
    kernel directions are redrawn at every outer iteration ``k`` from the
    streams ``(seed, "outer-loss", k)`` and ``(seed, "outer-kernel", (k, t))``
    and stay fixed during the inner solve. Stops at the first outer iteration
    whose loss is at most ``epsilon``.
    """
    X0 = np.ascontiguousarray(as_points(X0), dtype=np.float64)
    Y0 = np.ascontiguousarray(as_points(Y0), dtype=np.float64)
    if X0.shape[1] != Y0.shape[1]:
        raise ValueError("source and target live in different dimensions")
    if not (np.all(np.isfinite(X0)) and np.all(np.isfinite(Y0))):
        raise ValueError("inputs must be finite")
    n, d = X0.shape
    x = MomentPath.zeros(cfg.T, n, d, cfg.kernel.needs_translations).to_vector()
    lam, rho = 0.0, cfg.rho_init
    losses, energies, rhos, lams, inner = [], [], [], [], []
    converged = False
    state = None
    for k in range(1, cfg.k_max + 1):
        prob = _Problem(cfg, X0, Y0, lam, rho, outer=k)
        try:
            res = lbfgs_minimize(prob.value, prob.grad, x, cfg.inner)
        except FloatingPointError as exc:
            log.warning("outer iteration %d: inner solve aborted (%s)", k, exc)
            break
        x = res.x
        inner.append(res)
        L, energy, state = prob.loss_and_energy(x)
        losses.append(L)
        energies.append(energy)
        lam = lam + rho * L
        if L > cfg.epsilon:
            rho = min(cfg.rho_growth * rho, cfg.rho_cap)
        rhos.append(rho)
        lams.append(lam)
        log.debug("outer %d: loss=%.3e energy=%.4e lam=%.3e rho=%.3e inner=%s",
                  k, L, energy, lam, rho, res.status)
        if callback is not None:
            callback(k, L, energy, lam, rho)
        if L <= cfg.epsilon:
            converged = True
            break
    path = MomentPath.from_vector(x, cfg.T, n, d, cfg.kernel.needs_translations)
    if state is None:
        state = _forward(cfg.kernel, X0, path, cfg.kernel_mode(1))
    return RegistrationResult(
        path=path,
        flow=_result(state),
        loss_history=np.array(losses),
        energy_history=np.array(energies),
        lambda_final=lam,
        rho_final=rho,
        converged=converged,
        rho_history=np.array(rhos),
        lambda_history=np.array(lams),
        inner=inner,
    )
