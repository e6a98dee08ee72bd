"""Domain types and small shared operations.

Everything here is an immutable value: arrays are copied on construction and
flagged read-only, so instances can be shared freely.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

__all__ = [
    "PointCloud",
    "DiscreteVectorMeasure",
    "MomentPath",
    "KernelSpec",
    "DirectionSet",
    "tv_norm",
    "zero_mean_project",
    "sample_sphere",
    "sphere_direction",
    "min_pairwise_distance",
    "diameter",
    "as_points",
]

ENERGY_DISTANCE = "energy_distance"
GAUSSIAN = "gaussian"
MS_SPLINE = "ms_spline"


def _frozen(array, ndim: int, name: str) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    if out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


def as_points(x) -> np.ndarray:
    """Return the ``(n, d)`` coordinate array of a cloud or array-like."""
    if isinstance(x, (PointCloud, DiscreteVectorMeasure)):
        return x.points
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected an (n, d) array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """``n`` points in ``R^d``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts = _frozen(pts, 2, "points")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("a point cloud needs n >= 1 and d >= 1")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class DiscreteVectorMeasure:
    """Atomic vector measure ``sum_i moments[i] * delta(points[i])``."""

    points: np.ndarray
    moments: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        mom = np.asarray(self.moments, dtype=np.float64)
        if mom.ndim == 1:
            mom = mom[:, None]
        pts = _frozen(pts, 2, "points")
        mom = _frozen(mom, 2, "moments")
        if pts.shape[0] != mom.shape[0]:
            raise ValueError(
                f"points and moments disagree on n: {pts.shape[0]} != {mom.shape[0]}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "moments", mom)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def tv(self) -> float:
        return tv_norm(self)


@dataclass(frozen=True)
class MomentPath:
    """Time-discretized momenta on the grid ``{0, 1/T, ..., (T-1)/T}``.

    ``translations`` carries the explicit null-space (translation) velocity and
    is present exactly when the kernel is the energy-distance kernel.
    """

    momenta: np.ndarray
    translations: Optional[np.ndarray] = None

    def __post_init__(self):
        mom = _frozen(self.momenta, 3, "momenta")
        if mom.shape[0] < 1:
            raise ValueError("a moment path needs T >= 1")
        object.__setattr__(self, "momenta", mom)
        if self.translations is not None:
            tr = _frozen(self.translations, 2, "translations")
            if tr.shape != (mom.shape[0], mom.shape[2]):
                raise ValueError(
                    f"translations must have shape {(mom.shape[0], mom.shape[2])}, "
                    f"got {tr.shape}"
                )
            object.__setattr__(self, "translations", tr)

    @property
    def T(self) -> int:
        return self.momenta.shape[0]

    @property
    def n(self) -> int:
        return self.momenta.shape[1]

    @property
    def d(self) -> int:
        return self.momenta.shape[2]

    @classmethod
    def zeros(cls, T: int, n: int, d: int, translations: bool) -> "MomentPath":
        return cls(np.zeros((T, n, d)), np.zeros((T, d)) if translations else None)

    @classmethod
    def for_kernel(cls, kernel: "KernelSpec", momenta, translations=None) -> "MomentPath":
        """Build a path, adding zero translations for ED and dropping them otherwise."""
        momenta = np.asarray(momenta, dtype=np.float64)
        if kernel.needs_translations:
            if translations is None:
                translations = np.zeros((momenta.shape[0], momenta.shape[2]))
            return cls(momenta, translations)
        if translations is not None and np.any(np.asarray(translations) != 0):
            raise ValueError("translations are only supported by the energy-distance kernel")
        return cls(momenta, None)

    def refine(self, factor: int) -> "MomentPath":
        """Same piecewise-constant control on a grid ``factor`` times finer."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        tr = None if self.translations is None else np.repeat(self.translations, factor, axis=0)
        return MomentPath(np.repeat(self.momenta, factor, axis=0), tr)

    def to_vector(self) -> np.ndarray:
        parts = [self.momenta.ravel()]
        if self.translations is not None:
            parts.append(self.translations.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, x: np.ndarray, T: int, n: int, d: int, translations: bool) -> "MomentPath":
        k = T * n * d
        mom = x[:k].reshape(T, n, d)
        tr = x[k:].reshape(T, d) if translations else None
        return cls(mom, tr)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selector: energy distance, Gaussian(sigma) or (m, s)-spline.

    For the (m, s)-spline the exponent is ``nu = m + s - d/2`` so that
    ``G(x) = (-1)**ceil(nu) * |x|**(2 nu)``; ``m=1, s=(d-1)/2`` gives ``-|x|``.
    """

    kind: str = ENERGY_DISTANCE
    sigma: Optional[float] = None
    m: Optional[int] = None
    s: Optional[float] = None
    polynomial_degree: Optional[int] = None

    def __post_init__(self):
        if self.kind == ENERGY_DISTANCE:
            default = 0
        elif self.kind == GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("Gaussian kernel requires sigma > 0")
            default = -1
        elif self.kind == MS_SPLINE:
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ValueError("(m, s)-spline kernel requires a positive integer m")
            if self.s is None:
                raise ValueError("(m, s)-spline kernel requires s")
            default = int(self.m) - 1
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.polynomial_degree is None:
            object.__setattr__(self, "polynomial_degree", default)
        if self.polynomial_degree < -1:
            raise ValueError("polynomial_degree must be >= -1")

    @classmethod
    def energy_distance(cls, polynomial_degree: int = 0) -> "KernelSpec":
        return cls(ENERGY_DISTANCE, polynomial_degree=polynomial_degree)

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls(GAUSSIAN, sigma=float(sigma))

    @classmethod
    def ms_spline(cls, m: int, s: float) -> "KernelSpec":
        return cls(MS_SPLINE, m=int(m), s=float(s))

    @property
    def is_energy_distance(self) -> bool:
        return self.kind == ENERGY_DISTANCE

    @property
    def needs_translations(self) -> bool:
        return self.kind == ENERGY_DISTANCE

    def validate_dimension(self, d: int) -> None:
        if self.kind == MS_SPLINE and not (-self.m + d / 2 < self.s < d / 2):
            raise ValueError(
                f"(m, s)-spline needs -m + d/2 < s < d/2; got m={self.m}, s={self.s}, d={d}"
            )

    def spline_exponent(self, d: int) -> float:
        """``nu = m + s - d/2`` (only meaningful for the spline kind)."""
        return self.m + self.s - d / 2


@dataclass(frozen=True)
class DirectionSet:
    """Unit directions on ``S^{d-1}`` with the labels they were derived from."""

    directions: np.ndarray
    seed: int = 0
    purpose: str = ""
    step: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        dirs = _frozen(self.directions, 2, "directions")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must have unit norm")
        object.__setattr__(self, "directions", dirs)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def __len__(self) -> int:
        return self.count


def tv_norm(m: Union[DiscreteVectorMeasure, np.ndarray]) -> float:
    """Total variation of an atomic vector measure: sum of moment norms."""
    moments = m.moments if isinstance(m, DiscreteVectorMeasure) else np.asarray(m, float)
    if moments.ndim == 1:
        moments = moments[:, None]
    return float(np.sum(np.sqrt(np.sum(moments * moments, axis=1))))


def zero_mean_project(p: np.ndarray) -> np.ndarray:
    """Subtract each column's mean (works on ``(n, d)`` or ``(T, n, d)``)."""
    p = np.asarray(p, dtype=np.float64)
    return p - p.mean(axis=-2, keepdims=True)


# -- direction streams -------------------------------------------------------

_UINT53 = float(2 ** -53)


def _stream_key(seed: int, purpose: str, step) -> np.ndarray:
    if isinstance(step, (int, np.integer)):
        step = (int(step),)
    step = tuple(int(s) for s in step)
    if any(s < 0 for s in step):
        raise ValueError("step labels must be non-negative integers")
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=(tag, len(step)) + step)
    return ss.generate_state(2, dtype=np.uint64)


def _block_len(d: int) -> int:
    # uniforms per direction: a multiple of 4 so each index owns whole Philox blocks
    return 4 * math.ceil(d / 4)


def _normals_from_raw(raw: np.ndarray, d: int) -> np.ndarray:
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _UINT53
    u1, u2 = u[..., 0::2], u[..., 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(ang), r * np.sin(ang)], axis=-1)
    return z[..., :d]


def _raw_block(key: np.ndarray, first: int, count: int, d: int) -> np.ndarray:
    m = _block_len(d)
    counter = np.array([first * (m // 4), 0, 0, 0], dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=counter)
    return bitgen.random_raw(count * m).reshape(count, m)


def _redraw(seed, purpose, step, index, d) -> np.ndarray:
    attempt = 1
    while True:
        key = _stream_key(seed, purpose + "#redraw", tuple(step) + (index, attempt))
        z = _normals_from_raw(_raw_block(key, 0, 1, d), d)[0]
        nrm = np.linalg.norm(z)
        if nrm > 0:
            return z / nrm
        attempt += 1


def _step_tuple(step) -> Tuple[int, ...]:
    if isinstance(step, (int, np.integer)):
        return (int(step),)
    return tuple(int(s) for s in step)


def sample_sphere(seed: int, purpose: str, step, count: int, d: int) -> DirectionSet:
    """Draw ``count`` i.i.d. uniform directions on ``S^{d-1}``.

    Direction ``i`` depends only on ``(seed, purpose, step, i)``: it is built
    from its own Philox counter block, so any subset can be regenerated in any
    order (see :func:`sphere_direction`).
    """
    if count < 1 or d < 1:
        raise ValueError("need count >= 1 and d >= 1")
    step = _step_tuple(step)
    key = _stream_key(seed, purpose, step)
    z = _normals_from_raw(_raw_block(key, 0, count, d), d)
    norms = np.sqrt(np.sum(z * z, axis=1))
    bad = np.flatnonzero(norms == 0)
    z = z / np.where(norms == 0, 1.0, norms)[:, None]
    for i in bad:
        z[i] = _redraw(seed, purpose, step, int(i), d)
    if d == 1:
        z = np.sign(z)
    return DirectionSet(z, int(seed), purpose, step)


def sphere_direction(seed: int, purpose: str, step, index: int, d: int) -> np.ndarray:
    """Regenerate the single direction ``index`` of a :func:`sample_sphere` draw."""
    step = _step_tuple(step)
    key = _stream_key(seed, purpose, step)
    z = _normals_from_raw(_raw_block(key, index, 1, d), d)[0]
    nrm = np.sqrt(np.sum(z * z))
    if nrm == 0:
        return _redraw(seed, purpose, step, index, d)
    z = z / nrm
    return np.sign(z) if d == 1 else z


# -- geometry ------------------------------------------------------------------


def min_pairwise_distance(x) -> float:
    """Exact minimum distance over all pairs (quadratic scan)."""
    pts = as_points(x)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("min_pairwise_distance needs at least two points")
    best = np.inf
    chunk = max(1, 1_000_000 // max(n, 1))
    for start in range(0, n - 1, chunk):
        block = pts[start:start + chunk]
        diff = block[:, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        rows = np.arange(block.shape[0])
        # only pairs (i, j) with j > i
        mask = np.arange(n)[None, :] > (start + rows)[:, None]
        vals = dist[mask]
        if vals.size:
            best = min(best, float(vals.min()))
    return best


def diameter(x) -> float:
    """Largest pairwise distance (quadratic scan)."""
    pts = as_points(x)
    best = 0.0
    chunk = max(1, 1_000_000 // max(pts.shape[0], 1))
    for start in range(0, pts.shape[0], chunk):
        diff = pts[start:start + chunk, None, :] - pts[None, :, :]
        best = max(best, float(np.sqrt(np.max(np.sum(diff * diff, axis=-1)))))
    return best
