"""Command-line front end.

Subcommands: ``register``, ``bench-sliced``, ``interpolate`` and
``oracle-two-particles``. Exit codes: 0 success, 1 malformed input,
2 registration finished without reaching the loss tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels, sliced
from .core import DiscreteVectorMeasure, KernelSpec, MomentPath, min_pairwise_distance, sample_sphere
from .datasets import grid as make_grid
from .flow import advect_points, euler_flow
from .interp import (
    CpdSolution,
    InterpolationError,
    PolynomialBasis,
    evaluate_interpolant,
    solve_exact_cpd,
    solve_ridge_cpd,
    solve_ridge_pd,
)
from .oracles import two_particle_path, two_particle_solution
from .registration import RegistrationConfig, _strict, register

log = logging.getLogger("edreg")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


class InputError(Exception):
    pass


# -- file formats -----------------------------------------------------------------


def fmt(x: float) -> str:
    return "%.17g" % x


def read_csv(path) -> np.ndarray:
    """Headerless numeric CSV, one point per row; d is taken from the first row."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise InputError(f"{path}: no data rows")
    d = len(rows[0].split(","))
    out = np.empty((len(rows), d))
    for i, line in enumerate(rows):
        fields = line.split(",")
        if len(fields) != d:
            raise InputError(f"{path}:{i + 1}: expected {d} fields, got {len(fields)}")
        try:
            out[i] = [float(f) for f in fields]
        except ValueError:
            raise InputError(f"{path}:{i + 1}: non-numeric field") from None
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: non-finite values")
    return out


def write_csv(path, rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    with open(path, "w", newline="\n") as fh:
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_trajectories(path, traj) -> None:
    with open(path, "w", newline="\n") as fh:
        for t in range(traj.shape[0]):
            for i in range(traj.shape[1]):
                fh.write(f"{t},{i}," + ",".join(fmt(v) for v in traj[t, i]) + "\n")


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from None


def _set_threads(n) -> None:
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- register ---------------------------------------------------------------------


def unit_box(X: np.ndarray, Y: np.ndarray):
    """Isotropic affine map sending the joint bounding box into ``[0, 1]^d``."""
    both = np.vstack([X, Y])
    lo = both.min(axis=0)
    scale = float(np.max(both.max(axis=0) - lo))
    if not scale > 0:
        scale = 1.0
    return lo, scale


def cmd_register(args) -> int:
    X = read_csv(args.source)
    Y = read_csv(args.target)
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"source has d={X.shape[1]} but target has d={Y.shape[1]}")
    try:
        cfg = RegistrationConfig.from_dict(_load_json(args.config)) if args.config else RegistrationConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.mode is not None:
            overrides["mode"] = args.mode
        if args.projections is not None:
            overrides["kernel_projections"] = args.projections
        cfg = replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from None
    lo, scale = unit_box(X, Y)
    Xn, Yn = (X - lo) / scale, (Y - lo) / scale
    start = time.perf_counter()
    try:
        res = register(Xn, Yn, cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    wall = time.perf_counter() - start
    out = _out_dir(args.out)
    traj = np.asarray(res.flow.trajectories) * scale + lo
    summary = {
        "converged": res.converged,
        "outer_iterations": int(len(res.loss_history)),
        "final_loss": float(res.loss_history[-1]) if len(res.loss_history) else None,
        "kernel_energy": res.flow.kernel_energy,
        "tv_integral": res.flow.tv_integral,
        "lambda_final": res.lambda_final,
        "rho_final": res.rho_final,
        "loss_history": res.loss_history,
        "energy_history": res.energy_history,
        "normalization": {"offset": lo, "scale": scale},
        "n_source": int(X.shape[0]),
        "n_target": int(Y.shape[0]),
        "d": int(X.shape[1]),
        "config": cfg.to_dict(),
    }
    write_json(out / "result.json", summary)
    # wall time is kept apart so that result.json is reproducible byte for byte
    write_json(out / "timing.json", {"wall_time_seconds": wall})
    _write_trajectories(out / "trajectories.csv", traj)
    if args.grid:
        lo_g = traj[0].min(axis=0)
        hi_g = traj[0].max(axis=0)
        pad = 0.1 * (hi_g - lo_g + (hi_g == lo_g))
        G = make_grid(lo_g - pad, hi_g + pad, args.grid)
        moved = advect_points(cfg.kernel, Xn, res.path, (G - lo) / scale, cfg.kernel_mode(max(1, len(res.loss_history))))
        write_csv(out / "grid_advected.csv", np.hstack([G, moved[-1] * scale + lo]))
    log.info("register: converged=%s loss=%s energy=%.6g (%.1fs)", res.converged, summary["final_loss"],
             res.flow.kernel_energy, wall)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


# -- bench-sliced -----------------------------------------------------------------


def _int_list(text: str):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("list entries must be positive integers")
    return vals


def bench_measure(n: int, d: int, seed: int) -> DiscreteVectorMeasure:
    """Points uniform in the unit ball with zero-mean moments uniform in [-1, 1]."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, d])))
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = v * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / d)
    mom = rng.uniform(-1.0, 1.0, (n, d))
    return DiscreteVectorMeasure(pts, mom - mom.mean(axis=0))


def run_bench(ns, Ps, d: int, seed: int, reps: int = 20, timing: bool = True):
    rows = []
    for n in ns:
        meas = bench_measure(n, d, seed)
        t0 = time.perf_counter()
        exact = kernels.exact_convolve(KernelSpec.energy_distance(), meas, meas.points)
        t_exact = time.perf_counter() - t0
        for P in Ps:
            errs = []
            t0 = time.perf_counter()
            for rep in range(reps):
                dirs = sample_sphere(seed, "bench", (n, P, rep), P, d)
                est = sliced.sliced_convolve(meas, meas.points, dirs)
                errs.append(np.mean(np.linalg.norm(est - exact, axis=1)))
            t_sliced = (time.perf_counter() - t0) / reps
            errs = np.array(errs)
            rows.append([n, P, d, float(errs.mean()), float(errs.std()),
                         t_exact if timing else 0.0, t_sliced if timing else 0.0])
    return rows


def cmd_bench_sliced(args) -> int:
    if args.d < 1:
        raise InputError("d must be >= 1")
    rows = run_bench(args.n, args.P, args.d, args.seed or 0, args.reps, timing=not args.no_timing)
    header = ["n", "P", "d", "mean_error", "std_error", "wall_time_exact", "wall_time_sliced"]
    out = Path(args.out)
    if out.suffix != ".csv":
        out = _out_dir(out) / "bench_sliced.csv"
    write_table(out, header, rows)
    return EXIT_OK


# -- interpolate ------------------------------------------------------------------

_INTERP_KEYS = {"kernel", "degree", "lam", "lam_poly"}


def cmd_interpolate(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    unknown = set(cfg) - _INTERP_KEYS
    if unknown:
        raise InputError(f"unknown interpolation config keys: {sorted(unknown)}")
    try:
        spec = _strict(KernelSpec, cfg.get("kernel", {"kind": "energy_distance"}))
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid kernel: {exc}") from None
    degree = int(cfg.get("degree", spec.polynomial_degree))
    lam = float(cfg.get("lam", 0.0))
    X = read_csv(args.points)
    Yv = read_csv(args.values)
    if Yv.shape[0] != X.shape[0]:
        raise InputError(f"{X.shape[0]} points but {Yv.shape[0]} value rows")
    Q = read_csv(args.queries) if args.queries else X
    if Q.shape[1] != X.shape[1]:
        raise InputError("queries and points live in different dimensions")
    try:
        if lam > 0 and degree < 0:
            gamma = solve_ridge_pd(spec, X, Yv, lam)
            K = kernels.gram(spec, X)
            sol = CpdSolution(gamma, np.zeros((0, Yv.shape[1])), np.einsum("ik,ik->k", gamma, K @ gamma))
        elif lam > 0:
            sol = solve_ridge_cpd(spec, X, Yv, degree, lam)
        else:
            sol = solve_exact_cpd(spec, X, Yv, degree)
    except InterpolationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        raise InputError(str(exc)) from None
    metric = float(np.sum(sol.semi_norm_sq))
    if cfg.get("lam_poly") is not None and sol.alpha.size:
        Pa = PolynomialBasis(degree, X.shape[1]).evaluate(X) @ sol.alpha
        metric += float(cfg["lam_poly"]) * float(np.sum(Pa * Pa))
    out = _out_dir(args.out)
    write_json(out / "interpolation.json", {
        "gamma": sol.gamma,
        "alpha": sol.alpha,
        "semi_norm_sq": sol.semi_norm_sq,
        "metric": metric,
        "degree": degree,
        "lam": lam,
    })
    write_csv(out / "evaluations.csv", evaluate_interpolant(spec, X, sol, degree, Q))
    return EXIT_OK


# -- oracle-two-particles -----------------------------------------------------------


def two_particle_run(r0: float, eps: float, T: int):
    """Euler integration of the analytic momenta; returns analytic and integrated gaps."""
    X0, P = two_particle_path(r0, eps, T)
    path = MomentPath(P, np.zeros((T, 2)))
    flow = euler_flow(KernelSpec.energy_distance(), X0, path)
    gaps = np.linalg.norm(flow.trajectories[:, 1] - flow.trajectories[:, 0], axis=1)
    ts = np.arange(T + 1) / T
    analytic = np.array([two_particle_solution(r0, eps, t)[:2] for t in ts])
    return X0, path, flow, ts, analytic, gaps


def cmd_oracle_two_particles(args) -> int:
    if not (args.r0 > 0 and 0 < args.eps < args.r0) or args.T < 1:
        raise InputError("need r0 > 0, 0 < eps < r0 and T >= 1")
    X0, path, flow, ts, analytic, gaps = two_particle_run(args.r0, args.eps, args.T)
    deviation = float(np.max(np.abs(gaps - analytic[:, 1]) / analytic[:, 1]))
    out = _out_dir(args.out)
    write_csv(out / "analytic.csv", np.column_stack([ts, analytic]))
    write_csv(out / "euler.csv", np.column_stack([ts, gaps]))
    k = args.grid or 40
    G = make_grid([-args.r0, -args.r0], [args.r0, args.r0], k)
    moved = advect_points(KernelSpec.energy_distance(), X0, path, G)[-1]
    write_csv(out / "grid_advected.csv", np.hstack([G, moved]))
    _, _, energy = two_particle_solution(args.r0, args.eps, 0.0)
    write_json(out / "summary.json", {
        "r0": args.r0,
        "eps": args.eps,
        "T": args.T,
        "final_gap": float(gaps[-1]),
        "analytic_final_gap": float(analytic[-1, 1]),
        "max_relative_deviation": deviation,
        "kernel_energy": flow.kernel_energy,
        "analytic_energy": energy,
        "grid_min_distance": min_pairwise_distance(moved),
    })
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edreg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)

    r = sub.add_parser("register", help="register a source cloud onto a target cloud")
    r.add_argument("--config")
    r.add_argument("--source", required=True)
    r.add_argument("--target", required=True)
    r.add_argument("--mode", choices=["exact", "sliced"])
    r.add_argument("--projections", type=int, help="kernel projections in sliced mode")
    r.add_argument("--grid", type=int, default=0, help="advect a k x k passive grid")
    common(r)
    r.set_defaults(func=cmd_register)

    b = sub.add_parser("bench-sliced", help="sliced vs exact convolution error and timing")
    b.add_argument("--n", type=_int_list, required=True)
    b.add_argument("--P", type=_int_list, required=True)
    b.add_argument("--d", type=int, default=3)
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--no-timing", action="store_true", help="write zeros in the timing columns")
    common(b)
    b.set_defaults(func=cmd_bench_sliced)

    it = sub.add_parser("interpolate", help="kernel interpolation / ridge regression")
    it.add_argument("--config")
    it.add_argument("--points", required=True)
    it.add_argument("--values", required=True)
    it.add_argument("--queries")
    common(it)
    it.set_defaults(func=cmd_interpolate)

    o = sub.add_parser("oracle-two-particles", help="closed-form two-particle squeeze vs Euler")
    o.add_argument("--r0", type=float, default=1.0)
    o.add_argument("--eps", type=float, default=0.04)
    o.add_argument("--T", type=int, default=1000)
    o.add_argument("--grid", type=int, default=40)
    common(o)
    o.set_defaults(func=cmd_oracle_two_particles)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _set_threads(args.threads)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
