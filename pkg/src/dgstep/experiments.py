"""Single runs and convergence studies on the scalar ODE and KdV testbeds."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import math

import numpy as np

from .problems import (
    CnoidalWave,
    ScalarODEProblem,
    build_kdv_problem,
    fe_evaluate,
    interpolate_initial,
    scalar_ode_exact,
)
from .stepper import NewtonOptions, TimeMesh, energy_identity_residual, integrate, sample_interval

DGRAD_NAMES = {
    "gonzalez": "gonzalez",
    "avf": "avf",
    "itoh-abe": "itoh-abe",
    "closed-form": "native",
    "weak-form": "native",
}
INTERIOR_SAMPLES = 33
KDV_SAMPLES_PER_DEGREE = 10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str = "ode"
    k: int = 1
    nt: int = 8
    T: float = None  # ODE: 20; KdV: one temporal period
    u0: float = 1e-5
    nx: int = 32
    l: int = None  # default max(1, 2k)
    modulus: float = math.sqrt(0.9)
    kappa: float = 1.0
    alpha: float = 0.0
    dgrad: str = None  # ODE: closed-form; KdV: weak-form
    newton_tol: float = 1e-12
    rel_tol: float = None
    max_iters: int = 50
    jacobian: str = "finite_difference"
    quad: int = None  # default 2k + 1

    def resolved(self):
        """Copy with defaults filled in; raises ConfigError on invalid settings."""
        if self.problem not in ("ode", "kdv"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if self.nt < 1:
            raise ConfigError("nt must be >= 1")
        if not self.newton_tol > 0:
            raise ConfigError("newton tolerance must be positive")
        if self.quad is not None and self.quad < 1:
            raise ConfigError("quad must be >= 1")
        cfg = self
        if cfg.dgrad is None:
            cfg = replace(cfg, dgrad="closed-form" if cfg.problem == "ode" else "weak-form")
        if cfg.dgrad not in DGRAD_NAMES:
            raise ConfigError(f"unknown discrete gradient {cfg.dgrad!r}")
        if cfg.problem == "ode":
            if cfg.dgrad == "weak-form":
                raise ConfigError("weak-form discrete gradient is for kdv")
            if not cfg.u0 > 0:
                raise ConfigError("the ODE exact solution needs u0 > 0")
            if cfg.T is None:
                cfg = replace(cfg, T=20.0)
        else:
            if cfg.dgrad != "weak-form":
                raise ConfigError("kdv requires the weak-form discrete gradient")
            if cfg.l is None:
                cfg = replace(cfg, l=max(1, 2 * cfg.k))
            if cfg.l < 1 or cfg.nx < 3:
                raise ConfigError("kdv needs l >= 1 and nx >= 3")
            if not 0 <= cfg.modulus < 1 or not cfg.kappa > 0:
                raise ConfigError("cnoidal wave needs 0 <= m < 1 and kappa > 0")
            if cfg.T is None:
                cfg = replace(cfg, T=cfg.wave().period)
        if not cfg.T > 0:
            raise ConfigError("T must be positive")
        return cfg

    def wave(self):
        return CnoidalWave(self.modulus, self.kappa, self.alpha)

    def newton_options(self):
        return NewtonOptions(
            abs_tol=self.newton_tol,
            rel_tol=self.rel_tol,
            max_iters=self.max_iters,
            jacobian_mode=self.jacobian,
        )


@dataclass
class Run:
    config: RunConfig
    problem: object
    trajectory: object


def setup(cfg):
    """Build (problem, u0) for a resolved config."""
    if cfg.problem == "ode":
        return ScalarODEProblem(), np.array([cfg.u0])
    wave = cfg.wave()
    problem = build_kdv_problem(cfg.nx, cfg.l, wave.domain_length)
    return problem, interpolate_initial(problem, wave)


def run_case(cfg):
    cfg = cfg.resolved()
    problem, u0 = setup(cfg)
    mesh = TimeMesh.uniform(cfg.T, cfg.nt)
    traj = integrate(problem, DGRAD_NAMES[cfg.dgrad], u0, mesh, cfg.k, cfg.newton_options(), cfg.quad)
    return Run(cfg, problem, traj)


def trace_rows(run, coord_stride=0):
    """One dict per interval n = 1..N with nodal values and energy diagnostics."""
    problem, traj = run.problem, run.trajectory
    nodal = traj.nodal_values
    rows = []
    for n in range(1, traj.mesh.N + 1):
        row = {"n": n, "t_n": traj.mesh.nodes[n]}
        u = nodal[n]
        if run.config.problem == "ode":
            row["u"] = u[0]
        elif coord_stride:
            for j in range(0, len(u), coord_stride):
                row[f"u_{j}"] = u[j]
        row["energy"] = problem.energy(u)
        row["energy_identity_residual"] = energy_identity_residual(problem, traj, n)
        if run.config.problem == "kdv":
            row["mass"] = problem.mass(u)
        row["newton_iters"] = traj.intervals[n - 1].newton_iters
        rows.append(row)
    return rows


# -- error measures -------------------------------------------------------


def ode_errors(run):
    """Relative nodal error max_n |u^n - u(t_n)| / |u(t_n)| and relative sup-norm error."""
    traj, u0 = run.trajectory, run.config.u0
    t = traj.mesh.nodes
    exact = scalar_ode_exact(u0, t)
    nodal = np.max(np.abs(traj.nodal_values[:, 0] - exact) / np.abs(exact))
    s = np.linspace(0.0, 1.0, INTERIOR_SAMPLES)
    worst, scale = 0.0, 0.0
    for n in range(1, traj.mesh.N + 1):
        ts = t[n - 1] + s * (t[n] - t[n - 1])
        ex = scalar_ode_exact(u0, ts)
        worst = max(worst, np.max(np.abs(sample_interval(traj, n, s)[:, 0] - ex)))
        scale = max(scale, np.max(np.abs(ex)))
    return nodal, worst / scale


def kdv_nodal_error(run):
    """max_n |u^n - u_ex(t_n)|_inf / |u_ex(t_n)|_inf, sampled at 10 l points per cell."""
    problem, traj = run.problem, run.trajectory
    wave = run.config.wave()
    per_cell = KDV_SAMPLES_PER_DEGREE * problem.assembly.degree
    worst = 0.0
    for n, t in enumerate(traj.mesh.nodes):
        x, vals = fe_evaluate(problem, traj.nodal_values[n], per_cell)
        ex = wave(x, t)
        worst = max(worst, np.max(np.abs(vals - ex)) / np.max(np.abs(ex)))
    return worst


def observed_order(errors, factor=2.0):
    """log_factor(e_i / e_{i+1}) for consecutive errors."""
    errors = np.asarray(errors, dtype=float)
    if len(errors) < 2:
        raise ValueError("need at least two errors")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive")
    return np.log(errors[:-1] / errors[1:]) / np.log(factor)


def least_squares_order(steps, errors):
    """Slope of log(error) against log(step)."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    tau: float
    nodal_error: float
    interior_error: float  # nan for KdV
    nodal_order: float  # nan on the first row
    interior_order: float
    below_floor: bool  # nodal error under 100 * newton_tol
    interior_below_floor: bool = False


def _level_config(cfg, level):
    n = 2**level
    if cfg.problem == "kdv":
        return replace(cfg, nt=n, nx=n)
    return replace(cfg, nt=n)


def _level_errors(cfg):
    run = run_case(cfg)
    if cfg.problem == "ode":
        return ode_errors(run)
    return kdv_nodal_error(run), math.nan


def convergence_study(cfg, levels, jobs=1):
    """Run each refinement level and tabulate errors and observed orders."""
    levels = list(levels)
    if len(levels) < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    cfg = cfg.resolved()
    configs = [_level_config(cfg, i).resolved() for i in levels]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_level_errors, configs))
    else:
        results = [_level_errors(c) for c in configs]
    floor = 100.0 * cfg.newton_tol
    rows = []
    for j, (lvl, c, (nod, inte)) in enumerate(zip(levels, configs, results)):
        if j:
            prev_nod, prev_int = results[j - 1]
            n_ord = float(observed_order([prev_nod, nod])[0]) if nod > 0 and prev_nod > 0 else math.nan
            i_ord = float(observed_order([prev_int, inte])[0]) if inte > 0 and prev_int > 0 else math.nan
        else:
            n_ord = i_ord = math.nan
        rows.append(
            ConvergenceRow(lvl, c.T / c.nt, nod, inte, n_ord, i_ord, bool(nod < floor), bool(inte < floor))
        )
    return rows


def _fit(rows, errors, flags, window):
    used = [(r, e) for r, e, low in zip(rows, errors, flags) if not low and np.isfinite(e)][-window:]
    if len(used) < window:
        return math.nan, []
    order = least_squares_order([r.tau for r, _ in used], [e for _, e in used])
    return order, [r.level for r, _ in used]


def fitted_orders(rows, window=5):
    """Least-squares orders over the ``window`` finest levels above the error floor.

    Nodal and interior errors are windowed separately. Returns
    ((nodal_order, levels), (interior_order, levels)); an order is nan when
    fewer than ``window`` levels qualify.
    """
    nodal = _fit(rows, [r.nodal_error for r in rows], [r.below_floor for r in rows], window)
    interior = _fit(rows, [r.interior_error for r in rows], [r.interior_below_floor for r in rows], window)
    return nodal, interior
