"""Discontinuous Galerkin time stepping for gradient systems.

On each slab J_n the pair (u, p) is a polynomial of degree k in time, stored by
its values at the Gauss-Lobatto nodes of [0, 1]. With tau = |J_n|, the slab
equations are

    R1[j] = int <u', e_i> l_j ds + <u(0) - u_prev, e_i> l_j(0)
            - tau int <L(u) p, e_i> l_j ds                      j = 0..k
    R2[j] = int (<p, e_i> - <grad E(u), e_i>) psi_j ds          j = 0..k-1
    R3    = <p(0), e_i> - <dgrad E(u(0), u_prev), e_i>

where l_j are the Lobatto cardinals, psi_j the degree k-1 cardinals at the k
Gauss points, and all integrals use one Gauss rule. Testing R1 with p and R2
with u' gives E[u^n] - E[u^{n-1}] = tau Q(<L(u) p, p>) whenever the rule
integrates d/ds E(u(s)) exactly.

Unknowns are laid out as x = [U_0 .. U_k, P_0 .. P_k], each block of length d.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.linalg

from .core import weak_dgrad
from .polybasis import NodalBasis, gauss_legendre, lobatto_nodes

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Nonlinear slab solve failed. ``interval`` is set by :func:`integrate`."""

    interval = None


class NewtonConvergenceError(SolverError):
    def __init__(self, residual_norm, iterations):
        super().__init__(f"Newton did not converge in {iterations} iterations (|R| = {residual_norm:.3e})")
        self.residual_norm = residual_norm
        self.iterations = iterations


class SingularJacobianError(SolverError):
    pass


@dataclass(frozen=True)
class NewtonOptions:
    abs_tol: float = 1e-12
    max_iters: int = 50
    jacobian_mode: str = "finite_difference"  # or "reuse_per_interval"
    fd_step: float = 1e-7
    # optional: also require |R| <= rel_tol * |x|, for relative accuracy on tiny states
    rel_tol: float = None

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol is not None and not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.jacobian_mode not in ("finite_difference", "reuse_per_interval"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")


@dataclass(frozen=True)
class TimeMesh:
    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a time mesh needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("time mesh must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time mesh must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T, N):
        if N < 1 or not T > 0:
            raise ValueError("need T > 0 and N >= 1")
        return cls(np.linspace(0.0, T, int(N) + 1))

    @property
    def steps(self):
        return np.diff(self.nodes)

    @property
    def N(self):
        return len(self.nodes) - 1

    @property
    def T(self):
        return float(self.nodes[-1])


@dataclass(frozen=True)
class IntervalSolution:
    u_coeffs: np.ndarray  # (k+1, d)
    p_coeffs: np.ndarray  # (k+1, d)
    newton_iters: int
    residual_norm: float


@dataclass(frozen=True)
class Trajectory:
    mesh: TimeMesh
    k: int
    u0: np.ndarray
    intervals: list = field(default_factory=list)
    quad_points: int = 0

    @property
    def basis(self):
        return lobatto_nodes(self.k)

    @property
    def nodal_values(self):
        """Array (N+1, d) of u^0 .. u^N."""
        return np.vstack([self.u0] + [iv.u_coeffs[-1] for iv in self.intervals])

    @property
    def newton_iters(self):
        return [iv.newton_iters for iv in self.intervals]


def _test_basis(k):
    if k == 0:
        return None
    return NodalBasis(gauss_legendre(k).nodes)


class SlabSystem:
    """Residual of one time slab, with precomputed basis tables."""

    def __init__(self, problem, k, quad_points=None, dgrad="native"):
        if k < 0:
            raise ValueError("degree k must be nonnegative")
        self.problem = problem
        self.k = k
        self.d = problem.dim
        self.basis = lobatto_nodes(k)
        self.quad = gauss_legendre(quad_points or 2 * k + 1)
        self.dgrad, self.dgrad_local = weak_dgrad(problem, dgrad)
        self.B = self.basis.eval(self.quad.nodes)  # (q, k+1)
        self.Bd = self.basis.deriv(self.quad.nodes)
        self.B0 = self.basis.eval(0.0)  # (k+1,)
        test = _test_basis(k)
        self.Psi = test.eval(self.quad.nodes) if test is not None else np.zeros((len(self.quad), 0))
        self.n_unknowns = 2 * (k + 1) * self.d

    def split(self, x):
        x = x.reshape(2, self.k + 1, self.d)
        return x[0], x[1]

    def residual(self, x, u_prev, tau):
        U, P = self.split(x)
        prob = self.problem
        G = prob.gram_matrix
        w = self.quad.weights
        uq = self.B @ U  # (q, d)
        pq = self.B @ P
        duq = self.Bd @ U
        lq = np.array([prob.op_weak(uq[a], pq[a]) for a in range(len(w))])
        gq = np.array([prob.grad_weak(uq[a]) for a in range(len(w))])
        # rows: quadrature points; columns: coordinates
        first = (duq @ G.T) - tau * lq
        R1 = (self.B * w[:, None]).T @ first
        u_left = self.B0 @ U
        R1 += np.outer(self.B0, G @ (u_left - u_prev))
        R2 = (self.Psi * w[:, None]).T @ (pq @ G.T - gq)
        R3 = G @ (self.B0 @ P) - self.dgrad(u_left, u_prev)
        return np.concatenate([R1.ravel(), R2.ravel(), R3])

    def initial_guess(self, u_prev):
        p0 = self.problem.riesz(self.problem.grad_weak(u_prev))
        U = np.tile(u_prev, (self.k + 1, 1))
        P = np.tile(p0, (self.k + 1, 1))
        return np.concatenate([U.ravel(), P.ravel()])

    def column_groups(self):
        """Groups of unknowns whose Jacobian columns share no nonzero row."""
        coupling = self.problem.coupling
        if coupling is None or not self.dgrad_local:
            return [np.array([c]) for c in range(self.n_unknowns)]
        conflict = (coupling.astype(int).T @ coupling.astype(int)) > 0
        colors = -np.ones(self.d, dtype=int)
        for i in range(self.d):
            used = set(colors[conflict[i]][colors[conflict[i]] >= 0])
            c = 0
            while c in used:
                c += 1
            colors[i] = c
        groups = []
        for block in range(2 * (self.k + 1)):
            for c in range(colors.max() + 1):
                groups.append(block * self.d + np.flatnonzero(colors == c))
        return groups


def newton_solve(residual_fn, x0, opts=None, jacobian_groups=None, sparsity=None):
    """Solve residual_fn(x) = 0 by Newton's method with a finite-difference Jacobian.

    Returns (x, iterations, residual_norm). Jacobian columns are grouped when
    ``jacobian_groups`` and the boolean ``sparsity`` pattern are given.
    """
    opts = opts or NewtonOptions()
    x = np.array(x0, dtype=float)
    f = np.asarray(residual_fn(x), dtype=float)
    norm = np.max(np.abs(f)) if len(f) else 0.0
    lu = None
    for it in range(opts.max_iters + 1):
        if not np.isfinite(norm):
            raise NewtonConvergenceError(norm, it)
        if _converged(norm, x, opts):
            return x, it, norm
        if it == opts.max_iters:
            break
        if lu is None or opts.jacobian_mode == "finite_difference":
            J = _jacobian(residual_fn, x, f, opts.fd_step, jacobian_groups, sparsity)
            lu = _factor(J)
        x = x - scipy.linalg.lu_solve(lu, f)
        f = np.asarray(residual_fn(x), dtype=float)
        norm = np.max(np.abs(f))
    raise NewtonConvergenceError(norm, opts.max_iters)


def _converged(norm, x, opts):
    if norm > opts.abs_tol:
        return False
    return opts.rel_tol is None or norm <= opts.rel_tol * np.max(np.abs(x), initial=0.0)


def _fd_steps(x, step):
    """Power-of-two steps, adjusted so that x + h - x == h exactly."""
    h = np.exp2(np.round(np.log2(step * (1.0 + np.abs(x)))))
    return (x + h) - x


def _jacobian(fun, x, f0, step, groups, sparsity):
    n = len(x)
    hs = _fd_steps(x, step)
    if groups is None or sparsity is None:
        J = np.empty((len(f0), n))
        for c in range(n):
            xp = x.copy()
            xp[c] += hs[c]
            J[:, c] = (fun(xp) - f0) / hs[c]
        return J
    J = np.zeros((len(f0), n))
    for cols in groups:
        h = hs[cols]
        xp = x.copy()
        xp[cols] += h
        df = fun(xp) - f0
        # each row of df is touched by at most one column of the group
        J[:, cols] = np.where(sparsity[:, cols], df[:, None] / h[None, :], 0.0)
    return J


def _factor(J):
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularJacobianError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(J, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = max(np.abs(J).max(), 1e-300)
    if pivots.min() < 1e-14 * scale:
        raise SingularJacobianError(f"Jacobian is singular (min pivot {pivots.min():.3e}, scale {scale:.3e})")
    return lu, piv


def _slab_sparsity(system):
    coupling = system.problem.coupling
    if coupling is None or not system.dgrad_local:
        return None
    blocks = 2 * (system.k + 1)
    return np.kron(np.ones((blocks, blocks), dtype=bool), coupling)


class Stepper:
    """Reusable slab solver for one problem, degree and discrete gradient."""

    def __init__(self, problem, k, dgrad="native", quad_points=None, opts=None):
        self.system = SlabSystem(problem, k, quad_points, dgrad)
        self.opts = opts or NewtonOptions()
        self.sparsity = _slab_sparsity(self.system)
        self.groups = self.system.column_groups() if self.sparsity is not None else None

    def step(self, u_prev, tau):
        sys_ = self.system
        u_prev = sys_.problem.check_state(u_prev)
        x, iters, norm = newton_solve(
            lambda x: sys_.residual(x, u_prev, tau),
            sys_.initial_guess(u_prev),
            self.opts,
            self.groups,
            self.sparsity,
        )
        U, P = sys_.split(x)
        return IntervalSolution(U.copy(), P.copy(), iters, float(norm))


def assemble_residual(problem, dgrad_choice, u_prev, coeffs, tau, k, quad_points=None):
    """Stacked slab residual [R1, R2, R3] for coefficients (U, P)."""
    system = SlabSystem(problem, k, quad_points, dgrad_choice)
    U, P = coeffs
    x = np.concatenate([np.asarray(U, dtype=float).ravel(), np.asarray(P, dtype=float).ravel()])
    return system.residual(x, np.asarray(u_prev, dtype=float), tau)


def step_interval(problem, dgrad_choice, u_prev, tau, k, opts=None, quad_points=None):
    return Stepper(problem, k, dgrad_choice, quad_points, opts).step(u_prev, tau)


def integrate(problem, dgrad_choice, u0, mesh, k, opts=None, quad_points=None):
    """Apply the slab solver on every interval of ``mesh`` starting from u0."""
    stepper = Stepper(problem, k, dgrad_choice, quad_points, opts)
    u0 = problem.check_state(u0)
    u = u0
    intervals = []
    for n, tau in enumerate(mesh.steps, start=1):
        try:
            sol = stepper.step(u, tau)
        except SolverError as exc:
            exc.interval = n
            raise
        log.debug("interval %d: %d Newton iterations, |R| = %.2e", n, sol.newton_iters, sol.residual_norm)
        intervals.append(sol)
        u = sol.u_coeffs[-1]
    return Trajectory(mesh, k, u0, intervals, len(stepper.system.quad))


def _locate(traj, t):
    t_nodes = traj.mesh.nodes
    if t < 0 or t > t_nodes[-1]:
        raise ValueError(f"t={t} outside [0, {t_nodes[-1]}]")
    n = int(np.searchsorted(t_nodes, t, side="left"))  # t in (t_{n-1}, t_n]
    return max(n, 1)


def evaluate(traj, t):
    """Values (u, p) of the DG solution at time t; intervals are closed on the right."""
    if t == 0.0:
        iv = traj.intervals[0]
        return traj.u0.copy(), traj.basis.eval(0.0) @ iv.p_coeffs
    n = _locate(traj, t)
    t0, t1 = traj.mesh.nodes[n - 1], traj.mesh.nodes[n]
    s = (t - t0) / (t1 - t0)
    iv = traj.intervals[n - 1]
    vals = traj.basis.eval(s)
    return vals @ iv.u_coeffs, vals @ iv.p_coeffs


def sample_interval(traj, n, s):
    """u values at reference points s of interval n, shape (len(s), d)."""
    return traj.basis.eval(np.asarray(s, dtype=float)) @ traj.intervals[n - 1].u_coeffs


def energy_identity_residual(problem, traj, n):
    """|E[u^n] - E[u^{n-1}] - tau_n Q(<L(u) p, p>)| on interval n."""
    if not 1 <= n <= traj.mesh.N:
        raise ValueError(f"interval index {n} outside 1..{traj.mesh.N}")
    iv = traj.intervals[n - 1]
    u_prev = traj.u0 if n == 1 else traj.intervals[n - 2].u_coeffs[-1]
    tau = traj.mesh.steps[n - 1]
    quad = gauss_legendre(traj.quad_points or 2 * traj.k + 1)
    B = traj.basis.eval(quad.nodes)
    uq = B @ iv.u_coeffs
    pq = B @ iv.p_coeffs
    flux = sum(w * float(pq[a] @ problem.op_weak(uq[a], pq[a])) for a, w in enumerate(quad.weights))
    return abs(problem.energy(iv.u_coeffs[-1]) - problem.energy(u_prev) - tau * flux)
