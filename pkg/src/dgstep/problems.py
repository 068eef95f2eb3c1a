"""Test problems: the double-well scalar ODE, a d-dimensional quartic, and KdV.

KdV u_t + 6 u u_x + u_xxx = 0 on a periodic interval is the gradient system
u_t = d/dx grad E(u) with E[u] = int (u_x^2 / 2 - u^3) dx. It is discretized in
space by continuous periodic P^l Lagrange elements with the L^2 inner product.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core import GradientSystemProblem, OpStructure
from .polybasis import NodalBasis, gauss_legendre
from .specfun import elliptic_K, jacobi_cn


# -- scalar double well ---------------------------------------------------


def scalar_dgrad_closed(u, v):
    """Closed-form discrete gradient of f(u) = (1 - u^2)^2 / 4."""
    return (u**3 + u * u * v + u * v * v + v**3) / 4.0 - (u + v) / 2.0


def scalar_ode_exact(u0, t):
    """Exact solution of u' = u - u^3 for u(0) = u0 > 0."""
    if u0 <= 0:
        raise ValueError("closed form needs u0 > 0")
    t = np.asarray(t, dtype=float)
    decay = np.exp(-2.0 * t)
    # (1 - e^{-2t}) via expm1 keeps precision for small t
    return u0 / np.sqrt(-np.expm1(-2.0 * t) * u0 * u0 + decay)


class ScalarODEProblem(GradientSystemProblem):
    """u' = u - u^3 = -f'(u), f(u) = (1 - u^2)^2 / 4, L = -1."""

    dim = 1
    gram_matrix = np.eye(1)
    op_structure = OpStructure.NEGATIVE_SEMIDEFINITE
    coupling = np.ones((1, 1), dtype=bool)

    def energy(self, u):
        x = u[0]
        return 0.25 * (1.0 - x * x) ** 2

    def grad_weak(self, u):
        return u**3 - u

    def op_weak(self, u_ctx, p):
        return -np.asarray(p, dtype=float)

    def dgrad_weak(self, a, b):
        return scalar_dgrad_closed(np.asarray(a, dtype=float), np.asarray(b, dtype=float))

    def riesz(self, weak):
        return np.asarray(weak, dtype=float)


def _classify(op):
    sym = 0.5 * (op + op.T)
    scale = max(1.0, np.abs(op).max())
    if np.abs(sym).max() <= 1e-14 * scale:
        return OpStructure.SKEW_SYMMETRIC
    if np.linalg.eigvalsh(sym).max() <= 1e-14 * scale:
        return OpStructure.NEGATIVE_SEMIDEFINITE
    return OpStructure.GENERAL


class QuarticProblem(GradientSystemProblem):
    """E[u] = (1 - |u|^2)^2 / 4 on R^d with a constant operator L (default -I).

    For d = 1 and L = -1 this is :class:`ScalarODEProblem`.
    """

    def __init__(self, dim, operator=None):
        self.dim = int(dim)
        self.gram_matrix = np.eye(self.dim)
        self.operator = -np.eye(self.dim) if operator is None else np.asarray(operator, dtype=float)
        if self.operator.shape != (self.dim, self.dim):
            raise ValueError("operator must be d x d")
        self.op_structure = _classify(self.operator)

    def energy(self, u):
        r = 1.0 - float(u @ u)
        return 0.25 * r * r

    def grad_weak(self, u):
        return -(1.0 - float(u @ u)) * u

    def op_weak(self, u_ctx, p):
        return self.operator @ p

    def riesz(self, weak):
        return np.asarray(weak, dtype=float)


# -- KdV ------------------------------------------------------------------


@dataclass(frozen=True)
class KdVAssembly:
    """Periodic P^l finite element matrices on a uniform mesh.

    Global dof j sits at x = j h / l; cell e owns dofs e*l .. e*l + l (mod d).
    """

    domain_length: float
    n_cells: int
    degree: int
    mass: np.ndarray
    skew: np.ndarray
    stiffness: np.ndarray
    cell_dofs: np.ndarray  # (n_cells, l+1)
    quad_nodes: np.ndarray  # reference Gauss nodes in [0, 1]
    quad_weights: np.ndarray  # scaled by h
    shape_values: np.ndarray  # (q, l+1)

    @property
    def h(self):
        return self.domain_length / self.n_cells

    @property
    def ndof(self):
        return self.degree * self.n_cells

    @property
    def nodes(self):
        return np.arange(self.ndof) * (self.h / self.degree)

    def cell_values(self, u):
        """FE function values at the per-cell quadrature points, shape (n_cells, q)."""
        return u[self.cell_dofs] @ self.shape_values.T

    def integrate_cells(self, values):
        return float(np.sum(values @ self.quad_weights))

    def load(self, values):
        """Vector with entries int values * phi_i dx given values at quadrature points."""
        local = (values * self.quad_weights) @ self.shape_values  # (n_cells, l+1)
        return np.bincount(self.cell_dofs.ravel(), weights=local.ravel(), minlength=self.ndof)


def assemble_kdv(n_cells, degree, domain_length):
    if n_cells < 3:
        raise ValueError("need at least 3 cells")
    if degree < 1:
        raise ValueError("element degree must be >= 1")
    if not domain_length > 0:
        raise ValueError("domain length must be positive")
    h = domain_length / n_cells
    ref = NodalBasis(np.linspace(0.0, 1.0, degree + 1))
    nq = math.ceil((3 * degree + 1) / 2) + 1
    rule = gauss_legendre(nq)
    phi = ref.eval(rule.nodes)  # (q, l+1)
    dphi = ref.deriv(rule.nodes)
    w = rule.weights
    mass_e = h * (phi.T * w) @ phi
    stiff_e = (dphi.T * w) @ dphi / h
    # entry (a, b) = int dphi_b phi_a dx; the h factors cancel
    skew_e = (phi.T * w) @ dphi

    d = degree * n_cells
    dofs = (np.arange(n_cells)[:, None] * degree + np.arange(degree + 1)[None, :]) % d
    M = np.zeros((d, d))
    S = np.zeros((d, d))
    D = np.zeros((d, d))
    for e in range(n_cells):
        ix = np.ix_(dofs[e], dofs[e])
        M[ix] += mass_e
        S[ix] += stiff_e
        D[ix] += skew_e
    M = 0.5 * (M + M.T)
    S = 0.5 * (S + S.T)
    D = 0.5 * (D - D.T)
    for mat in (M, S, D):
        mat.setflags(write=False)
    return KdVAssembly(
        domain_length=float(domain_length),
        n_cells=int(n_cells),
        degree=int(degree),
        mass=M,
        skew=D,
        stiffness=S,
        cell_dofs=dofs,
        quad_nodes=rule.nodes,
        quad_weights=h * w,
        shape_values=phi,
    )


class KdVProblem(GradientSystemProblem):
    """Semidiscrete KdV: G = M, L p -> D p, E[u] = u^T S u / 2 - int u_h^3."""

    op_structure = OpStructure.SKEW_SYMMETRIC

    def __init__(self, assembly):
        self.assembly = assembly
        self.dim = assembly.ndof
        self.gram_matrix = assembly.mass
        self.coupling = (assembly.mass != 0) | (assembly.stiffness != 0) | (assembly.skew != 0)

    def energy(self, u):
        A = self.assembly
        return 0.5 * float(u @ (A.stiffness @ u)) - A.integrate_cells(A.cell_values(u) ** 3)

    def grad_weak(self, u):
        A = self.assembly
        return A.stiffness @ u - 3.0 * A.load(A.cell_values(u) ** 2)

    def op_weak(self, u_ctx, p):
        return self.assembly.skew @ p

    def dgrad_weak(self, a, b):
        return kdv_dgrad_weak(self, a, b)

    def mass(self, u):
        """Total mass int u_h dx."""
        return float(np.sum(self.gram_matrix @ u))


def build_kdv_problem(n_cells, degree, domain_length):
    return KdVProblem(assemble_kdv(n_cells, degree, domain_length))


def kdv_dgrad_weak(problem, a, b):
    """Entries ((a_x + b_x)/2, phi_i,x) - ((a^2 + a b + b^2), phi_i).

    The quadratic factor a^2 + ab + b^2 reduces to 3 u^2 at a = b, matching
    the weak gradient, and (a^2 + ab + b^2)(a - b) = a^3 - b^3 gives the
    discrete chain rule pointwise at every quadrature node.
    """
    A = problem.assembly
    va = A.cell_values(a)
    vb = A.cell_values(b)
    return 0.5 * (A.stiffness @ (a + b)) - A.load(va * va + va * vb + vb * vb)


def interpolate_initial(problem, f):
    """Nodal interpolant of f in the FE space."""
    return np.array([float(f(x)) for x in problem.assembly.nodes])


def fe_evaluate(problem, u, points_per_cell):
    """Sample the FE function u_h at equispaced points in each cell.

    Returns (x, values) with the right endpoint of the last cell excluded.
    """
    A = problem.assembly
    s = np.arange(points_per_cell) / points_per_cell
    ref = NodalBasis(np.linspace(0.0, 1.0, A.degree + 1))
    vals = u[A.cell_dofs] @ ref.eval(s).T
    x = (np.arange(A.n_cells)[:, None] + s[None, :]) * A.h
    return x.ravel(), vals.ravel()


@dataclass(frozen=True)
class CnoidalWave:
    """Traveling cnoidal wave alpha + 2 kappa^2 m^2 cn^2(kappa (x - c t) | m^2).

    ``modulus`` is the elliptic modulus m; the Jacobi routines take the
    parameter m^2.
    """

    modulus: float = math.sqrt(0.9)
    kappa: float = 1.0
    alpha: float = 0.0

    @property
    def parameter(self):
        return self.modulus**2

    @property
    def speed(self):
        return 6.0 * self.alpha + 4.0 * (2.0 * self.parameter - 1.0) * self.kappa**2

    @property
    def domain_length(self):
        return 2.0 * elliptic_K(self.parameter) / self.kappa

    @property
    def period(self):
        return self.domain_length / abs(self.speed)

    def __call__(self, x, t=0.0):
        L = self.domain_length
        xi = np.mod(np.asarray(x, dtype=float) - self.speed * t, L)
        cn = jacobi_cn(self.kappa * xi, self.parameter)
        return self.alpha + 2.0 * self.kappa**2 * self.parameter * cn * cn


def cnoidal_exact(x, t, modulus=math.sqrt(0.9), kappa=1.0, alpha=0.0):
    return CnoidalWave(modulus, kappa, alpha)(x, t)
