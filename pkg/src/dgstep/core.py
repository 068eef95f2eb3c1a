"""Gradient systems u' = L(u) grad E(u) and discrete gradients.

A problem lives on a real coordinate space R^d carrying an inner product
<a, b> = a^T G b (G is the Gram matrix). Gradients and operators are exchanged
in *weak* form: the i-th entry of ``grad_weak(u)`` is <grad E(u), e_i>, which
equals the partial derivative dE/du_i. The same stepper then serves plain ODEs
(G = I) and Galerkin discretizations (G = mass matrix).
"""

from abc import ABC, abstractmethod
from enum import Enum

import numpy as np
import scipy.linalg

from .polybasis import gauss_legendre

GONZALEZ_DEGENERACY = 1e-14
ITOH_ABE_COORD_TOL = 1e-10
ITOH_ABE_FD_STEP = 1e-7
AVF_DEFAULT_POINTS = 3
# a secant correction smaller than this many ulps of the energies is rounding noise
DEFECT_ULPS = 64
# Itoh-Abe only tries the midpoint partial for increments below this (relative) size
ITOH_ABE_MIDPOINT_RANGE = 1e-4


class OpStructure(str, Enum):
    SKEW_SYMMETRIC = "skew_symmetric"
    NEGATIVE_SEMIDEFINITE = "negative_semidefinite"
    GENERAL = "general"


def _as_state(u, dim=None):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError(f"state must be a 1d coordinate array, got shape {u.shape}")
    if dim is not None and len(u) != dim:
        raise ValueError(f"state has length {len(u)}, expected {dim}")
    if not np.all(np.isfinite(u)):
        raise ValueError("state has non-finite entries")
    return u


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite {what}")
    return value


class GradientSystemProblem(ABC):
    """Interface for a finite-dimensional real gradient system.

    Subclasses set ``dim``, ``gram_matrix`` and ``op_structure`` and implement
    :meth:`energy`, :meth:`grad_weak` and :meth:`op_weak`. :meth:`dgrad_weak`
    is the problem's own discrete gradient; the default is the averaged vector
    field.

    ``coupling`` optionally gives a d x d boolean pattern of which coordinates
    interact through G, grad_weak, op_weak and dgrad_weak. The stepper uses it
    to color finite-difference Jacobians. None means dense.
    """

    dim: int
    gram_matrix: np.ndarray
    op_structure: OpStructure = OpStructure.GENERAL
    coupling = None

    def gram(self, a, b):
        return float(a @ (self.gram_matrix @ b))

    @abstractmethod
    def energy(self, u):
        ...

    @abstractmethod
    def grad_weak(self, u):
        ...

    @abstractmethod
    def op_weak(self, u_ctx, p):
        """Entries <L(u_ctx) p, e_i>."""

    def dgrad_weak(self, a, b):
        return avf_dgrad(self.grad_weak, a, b)

    def riesz(self, weak):
        """Coordinates of the vector whose pairings with e_i are ``weak``."""
        if not hasattr(self, "_gram_cho"):
            self._gram_cho = scipy.linalg.cho_factor(self.gram_matrix)
        return scipy.linalg.cho_solve(self._gram_cho, weak)

    def check_state(self, u):
        return _as_state(u, self.dim)


def gonzalez_dgrad(energy, grad, gram, u, v):
    """Gonzalez's midpoint discrete gradient.

    ``grad`` returns the gradient vector (Riesz representative), ``gram`` is the
    inner product. Falls back to grad(u) when u and v coincide to round-off.

    For close but distinct points the correction term is a difference of nearly
    equal energies divided by |v - u|^2. When that energy defect is at rounding
    level the correction is dropped: the identity then holds to rounding with
    the plain midpoint gradient, which is smooth in (u, v) where the quotient
    would be noise.
    """
    u = _as_state(u)
    v = _as_state(v, len(u))
    diff = v - u
    norm2 = gram(diff, diff)
    scale = 1.0 + np.sqrt(gram(u, u)) + np.sqrt(gram(v, v))
    if np.sqrt(norm2) <= GONZALEZ_DEGENERACY * scale:
        return _check_finite(np.asarray(grad(u), dtype=float), "gradient")
    g_mid = _check_finite(np.asarray(grad(0.5 * (u + v)), dtype=float), "gradient")
    e_u = _check_finite(energy(u), "energy")
    e_v = _check_finite(energy(v), "energy")
    slope = gram(g_mid, diff)
    defect = e_v - e_u - slope
    if _is_rounding(defect, e_u, e_v, slope):
        return g_mid
    return g_mid + (defect / norm2) * diff


def _is_rounding(defect, *terms):
    return abs(defect) <= DEFECT_ULPS * np.finfo(float).eps * sum(abs(t) for t in terms)


def avf_dgrad(grad, u, v, q_s=AVF_DEFAULT_POINTS):
    """Averaged vector field: integral of grad((1-s) u + s v) over s in [0, 1].

    Uses q_s Gauss points, so it is exact when the gradient is a polynomial of
    degree <= 2 q_s - 1 along the segment. Linear in ``grad``, so it works for
    both strong and weak gradients.
    """
    if int(q_s) != q_s or q_s < 1:
        raise ValueError(f"q_s must be a positive integer, got {q_s}")
    u = _as_state(u)
    v = _as_state(v, len(u))
    rule = gauss_legendre(q_s)
    acc = np.zeros_like(u)
    for s, w in zip(rule.nodes, rule.weights):
        acc += w * np.asarray(grad((1.0 - s) * u + s * v), dtype=float)
    return _check_finite(acc, "gradient")


def itoh_abe_dgrad(energy, u, v, coord_tol=ITOH_ABE_COORD_TOL, grad=None):
    """Itoh-Abe coordinate-increment discrete gradient.

    Entry j is the difference quotient of E along coordinate j between the mixed
    points (v_1..v_{j-1}, u_j, ..., u_N) and (v_1..v_j, u_{j+1}, ..., u_N). When
    |u_j - v_j| <= coord_tol a centered difference replaces the quotient.

    If ``grad`` (coordinate partials) is given, it replaces the centered
    difference, and small increments whose energy defect against the midpoint
    partial is at rounding level use that partial instead of the noisy quotient.

    The entries are coordinate partials, i.e. the result is already in weak form.
    """
    if coord_tol <= 0:
        raise ValueError("coord_tol must be positive")
    u = _as_state(u)
    v = _as_state(v, len(u))
    out = np.empty_like(u)
    point = u.copy()
    e_hi = _check_finite(energy(point), "energy")
    for j in range(len(u)):
        delta = u[j] - v[j]
        if abs(delta) <= coord_tol:
            if grad is not None:
                out[j] = _check_finite(np.asarray(grad(point), dtype=float), "gradient")[j]
            else:
                step = max(ITOH_ABE_FD_STEP, ITOH_ABE_FD_STEP * abs(u[j]))
                left, right = point.copy(), point.copy()
                left[j] -= step
                right[j] += step
                e_r = _check_finite(energy(right), "energy")
                e_l = _check_finite(energy(left), "energy")
                out[j] = (e_r - e_l) / (2.0 * step)
            point[j] = v[j]
            e_hi = _check_finite(energy(point), "energy")
            continue
        mid = point.copy()
        mid[j] = 0.5 * (u[j] + v[j])
        point[j] = v[j]
        e_lo = _check_finite(energy(point), "energy")
        out[j] = (e_hi - e_lo) / delta
        if grad is not None and abs(delta) <= ITOH_ABE_MIDPOINT_RANGE * (1.0 + abs(u[j]) + abs(v[j])):
            partial = _check_finite(np.asarray(grad(mid), dtype=float), "gradient")[j]
            slope = partial * delta
            if _is_rounding(e_hi - e_lo - slope, e_hi, e_lo, slope):
                out[j] = partial
        e_hi = e_lo
    return out


DGRAD_CHOICES = ("native", "gonzalez", "avf", "itoh-abe")


def weak_dgrad(problem, choice="native", q_s=AVF_DEFAULT_POINTS):
    """Return (fn, local) with fn(a, b) the weak pairing vector <dgrad E(a, b), e_i>.

    ``local`` tells whether the discrete gradient respects ``problem.coupling``
    (Gonzalez and Itoh-Abe couple all coordinates).
    """
    if callable(choice):
        return choice, False
    if choice == "native":
        return problem.dgrad_weak, True
    if choice == "avf":
        return (lambda a, b: avf_dgrad(problem.grad_weak, a, b, q_s)), True
    if choice == "itoh-abe":
        return (lambda a, b: itoh_abe_dgrad(problem.energy, a, b, grad=problem.grad_weak)), False
    if choice == "gonzalez":
        G = problem.gram_matrix

        def fn(a, b):
            strong = gonzalez_dgrad(
                problem.energy,
                lambda w: problem.riesz(problem.grad_weak(w)),
                problem.gram,
                a,
                b,
            )
            return G @ strong

        return fn, False
    raise ValueError(f"unknown discrete gradient {choice!r}; expected one of {DGRAD_CHOICES}")


def dgrad_identity_residual(problem, a, b, dgrad="native"):
    """|E[a] - E[b] - <dgrad E(a, b), a - b>| using the weak pairings."""
    a = problem.check_state(a)
    b = problem.check_state(b)
    fn, _ = weak_dgrad(problem, dgrad)
    return abs(problem.energy(a) - problem.energy(b) - float(fn(a, b) @ (a - b)))
