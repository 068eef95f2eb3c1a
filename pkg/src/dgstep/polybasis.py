"""Quadrature rules and nodal Lagrange bases on the reference interval [0, 1].

A time slab J_n = (t_{n-1}, t_n] is mapped to [0, 1] by t = t_{n-1} + tau_n * s,
so d/dt = (1 / tau_n) d/ds.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values):
        """Apply the rule along the first axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def gauss_legendre(q):
    """q-point Gauss-Legendre rule on [0, 1], exact up to degree 2q - 1."""
    if int(q) != q or q < 1:
        raise ValueError(f"need at least one quadrature point, got q={q}")
    x, w = legendre.leggauss(int(q))
    return QuadratureRule(nodes=0.5 * (x + 1.0), weights=0.5 * w)


class NodalBasis:
    """Lagrange cardinal functions for a set of distinct nodes in [0, 1].

    Parameters
    ----------
    nodes : array_like
        k + 1 distinct points in [0, 1].
    """

    def __init__(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) == 0:
            raise ValueError("nodes must be a non-empty 1d array")
        if np.any(nodes < 0.0) or np.any(nodes > 1.0):
            raise ValueError("nodes must lie in [0, 1]")
        if len(np.unique(nodes)) != len(nodes):
            raise ValueError("nodes must be distinct")
        self.nodes = nodes
        self.nodes.setflags(write=False)
        diff = nodes[:, None] - nodes[None, :]
        np.fill_diagonal(diff, 1.0)
        # ell_j(t) = prod_{m != j} (t - x_m) / (x_j - x_m)
        self._denom = np.prod(diff, axis=1)

    @property
    def degree(self):
        return len(self.nodes) - 1

    def __repr__(self):
        return f"NodalBasis(nodes={self.nodes.tolist()})"

    def eval(self, t):
        """Cardinal function values; shape (k+1,) for scalar t, else (len(t), k+1)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        n = len(self.nodes)
        out = np.empty((len(t), n))
        for j in range(n):
            others = np.delete(self.nodes, j)
            out[:, j] = np.prod(t[:, None] - others[None, :], axis=1) / self._denom[j]
        return out[0] if scalar else out

    def deriv(self, t):
        """Derivatives of the cardinal functions, same shapes as :meth:`eval`."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        n = len(self.nodes)
        out = np.zeros((len(t), n))
        for j in range(n):
            others = np.delete(self.nodes, j)
            # product rule: drop one factor at a time
            for m in range(len(others)):
                rest = np.delete(others, m)
                out[:, j] += np.prod(t[:, None] - rest[None, :], axis=1)
            out[:, j] /= self._denom[j]
        return out[0] if scalar else out


def lobatto_nodes(k):
    """Nodal basis of degree k at Gauss-Lobatto points mapped to [0, 1].

    For k = 0 the single node is the right endpoint 1, so the coefficient is the
    value at t_n.
    """
    if int(k) != k or k < 0:
        raise ValueError(f"degree must be nonnegative, got k={k}")
    k = int(k)
    if k == 0:
        return NodalBasis([1.0])
    if k == 1:
        return NodalBasis([0.0, 1.0])
    interior = legendre.Legendre.basis(k).deriv().roots()
    x = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    x = 0.5 * (x + 1.0)
    x = 0.5 * (x + (1.0 - x[::-1]))  # enforce symmetry about 1/2
    x[0], x[-1] = 0.0, 1.0
    return NodalBasis(x)


def basis_eval(basis, t):
    return basis.eval(t)


def basis_deriv(basis, t):
    return basis.deriv(t)
