"""Complete elliptic integral K and Jacobi elliptic functions via the AGM.

All functions take the *parameter* m (the square of the modulus), with
0 <= m < 1.
"""

import math

import numpy as np

AGM_MAX_ITERS = 40


def _check_parameter(m):
    if not (0.0 <= m < 1.0):
        raise ValueError(f"elliptic parameter must satisfy 0 <= m < 1, got {m}")


def _agm_sequence(m, tol=1e-15):
    """Descending AGM sequence (a_n, c_n) started from (1, sqrt(1 - m), sqrt(m))."""
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    a_seq, c_seq = [a], [c]
    for _ in range(AGM_MAX_ITERS):
        if abs(c) <= tol * a:
            return np.array(a_seq), np.array(c_seq)
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        a_seq.append(a)
        c_seq.append(c)
    raise RuntimeError(f"AGM did not converge for m={m}")


def elliptic_K(m):
    """Complete elliptic integral of the first kind, K(m) = pi / (2 AGM(1, sqrt(1-m)))."""
    _check_parameter(m)
    a_seq, _ = _agm_sequence(m)
    return math.pi / (2.0 * a_seq[-1])


def jacobi_sncndn(x, m):
    """Return (sn, cn, dn) at x for parameter m, via Landen's descending recursion.

    ``x`` may be a scalar or an array.
    """
    _check_parameter(m)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    a_seq, c_seq = _agm_sequence(m)
    n = len(a_seq) - 1
    phi = (2.0**n) * a_seq[n] * x
    for j in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c_seq[j] / a_seq[j] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # dn > 0 for real x and m < 1
    dn = np.sqrt(1.0 - m * sn * sn)
    return sn, cn, dn


def jacobi_cn(x, m):
    """Jacobi elliptic function cn(x | m)."""
    return jacobi_sncndn(x, m)[1]
