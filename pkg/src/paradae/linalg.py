"""Dense linear-algebra substrate.

Linear solves with an explicit pivot check, and the differential/algebraic
projector pair of a (possibly singular) mass matrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrixError",
    "StructureError",
    "LUFactor",
    "ProjectorPair",
    "factorize",
    "solve_linear",
    "build_projectors",
    "PIVOT_RTOL",
    "SYMMETRY_RTOL",
    "PROJECTOR_ATOL",
]

# module defaults; every function taking a tolerance accepts an override
PIVOT_RTOL = 1e-14
SYMMETRY_RTOL = 1e-12
PROJECTOR_ATOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Factorization met a pivot below the rank-deficiency threshold."""


class StructureError(ValueError):
    """Mass matrix does not have the assumed index-1 block structure."""


class LUFactor:
    """Immutable LU factorization of a square matrix.

    Safe to share between threads: :meth:`solve` never mutates the factors.
    """

    __slots__ = ("_lu", "_piv", "n")

    def __init__(self, lu, piv):
        self._lu = lu
        self._piv = piv
        self._lu.setflags(write=False)
        self.n = lu.shape[0]

    def solve(self, b):
        return scipy.linalg.lu_solve((self._lu, self._piv), b, check_finite=False)


def factorize(a, pivot_rtol=PIVOT_RTOL):
    """LU-factorize ``a``, raising :class:`SingularMatrixError` on tiny pivots."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False, overwrite_a=False)
    pivots = np.abs(np.diag(lu))
    i = int(np.argmin(pivots))
    if pivots[i] < pivot_rtol * scale:
        raise SingularMatrixError(
            f"pivot {pivots[i]:.3e} at position {i} is below {pivot_rtol:g} * max|a| = {pivot_rtol * scale:.3e}"
        )
    return LUFactor(lu, piv)


def solve_linear(a, b, pivot_rtol=PIVOT_RTOL):
    """Solve ``a @ x = b`` for square ``a``.

    Parameters
    ----------
    a : (n, n) array_like
    b : (n,) array_like
    pivot_rtol : float
        A pivot smaller than ``pivot_rtol * max|a|`` is treated as rank
        deficiency.

    Returns
    -------
    x : (n,) ndarray

    Raises
    ------
    SingularMatrixError
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"rhs length {b.shape[0]} does not match matrix rows {a.shape[0]}")
    return factorize(a, pivot_rtol).solve(b)


def is_symmetric(a, rtol=SYMMETRY_RTOL):
    a = np.asarray(a)
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.all(np.abs(a - a.T) <= rtol * scale))


@dataclass(frozen=True, eq=False)
class ProjectorPair:
    """Projectors onto the differential (``p``) and algebraic (``q``) components.

    ``p = pinv @ mass`` where ``pinv`` is the Moore-Penrose pseudo inverse of
    the mass matrix.  Under the block structure assumed here ``p`` is the 0/1
    selector of ``differential_index_set``, so ``p @ u`` and ``q @ u`` are
    exact and add up to ``u`` bitwise.
    """

    p: np.ndarray
    q: np.ndarray
    pinv: np.ndarray
    differential_index_set: np.ndarray
    algebraic_index_set: np.ndarray

    @property
    def n(self):
        return self.p.shape[0]

    @property
    def differential_mask(self):
        return np.diag(self.p) == 1.0

    @property
    def is_ode(self):
        return self.algebraic_index_set.size == 0

    def differential(self, u):
        out = np.zeros_like(u)
        d = self.differential_index_set
        out[d] = u[d]
        return out

    def algebraic(self, u):
        out = np.zeros_like(u)
        a = self.algebraic_index_set
        out[a] = u[a]
        return out


def build_projectors(m, atol=PROJECTOR_ATOL, pivot_rtol=PIVOT_RTOL):
    """Build ``P = M^+ M`` and ``Q = I - P`` for an index-1 mass matrix.

    ``m`` must vanish outside the rows/columns of its support and be symmetric
    positive definite on the support.  The pseudo inverse is then the inverse
    of that block padded with zeros; a diagonal ``m`` takes a direct path.

    Raises
    ------
    StructureError
        The support block is not symmetric positive definite, or ``m`` has
        entries coupling the support to its complement.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"mass matrix must be square and non-empty, got shape {m.shape}")
    n = m.shape[0]
    scale = np.max(np.abs(m))

    rows = np.any(m != 0.0, axis=1)
    cols = np.any(m != 0.0, axis=0)
    if not np.array_equal(rows, cols):
        raise StructureError("row and column supports of the mass matrix differ")
    diff = np.flatnonzero(rows)
    alg = np.flatnonzero(~rows)

    pinv = np.zeros_like(m)
    if diff.size:
        block = m[np.ix_(diff, diff)]
        if not is_symmetric(block):
            raise StructureError("mass matrix is not symmetric on its support")
        if np.count_nonzero(block - np.diag(np.diag(block))) == 0:
            d = np.diag(block)
            if np.any(d <= pivot_rtol * scale):
                raise StructureError("diagonal mass has non-positive entries on its support")
            pinv[diff, diff] = 1.0 / d
        else:
            try:
                c = scipy.linalg.cho_factor(block, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise StructureError("mass matrix is not positive definite on its support") from exc
            if np.min(np.abs(np.diag(c[0]))) ** 2 < pivot_rtol * scale:
                raise StructureError("mass matrix is singular on its support")
            pinv[np.ix_(diff, diff)] = scipy.linalg.cho_solve(c, np.eye(diff.size), check_finite=False)

    p_computed = pinv @ m
    p = np.zeros((n, n))
    p[diff, diff] = 1.0
    err = np.max(np.abs(p_computed - p))
    if err > atol * max(1.0, np.linalg.cond(m[np.ix_(diff, diff)]) if diff.size else 1.0):
        raise StructureError(f"M^+ M deviates from the support selector by {err:.3e}")
    q = np.eye(n) - p
    for arr in (p, q, pinv):
        arr.setflags(write=False)
    diff.setflags(write=False)
    alg.setflags(write=False)
    return ProjectorPair(p=p, q=q, pinv=pinv, differential_index_set=diff, algebraic_index_set=alg)
