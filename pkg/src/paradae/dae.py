"""Index-1 systems ``M du/dt + K(u) u = f(t)`` with singular mass."""

from dataclasses import dataclass

import numpy as np

from .linalg import build_projectors, factorize

__all__ = [
    "DaeSystem",
    "StateVector",
    "ConsistencyError",
    "split_state",
    "make_consistent",
    "residual",
    "constraint_residual",
    "is_consistent",
    "CONSISTENCY_TOL",
]

CONSISTENCY_TOL = 1e-8
CONSISTENCY_MAX_ITER = 50


class ConsistencyError(RuntimeError):
    """The algebraic constraint could not be solved."""


@dataclass(frozen=True, eq=False)
class StateVector:
    values: np.ndarray
    time: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "time", float(self.time))

    def __len__(self):
        return self.values.shape[0]

    def with_values(self, values):
        return StateVector(values, self.time)


class DaeSystem:
    """Semi-discrete system ``M du/dt + K(u) u = f(t)``.

    Parameters
    ----------
    mass : (n, n) array_like
        Mass matrix, zero on the rows/columns of algebraic unknowns.
    stiffness : callable or (n, n) array_like
        ``u -> K(u)``.  A constant matrix marks the system as linear.
    source : callable
        ``t -> f(t)``.
    t_span : tuple of float
    jacobian : callable, optional
        ``u -> d(K(u) u)/du`` as a matrix.  Linear systems get ``K`` itself;
        nonlinear systems without it fall back to Picard iteration.
    linear : bool, optional
        Defaults to ``True`` when ``stiffness`` is a matrix.
    reference : callable, optional
        ``(t, u0) -> u(t)`` exact solution, when one is known.
    initial : (n,) array_like, optional
        Default initial values at ``t_span[0]``; zeros if omitted.
    name : str

    All callables must be re-entrant.  Pass picklable callables (module-level
    functions or instances) to use the process worker pool.
    """

    def __init__(self, mass, stiffness, source, t_span, jacobian=None,
                 linear=None, reference=None, initial=None, name="dae"):
        self.mass = np.array(mass, dtype=float)
        self.mass.setflags(write=False)
        self.n = self.mass.shape[0]
        if callable(stiffness):
            self._k_const = None
            self._k_fun = stiffness
            self.linear = bool(linear)
        else:
            k = np.array(stiffness, dtype=float)
            if k.shape != (self.n, self.n):
                raise ValueError(f"stiffness shape {k.shape} does not match mass {self.mass.shape}")
            k.setflags(write=False)
            self._k_const = k
            self._k_fun = None
            self.linear = True if linear is None else bool(linear)
        self._source = source
        self._jacobian = jacobian
        self.t_span = (float(t_span[0]), float(t_span[1]))
        if not self.t_span[1] > self.t_span[0]:
            raise ValueError(f"empty time span {self.t_span}")
        self.reference = reference
        self.initial = np.zeros(self.n) if initial is None else np.array(initial, dtype=float)
        self.name = name
        self.projectors = build_projectors(self.mass)

    def __repr__(self):
        kind = "linear" if self.linear else "nonlinear"
        return (f"DaeSystem({self.name!r}, n={self.n}, {kind}, "
                f"differential={self.projectors.differential_index_set.size})")

    def initial_state(self):
        return StateVector(self.initial.copy(), self.t_span[0])

    def stiffness(self, u):
        if self._k_const is not None:
            return self._k_const
        return self._k_fun(u)

    @property
    def has_jacobian(self):
        return self.linear or self._jacobian is not None

    def jacobian(self, u):
        """Matrix of the derivative of ``u -> K(u) u``, or ``None``."""
        if self._jacobian is not None:
            return self._jacobian(u)
        if self.linear:
            return self.stiffness(u)
        return None

    def jacobian_action(self, u, v):
        """Directional derivative of ``u -> K(u) u`` along ``v``."""
        jac = self.jacobian(u)
        if jac is None:
            raise NotImplementedError(f"{self.name} provides no stiffness jacobian")
        return jac @ v

    def source(self, t):
        return np.asarray(self._source(t), dtype=float)

    def _check(self, u):
        if len(u) != self.n:
            raise ValueError(f"state of length {len(u)} does not conform to system of size {self.n}")


def split_state(sys, u):
    """Return ``(P u, Q u)``; the two parts add up to ``u`` exactly."""
    sys._check(u)
    v = u.values if isinstance(u, StateVector) else np.asarray(u, dtype=float)
    return sys.projectors.differential(v), sys.projectors.algebraic(v)


def residual(sys, u, du_dt):
    """``M du/dt + K(u) u - f(t)``."""
    sys._check(u)
    du_dt = np.asarray(du_dt, dtype=float)
    if du_dt.shape != (sys.n,):
        raise ValueError(f"derivative of shape {du_dt.shape} does not conform to system of size {sys.n}")
    v = u.values
    return sys.mass @ du_dt + sys.stiffness(v) @ v - sys.source(u.time)


def constraint_residual(sys, u):
    """2-norm of the algebraic rows ``Q^T (K(u) u - f(t))``."""
    alg = sys.projectors.algebraic_index_set
    if alg.size == 0:
        return 0.0
    v = u.values
    r = sys.stiffness(v)[alg] @ v - sys.source(u.time)[alg]
    return float(np.linalg.norm(r))


def is_consistent(sys, u, tol=CONSISTENCY_TOL):
    f_norm = np.linalg.norm(sys.source(u.time))
    return constraint_residual(sys, u) <= tol * (1.0 + f_norm)


def make_consistent(sys, u, tol=CONSISTENCY_TOL, max_iter=CONSISTENCY_MAX_ITER):
    """Recompute the algebraic components of ``u`` from the constraint.

    The differential components are left untouched.  For nonlinear stiffness
    the constraint rows are solved by Newton's method on the algebraic block
    (Picard iteration if the system has no jacobian), starting from the
    algebraic values already in ``u``.

    Raises
    ------
    ConsistencyError
        Singular algebraic block or no convergence within ``max_iter``.
    """
    sys._check(u)
    alg = sys.projectors.algebraic_index_set
    if alg.size == 0:
        return u
    v = u.values.copy()
    f = sys.source(u.time)
    f_alg = f[alg]
    bound = tol * (1.0 + np.linalg.norm(f))
    diff = sys.projectors.differential_index_set

    try:
        if sys.linear:
            k = sys.stiffness(v)
            rhs = f_alg - k[np.ix_(alg, diff)] @ v[diff]
            v[alg] = factorize(k[np.ix_(alg, alg)]).solve(rhs)
            return u.with_values(v)

        res_norm = np.inf
        for _ in range(max_iter):
            k = sys.stiffness(v)
            r = k[alg] @ v - f_alg
            res_norm = np.linalg.norm(r)
            if res_norm <= bound:
                return u.with_values(v)
            jac = sys.jacobian(v)
            if jac is not None:
                v[alg] -= factorize(jac[np.ix_(alg, alg)]).solve(r)
            else:
                rhs = f_alg - k[np.ix_(alg, diff)] @ v[diff]
                v[alg] = factorize(k[np.ix_(alg, alg)]).solve(rhs)
    except np.linalg.LinAlgError as exc:
        raise ConsistencyError(f"algebraic block is singular at t={u.time}: {exc}") from exc

    k = sys.stiffness(v)
    res_norm = np.linalg.norm(k[alg] @ v - f_alg)
    if res_norm <= bound:
        return u.with_values(v)
    raise ConsistencyError(
        f"constraint solve did not converge in {max_iter} iterations at t={u.time} "
        f"(residual {res_norm:.3e} > {bound:.3e})"
    )
