"""Implicit Euler propagators with an inner Newton loop."""

import math
import threading
from dataclasses import dataclass

import numpy as np

from .dae import StateVector
from .linalg import factorize

__all__ = [
    "PropagatorConfig",
    "Propagator",
    "NewtonError",
    "PropagationError",
    "euler_step",
    "step_count",
    "propagate_through",
]

STEP_ROUNDING = 1e-9


class NewtonError(RuntimeError):
    def __init__(self, message, residual=math.nan):
        super().__init__(message)
        self.residual = residual


class PropagationError(RuntimeError):
    def __init__(self, message, step=-1):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    label: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError(f"newton_max_iter must be at least 1, got {self.newton_max_iter}")


def step_count(span, dt):
    """Number of uniform steps of size at most ``dt`` covering ``span``."""
    return max(1, math.ceil(span / dt - STEP_ROUNDING))


def _solve_step(sys, u_prev, t_next, dt, cfg, factor=None):
    """Return the values of one implicit Euler step from ``u_prev``."""
    m_dt = sys.mass / dt
    rhs = sys.source(t_next) + m_dt @ u_prev
    if sys.linear:
        if factor is None:
            factor = factorize(m_dt + sys.stiffness(u_prev))
        return factor.solve(rhs)

    bound = cfg.newton_tol * (1.0 + np.linalg.norm(rhs))
    u = u_prev.copy()
    res = math.inf
    for _ in range(cfg.newton_max_iter):
        k = sys.stiffness(u)
        r = m_dt @ u + k @ u - rhs
        res = np.linalg.norm(r)
        if res <= bound:
            return u
        jac = sys.jacobian(u)
        if jac is None:
            # frozen-stiffness Picard iteration
            u = factorize(m_dt + k).solve(rhs)
        else:
            u = u - factorize(m_dt + jac).solve(r)
    res = np.linalg.norm(m_dt @ u + sys.stiffness(u) @ u - rhs)
    if res <= bound:
        return u
    raise NewtonError(
        f"Newton did not converge in {cfg.newton_max_iter} iterations at t={t_next:.6g} "
        f"(residual {res:.3e} > {bound:.3e})",
        residual=res,
    )


def euler_step(sys, u_i, dt, cfg):
    """One implicit Euler step ``(M/dt + K(u1)) u1 = f(t1) + (M/dt) u0``.

    Parameters
    ----------
    sys : DaeSystem
    u_i : StateVector
    dt : float
    cfg : PropagatorConfig
        Newton tolerance and iteration limit.

    Returns
    -------
    StateVector
        State at ``u_i.time + dt``.  Algebraic components of ``u_i`` only
        serve as the Newton starting guess; they do not enter the result.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    sys._check(u_i)
    t_next = u_i.time + dt
    return StateVector(_solve_step(sys, u_i.values, t_next, dt, cfg), t_next)


class Propagator:
    """Solution operator ``(t_target, t_start, u_start) -> u(t_target)``.

    Linear systems reuse one LU factorization per distinct step size.  The
    cache only ever gains immutable entries, so concurrent calls are safe.
    """

    def __init__(self, sys, config):
        self.sys = sys
        self.config = config
        self._factors = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"Propagator({self.config.label or 'implicit Euler'}, dt={self.config.dt:g})"

    def __getstate__(self):
        return {"sys": self.sys, "config": self.config}

    def __setstate__(self, state):
        self.__init__(state["sys"], state["config"])

    def _factor(self, dt):
        if not self.sys.linear:
            return None
        factor = self._factors.get(dt)
        if factor is None:
            with self._lock:
                factor = self._factors.get(dt)
                if factor is None:
                    factor = factorize(self.sys.mass / dt + self.sys.stiffness(np.zeros(self.sys.n)))
                    self._factors[dt] = factor
        return factor

    def steps(self, t_target, t_start):
        return step_count(t_target - t_start, self.config.dt)

    def propagate(self, t_target, t_start, u_start, callback=None):
        """Advance ``u_start`` from ``t_start`` to ``t_target``.

        The interval is split into ``ceil(span/dt - 1e-9)`` equal steps so the
        last step lands exactly on ``t_target``.  ``callback(i, state)`` is
        called after every step, if given.
        """
        if not t_target > t_start:
            raise ValueError(f"t_target={t_target} must exceed t_start={t_start}")
        if abs(u_start.time - t_start) > 1e-12 * max(1.0, abs(t_start)):
            raise ValueError(f"state time {u_start.time} differs from t_start {t_start}")
        sys = self.sys
        sys._check(u_start)
        n_steps = self.steps(t_target, t_start)
        h = (t_target - t_start) / n_steps
        factor = self._factor(h)
        u = u_start.values
        for i in range(1, n_steps + 1):
            t = t_target if i == n_steps else t_start + i * h
            try:
                u = _solve_step(sys, u, t, h, self.config, factor)
            except (NewtonError, np.linalg.LinAlgError) as exc:
                raise PropagationError(f"step {i} of {n_steps} failed: {exc}", step=i) from exc
            if callback is not None:
                callback(i, StateVector(u, t))
        return StateVector(u, t_target)

    __call__ = propagate


def propagate_through(propagator, times, u0):
    """Sequential stepping from ``u0`` (at ``times[0]``) through every entry of ``times``.

    Returns the list of states at ``times``, ``u0`` included.
    """
    states = [u0]
    for t_prev, t_next in zip(times[:-1], times[1:]):
        states.append(propagator.propagate(t_next, t_prev, states[-1]))
    return states
