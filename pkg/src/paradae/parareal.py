"""Parareal for index-1 DAEs.

The driver runs the classic coarse/fine iteration: a sequential coarse sweep
that propagates corrections, followed by independent fine solves on every
window.  Iteration ``k`` leaves the boundary values exact (up to round-off)
on the first ``k`` windows.

Iteration counting
------------------
Boundary values start from zero-initialized coarse/fine caches, so the very
first update is a pure coarse sweep (iteration 0).  Iteration ``k >= 1`` is a
parallel fine sweep on the current boundary values followed by the next
coarse sweep with the correction
``U_j <- fine_prev_j + (coarse_new_j - coarse_prev_j)``.  The stopping test
compares the boundary values of consecutive iterations and is skipped for
the first two iterations.
"""

import enum
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .dae import StateVector, is_consistent, make_consistent
from .stepper import Propagator, PropagatorConfig

__all__ = [
    "NormMode",
    "UpdateMode",
    "WindowGrid",
    "PararealConfig",
    "PararealState",
    "RunReport",
    "PararealError",
    "run",
    "update_window",
    "increment_norm",
    "relative_error",
    "matching_residual",
    "modeled_speedup",
    "NORM_FLOOR",
]

NORM_FLOOR = np.finfo(float).eps


class NormMode(str, enum.Enum):
    DIFFERENTIAL = "differential"
    FULL = "full"


class UpdateMode(str, enum.Enum):
    PROJECTED = "projected_consistent"
    PLAIN = "plain"


class PararealError(RuntimeError):
    def __init__(self, message, window=-1, iteration=-1):
        super().__init__(message)
        self.window = window
        self.iteration = iteration


@dataclass(frozen=True, eq=False)
class WindowGrid:
    boundaries: np.ndarray

    def __post_init__(self):
        b = np.array(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("window boundaries must be a strictly increasing sequence of length >= 2")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def uniform(cls, t0, t_end, n_windows):
        if n_windows < 1:
            raise ValueError(f"need at least one window, got {n_windows}")
        b = np.linspace(t0, t_end, n_windows + 1)
        b[0], b[-1] = t0, t_end
        return cls(b)

    @property
    def n_windows(self):
        return self.boundaries.size - 1

    def check(self, sys):
        t0, t1 = sys.t_span
        if self.boundaries[0] != t0 or self.boundaries[-1] != t1:
            raise ValueError(
                f"window grid [{self.boundaries[0]}, {self.boundaries[-1]}] does not match system span {sys.t_span}"
            )


@dataclass(frozen=True)
class PararealConfig:
    """Parareal settings.

    ``max_iter`` defaults to ``max(n_windows, 2)``: after ``n_windows``
    iterations the boundary values equal sequential fine stepping, and the
    stopping test needs two iterations.  ``boundaries`` overrides the uniform
    window grid.  ``backend`` selects the fine-sweep worker pool when
    ``workers > 1``: ``"process"`` needs picklable systems, ``"thread"``
    does not.
    """

    n_windows: int
    fine: PropagatorConfig
    coarse: PropagatorConfig
    tol: float = 1e-2
    max_iter: Optional[int] = None
    norm_mode: NormMode = NormMode.DIFFERENTIAL
    update_mode: UpdateMode = UpdateMode.PROJECTED
    workers: int = 1
    backend: str = "process"
    boundaries: Optional[tuple] = None
    keep_history: bool = False

    def __post_init__(self):
        object.__setattr__(self, "norm_mode", NormMode(self.norm_mode))
        object.__setattr__(self, "update_mode", UpdateMode(self.update_mode))
        if self.n_windows < 1:
            raise ValueError(f"n_windows must be >= 1, got {self.n_windows}")
        if not self.coarse.dt > self.fine.dt:
            raise ValueError(f"coarse dt {self.coarse.dt} must exceed fine dt {self.fine.dt}")
        if self.tol < 0:
            raise ValueError(f"tol must be non-negative, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.backend not in ("process", "thread"):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def iteration_limit(self):
        return max(self.n_windows, 2) if self.max_iter is None else self.max_iter

    def grid(self, sys):
        if self.boundaries is not None:
            g = WindowGrid(self.boundaries)
            if g.n_windows != self.n_windows:
                raise ValueError(f"{g.n_windows} boundaries intervals given for n_windows={self.n_windows}")
        else:
            g = WindowGrid.uniform(*sys.t_span, self.n_windows)
        g.check(sys)
        return g


@dataclass
class PararealState:
    grid: WindowGrid
    u0: StateVector
    u_bounds: list
    coarse_prev: list
    fine_prev: list
    iteration: int = 0

    def values(self):
        """Boundary values as an ``(N + 1, n)`` array."""
        return np.array([u.values for u in self.u_bounds])


@dataclass
class RunReport:
    """Per-iteration record of a Parareal run.

    Lists indexed by iteration hold iteration 0 (the initial coarse sweep) at
    index 0.  Window arrays have ``N + 1`` entries, boundary ``T_0`` first.
    """

    n_windows: int
    norm_mode: NormMode
    update_mode: UpdateMode
    made_consistent: bool = False
    iterations: int = 0
    converged: bool = False
    increments: list = field(default_factory=list)
    window_increments: list = field(default_factory=list)
    errors_differential: list = field(default_factory=list)
    errors_full: list = field(default_factory=list)
    coarse_seconds: list = field(default_factory=list)
    fine_seconds: list = field(default_factory=list)
    total_seconds: float = 0.0
    sequential_seconds: Optional[float] = None
    history: list = field(default_factory=list)

    @property
    def modeled_speedup(self):
        return modeled_speedup(self.n_windows, self.iterations)

    @property
    def actual_speedup(self):
        if self.sequential_seconds is None or self.total_seconds <= 0:
            return None
        return self.sequential_seconds / self.total_seconds

    @property
    def coarse_total(self):
        return float(sum(self.coarse_seconds))

    @property
    def fine_total(self):
        return float(sum(self.fine_seconds))


def modeled_speedup(n_windows, iterations, fine_cost=1.0, coarse_cost=0.0):
    """Ideal speedup over sequential fine stepping.

    ``fine_cost`` and ``coarse_cost`` are the costs of one window solve; the
    run pays ``iterations`` fine window solves and ``iterations + 1`` full
    coarse sweeps.  With free coarse solves this is ``n_windows / iterations``.
    """
    if iterations < 1:
        return float("nan")
    parallel = iterations * fine_cost + (iterations + 1) * n_windows * coarse_cost
    return n_windows * fine_cost / parallel


def _norm_parts(u_new, u_old, sys, mode):
    d = np.asarray(u_new, dtype=float) - np.asarray(u_old, dtype=float)
    ref = np.asarray(u_old, dtype=float)
    if NormMode(mode) is NormMode.DIFFERENTIAL:
        idx = sys.projectors.differential_index_set
        d, ref = d[idx], ref[idx]
    return np.linalg.norm(d), np.linalg.norm(ref)


def increment_norm(u_new, u_old, sys, mode=NormMode.DIFFERENTIAL, floor=NORM_FLOOR):
    """Relative l2 distance ``|u_new - u_old| / max(|u_old|, floor)``.

    In differential mode both vectors are projected with ``P`` first, so
    algebraic components never contribute.
    """
    u_new = u_new.values if isinstance(u_new, StateVector) else u_new
    u_old = u_old.values if isinstance(u_old, StateVector) else u_old
    num, den = _norm_parts(u_new, u_old, sys, mode)
    return float(num / max(den, floor))


def relative_error(u, reference, sys, mode=NormMode.DIFFERENTIAL, floor=NORM_FLOOR):
    """Relative l2 error of ``u`` against ``reference``."""
    return increment_norm(u, reference, sys, mode, floor)


def update_window(j, coarse_new, coarse_prev, fine_prev, sys, mode=UpdateMode.PROJECTED):
    """Corrected boundary value at ``T_j``.

    ``plain``: ``fine_prev + (coarse_new - coarse_prev)``; the grouping makes
    an unchanged coarse input reproduce ``fine_prev`` bitwise.
    ``projected_consistent``: the same correction on the differential
    components only, after which the algebraic components are recomputed
    from the constraint at ``coarse_new.time``.
    """
    values = fine_prev.values + (coarse_new.values - coarse_prev.values)
    u = StateVector(values, coarse_new.time)
    if UpdateMode(mode) is UpdateMode.PLAIN or sys.projectors.is_ode:
        return u
    return make_consistent(sys, u)


# worker-process state, set once per process by the pool initializer
_WORKER_PROPAGATOR = None


def _init_worker(propagator):
    global _WORKER_PROPAGATOR
    _WORKER_PROPAGATOR = propagator
    threadpool_limits(1)


def _ping():
    return os.getpid()


def _fine_task(t_target, t_start, values, propagator=None):
    prop = _WORKER_PROPAGATOR if propagator is None else propagator
    return prop.propagate(t_target, t_start, StateVector(values, t_start)).values


class _FineSweep:
    """Runs the fine solves of one iteration, inline or on a worker pool."""

    def __init__(self, propagator, workers, backend):
        self.propagator = propagator
        self.executor = None
        if workers > 1:
            if backend == "thread":
                self.executor = ThreadPoolExecutor(workers)
            else:
                self.executor = ProcessPoolExecutor(
                    workers, initializer=_init_worker, initargs=(propagator,)
                )
                # start every worker now so start-up cost stays out of the fine timings
                for fut in [self.executor.submit(time.sleep, 0.05) for _ in range(workers)]:
                    fut.result()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self.executor is not None:
            self.executor.shutdown(wait=True, cancel_futures=True)

    def __call__(self, grid, u_bounds, iteration):
        b = grid.boundaries
        n = grid.n_windows
        out = [None] * n
        if self.executor is None:
            for j in range(1, n + 1):
                try:
                    out[j - 1] = StateVector(
                        _fine_task(b[j], b[j - 1], u_bounds[j - 1].values, self.propagator), b[j]
                    )
                except Exception as exc:
                    raise PararealError(
                        f"fine solve failed in window {j}, iteration {iteration}: {exc}",
                        window=j, iteration=iteration,
                    ) from exc
            return out

        prop = self.propagator if isinstance(self.executor, ThreadPoolExecutor) else None
        futures = [
            self.executor.submit(_fine_task, b[j], b[j - 1], u_bounds[j - 1].values, prop)
            for j in range(1, n + 1)
        ]
        for j, fut in enumerate(futures, start=1):
            try:
                out[j - 1] = StateVector(fut.result(), b[j])
            except Exception as exc:
                for f in futures:
                    f.cancel()
                raise PararealError(
                    f"fine solve failed in window {j}, iteration {iteration}: {exc}",
                    window=j, iteration=iteration,
                ) from exc
        return out


def _coarse_sweep(sys, grid, coarse, u0, coarse_prev, fine_prev, mode, iteration):
    b = grid.boundaries
    u_bounds = [u0]
    coarse_new = []
    for j in range(1, grid.n_windows + 1):
        try:
            g = coarse.propagate(b[j], b[j - 1], u_bounds[j - 1])
            u_bounds.append(update_window(j, g, coarse_prev[j - 1], fine_prev[j - 1], sys, mode))
        except Exception as exc:
            raise PararealError(
                f"coarse solve/update failed in window {j}, iteration {iteration}: {exc}",
                window=j, iteration=iteration,
            ) from exc
        coarse_new.append(g)
    return u_bounds, coarse_new


def _reference_array(reference, n_windows):
    if reference is None:
        return None
    ref = np.array([r.values if isinstance(r, StateVector) else r for r in reference], dtype=float)
    if ref.shape[0] != n_windows + 1:
        raise ValueError(f"reference has {ref.shape[0]} states, expected {n_windows + 1}")
    return ref


def run(sys, u0, cfg, reference=None):
    """Solve ``sys`` on its time span with Parareal.

    Parameters
    ----------
    sys : DaeSystem
    u0 : StateVector or None
        Initial state at ``sys.t_span[0]``; ``sys.initial_state()`` if None.
        An inconsistent state is made consistent first and the report says so.
    cfg : PararealConfig
    reference : sequence of states, optional
        Reference values at the window boundaries (``N + 1`` of them); when
        given, relative errors are recorded for every iteration.

    Returns
    -------
    state : PararealState
    report : RunReport

    Raises
    ------
    PararealError
        A coarse or fine solve failed; the window and iteration are attached.
    """
    t_start = time.perf_counter()
    grid = cfg.grid(sys)
    n_win = grid.n_windows
    if u0 is None:
        u0 = sys.initial_state()
    sys._check(u0)
    if u0.time != grid.boundaries[0]:
        raise ValueError(f"initial state at t={u0.time}, expected t={grid.boundaries[0]}")
    report = RunReport(n_windows=n_win, norm_mode=cfg.norm_mode, update_mode=cfg.update_mode)
    if not is_consistent(sys, u0):
        u0 = make_consistent(sys, u0)
        report.made_consistent = True
    ref = _reference_array(reference, n_win)

    fine = Propagator(sys, cfg.fine)
    coarse = Propagator(sys, cfg.coarse)
    zeros = [StateVector(np.zeros(sys.n), t) for t in grid.boundaries[1:]]

    def record(u_bounds):
        if cfg.keep_history:
            report.history.append(np.array([u.values for u in u_bounds]))
        if ref is not None:
            report.errors_differential.append(np.array([
                relative_error(u.values, r, sys, NormMode.DIFFERENTIAL) for u, r in zip(u_bounds, ref)
            ]))
            report.errors_full.append(np.array([
                relative_error(u.values, r, sys, NormMode.FULL) for u, r in zip(u_bounds, ref)
            ]))

    with threadpool_limits(1), _FineSweep(fine, cfg.workers, cfg.backend) as fine_sweep:
        tic = time.perf_counter()
        u_bounds, coarse_prev = _coarse_sweep(sys, grid, coarse, u0, zeros, zeros, cfg.update_mode, 0)
        report.coarse_seconds.append(time.perf_counter() - tic)
        report.fine_seconds.append(0.0)
        report.increments.append(float("nan"))
        report.window_increments.append(np.full(n_win + 1, np.nan))
        record(u_bounds)
        fine_prev = zeros

        k = 0
        while True:
            k += 1
            tic = time.perf_counter()
            fine_prev = fine_sweep(grid, u_bounds, k)
            report.fine_seconds.append(time.perf_counter() - tic)

            tic = time.perf_counter()
            new_bounds, coarse_new = _coarse_sweep(
                sys, grid, coarse, u0, coarse_prev, fine_prev, cfg.update_mode, k
            )
            report.coarse_seconds.append(time.perf_counter() - tic)

            incs = np.array([
                increment_norm(new.values, old.values, sys, cfg.norm_mode)
                for new, old in zip(new_bounds, u_bounds)
            ])
            u_bounds, coarse_prev = new_bounds, coarse_new
            report.window_increments.append(incs)
            report.increments.append(float(np.max(incs)))
            record(u_bounds)

            if k >= 2 and report.increments[-1] <= cfg.tol:
                report.converged = True
                break
            if k >= cfg.iteration_limit:
                break

    report.iterations = k
    report.total_seconds = time.perf_counter() - t_start
    state = PararealState(grid=grid, u0=u0, u_bounds=u_bounds, coarse_prev=coarse_prev,
                          fine_prev=fine_prev, iteration=k)
    return state, report


def matching_residual(state, sys, fine, mode=NormMode.DIFFERENTIAL):
    """Continuity defects of the boundary values, one per boundary.

    Entry 0 is ``|U_0 - u0|``; entry ``j`` is the relative distance between
    ``U_j`` and the fine propagation of ``U_{j-1}``.  Re-runs every fine solve.
    """
    if not isinstance(fine, Propagator):
        fine = Propagator(sys, fine)
    b = state.grid.boundaries
    u = state.u_bounds
    out = np.empty(len(u))
    out[0] = increment_norm(u[0].values, state.u0.values, sys, mode)
    for j in range(1, len(u)):
        f = fine.propagate(b[j], b[j - 1], u[j - 1])
        out[j] = increment_norm(u[j].values, f.values, sys, mode)
    return out
