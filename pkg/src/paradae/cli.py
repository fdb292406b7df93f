"""Command-line front end: ``sequential``, ``parareal`` and ``sweep``.

Settings come from an optional flat ``key = value`` config file and are
overridden by flags of the same name (``n_windows`` <-> ``--n-windows``).
Model parameters use ``model.<name> = value`` in the file and
``--set name=value`` on the command line.
"""

import argparse
import csv
import itertools
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dae import StateVector
from .models import MODEL_NAMES, build_model
from .parareal import NormMode, PararealConfig, PararealError, UpdateMode, WindowGrid, run
from .stepper import Propagator, PropagatorConfig, propagate_through

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

PARAREAL_COLUMNS = (
    "iteration", "window_index", "T_j", "increment_norm",
    "error_vs_reference_differential", "error_vs_reference_full",
    "coarse_seconds", "fine_seconds",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "rod"
    overrides: dict = field(default_factory=dict)
    t_end: Optional[float] = None
    n_windows: int = 40
    dt_fine: float = 1e-5
    dt_coarse: float = 1e-3
    tol: float = 1e-2
    max_iter: Optional[int] = None
    norm_mode: str = "differential"
    update_mode: str = "projected_consistent"
    workers: int = 1
    backend: str = "process"
    seed: int = 0
    perturb: float = 0.0
    output_path: Optional[str] = None

    def validate(self):
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODEL_NAMES)}")
        if not self.dt_fine > 0 or not self.dt_coarse > self.dt_fine:
            raise ConfigError(f"need 0 < dt_fine < dt_coarse, got {self.dt_fine}, {self.dt_coarse}")
        if self.n_windows < 1:
            raise ConfigError("n_windows must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.tol < 0:
            raise ConfigError("tol must be non-negative")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        NormMode(self.norm_mode)
        UpdateMode(self.update_mode)
        return self

    def build_system(self):
        try:
            return build_model(self.model, t_end=self.t_end, **self.overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def initial_state(self, system):
        u0 = system.initial_state()
        if self.perturb:
            rng = np.random.default_rng(self.seed)
            alg = system.projectors.algebraic_index_set
            values = u0.values.copy()
            values[alg] += self.perturb * rng.uniform(-1.0, 1.0, alg.size)
            u0 = StateVector(values, u0.time)
        return u0

    def grid(self, system):
        return WindowGrid.uniform(*system.t_span, self.n_windows)

    def parareal_config(self):
        return PararealConfig(
            n_windows=self.n_windows,
            fine=PropagatorConfig(self.dt_fine, label="fine"),
            coarse=PropagatorConfig(self.dt_coarse, label="coarse"),
            tol=self.tol,
            max_iter=self.max_iter,
            norm_mode=self.norm_mode,
            update_mode=self.update_mode,
            workers=self.workers,
            backend=self.backend,
        )


_FIELD_TYPES = {
    "t_end": float, "n_windows": int, "dt_fine": float, "dt_coarse": float, "tol": float,
    "max_iter": int, "workers": int, "seed": int, "perturb": float,
    "model": str, "norm_mode": str, "update_mode": str, "backend": str, "output_path": str,
}


def _set_field(cfg, key, value):
    key = key.strip().replace("-", "_")
    if key == "output":
        key = "output_path"
    if key.startswith("model."):
        cfg.overrides[key[len("model."):]] = value.strip()
        return
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown setting {key!r}")
    value = value.strip()
    if value.lower() in ("", "none") and key in ("t_end", "max_iter", "output_path"):
        setattr(cfg, key, None)
        return
    try:
        conv = _FIELD_TYPES[key]
        setattr(cfg, key, int(float(value)) if conv is int else conv(value))
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r} for {key}") from exc


def parse_config_text(text, cfg=None):
    """Parse ``key = value`` lines (``#`` starts a comment) into a RunConfig."""
    cfg = RunConfig() if cfg is None else cfg
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        _set_field(cfg, key, value)
    return cfg


def load_config(path, cfg=None):
    return parse_config_text(Path(path).read_text(), cfg)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_trajectory(path, times, states):
    """CSV with a header row ``time, u0, u1, ...``; one row per snapshot."""
    states = np.asarray(states, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"u{i}" for i in range(states.shape[1])])
        for t, row in zip(times, states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_trajectory(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "time":
        raise ConfigError(f"{path}: not a trajectory file (missing 'time' header)")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError(f"{path}: trajectory has no rows")
    return data[:, 0], data[:, 1:]


def reference_at(times, states, boundaries, n):
    """Pick the reference states at ``boundaries``; every boundary must be present."""
    if states.shape[1] != n:
        raise ConfigError(f"reference has {states.shape[1]} components, system has {n}")
    scale = max(1.0, float(np.max(np.abs(boundaries))))
    out = []
    for t in boundaries:
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-9 * scale:
            raise ConfigError(f"reference grid has no snapshot at window boundary t={t!r}")
        out.append(states[i])
    return np.array(out)


def cmd_sequential(cfg, out=None):
    """Sequential fine stepping with snapshots at the window boundaries."""
    out = sys.stdout if out is None else out
    cfg.validate()
    system = cfg.build_system()
    grid = cfg.grid(system)
    prop = Propagator(system, PropagatorConfig(cfg.dt_fine, label="fine"))
    tic = time.perf_counter()
    states = propagate_through(prop, grid.boundaries, cfg.initial_state(system))
    seconds = time.perf_counter() - tic
    values = np.array([u.values for u in states])
    if cfg.output_path:
        write_trajectory(cfg.output_path, grid.boundaries, values)
    n_steps = sum(prop.steps(b, a) for a, b in zip(grid.boundaries[:-1], grid.boundaries[1:]))
    summary = {"model": cfg.model, "steps": n_steps, "sequential_seconds": seconds,
               "t_end": float(grid.boundaries[-1])}
    print(f"model={cfg.model} steps={n_steps} t_end={grid.boundaries[-1]:g} "
          f"sequential_seconds={seconds:.3f}", file=out)
    return summary, grid.boundaries, values


def parareal_rows(report, grid):
    rows = []
    b = grid.boundaries
    have_err = bool(report.errors_differential)
    for it in range(report.iterations + 1):
        for j in range(grid.n_windows + 1):
            rows.append([
                it, j, b[j], report.window_increments[it][j],
                report.errors_differential[it][j] if have_err else None,
                report.errors_full[it][j] if have_err else None,
                report.coarse_seconds[it], report.fine_seconds[it],
            ])
    return rows


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def cmd_parareal(cfg, reference=None, out=None):
    """Parareal run with per-iteration, per-window error table.

    Without a reference trajectory file a sequential fine run is made first;
    its wall clock gives the actual speedup.
    """
    out = sys.stdout if out is None else out
    cfg.validate()
    system = cfg.build_system()
    grid = cfg.grid(system)
    u0 = cfg.initial_state(system)
    seq_seconds = None
    if reference is None:
        prop = Propagator(system, PropagatorConfig(cfg.dt_fine, label="fine"))
        tic = time.perf_counter()
        ref = np.array([u.values for u in propagate_through(prop, grid.boundaries, u0)])
        seq_seconds = time.perf_counter() - tic
    else:
        times, states = read_trajectory(reference)
        ref = reference_at(times, states, grid.boundaries, system.n)

    state, report = run(system, u0, cfg.parareal_config(), reference=ref)
    report.sequential_seconds = seq_seconds
    rows = parareal_rows(report, grid)
    if cfg.output_path:
        write_rows(cfg.output_path, PARAREAL_COLUMNS, rows)
    final_err = report.errors_differential[-1][1:].max() if report.errors_differential else float("nan")
    actual = report.actual_speedup
    print(f"model={cfg.model} N={grid.n_windows} k={report.iterations} converged={report.converged} "
          f"modeled_speedup={report.modeled_speedup:.4g} "
          f"actual_speedup={'n/a' if actual is None else f'{actual:.3g}'} "
          f"max_error_differential={final_err:.3e}", file=out)
    return report, rows


SWEEP_COLUMNS = (
    "run", "parameters", "iteration", "max_increment", "max_error_differential",
    "max_error_full", "iterations_used", "converged", "status",
)


def parse_sweep(specs):
    """``["n_windows=4,8", "dt_coarse=1e-3,1e-2"]`` -> ordered list of (key, values)."""
    out = []
    for spec in specs or ():
        if "=" not in spec:
            raise ConfigError(f"sweep entry {spec!r} is not key=v1,v2,...")
        key, values = spec.split("=", 1)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"sweep entry {spec!r} lists no values")
        out.append((key.strip().replace("-", "_"), vals))
    return out


def cmd_sweep(template, sweep, out=None):
    """Cross product of parameter lists; one CSV row per (run, iteration).

    A failing run contributes a single row with its error message and the
    sweep moves on.
    """
    grid_spec = parse_sweep(sweep)
    keys = [k for k, _ in grid_spec]
    rows = []
    statuses = []
    combos = list(itertools.product(*[v for _, v in grid_spec])) or [()]
    for run_id, combo in enumerate(combos):
        cfg = replace(template, overrides=dict(template.overrides), output_path=None)
        label = ";".join(f"{k}={v}" for k, v in zip(keys, combo))
        try:
            for k, v in zip(keys, combo):
                _set_field(cfg, k, v)
            report, _ = cmd_parareal(cfg, out=out)
        except (ConfigError, ValueError, PararealError, ArithmeticError) as exc:
            rows.append([run_id, label, None, None, None, None, None, False, f"error: {exc}"])
            statuses.append("error")
            continue
        for it in range(report.iterations + 1):
            rows.append([
                run_id, label, it, report.increments[it],
                float(np.max(report.errors_differential[it])),
                float(np.max(report.errors_full[it])),
                report.iterations, report.converged, "ok",
            ])
        statuses.append("converged" if report.converged else "not_converged")
    if template.output_path:
        write_rows(template.output_path, SWEEP_COLUMNS, rows)
    return rows, statuses


def _add_common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="model parameter override, repeatable")
    for name, typ in (("t-end", float), ("n-windows", int), ("dt-fine", float), ("dt-coarse", float),
                      ("tol", float), ("max-iter", int), ("workers", int), ("seed", int),
                      ("perturb", float)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--norm-mode", choices=[m.value for m in NormMode])
    p.add_argument("--update-mode", choices=[m.value for m in UpdateMode])
    p.add_argument("--backend", choices=["process", "thread"])
    p.add_argument("--output", "-o", dest="output_path")


def build_parser():
    parser = argparse.ArgumentParser(prog="paradae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sequential", help="sequential fine reference run")
    _add_common(p)
    p = sub.add_parser("parareal", help="Parareal run with error table")
    _add_common(p)
    p.add_argument("--reference", help="trajectory CSV from 'sequential'")
    p = sub.add_parser("sweep", help="cross product of Parareal runs")
    _add_common(p)
    p.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2",
                   help="parameter list, repeatable")
    return parser


def config_from_args(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    for f in fields(RunConfig):
        if f.name == "overrides":
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.overrides[k.strip()] = v.strip()
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "sequential":
            cmd_sequential(cfg)
            return EXIT_OK
        if args.command == "parareal":
            report, _ = cmd_parareal(cfg, reference=args.reference)
            return EXIT_OK if report.converged else EXIT_NOT_CONVERGED
        _, statuses = cmd_sweep(cfg.validate(), args.sweep)
        if "error" in statuses:
            return EXIT_ERROR
        return EXIT_NOT_CONVERGED if "not_converged" in statuses else EXIT_OK
    except (ConfigError, ValueError, PararealError, OSError, ArithmeticError) as exc:
        print(f"paradae: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
