"""Desk-scale test problems with singular mass matrices.

* ``analytic_2x2`` -- smallest index-1 system with a closed-form solution.
* ``rod`` -- 1D eddy-current analog: a conducting core embedded in a
  non-conducting region, driven by a go-and-return winding.
* ``coupled`` -- the rod plus a torsion pendulum driven by a torque that is
  linear in the field.
"""

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .dae import DaeSystem

__all__ = [
    "SaturationCurve",
    "RodModel",
    "CoupledToyModel",
    "build_analytic_2x2",
    "build_rod",
    "build_coupled",
    "build_model",
    "MODEL_NAMES",
]

MU0 = 4e-7 * np.pi


class ZeroSource:
    def __init__(self, n):
        self.n = n

    def __call__(self, t):
        return np.zeros(self.n)


class SinusoidalSource:
    """``f(t) = profile * amplitude * sin(2 pi frequency t)``."""

    def __init__(self, profile, amplitude, frequency):
        self.profile = np.asarray(profile, dtype=float)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)

    def __call__(self, t):
        return self.profile * (self.amplitude * np.sin(2.0 * np.pi * self.frequency * t))


class Analytic2x2Reference:
    def __init__(self, t0):
        self.t0 = t0

    def __call__(self, t, u0):
        u1 = u0[0] * np.exp(-1.5 * (t - self.t0))
        return np.array([u1, 0.5 * u1])


def build_analytic_2x2(t_span=(0.0, 1.0), initial=(1.0, 0.5)):
    """``M = diag(1, 0)``, ``K = [[2, -1], [-1, 2]]``, ``f = 0``.

    The algebraic row forces ``u2 = u1 / 2``, leaving ``u1' = -1.5 u1``.
    """
    return DaeSystem(
        mass=np.diag([1.0, 0.0]),
        stiffness=np.array([[2.0, -1.0], [-1.0, 2.0]]),
        source=ZeroSource(2),
        t_span=t_span,
        reference=Analytic2x2Reference(t_span[0]),
        initial=initial,
        name="analytic2x2",
    )


@dataclass(frozen=True)
class SaturationCurve:
    """Monotone reluctivity ``nu(b^2) = nu_min + (nu_max - nu_min) b^2 / (b^2 + b0^2)``."""

    nu_min: float = 200.0
    nu_max: float = 4000.0
    b0: float = 1.0

    def __post_init__(self):
        if not (0 < self.nu_min <= self.nu_max) or not self.b0 > 0:
            raise ValueError(f"invalid saturation curve {self}")

    def __call__(self, b2):
        return self.nu_min + (self.nu_max - self.nu_min) * b2 / (b2 + self.b0 ** 2)

    def derivative(self, b2):
        """``d nu / d(b^2)``."""
        return (self.nu_max - self.nu_min) * self.b0 ** 2 / (b2 + self.b0 ** 2) ** 2


@dataclass(frozen=True)
class RodModel:
    """1D rod ``sigma da/dt - d/dx(nu da/dx) = J(x) sin(2 pi f t)`` with ``a = 0`` at both ends.

    Cells are uniform.  ``sigma`` is applied on ``core`` (fractions of the
    length, by cell centre) unless ``sigma_profile`` gives one value per cell.
    ``nu_nonlinear``, when set, replaces ``nu_linear`` inside the conducting
    cells.  The winding carries ``+J`` on ``winding[0]`` and ``-J`` on
    ``winding[1]``.
    """

    n_cells: int = 101
    length: float = 0.1
    sigma: float = 1e6
    core: tuple = (0.25, 0.75)
    sigma_profile: Optional[tuple] = None
    nu_linear: float = 1000.0
    nu_nonlinear: Optional[SaturationCurve] = None
    source_amplitude: float = 1e5
    source_frequency: float = 50.0
    winding: tuple = ((0.05, 0.2), (0.8, 0.95))
    t_end: float = 0.2
    require_insulator: bool = True

    @property
    def h(self):
        return self.length / self.n_cells

    @property
    def centres(self):
        return (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def nodes(self):
        """Interior node coordinates, one per unknown."""
        return np.arange(1, self.n_cells) * self.h

    def cell_sigma(self):
        if self.sigma_profile is not None:
            sig = np.asarray(self.sigma_profile, dtype=float)
            if sig.shape != (self.n_cells,):
                raise ValueError(f"sigma_profile needs {self.n_cells} entries, got {sig.shape}")
            return sig
        x = self.centres / self.length
        return np.where((x >= self.core[0]) & (x <= self.core[1]), self.sigma, 0.0)

    def cell_current(self):
        x = self.centres / self.length
        j = np.zeros(self.n_cells)
        (a0, a1), (b0, b1) = self.winding
        j[(x >= a0) & (x <= a1)] = 1.0
        j[(x >= b0) & (x <= b1)] = -1.0
        return j

    def validate(self):
        if self.n_cells < 3:
            raise ValueError("rod needs at least 3 cells")
        if not (self.length > 0 and self.nu_linear > 0 and self.t_end > 0):
            raise ValueError("length, nu_linear and t_end must be positive")
        sig = self.cell_sigma()
        if np.any(sig < 0):
            raise ValueError("conductivity must be non-negative")
        if not np.any(sig > 0):
            raise ValueError("rod has no conducting cell")
        if self.require_insulator and np.all(sig > 0):
            raise ValueError("rod has no non-conducting cell; set require_insulator=False for a pure ODE")


class RodStiffness:
    """``K(u) = G^T diag(h nu_c) G`` with ``G`` the cell gradient of the interior nodes.

    ``nu_c`` is constant except on ``nonlinear_cells`` where it follows
    ``curve(b_c^2)``, ``b_c = (G u)_c``.
    """

    def __init__(self, h, nu_cells, nonlinear_cells=None, curve=None):
        self.h = h
        self.nu_cells = np.asarray(nu_cells, dtype=float)
        self.nonlinear_cells = None if curve is None else np.asarray(nonlinear_cells, dtype=bool)
        self.curve = curve
        n = self.nu_cells.size - 1
        g = np.zeros((n + 1, n))
        g[np.arange(n), np.arange(n)] = 1.0 / h
        g[np.arange(1, n + 1), np.arange(n)] = -1.0 / h
        self.gradient = g

    @property
    def linear(self):
        return self.curve is None

    @staticmethod
    def _assemble(w):
        # tridiagonal G^T diag(w * h^2 / h) G from cell weights w = nu / h
        k = np.diag(w[:-1] + w[1:])
        off = -w[1:-1]
        i = np.arange(off.size)
        k[i, i + 1] = off
        k[i + 1, i] = off
        return k

    def cell_b(self, u):
        return self.gradient @ u

    def cell_nu(self, u):
        if self.curve is None:
            return self.nu_cells
        nu = self.nu_cells.copy()
        b = self.cell_b(u)[self.nonlinear_cells]
        nu[self.nonlinear_cells] = self.curve(b * b)
        return nu

    def __call__(self, u):
        return self._assemble(self.cell_nu(u) / self.h)

    def jacobian(self, u):
        """Matrix of ``d(K(u) u)/du``: cell weights ``nu + 2 b^2 nu'(b^2)``."""
        if self.curve is None:
            return self(u)
        nu = self.nu_cells.copy()
        b2 = self.cell_b(u)[self.nonlinear_cells] ** 2
        nu[self.nonlinear_cells] = self.curve(b2) + 2.0 * b2 * self.curve.derivative(b2)
        return self._assemble(nu / self.h)


def _rod_parts(m):
    m.validate()
    h = m.h
    sig = m.cell_sigma()
    mass = np.diag(0.5 * h * (sig[:-1] + sig[1:]))
    nu = np.full(m.n_cells, float(m.nu_linear))
    stiff = RodStiffness(h, nu, sig > 0, m.nu_nonlinear)
    jc = m.cell_current()
    profile = 0.5 * h * (jc[:-1] + jc[1:])
    source = SinusoidalSource(profile, m.source_amplitude, m.source_frequency)
    return mass, stiff, source


def build_rod(m=None):
    """Finite-difference semi-discretization of :class:`RodModel`.

    Lumped mass ``h (sigma_left + sigma_right) / 2`` per interior node, so
    nodes strictly inside the non-conducting region carry zero mass.
    """
    m = RodModel() if m is None else m
    mass, stiff, source = _rod_parts(m)
    if stiff.linear:
        return DaeSystem(mass, stiff(np.zeros(m.n_cells - 1)), source,
                         (0.0, m.t_end), name="rod")
    return DaeSystem(mass, stiff, source, (0.0, m.t_end), jacobian=stiff.jacobian,
                     linear=False, name="rod_nonlinear")


@dataclass(frozen=True)
class CoupledToyModel:
    """Rod field coupled to ``dtheta/dt = omega``, ``I domega/dt + kappa theta = T(a)``.

    The torque is ``T(a) = torque_gain * sum_i h (x_i - L/2) a_i`` over the
    conducting nodes, i.e. linear in the field.
    """

    field: RodModel = field(default_factory=RodModel)
    inertia: float = 1e-2
    torsion: float = 1.0
    torque_gain: float = 100.0
    theta0: float = 0.0
    omega0: float = 0.0

    def validate(self):
        if not self.inertia > 0:
            raise ValueError("inertia must be positive")
        if self.torsion < 0:
            raise ValueError("torsion must be non-negative")

    def torque_weights(self):
        m = self.field
        sig = m.cell_sigma()
        conducting = (sig[:-1] + sig[1:]) > 0
        return np.where(conducting, self.torque_gain * m.h * (m.nodes - 0.5 * m.length), 0.0)


class CoupledStiffness:
    """Block stiffness ``[[K_rod(a), 0, 0], [0, 0, -1], [-c, kappa, 0]]``."""

    def __init__(self, rod, weights, torsion):
        self.rod = rod
        self.weights = np.asarray(weights, dtype=float)
        self.torsion = float(torsion)

    def _embed(self, k_rod):
        n = k_rod.shape[0]
        k = np.zeros((n + 2, n + 2))
        k[:n, :n] = k_rod
        k[n, n + 1] = -1.0
        k[n + 1, :n] = -self.weights
        k[n + 1, n] = self.torsion
        return k

    def __call__(self, u):
        return self._embed(self.rod(u[:-2]))

    def jacobian(self, u):
        return self._embed(self.rod.jacobian(u[:-2]))


class FreeRotorReference:
    """Mechanical part of the coupled model when the torque vanishes."""

    def __init__(self, t0, inertia, torsion):
        self.t0, self.inertia, self.torsion = t0, inertia, torsion

    def __call__(self, t, u0):
        th0, om0 = u0[-2], u0[-1]
        s = t - self.t0
        if self.torsion == 0:
            return np.array([th0 + om0 * s, om0])
        w = np.sqrt(self.torsion / self.inertia)
        return np.array([
            th0 * np.cos(w * s) + om0 / w * np.sin(w * s),
            -th0 * w * np.sin(w * s) + om0 * np.cos(w * s),
        ])


class _PaddedSource:
    def __init__(self, inner):
        self.inner = inner

    def __call__(self, t):
        return np.concatenate([self.inner(t), [0.0, 0.0]])


def build_coupled(m=None):
    """Combined field/mechanics system with state ``[a, theta, omega]``.

    ``reference`` returns the closed-form ``(theta, omega)`` of the decoupled
    pendulum; it is exact only when the torque vanishes.
    """
    m = CoupledToyModel() if m is None else m
    m.validate()
    mass_rod, stiff_rod, source_rod = _rod_parts(m.field)
    n = mass_rod.shape[0]
    mass = np.zeros((n + 2, n + 2))
    mass[:n, :n] = mass_rod
    mass[n, n] = 1.0
    mass[n + 1, n + 1] = m.inertia
    stiff = CoupledStiffness(stiff_rod, m.torque_weights(), m.torsion)
    initial = np.zeros(n + 2)
    initial[n], initial[n + 1] = m.theta0, m.omega0
    t_span = (0.0, m.field.t_end)
    ref = FreeRotorReference(0.0, m.inertia, m.torsion)
    if stiff_rod.linear:
        return DaeSystem(mass, stiff(initial), _PaddedSource(source_rod), t_span,
                         reference=ref, initial=initial, name="coupled")
    return DaeSystem(mass, stiff, _PaddedSource(source_rod), t_span, jacobian=stiff.jacobian,
                     linear=False, reference=ref, initial=initial, name="coupled")


MODEL_NAMES = ("analytic2x2", "rod", "rod_nonlinear", "coupled")

_CURVE_KEYS = {"nu_min", "nu_max", "b0"}


def _coerce(value, like):
    if isinstance(value, str):
        if isinstance(like, bool):
            return value.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(like, tuple):
            parts = [float(v) for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
            if like and isinstance(like[0], tuple):
                return tuple(tuple(parts[i:i + 2]) for i in range(0, len(parts), 2))
            return tuple(parts)
        if isinstance(like, int):
            return int(float(value))
        return float(value)
    return value


def build_model(name, t_end=None, **overrides):
    """Build a named model, applying keyword overrides to its parameters.

    Rod parameters (``n_cells``, ``sigma``, ...) and saturation parameters
    (``nu_min``, ``nu_max``, ``b0``) apply to the rod part; ``inertia``,
    ``torsion``, ``torque_gain``, ``theta0``, ``omega0`` to the coupled model.
    String values are converted to the parameter's type.
    """
    if name == "analytic2x2":
        unknown = set(overrides) - {"u1_0"}
        if unknown:
            raise ValueError(f"unknown analytic2x2 parameters: {sorted(unknown)}")
        u1 = float(overrides.get("u1_0", 1.0))
        t1 = 1.0 if t_end is None else float(t_end)
        return build_analytic_2x2((0.0, t1), (u1, 0.5 * u1))
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")

    rod_keys = {f.name: f for f in fields(RodModel)}
    mech_keys = {f.name: f for f in fields(CoupledToyModel)} if name == "coupled" else {}
    rod_kw, mech_kw, curve_kw = {}, {}, {}
    defaults_rod, defaults_mech = RodModel(), CoupledToyModel()
    for key, value in overrides.items():
        if key in _CURVE_KEYS:
            curve_kw[key] = float(value)
        elif key in rod_keys and key not in ("nu_nonlinear", "sigma_profile"):
            rod_kw[key] = _coerce(value, getattr(defaults_rod, key))
        elif key in mech_keys and key != "field":
            mech_kw[key] = _coerce(value, getattr(defaults_mech, key))
        else:
            raise ValueError(f"unknown parameter {key!r} for model {name!r}")
    if t_end is not None:
        rod_kw["t_end"] = float(t_end)
    if curve_kw and name == "rod":
        raise ValueError(f"saturation parameters {sorted(curve_kw)} need model 'rod_nonlinear' or 'coupled'")
    if name == "rod_nonlinear" or curve_kw:
        rod_kw["nu_nonlinear"] = SaturationCurve(**curve_kw)
    rod = replace(defaults_rod, **rod_kw)
    if name == "coupled":
        return build_coupled(replace(defaults_mech, field=rod, **mech_kw))
    return build_rod(rod)
