"""Crank-Nicolson reference propagator and analytic harmonic-oscillator states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import StabilityError
from .fields import M_DIAG, M_OFF, UNITS, Grid1D, PhysicalConstants, RealField, WaveFunction, d1, expectation

WALL_DENSITY = 1e-8


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """``V(q) - q F(t)`` with ``V`` free, harmonic or tabulated."""

    kind: str = "free"
    omega: float = 1.0
    table: RealField | None = None
    forcing: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind not in ("free", "harmonic", "tabulated"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "harmonic" and not self.omega > 0:
            raise ValueError("harmonic potential needs omega > 0")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated potential needs a table")

    @classmethod
    def harmonic(cls, omega=1.0, forcing=None):
        return cls("harmonic", omega=omega, forcing=forcing)

    @property
    def is_even(self) -> bool:
        if self.forcing is not None:
            return False
        if self.kind == "tabulated":
            v = self.table.values
            return bool(np.allclose(v, v[::-1], rtol=0, atol=1e-14 * max(1.0, np.abs(v).max())))
        return True

    def static_values(self, grid: Grid1D, c: PhysicalConstants = UNITS) -> np.ndarray:
        if self.kind == "free":
            return np.zeros(grid.n_points)
        if self.kind == "harmonic":
            return 0.5 * c.mass * self.omega ** 2 * grid.points ** 2
        if self.table.grid != grid:
            raise ValueError("tabulated potential is defined on a different grid")
        return self.table.values

    def values(self, grid: Grid1D, t: float = 0.0, c: PhysicalConstants = UNITS) -> np.ndarray:
        v = self.static_values(grid, c)
        if self.forcing is not None:
            v = v - grid.points * self.forcing(t)
        return v

    def force(self, grid: Grid1D, t: float = 0.0, c: PhysicalConstants = UNITS) -> np.ndarray:
        """Classical force ``-dV/dq``; analytic except for tabulated potentials."""
        f_t = 0.0 if self.forcing is None else self.forcing(t)
        if self.kind == "free":
            return np.full(grid.n_points, f_t)
        if self.kind == "harmonic":
            return -c.mass * self.omega ** 2 * grid.points + f_t
        return -d1(self.table.values, grid.dq) + f_t


@dataclass
class EvolutionResult:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    mean_q: list = field(default_factory=list)
    mean_p: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    norm: list = field(default_factory=list)

    def record(self, t, psi, v, c):
        self.times.append(t)
        self.states.append(psi)
        self.mean_q.append(expectation(psi, "position", c=c))
        self.mean_p.append(expectation(psi, "momentum", c=c))
        self.energy.append(expectation(psi, "energy", v, c=c, kinetic="stencil"))
        self.norm.append(psi.norm())

    @property
    def final(self) -> WaveFunction:
        return self.states[-1]


def cn_propagate(psi: WaveFunction, potential_values: np.ndarray, dt: float,
                 c: PhysicalConstants = UNITS) -> WaveFunction:
    """One Crank-Nicolson step for a given potential array.

    The outermost nodes are Dirichlet walls.  The kinetic operator is the
    compact fourth-order (Numerov) Laplacian ``M^-1 D2``; multiplying the
    Crank-Nicolson system by the tridiagonal mass matrix ``M`` keeps it
    tridiagonal, and since ``M^-1 D2`` is symmetric the step is unitary.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = psi.grid
    u = psi.values[1:-1]
    v = np.asarray(potential_values, float)[1:-1]
    kap = c.hbar ** 2 / (2.0 * c.mass * grid.dq ** 2)
    a = 0.5j * dt / c.hbar

    # H u = M^-1 (K u + M (v u)) with K = kap * tridiag(-1, 2, -1), M = tridiag(1, 10, 1)/12
    w = v * u
    rhs = M_DIAG * u - a * (2.0 * kap * u + M_DIAG * w)
    rhs[1:] += M_OFF * u[:-1] - a * (-kap * u[:-1] + M_OFF * w[:-1])
    rhs[:-1] += M_OFF * u[1:] - a * (-kap * u[1:] + M_OFF * w[1:])

    ab = np.empty((3, u.size), complex)
    ab[0, :] = M_OFF + a * (-kap + M_OFF * v)
    ab[1, :] = M_DIAG + a * (2.0 * kap + M_DIAG * v)
    ab[2, :] = ab[0, :]
    out = np.zeros(grid.n_points, complex)
    out[1:-1] = solve_banded((1, 1), ab, rhs, check_finite=False)
    wall = max(abs(out[1]) ** 2, abs(out[-2]) ** 2)
    if wall > WALL_DENSITY:
        raise StabilityError(f"density {wall:.3g} at the wall exceeds {WALL_DENSITY:g}")
    return WaveFunction(grid, out)


def cn_step(psi: WaveFunction, V: PotentialSpec, dt: float, c: PhysicalConstants = UNITS,
            t: float = 0.0) -> WaveFunction:
    """Advance ``psi`` from ``t`` to ``t + dt``; forcing is sampled at the midpoint."""
    return cn_propagate(psi, V.values(psi.grid, t + 0.5 * dt, c), dt, c)


def evolve(psi0: WaveFunction, V: PotentialSpec, dt: float, n_steps: int, snapshot_every: int = 1,
           c: PhysicalConstants = UNITS, t0: float = 0.0) -> EvolutionResult:
    if n_steps < 0 or snapshot_every < 1:
        raise ValueError("need n_steps >= 0 and snapshot_every >= 1")
    res = EvolutionResult()
    res.record(t0, psi0, V.values(psi0.grid, t0, c), c)
    psi = psi0
    for k in range(1, n_steps + 1):
        psi = cn_step(psi, V, dt, c, t0 + (k - 1) * dt)
        if k % snapshot_every == 0 or k == n_steps:
            t = t0 + k * dt
            res.record(t, psi, V.values(psi.grid, t, c), c)
    return res


def classical_orbit(omega: float, q0: float, p0: float, t, c: PhysicalConstants = UNITS):
    """Undamped oscillator solution ``(q(t), p(t))``."""
    m = c.mass
    q = q0 * np.cos(omega * t) + p0 / (m * omega) * np.sin(omega * t)
    p = p0 * np.cos(omega * t) - m * omega * q0 * np.sin(omega * t)
    return q, p


def coherent_state(grid: Grid1D, omega: float, q0: float, p0: float, t: float = 0.0,
                   c: PhysicalConstants = UNITS) -> WaveFunction:
    """Exact coherent state of ``V = m omega^2 q^2 / 2`` at time ``t``, including its phase."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    m, hbar = c.mass, c.hbar
    qc, pc = classical_orbit(omega, q0, p0, t, c)
    q = grid.points
    expo = (-(m * omega / (2.0 * hbar)) * (q - qc) ** 2
            + 1j * (pc * q - 0.5 * qc * pc) / hbar - 0.5j * omega * t)
    psi = (m * omega / (np.pi * hbar)) ** 0.25 * np.exp(expo)
    return WaveFunction(grid, psi)


def ground_state(grid: Grid1D, omega: float = 1.0, c: PhysicalConstants = UNITS) -> WaveFunction:
    return coherent_state(grid, omega, 0.0, 0.0, 0.0, c)
