"""Grids, Madelung transforms, the quantum potential and expectation values.

Every field lives on the nodes of a uniform 1-D grid.  Integrals use the
trapezoid rule; derivatives use central stencils, fourth order in the
interior and second order in the two outermost layers.

Points where the density falls below ``eps_n`` are nodes.  Inside the
support of a state (the index hull of all points with density >= eps_n)
a node makes the phase undefined, so the transforms raise
:class:`~qha.errors.NodeError` instead of regularising.  Outside the hull
fields are continued with their edge value, which keeps them finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import NodeError

EPS_REL = 1e-12

# compact (Numerov) mass matrix tridiag(1, 10, 1) / 12
M_DIAG = 10.0 / 12.0
M_OFF = 1.0 / 12.0


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError(f"hbar and mass must be positive, got {self.hbar}, {self.mass}")


UNITS = PhysicalConstants()


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid ``q_min = q_0 < ... < q_{n-1} = q_max``."""

    q_min: float
    q_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 16:
            raise ValueError(f"n_points must be >= 16, got {self.n_points}")
        if not np.isfinite(self.q_min) or not np.isfinite(self.q_max) or self.q_max <= self.q_min:
            raise ValueError(f"need finite q_min < q_max, got [{self.q_min}, {self.q_max}]")

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        q = np.linspace(self.q_min, self.q_max, self.n_points)
        q.flags.writeable = False
        return q

    def integrate(self, values) -> float:
        return float(np.trapezoid(values, dx=self.dq))

    def contains(self, q) -> bool:
        q = np.asarray(q)
        return bool(np.all((q >= self.q_min) & (q <= self.q_max)))

    def is_symmetric(self) -> bool:
        return abs(self.q_min + self.q_max) <= 1e-12 * (self.q_max - self.q_min)


@dataclass(frozen=True, eq=False)
class RealField:
    """Real values on a grid; ``support`` optionally marks where they are meaningful."""

    grid: Grid1D
    values: np.ndarray
    support: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(f"field has shape {v.shape}, grid has {self.grid.n_points} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def __call__(self, q) -> np.ndarray:
        """Linear interpolation at arbitrary positions."""
        return np.interp(q, self.grid.points, self.values)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.values, dtype=complex)
        if psi.shape != (self.grid.n_points,):
            raise ValueError(f"wavefunction has shape {psi.shape}, grid has {self.grid.n_points} points")
        n = self.grid.integrate(np.abs(psi) ** 2)
        if not (np.isfinite(n) and n > 0):
            raise ValueError("wavefunction norm must be finite and positive")
        object.__setattr__(self, "values", psi)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        """L2 norm, trapezoid rule."""
        return float(np.sqrt(self.grid.integrate(self.density)))

    def normalized(self) -> WaveFunction:
        return WaveFunction(self.grid, self.values / self.norm())

    def overlap(self, other: WaveFunction) -> complex:
        return complex(np.trapezoid(np.conj(self.values) * other.values, dx=self.grid.dq))

    def reflected(self) -> WaveFunction:
        return WaveFunction(self.grid, self.values[::-1].copy())


@dataclass(frozen=True, eq=False)
class HydroFields:
    """Madelung pair: probability density ``n`` and action ``S``."""

    grid: Grid1D
    density: np.ndarray
    action: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        n = np.asarray(self.density, dtype=float)
        s = np.asarray(self.action, dtype=float)
        if n.shape != (self.grid.n_points,) or s.shape != n.shape:
            raise ValueError("density and action must match the grid")
        if np.any(n < 0):
            raise ValueError("density must be nonnegative")
        if not np.all(np.isfinite(s)):
            raise ValueError("action must be finite")
        support = np.ones(n.shape, bool) if self.support is None else np.asarray(self.support, bool)
        object.__setattr__(self, "density", n)
        object.__setattr__(self, "action", s)
        object.__setattr__(self, "support", support)

    @property
    def support_interval(self) -> tuple[float, float]:
        idx = np.flatnonzero(self.support)
        q = self.grid.points
        return float(q[idx[0]]), float(q[idx[-1]])


# -- finite differences -------------------------------------------------------


def d1(f: np.ndarray, dq: float) -> np.ndarray:
    """First derivative: 4th-order central inside, 2nd-order near the edges."""
    f = np.asarray(f)
    g = np.empty_like(f)
    g[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * dq)
    g[1] = (f[2] - f[0]) / (2.0 * dq)
    g[-2] = (f[-1] - f[-3]) / (2.0 * dq)
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dq)
    g[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dq)
    return g


def d2(f: np.ndarray, dq: float) -> np.ndarray:
    """Second derivative: 4th-order central inside, 2nd-order near the edges."""
    f = np.asarray(f)
    g = np.empty_like(f)
    g[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]) / (12.0 * dq * dq)
    g[1] = (f[0] - 2.0 * f[1] + f[2]) / (dq * dq)
    g[-2] = (f[-3] - 2.0 * f[-2] + f[-1]) / (dq * dq)
    g[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (dq * dq)
    g[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (dq * dq)
    return g


# -- support handling ----------------------------------------------------------


def node_threshold(density: np.ndarray, eps_n: float | None) -> float:
    return EPS_REL * float(np.max(density)) if eps_n is None else float(eps_n)


def support_mask(grid: Grid1D, density: np.ndarray, eps_n: float, support=None) -> np.ndarray:
    """Boolean mask of the support; raise NodeError on a hole inside it.

    Without an explicit ``(q_lo, q_hi)`` interval the support is the index
    hull of all points with ``density >= eps_n``.
    """
    above = density >= eps_n
    if not above.any():
        raise NodeError(f"density below eps_n={eps_n:.3g} everywhere")
    if support is None:
        idx = np.flatnonzero(above)
        mask = np.zeros_like(above)
        mask[idx[0]: idx[-1] + 1] = True
    else:
        lo, hi = support
        q = grid.points
        mask = (q >= lo) & (q <= hi)
        if not mask.any():
            raise ValueError(f"support [{lo}, {hi}] contains no grid point")
    holes = mask & ~above
    if holes.any():
        q_bad = grid.points[np.flatnonzero(holes)[0]]
        raise NodeError(f"node inside support at q={q_bad:.6g} (density < {eps_n:.3g})")
    return mask


def _extend(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Constant continuation of ``values`` outside the contiguous ``mask``."""
    idx = np.flatnonzero(mask)
    out = values.copy()
    out[: idx[0]] = values[idx[0]]
    out[idx[-1] + 1:] = values[idx[-1]]
    return out


# -- Madelung transforms --------------------------------------------------------


def decompose(psi: WaveFunction, eps_n: float | None = None, c: PhysicalConstants = UNITS,
              support=None, phase_reference: str = "zero") -> HydroFields:
    """Split ``psi = sqrt(n) exp(iS/hbar)`` into density and action.

    The phase is unwrapped along the grid inside the support.  With
    ``phase_reference="zero"`` the action vanishes at the density maximum;
    with ``"principal"`` it keeps the principal value of ``arg psi`` there.
    """
    n = psi.density
    eps = node_threshold(n, eps_n)
    mask = support_mask(psi.grid, n, eps, support)
    idx = np.flatnonzero(mask)
    phase = np.zeros(n.shape)
    phase[idx] = np.unwrap(np.angle(psi.values[idx]))
    i_max = idx[np.argmax(n[idx])]
    offset = phase[i_max]
    if phase_reference == "principal":
        offset -= np.angle(psi.values[i_max])
    elif phase_reference != "zero":
        raise ValueError(f"unknown phase_reference {phase_reference!r}")
    action = c.hbar * _extend(phase - offset, mask)
    return HydroFields(psi.grid, n, action, mask)


def compose(fields: HydroFields, c: PhysicalConstants = UNITS) -> WaveFunction:
    psi = np.sqrt(fields.density) * np.exp(1j * fields.action / c.hbar)
    return WaveFunction(fields.grid, psi).normalized()


def quantum_potential(density: RealField, c: PhysicalConstants = UNITS, eps_n: float | None = None,
                      support=None) -> RealField:
    """Quantum potential ``-(hbar^2/2m) n^{-1/2} d^2 n^{1/2}/dq^2``."""
    n = density.values
    if np.any(n < 0):
        raise ValueError("density must be nonnegative")
    eps = node_threshold(n, eps_n)
    mask = support_mask(density.grid, n, eps, support)
    amp = np.sqrt(n)
    vq = np.zeros_like(n)
    vq[mask] = -(c.hbar ** 2 / (2.0 * c.mass)) * d2(amp, density.grid.dq)[mask] / amp[mask]
    return RealField(density.grid, _extend(vq, mask), mask)


def velocity_field(fields: HydroFields, c: PhysicalConstants = UNITS) -> RealField:
    """Madelung velocity ``(1/m) dS/dq``."""
    v = d1(fields.action, fields.grid.dq) / c.mass
    return RealField(fields.grid, _extend(v, fields.support), fields.support)


# -- observables ----------------------------------------------------------------


def kinetic_energy(psi: WaveFunction, c: PhysicalConstants = UNITS, method: str = "spectral") -> float:
    """Kinetic energy per unit norm.

    ``"stencil"`` applies the compact fourth-order Laplacian with zero
    Dirichlet values on the edge nodes, i.e. exactly the operator the
    Crank-Nicolson propagator conserves.
    """
    v = psi.values
    if method == "spectral":
        k = 2.0 * np.pi * np.fft.fftfreq(v.size, d=psi.grid.dq)
        w = np.abs(np.fft.fft(v)) ** 2
        return float(c.hbar ** 2 / (2.0 * c.mass) * np.sum(w * k * k) / np.sum(w))
    if method == "stencil":
        u = v[1:-1]
        ku = 2.0 * u
        ku[1:] -= u[:-1]
        ku[:-1] -= u[1:]
        ab = np.empty((3, u.size))
        ab[0, :] = ab[2, :] = M_OFF
        ab[1, :] = M_DIAG
        tu = solve_banded((1, 1), ab, ku, check_finite=False)
        num = np.real(np.vdot(u, tu))
        return float(c.hbar ** 2 / (2.0 * c.mass * psi.grid.dq ** 2) * num / np.vdot(u, u).real)
    raise ValueError(f"unknown kinetic method {method!r}")


def expectation(psi: WaveFunction, obs: str, potential=None, c: PhysicalConstants = UNITS,
                kinetic: str = "spectral") -> float:
    """Expectation of ``"position"``, ``"momentum"`` or ``"energy"``.

    ``potential`` (array or RealField on the grid) is needed for the energy.
    """
    grid = psi.grid
    norm2 = grid.integrate(psi.density)
    if obs == "position":
        return grid.integrate(grid.points * psi.density) / norm2
    if obs == "momentum":
        dpsi = d1(psi.values, grid.dq)
        return float(np.real(np.trapezoid(np.conj(psi.values) * (-1j * c.hbar) * dpsi, dx=grid.dq))) / norm2
    if obs == "energy":
        if potential is None:
            raise ValueError("energy needs a potential")
        vals = potential.values if isinstance(potential, RealField) else np.asarray(potential, float)
        if kinetic == "stencil":
            # the stencil operator treats the two edge nodes as Dirichlet zeros
            dens = psi.density.copy()
            dens[0] = dens[-1] = 0.0
            pot = float(np.sum(vals * dens) / np.sum(dens))
        else:
            pot = grid.integrate(vals * psi.density) / norm2
        return kinetic_energy(psi, c, kinetic) + pot
    raise ValueError(f"unknown observable {obs!r}")


# -- reference states --------------------------------------------------------------


def gaussian_packet(grid: Grid1D, center: float = 0.0, width: float = 1.0, momentum: float = 0.0,
                    c: PhysicalConstants = UNITS) -> WaveFunction:
    """Normalised Gaussian; ``width`` is the standard deviation of ``|psi|^2``."""
    q = grid.points
    psi = np.exp(-((q - center) ** 2) / (4.0 * width ** 2) + 1j * momentum * q / c.hbar)
    return WaveFunction(grid, psi).normalized()
