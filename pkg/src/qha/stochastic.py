"""Stochastic phase-space ensembles, cumulants and a grid Chapman-Kolmogorov oracle.

Samples ``(q, p)`` follow the Euler-Maruyama discretisation of

    dq = (p/m) dt,    dp = F(q) dt + sqrt(k_theta * d_pp) dW,

where ``F`` is the classical force plus, optionally, the quantum force of
the position marginal reconstructed by kernel density estimation.  Noise
enters the momentum block only; positions never receive a direct kick.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import InsufficientSamples, MassLossError, ResolutionError, SupportError
from .fields import UNITS, Grid1D, PhysicalConstants, RealField, d1, quantum_potential
from .hydro import ForceField, kde, silverman_bandwidth
from .schrodinger import PotentialSpec

MIN_PAIRS = 1000
TRUST_REL = 1e-2
STENCIL_REACH = 3


@dataclass(frozen=True)
class NoiseSpec:
    """Momentum-only white noise.

    ``k_theta`` is the fluctuation amplitude and ``d_pp`` the momentum
    migration coefficient; the momentum variance grows at rate
    ``k_theta * d_pp``.  With the default ``k_theta = 1``, ``d_pp`` is the
    diffusion coefficient itself.
    """

    k_theta: float = 1.0
    d_pp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.k_theta >= 0 and self.d_pp >= 0):
            raise ValueError("k_theta and d_pp must be nonnegative")

    @property
    def diffusion(self) -> float:
        return self.k_theta * self.d_pp

    @property
    def matrix(self) -> np.ndarray:
        """Phase-space diffusion tensor; only the momentum block is nonzero."""
        return np.array([[0.0, 0.0], [0.0, self.diffusion]])

    def increments(self, step: int, n: int) -> np.ndarray:
        """Standard normals for one step, keyed by ``(seed, step)``; entry i belongs to sample i."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, step])))
        return rng.standard_normal(n)


@dataclass(frozen=True, eq=False)
class PhaseSpaceEnsemble:
    q: np.ndarray
    p: np.ndarray
    weights: np.ndarray
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        q = np.array(self.q, dtype=float, ndmin=1)
        p = np.array(self.p, dtype=float, ndmin=1)
        w = np.array(self.weights, dtype=float, ndmin=1)
        if not (q.shape == p.shape == w.shape) or q.ndim != 1:
            raise ValueError("q, p and weights need equal 1-D shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        for name, arr in (("q", q), ("p", p), ("weights", w)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.q.size

    @classmethod
    def uniform(cls, q, p, time=0.0):
        q = np.asarray(q, float)
        return cls(q, p, np.full(q.size, 1.0 / q.size), time)

    @classmethod
    def gaussian(cls, n, mean_q=0.0, std_q=1.0, mean_p=0.0, std_p=0.0, seed=0):
        rng = np.random.default_rng(seed)
        q = mean_q + std_q * rng.standard_normal(n)
        p = mean_p + std_p * rng.standard_normal(n)
        return cls.uniform(q, p)

    def momentum_variance(self) -> float:
        mean = np.sum(self.weights * self.p)
        return float(np.sum(self.weights * (self.p - mean) ** 2))


def em_step(ens: PhaseSpaceEnsemble, force: ForceField, noise: NoiseSpec, dt: float,
            c: PhysicalConstants = UNITS) -> PhaseSpaceEnsemble:
    """One Euler-Maruyama step: drift the positions, then kick the momenta.

    The kick samples the (frozen) force at the drifted positions.  This
    semi-implicit ordering is stable for the stiff, dispersive quantum force
    of a kernel density estimate, where the fully explicit update is not.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    q = ens.q + ens.p / c.mass * dt
    lo, hi = force.support_interval
    outside = (q < lo) | (q > hi)
    if outside.any():
        raise SupportError(f"sample at q={q[outside][0]:.6g} outside force support [{lo:.6g}, {hi:.6g}]")
    p = ens.p + force(q) * dt
    if noise.diffusion > 0:
        p = p + np.sqrt(noise.diffusion * dt) * noise.increments(ens.step, len(ens))
    return PhaseSpaceEnsemble(q, p, ens.weights, ens.time + dt, ens.step + 1)


def estimate_marginal_density(ens: PhaseSpaceEnsemble, grid: Grid1D, bandwidth: float | None = None) -> RealField:
    """Position marginal by Gaussian KDE; momenta play no role."""
    h = silverman_bandwidth(ens.q, ens.weights) if bandwidth is None else bandwidth
    return kde(ens.q, ens.weights, grid, h)


def _continue_tails(force: np.ndarray, density: np.ndarray, x: np.ndarray, lo: int, hi: int) -> None:
    """Replace ``force`` outside ``[lo, hi]`` by straight lines leaving the end values.

    The slope is the density-weighted least-squares slope over ``[lo, hi]``,
    which is exact when the marginal is Gaussian.
    """
    sl = slice(lo, hi + 1)
    w = density[sl]
    xm = np.sum(w * x[sl]) / w.sum()
    fm = np.sum(w * force[sl]) / w.sum()
    slope = np.sum(w * (x[sl] - xm) * (force[sl] - fm)) / np.sum(w * (x[sl] - xm) ** 2)
    force[:lo] = force[lo] + slope * (x[:lo] - x[lo])
    force[hi + 1:] = force[hi] + slope * (x[hi + 1:] - x[hi])


def ensemble_force(ens: PhaseSpaceEnsemble, V: PotentialSpec, grid: Grid1D, c: PhysicalConstants = UNITS,
                   bandwidth: float | None = None, quantum: bool = True,
                   eps_n: float | None = None, trust: float = TRUST_REL) -> ForceField:
    """Classical force plus the quantum force of the ensemble's own marginal.

    The quantum force is only trusted where the KDE marginal exceeds
    ``trust * max``; a handful of tail samples cannot resolve a second
    derivative, and letting them feel the raw estimate makes the loop
    unstable.  Beyond that region the force is continued linearly.
    ``bandwidth=None`` uses the normal-reference rule for second derivatives.
    """
    if ens.q.min() < grid.q_min or ens.q.max() > grid.q_max:
        raise SupportError(f"ensemble spans [{ens.q.min():.6g}, {ens.q.max():.6g}], outside the grid")
    classical = -d1(V.values(grid, ens.time, c), grid.dq)
    if not quantum:
        return ForceField(grid, classical, np.zeros(grid.n_points))
    h = silverman_bandwidth(ens.q, ens.weights, derivative=2) if bandwidth is None else bandwidth
    mean = np.sum(ens.weights * ens.q)
    var = np.sum(ens.weights * (ens.q - mean) ** 2)
    shrunk = mean + (ens.q - mean) * np.sqrt(var / (var + h * h))
    n = kde(shrunk, ens.weights, grid, h).values
    idx = np.flatnonzero(n >= trust * n.max())
    lo, hi = idx[0], idx[-1]
    vq = quantum_potential(RealField(grid, n), c, eps_n, support=(grid.points[lo], grid.points[hi]))
    fq = -d1(vq.values, grid.dq)
    # the stencil straddles the hull edge for the outer two nodes
    lo, hi = lo + STENCIL_REACH, hi - STENCIL_REACH
    if hi - lo < 4:
        raise SupportError("ensemble marginal too narrow for the grid spacing")
    _continue_tails(fq, n, grid.points, lo, hi)
    return ForceField(grid, classical, fq)


def self_consistent_evolve(ens0: PhaseSpaceEnsemble, V: PotentialSpec, noise: NoiseSpec, dt: float,
                           n_steps: int, grid: Grid1D, bandwidth: float | None = None,
                           quantum_force_on: bool = True, c: PhysicalConstants = UNITS,
                           snapshot_every: int = 1, eps_n: float | None = None) -> list[PhaseSpaceEnsemble]:
    """Rebuild the force from the current ensemble before every step.

    ``bandwidth=None`` re-derives the bandwidth from the ensemble at each step.
    """
    snaps = [ens0]
    ens = ens0
    for k in range(1, n_steps + 1):
        force = ensemble_force(ens, V, grid, c, bandwidth, quantum_force_on, eps_n)
        ens = em_step(ens, force, noise, dt, c)
        if k % snapshot_every == 0 or k == n_steps:
            snaps.append(ens)
    return snaps


# -- cumulants -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CumulantEstimate:
    order: int
    lag: float
    value: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        if self.order < 1 or not self.lag > 0 or np.any(np.asarray(self.stderr) < 0):
            raise ValueError("need order >= 1, lag > 0, stderr >= 0")

    def within(self, target, n_se: float = 3.0) -> np.ndarray:
        return np.abs(self.value - target) <= n_se * self.stderr


def _central_moment(d: np.ndarray, order: int, axis=0) -> np.ndarray:
    if order == 1:
        return d.mean(axis=axis)
    dev = d - d.mean(axis=axis, keepdims=True)
    return (dev ** order).mean(axis=axis)


def estimate_cumulants(step_pairs, lag: float, order: int, n_boot: int = 200, seed: int = 0) -> CumulantEstimate:
    """Lag-normalised moment of increments ``(x_{t+lag} - x_t)``.

    ``step_pairs`` is ``(x_t, x_next)`` with arrays of shape ``(N,)`` or
    ``(N, d)``.  Order 1 is the mean, orders 2 and 3 the central moments,
    each divided by ``lag``.  The standard error is a seeded bootstrap.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    if not lag > 0:
        raise ValueError("lag must be positive")
    x0, x1 = (np.asarray(a, float) for a in step_pairs)
    if x0.shape != x1.shape:
        raise ValueError("paired arrays differ in shape")
    if x0.shape[0] < MIN_PAIRS:
        raise InsufficientSamples(f"{x0.shape[0]} pairs, need at least {MIN_PAIRS}")
    inc = (x1 - x0).reshape(x0.shape[0], -1)
    value = _central_moment(inc, order) / lag
    rng = np.random.default_rng(seed)
    boot = np.empty((n_boot, inc.shape[1]))
    for b in range(n_boot):
        boot[b] = _central_moment(inc[rng.integers(0, inc.shape[0], inc.shape[0])], order) / lag
    stderr = boot.std(axis=0, ddof=1)
    if x0.ndim == 1:
        value, stderr = value[0], stderr[0]
    return CumulantEstimate(order, lag, np.asarray(value), np.asarray(stderr))


def increment_pairs(snapshots: list[PhaseSpaceEnsemble], stride: int = 1, component: str = "p"):
    """Pool ``(x_t, x_{t+stride})`` pairs over consecutive snapshots."""
    xs = [getattr(s, component) for s in snapshots]
    a = np.concatenate([xs[i] for i in range(len(xs) - stride)])
    b = np.concatenate([xs[i + stride] for i in range(len(xs) - stride)])
    return a, b


# -- grid Chapman-Kolmogorov propagation ------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridPdf:
    """Probability mass per node of a ``q x p`` mesh (axis 0 is ``q``)."""

    q_grid: Grid1D
    p_grid: Grid1D
    mass: np.ndarray
    lost: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.mass, float)
        if m.shape != (self.q_grid.n_points, self.p_grid.n_points):
            raise ValueError("mass array does not match the mesh")
        if np.any(m < 0):
            raise ValueError("mass must be nonnegative")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError(f"total mass {m.sum()!r} differs from 1")
        object.__setattr__(self, "mass", m)

    @classmethod
    def gaussian(cls, q_grid, p_grid, mean_q=0.0, std_q=1.0, mean_p=0.0, std_p=0.1):
        gq = np.exp(-0.5 * ((q_grid.points - mean_q) / std_q) ** 2)
        gp = np.exp(-0.5 * ((p_grid.points - mean_p) / std_p) ** 2)
        m = np.outer(gq, gp)
        return cls(q_grid, p_grid, m / m.sum())

    @classmethod
    def from_marginal(cls, q_grid, p_grid, q_density, p0=0.0):
        """``n(q) delta(p - p0(q))``; off-node momenta are split between the two nearest nodes."""
        y = (np.broadcast_to(np.asarray(p0, float), (q_grid.n_points,)) - p_grid.q_min) / p_grid.dq
        if np.any(y < 0) or np.any(y > p_grid.n_points - 1):
            raise ValueError("initial momenta fall outside the momentum mesh")
        j = np.minimum(np.floor(y).astype(int), p_grid.n_points - 2)
        f = y - j
        rows = np.arange(q_grid.n_points)
        dens = np.asarray(q_density, float)
        m = np.zeros((q_grid.n_points, p_grid.n_points))
        m[rows, j] += dens * (1.0 - f)
        m[rows, j + 1] += dens * f
        return cls(q_grid, p_grid, m / m.sum())

    def q_marginal(self) -> RealField:
        return RealField(self.q_grid, self.mass.sum(axis=1) / self.q_grid.dq)

    def p_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0) / self.p_grid.dq

    def moments(self, axis: str = "p") -> tuple[float, float]:
        x = self.p_grid.points if axis == "p" else self.q_grid.points
        w = self.mass.sum(axis=0 if axis == "p" else 1)
        mean = float(np.sum(w * x))
        return mean, float(np.sum(w * (x - mean) ** 2))


class _Deposit:
    """Cloud-in-cell deposit of every node's mass at a fixed mapped point."""

    def __init__(self, q_grid: Grid1D, p_grid: Grid1D, q_new: np.ndarray, p_new: np.ndarray):
        x = (q_new - q_grid.q_min) / q_grid.dq
        y = (p_new - p_grid.q_min) / p_grid.dq
        i0 = np.floor(x).astype(int)
        j0 = np.floor(y).astype(int)
        fx, fy = x - i0, y - j0
        nq, n_p = q_grid.n_points, p_grid.n_points
        self.shape = (nq, n_p)
        self.parts = []
        for di, wx in ((0, 1.0 - fx), (1, fx)):
            for dj, wy in ((0, 1.0 - fy), (1, fy)):
                i, j = i0 + di, j0 + dj
                ok = (i >= 0) & (i < nq) & (j >= 0) & (j < n_p)
                self.parts.append(((i * n_p + j)[ok], (wx * wy)[ok], ok))

    def __call__(self, mass: np.ndarray) -> tuple[np.ndarray, float]:
        size = self.shape[0] * self.shape[1]
        out = np.zeros(size)
        for flat, w, ok in self.parts:
            out += np.bincount(flat, mass[ok] * w, size)
        return out.reshape(self.shape), float(mass.sum() - out.sum())


def ck_propagate(pdf: GridPdf, force, noise: NoiseSpec, dt: float, n_steps: int,
                 c: PhysicalConstants = UNITS, max_loss: float = 1e-6) -> GridPdf:
    """Discrete Chapman-Kolmogorov propagation with the Gaussian Euler kernel.

    Each step moves the mass of node ``(q, p)`` to ``(q + p dt/m, p + F(q) dt)``
    and then convolves the momentum axis with a Gaussian of variance
    ``k_theta d_pp dt``.  ``force`` is a ForceField or a callable ``F(q)``.
    Mass pushed off the mesh is accumulated in ``GridPdf.lost``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    qg, pg = pdf.q_grid, pdf.p_grid
    width = np.sqrt(noise.diffusion * dt)
    if noise.diffusion > 0 and width < 2.0 * pg.dq:
        raise ResolutionError(f"kernel width {width:.4g} < 2 momentum cells ({2.0 * pg.dq:.4g})")
    kernel = None
    if noise.diffusion > 0:
        half = int(np.ceil(8.0 * width / pg.dq))
        k = np.exp(-0.5 * (np.arange(-half, half + 1) * pg.dq / width) ** 2)
        kernel = k / k.sum()
    fq = np.asarray(force(qg.points), float)
    q_new = np.broadcast_to(qg.points[:, None] + pg.points[None, :] * dt / c.mass, pdf.mass.shape)
    p_new = np.broadcast_to(pg.points[None, :] + fq[:, None] * dt, pdf.mass.shape)
    deposit = _Deposit(qg, pg, q_new, p_new)

    lost = pdf.lost
    mass = pdf.mass
    for _ in range(n_steps):
        mass, leak = deposit(mass)
        lost += leak
        if kernel is not None:
            before = mass.sum()
            mass = convolve1d(mass, kernel, axis=1, mode="constant", cval=0.0)
            lost += before - mass.sum()
        if lost > max_loss:
            raise MassLossError(f"{lost:.3g} probability mass left the mesh (limit {max_loss:g})")
        mass = mass / mass.sum()
    return GridPdf(qg, pg, mass, lost)


# -- deterministic limit ---------------------------------------------------------------


@dataclass
class LimitReport:
    """Conditional momentum spread per noise amplitude and its log-log slope."""

    scenario: str
    thetas: list
    spreads: list
    slope: float
    monotone: bool
    slope_tolerance: float = 0.15

    @property
    def passed(self) -> bool:
        return self.monotone and abs(self.slope - 0.5) <= self.slope_tolerance


def conditional_spread(ens: PhaseSpaceEnsemble, reference: PhaseSpaceEnsemble) -> float:
    """Weighted rms of ``p - P(q)`` where ``P`` interpolates the reference momentum curve.

    The reference is a noiseless run whose momenta lie on ``p = dS/dq``.
    """
    order = np.argsort(reference.q, kind="stable")
    curve = np.interp(ens.q, reference.q[order], reference.p[order])
    return float(np.sqrt(np.sum(ens.weights * (ens.p - curve) ** 2)))


def _limit_setup(scenario: str, n_samples: int, grid: Grid1D, c: PhysicalConstants):
    from .fields import gaussian_packet
    from .hydro import delta_ansatz_ensemble
    from .schrodinger import coherent_state

    if scenario == "free":
        psi, V, quantum = gaussian_packet(grid, 0.0, 1.0, 0.0, c), PotentialSpec("free"), False
    elif scenario == "harmonic":
        psi, V, quantum = coherent_state(grid, 1.0, 1.0, 0.0, 0.0, c), PotentialSpec.harmonic(1.0), True
    else:
        raise ValueError(f"unknown deterministic-limit scenario {scenario!r}")
    tr = delta_ansatz_ensemble(psi, n_samples, c, seed=None)
    return PhaseSpaceEnsemble(tr.positions, tr.momenta, tr.weights), V, quantum


def deterministic_limit_check(scenario: str, theta_sequence, n_samples: int = 10_000,
                              t_final: float = 1.0, dt: float = 0.01, d_pp: float = 1.0,
                              seed: int = 0, grid: Grid1D | None = None,
                              bandwidth: float | None = None, c: PhysicalConstants = UNITS,
                              slope_tolerance: float = 0.15) -> LimitReport:
    """Shrink ``k_theta`` along ``theta_sequence`` and watch the momenta collapse onto ``dS/dq``.

    ``"free"`` is free Langevin dynamics without quantum force started from a
    real Gaussian; ``"harmonic"`` is the self-consistent loop started from a
    coherent state.  Every run reuses the same initial samples and noise
    stream, so the spread is measured against a noiseless run of the same
    ensemble and differences between runs are due to ``k_theta`` alone.
    """
    thetas = [float(t) for t in theta_sequence]
    if len(thetas) < 2 or any(b >= a for a, b in zip(thetas, thetas[1:])) or thetas[-1] < 0:
        raise ValueError("theta_sequence must be strictly decreasing and nonnegative")
    grid = grid or Grid1D(-12.0, 12.0, 1024)
    ens0, V, quantum = _limit_setup(scenario, n_samples, grid, c)
    n_steps = int(round(t_final / dt))

    def final(theta):
        noise = NoiseSpec(k_theta=theta, d_pp=d_pp, seed=seed)
        return self_consistent_evolve(ens0, V, noise, dt, n_steps, grid, bandwidth, quantum, c,
                                      snapshot_every=n_steps)[-1]

    reference = final(0.0)
    spreads = [0.0 if th == 0 else conditional_spread(final(th), reference) for th in thetas]
    pos = [(th, s) for th, s in zip(thetas, spreads) if th > 0]
    if len(pos) >= 2 and all(s > 0 for _, s in pos):
        slope = float(np.polyfit(np.log([t for t, _ in pos]), np.log([s for _, s in pos]), 1)[0])
    else:
        slope = float("nan")
    monotone = all(b < a for a, b in zip(spreads, spreads[1:]))
    return LimitReport(scenario, thetas, spreads, slope, monotone, slope_tolerance)
