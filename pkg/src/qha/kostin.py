"""Brownian harmonic oscillator in the Schrodinger-Langevin (Kostin) form.

The wave function evolves in ``V_harm + (beta/m) S - q F(t) + C(t)`` where
``S`` is its own action.  ``C(t) = -(beta/m) <S>`` removes the mean of the
friction term so that it carries no net energy shift.  Because the friction
potential is linear in ``S`` and the oscillator is harmonic, ``<q>`` and
``<p>`` obey the classical damped, driven equations exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import UNITS, PhysicalConstants, RealField, WaveFunction, decompose, expectation
from .schrodinger import PotentialSpec, cn_propagate


@dataclass(frozen=True)
class ForcingSpec:
    """External force ``F(t)``.

    ``sinusoidal`` is ``amplitude * cos(frequency * t + phase)``.
    ``seeded_kicks`` holds a Gaussian value of variance ``kick_variance`` on
    each interval ``[k, k+1) * kick_interval``; value ``k`` depends only on
    ``(seed, k)``, so any run can look it up at any time.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    kick_variance: float = 0.0
    kick_interval: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "sinusoidal", "seeded_kicks"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if not np.isfinite([self.amplitude, self.frequency, self.phase, self.kick_variance]).all():
            raise ValueError("forcing parameters must be finite")
        if not self.kick_interval > 0:
            raise ValueError("kick_interval must be positive")
        if self.kick_variance < 0:
            raise ValueError("kick_variance must be nonnegative")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def sinusoidal(cls, amplitude, frequency, phase=0.0):
        return cls("sinusoidal", amplitude=amplitude, frequency=frequency, phase=phase)

    @classmethod
    def seeded_kicks(cls, kick_variance, kick_interval, seed=0):
        return cls("seeded_kicks", kick_variance=kick_variance, kick_interval=kick_interval, seed=seed)

    @property
    def piecewise(self) -> bool:
        return self.kind == "seeded_kicks"

    def kick(self, k: int) -> float:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, int(k)])))
        return float(np.sqrt(self.kick_variance) * rng.standard_normal())

    def __call__(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "sinusoidal":
            return float(self.amplitude * np.cos(self.frequency * t + self.phase))
        return self.kick(int(np.floor(t / self.kick_interval)))


@dataclass(frozen=True)
class KostinParams:
    beta: float = 0.0
    omega: float = 1.0
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    c: PhysicalConstants = UNITS

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    @property
    def gamma(self) -> float:
        """Damping rate ``beta / m``."""
        return self.beta / self.c.mass

    @property
    def potential(self) -> PotentialSpec:
        """Harmonic potential with the external force, as the linear solver sees it."""
        forcing = None if self.forcing.kind == "zero" else self.forcing
        return PotentialSpec.harmonic(self.omega, forcing=forcing)


@dataclass
class BhoResult:
    times: list = field(default_factory=list)
    mean_q: list = field(default_factory=list)
    mean_p: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    c_t: list = field(default_factory=list)
    final: WaveFunction | None = None


def norm_constant(psi: WaveFunction, params: KostinParams, eps_n: float | None = None) -> float:
    """``C = -(beta/m) <S>``, the constant giving the friction term zero mean."""
    if params.beta == 0:
        return 0.0
    fields = decompose(psi, eps_n, params.c, phase_reference="principal")
    mean_s = psi.grid.integrate(fields.density * fields.action) / psi.grid.integrate(fields.density)
    return -params.gamma * mean_s


def friction_potential(psi: WaveFunction, params: KostinParams, t: float = 0.0,
                       eps_n: float | None = None) -> RealField:
    """``(beta/m) S - q F(t) + C(t)`` for the current state."""
    grid = psi.grid
    field_ = -grid.points * params.forcing(t)
    if params.beta > 0:
        fields = decompose(psi, eps_n, params.c, phase_reference="principal")
        mean_s = grid.integrate(fields.density * fields.action) / grid.integrate(fields.density)
        field_ = params.gamma * (fields.action - mean_s) + field_
    return RealField(grid, field_)


def _total_potential(psi, params, t, eps_n):
    static = PotentialSpec.harmonic(params.omega).static_values(psi.grid, params.c)
    return static + friction_potential(psi, params, t, eps_n).values


def kostin_step(psi: WaveFunction, params: KostinParams, t: float, dt: float,
                eps_n: float | None = None) -> WaveFunction:
    """Advance from ``t`` to ``t + dt``.

    The predictor uses the friction potential of ``psi``; the corrector
    recomputes it from the normalised average of ``psi`` and the predicted
    state.  ``F`` is sampled at the midpoint of the step, as in ``cn_step``.
    """
    t_mid = t + 0.5 * dt
    v = _total_potential(psi, params, t_mid, eps_n)
    if params.beta == 0:
        return cn_propagate(psi, v, dt, params.c)
    pred = cn_propagate(psi, v, dt, params.c)
    mid = WaveFunction(psi.grid, 0.5 * (psi.values + pred.values)).normalized()
    return cn_propagate(psi, _total_potential(mid, params, t_mid, eps_n), dt, params.c)


def run_bho(psi0: WaveFunction, params: KostinParams, dt: float, n_steps: int,
            snapshot_every: int = 1, eps_n: float | None = None, t0: float = 0.0) -> BhoResult:
    """Repeated ``kostin_step``; energy is the oscillator energy without the external force."""
    if n_steps < 0 or snapshot_every < 1:
        raise ValueError("need n_steps >= 0 and snapshot_every >= 1")
    c = params.c
    static = PotentialSpec.harmonic(params.omega).static_values(psi0.grid, c)
    res = BhoResult()

    def record(t, psi):
        res.times.append(t)
        res.mean_q.append(expectation(psi, "position", c=c))
        res.mean_p.append(expectation(psi, "momentum", c=c))
        res.energy.append(expectation(psi, "energy", static, c=c, kinetic="stencil"))
        res.norm.append(psi.norm())
        res.c_t.append(norm_constant(psi, params, eps_n))

    psi = psi0
    record(t0, psi)
    for k in range(1, n_steps + 1):
        psi = kostin_step(psi, params, t0 + (k - 1) * dt, dt, eps_n)
        if k % snapshot_every == 0 or k == n_steps:
            record(t0 + k * dt, psi)
    res.final = psi
    return res


def ehrenfest_oracle(params: KostinParams, q0: float, p0: float, dt: float, n_steps: int,
                     t0: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 for ``q' = p/m``, ``p' = -m omega^2 q - (beta/m) p + F(t)``.

    Piecewise-constant kicks are held at their midpoint value over each step,
    exactly as the quantum propagator sees them.
    """
    m, w2, g = params.c.mass, params.omega ** 2, params.gamma
    forcing = params.forcing

    def rhs(y, f):
        return np.array([y[1] / m, -m * w2 * y[0] - g * y[1] + f])

    times = t0 + dt * np.arange(n_steps + 1)
    out = np.empty((n_steps + 1, 2))
    y = np.array([q0, p0], float)
    out[0] = y
    for k in range(n_steps):
        t = times[k]
        if forcing.piecewise:
            f0 = fm = f1 = forcing(t + 0.5 * dt)
        else:
            f0, fm, f1 = forcing(t), forcing(t + 0.5 * dt), forcing(t + dt)
        k1 = rhs(y, f0)
        k2 = rhs(y + 0.5 * dt * k1, fm)
        k3 = rhs(y + 0.5 * dt * k2, fm)
        k4 = rhs(y + dt * k3, f1)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return times, out[:, 0], out[:, 1]
