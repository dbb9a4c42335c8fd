import numpy as np
import pytest

from qha.fields import WaveFunction, expectation, gaussian_packet
from qha.kostin import (ForcingSpec, KostinParams, ehrenfest_oracle, friction_potential, kostin_step,
                        norm_constant, run_bho)
from qha.schrodinger import PotentialSpec, cn_step, coherent_state, ground_state

TWO_PI = 2.0 * np.pi


def _packet(grid, center, k):
    return WaveFunction(grid, gaussian_packet(grid, center, 1.0).values * np.exp(1j * k * grid.points))


def test_forcing_kinds():
    assert ForcingSpec.zero()(3.0) == 0.0
    f = ForcingSpec.sinusoidal(2.0, 1.5, 0.3)
    assert f(1.0) == pytest.approx(2.0 * np.cos(1.8))
    kicks = ForcingSpec.seeded_kicks(0.25, 0.5, seed=3)
    assert kicks(0.1) == kicks(0.49) == kicks.kick(0)
    assert kicks(0.6) == kicks.kick(1)
    assert ForcingSpec.seeded_kicks(0.25, 0.5, seed=3).kick(7) == kicks.kick(7)
    with pytest.raises(ValueError):
        ForcingSpec("noise")
    with pytest.raises(ValueError):
        ForcingSpec.seeded_kicks(1.0, 0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        KostinParams(beta=-0.1)
    with pytest.raises(ValueError):
        KostinParams(omega=0.0)
    assert KostinParams(beta=0.4).gamma == pytest.approx(0.4)


def test_friction_vanishes_for_real_state(grid):
    psi = gaussian_packet(grid, 0.5, 1.0)
    assert np.max(np.abs(friction_potential(psi, KostinParams(beta=0.2)).values)) <= 1e-12
    assert np.max(np.abs(friction_potential(_packet(grid, 0.0, 1.0), KostinParams()).values)) == 0.0


def test_friction_field_is_centred(grid):
    psi = _packet(grid, 0.0, 1.0)
    field = friction_potential(psi, KostinParams(beta=0.2))
    mean_q = expectation(psi, "position")
    inside = np.abs(grid.points) < 6
    assert np.max(np.abs(field.values[inside] - 0.2 * (grid.points[inside] - mean_q))) <= 1e-8
    assert abs(grid.integrate(psi.density * field.values)) <= 1e-8


def test_norm_constant_examples(grid):
    p = KostinParams(beta=0.2)
    assert norm_constant(gaussian_packet(grid, 0.0, 1.0), p) == 0.0
    assert abs(norm_constant(_packet(grid, 0.0, 1.0), p)) <= 1e-10
    assert norm_constant(_packet(grid, 1.0, 1.0), p) == pytest.approx(-0.2, abs=1e-8)


def test_beta_zero_reduces_to_linear_step(grid):
    psi = coherent_state(grid, 1.0, 1.0, 0.5)
    for forcing in (ForcingSpec.zero(), ForcingSpec.sinusoidal(0.3, 1.1)):
        params = KostinParams(forcing=forcing)
        a = kostin_step(psi, params, 0.4, 0.01)
        b = cn_step(psi, params.potential, 0.01, t=0.4)
        assert np.max(np.abs(a.values - b.values)) <= 1e-12


def test_ground_state_dissipation(grid):
    res = run_bho(ground_state(grid), KostinParams(beta=0.2), TWO_PI / 512, 512, snapshot_every=8)
    assert np.all(np.diff(res.energy) <= 1e-12)
    assert np.max(np.abs(res.final.density - ground_state(grid).density)) <= 1e-6


def test_damped_energy_decreases_and_norm_holds(grid):
    res = run_bho(coherent_state(grid, 1.0, 1.0, 0.0), KostinParams(beta=0.2), TWO_PI / 1024, 3 * 1024,
                  snapshot_every=32)
    assert np.all(np.diff(res.energy) <= 0.0)
    assert np.max(np.abs(np.array(res.norm) - 1.0)) <= 1e-8
    # only the excess over the zero-point energy decays, roughly as exp(-gamma t)
    excess = np.array(res.energy) - 0.5
    assert excess[-1] <= 2.0 * np.exp(-0.2 * res.times[-1]) * excess[0]


def test_norm_after_many_steps(grid):
    res = run_bho(coherent_state(grid, 1.0, 1.0, 0.0), KostinParams(beta=0.2), 0.005, 10_000,
                  snapshot_every=10_000)
    assert abs(res.norm[-1] - 1.0) <= 1e-8


def test_run_matches_ehrenfest(grid):
    dt, n = TWO_PI / 1024, 3 * 1024
    params = KostinParams(beta=0.2, forcing=ForcingSpec.sinusoidal(0.2, 1.3))
    res = run_bho(coherent_state(grid, 1.0, 1.0, 0.0), params, dt, n, snapshot_every=64)
    _, qc, _ = ehrenfest_oracle(params, 1.0, 0.0, dt, n)
    qc = qc[np.r_[np.arange(0, n + 1, 64)]]
    assert np.max(np.abs(np.array(res.mean_q) - qc)) <= 0.01


def test_oracle_undamped_analytic():
    t, q, p = ehrenfest_oracle(KostinParams(), 1.0, 0.5, 0.001, 6284)
    assert np.max(np.abs(q - (np.cos(t) + 0.5 * np.sin(t)))) <= 1e-8
    assert np.max(np.abs(p - (0.5 * np.cos(t) - np.sin(t)))) <= 1e-8


def test_oracle_damped_analytic():
    t, q, _ = ehrenfest_oracle(KostinParams(beta=0.2), 1.0, 0.0, 0.01, 3000)
    wd = np.sqrt(1.0 - 0.01)
    exact = np.exp(-0.1 * t) * (np.cos(wd * t) + 0.1 / wd * np.sin(wd * t))
    assert np.max(np.abs(q - exact)) <= 1e-6


def test_oracle_static_force_equilibrium():
    q_s = 0.7
    params = KostinParams(beta=1.0, forcing=ForcingSpec.sinusoidal(q_s, 0.0))
    _, q, p = ehrenfest_oracle(params, 0.0, 0.0, 0.01, 6000)
    assert q[-1] == pytest.approx(q_s, abs=1e-8)
    assert abs(p[-1]) <= 1e-8


def test_potential_reflects_forcing():
    assert KostinParams().potential.forcing is None
    f = ForcingSpec.sinusoidal(1.0, 1.0)
    assert KostinParams(forcing=f).potential.forcing is f
    assert KostinParams().potential.kind == PotentialSpec.harmonic().kind
