import numpy as np
import pytest

from qha.errors import SupportError
from qha.fields import Grid1D, HydroFields, RealField, decompose, gaussian_packet
from qha.hydro import (ForceField, TrajectoryEnsemble, bohmian_advect_step, build_force_field,
                       delta_ansatz_ensemble, density_from_trajectories, inverse_cdf_positions, kde,
                       l1_distance, newtonian_step, silverman_bandwidth, synthetic_qha,
                       wave_particle_residual)
from qha.schrodinger import PotentialSpec, classical_orbit, coherent_state, ground_state

TWO_PI = 2.0 * np.pi


def _uniform_ensemble(q, p):
    q = np.asarray(q, float)
    return TrajectoryEnsemble(q, np.broadcast_to(p, q.shape).copy(), np.full(q.size, 1.0 / q.size))


def test_ensemble_validation():
    with pytest.raises(ValueError):
        TrajectoryEnsemble([0.0, 1.0], [0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        TrajectoryEnsemble([0.0, 1.0], [0.0, 0.0], [0.6, 0.6])
    ens = _uniform_ensemble([0.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        ens.positions[0] = 3.0


def test_free_uniform_forces_vanish():
    g = Grid1D(-5.0, 5.0, 101)
    f = build_force_field(PotentialSpec(), RealField(g, np.ones(g.n_points)))
    assert np.max(np.abs(f.classical_force)) == 0.0
    assert np.max(np.abs(f.quantum_force[f.support])) <= 1e-10


def test_ground_state_forces_cancel(fine_grid):
    f = build_force_field(PotentialSpec.harmonic(), RealField(fine_grid, ground_state(fine_grid).density))
    assert np.max(np.abs(f.total[f.support])) <= 1e-5


def test_free_gaussian_quantum_force(grid):
    n = np.exp(-grid.points ** 2 / 2.0)
    f = build_force_field(PotentialSpec(), RealField(grid, n))
    inside = f.support & (np.abs(grid.points) < 5)
    assert np.max(np.abs(f.quantum_force[inside] - grid.points[inside] / 4)) <= 1e-4


def test_plane_wave_advection():
    g = Grid1D(-20.0, 20.0, 401)
    fields = HydroFields(g, np.ones(g.n_points), 2.0 * g.points)
    ens = _uniform_ensemble([-1.0, 0.0, 0.5], 0.0)
    for _ in range(100):
        ens = bohmian_advect_step(ens, fields, 0.01)
    assert np.allclose(ens.positions, np.array([-1.0, 0.0, 0.5]) + 2.0, atol=1e-12)
    assert np.allclose(ens.momenta, 2.0, atol=1e-12)


def test_ground_state_advection_static(grid):
    fields = decompose(ground_state(grid))
    ens0 = delta_ansatz_ensemble(ground_state(grid), 200)
    ens = ens0
    for _ in range(50):
        ens = bohmian_advect_step(ens, fields, 0.01)
    assert np.array_equal(ens.positions, ens0.positions)


def test_advect_leaving_support_raises():
    g = Grid1D(-2.0, 2.0, 41)
    fields = HydroFields(g, np.ones(g.n_points), 2.0 * g.points)
    with pytest.raises(SupportError):
        bohmian_advect_step(_uniform_ensemble([1.9], 0.0), fields, 0.1)


def test_uniform_newtonian_motion():
    g = Grid1D(-10.0, 10.0, 101)
    zero = ForceField(g, np.zeros(g.n_points), np.zeros(g.n_points))
    ens = _uniform_ensemble([-1.0, 2.0], 1.0)
    for _ in range(100):
        ens = newtonian_step(ens, zero, 0.01)
    assert np.allclose(ens.positions, [0.0, 3.0], atol=1e-12)


def test_ground_state_newtonian_static(fine_grid):
    psi = ground_state(fine_grid)
    f = build_force_field(PotentialSpec.harmonic(), RealField(fine_grid, psi.density))
    ens0 = delta_ansatz_ensemble(psi, 500, seed=None)
    ens = ens0
    for _ in range(100):
        ens = newtonian_step(ens, f, 0.001)
    assert np.max(np.abs(ens.positions - ens0.positions)) <= 1e-8


def test_weights_never_change(grid):
    psi = coherent_state(grid, 1.0, 1.0, 0.0)
    ens0 = delta_ansatz_ensemble(psi, 300)
    f = build_force_field(PotentialSpec.harmonic(), RealField(grid, psi.density))
    ens = newtonian_step(ens0, f, 0.01)
    ens = bohmian_advect_step(ens, decompose(psi), 0.01)
    assert np.array_equal(ens.weights, ens0.weights)
    assert abs(ens.weights.sum() - 1.0) <= 1e-12


def test_residual_zero_then_perturbed(grid):
    psi = coherent_state(grid, 1.0, 0.5, 1.0)
    fields = decompose(psi)
    ens = delta_ansatz_ensemble(psi, 500)
    assert wave_particle_residual(ens, fields) <= 1e-10
    bumped = ens.replace(momenta=ens.momenta + 0.1)
    assert wave_particle_residual(bumped, fields) == pytest.approx(0.1, abs=1e-12)


def test_kde_single_sample_bump():
    g = Grid1D(-5.0, 5.0, 201)
    est = kde([0.0], [1.0], g, 0.5)
    assert g.points[np.argmax(est.values)] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(est.values, est.values[::-1], atol=1e-14)
    assert g.integrate(est.values) == pytest.approx(1.0, abs=1e-10)


def test_kde_gaussian_l1(grid):
    q = np.random.default_rng(3).standard_normal(10_000)
    ens = _uniform_ensemble(q, 0.0)
    est = density_from_trajectories(ens, grid, silverman_bandwidth(q))
    truth = RealField(grid, np.exp(-grid.points ** 2 / 2) / np.sqrt(2 * np.pi))
    assert l1_distance(est, truth) <= 0.05


def test_silverman_rule():
    q = np.random.default_rng(0).standard_normal(1000)
    assert silverman_bandwidth(q) == pytest.approx(1.06 * np.std(q) * 1000 ** -0.2, rel=1e-12)
    assert silverman_bandwidth(q, derivative=2) > silverman_bandwidth(q)


def test_inverse_cdf_midpoints_symmetric(grid):
    q = inverse_cdf_positions(ground_state(grid).density, grid, 1001, seed=None)
    assert np.all(np.diff(q) > 0)
    assert np.allclose(q, -q[::-1], atol=1e-10)


def test_synthetic_equivalence_one_period():
    grid = Grid1D(-12.0, 12.0, 1024)
    spp = 1024
    run = synthetic_qha(coherent_state(grid, 1.0, 1.0, 0.0), PotentialSpec.harmonic(), TWO_PI / spp, spp,
                        1000, snapshot_every=64, density_every=spp)
    assert max(run.residual) <= 1e-3
    assert max(run.gap) <= 1e-3
    assert run.density_l1[-1] <= 0.1


def test_bohmian_rigid_translation():
    grid = Grid1D(-12.0, 12.0, 1024)
    spp, V = 4096, PotentialSpec.harmonic()
    psi0 = coherent_state(grid, 1.0, 1.0, 0.0)
    start = delta_ansatz_ensemble(psi0, 200)
    worst = []

    def probe(k, t, psi, bohm, newt):
        qc, _ = classical_orbit(1.0, 1.0, 0.0, t)
        worst.append(np.max(np.abs(bohm.positions - start.positions - (qc - 1.0))))

    synthetic_qha(psi0, V, TWO_PI / spp, spp, 200, snapshot_every=spp // 16, on_snapshot=probe)
    assert len(worst) == 17
    assert max(worst) <= 1e-3


def test_free_packet_newtonian_spreading():
    g = Grid1D(-15.0, 15.0, 1024)
    psi = gaussian_packet(g, 0.0, 1.0)
    run = synthetic_qha(psi, PotentialSpec(), 0.01, 100, 400, snapshot_every=100)
    # each trajectory scales with the width sigma(t) = sqrt(1 + t^2/4)
    ratio = run.newtonian.positions / delta_ansatz_ensemble(psi, 400).positions
    assert np.allclose(ratio, np.sqrt(1.25), atol=2e-3)
