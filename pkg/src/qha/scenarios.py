"""Run one configured scenario and write its CSV files plus ``manifest.json``."""

from __future__ import annotations

import datetime as _dt
import os

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .fields import Grid1D, PhysicalConstants, WaveFunction, decompose, expectation, gaussian_packet
from .hydro import delta_ansatz_ensemble, synthetic_qha
from .kostin import ForcingSpec, KostinParams, ehrenfest_oracle, run_bho
from .output import columns, write_csv, write_manifest
from .schrodinger import PotentialSpec, classical_orbit, coherent_state, evolve
from .stochastic import (GridPdf, NoiseSpec, PhaseSpaceEnsemble, ck_propagate, deterministic_limit_check,
                         estimate_marginal_density, self_consistent_evolve)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def build_grid(cfg: ScenarioConfig) -> Grid1D:
    return Grid1D(cfg["grid.q_min"], cfg["grid.q_max"], cfg["grid.n_points"])


def build_constants(cfg: ScenarioConfig) -> PhysicalConstants:
    return PhysicalConstants(cfg["constants.hbar"], cfg["constants.mass"])


def build_potential(cfg: ScenarioConfig, forcing=None) -> PotentialSpec:
    if cfg["potential.kind"] == "free":
        return PotentialSpec("free", forcing=forcing)
    return PotentialSpec.harmonic(cfg["potential.omega"], forcing=forcing)


def build_initial(cfg: ScenarioConfig, grid: Grid1D, c: PhysicalConstants) -> WaveFunction:
    if cfg["initial.kind"] == "coherent":
        return coherent_state(grid, cfg["potential.omega"], cfg["initial.q0"], cfg["initial.p0"], 0.0, c)
    return gaussian_packet(grid, cfg["initial.center"], cfg["initial.width"], cfg["initial.momentum"], c)


def _noise(cfg: ScenarioConfig) -> NoiseSpec:
    return NoiseSpec(cfg["noise.k_theta"], cfg["noise.d_pp"], cfg["noise.seed"])


def _steps(cfg):
    return cfg["run.dt"], cfg["run.n_steps"], cfg["run.snapshot_every"]


class _Assertions(list):
    def add(self, name, value, threshold, relation="<="):
        value = float(value)
        ok = {"<=": value <= threshold, ">=": value >= threshold}[relation] if np.isfinite(value) else False
        self.append({"name": name, "value": value, "relation": relation, "threshold": threshold,
                     "passed": bool(ok)})


def _density_rows(times, grid, densities):
    for t, n in zip(times, densities):
        for q, v in zip(grid.points, n):
            yield (t, q, v)


# -- individual scenarios --------------------------------------------------------------


def _run_schrodinger(cfg, out, asserts):
    grid, c = build_grid(cfg), build_constants(cfg)
    V = build_potential(cfg)
    dt, n, every = _steps(cfg)
    res = evolve(build_initial(cfg, grid, c), V, dt, n, every, c)
    files = [write_csv(os.path.join(out, "observables.csv"), ["t", "mean_q", "mean_p", "energy", "norm"],
                       columns(res.times, res.mean_q, res.mean_p, res.energy, res.norm))]
    rows = ((t, q, z.real, z.imag, abs(z) ** 2) for t, psi in zip(res.times, res.states)
            for q, z in zip(grid.points, psi.values))
    files.append(write_csv(os.path.join(out, "snapshots.csv"), ["t", "q", "re_psi", "im_psi", "density"], rows))
    asserts.add("norm_drift", np.max(np.abs(np.array(res.norm) - 1.0)), 1e-8)
    if cfg["initial.kind"] == "coherent":
        qc, _ = classical_orbit(cfg["potential.omega"], cfg["initial.q0"], cfg["initial.p0"],
                                np.array(res.times), c)
        asserts.add("coherent_tracking", np.max(np.abs(np.array(res.mean_q) - qc)), 1e-4)
    return files


def _run_trajectories(cfg, out, asserts):
    grid, c = build_grid(cfg), build_constants(cfg)
    V = build_potential(cfg)
    dt, n, every = _steps(cfg)
    obs, traj = [], []

    def record(k, t, psi, bohm, newt):
        obs.append((t, expectation(psi, "position", c=c), expectation(psi, "momentum", c=c),
                    expectation(psi, "energy", V.values(grid, t, c), c=c, kinetic="stencil"), psi.norm()))
        for i in range(len(newt)):
            traj.append((t, i, bohm.positions[i], bohm.momenta[i], newt.positions[i], newt.momenta[i]))

    run = synthetic_qha(build_initial(cfg, grid, c), V, dt, n, cfg["ensemble.size"], c, every,
                        cfg["ensemble.bandwidth"], cfg["noise.seed"], on_snapshot=record)
    files = [
        write_csv(os.path.join(out, "observables.csv"), ["t", "mean_q", "mean_p", "energy", "norm"], obs),
        write_csv(os.path.join(out, "diagnostics.csv"), ["t", "residual", "gap", "density_l1"],
                  columns(run.times, run.residual, run.gap, run.density_l1)),
        write_csv(os.path.join(out, "trajectories.csv"),
                  ["t", "index", "q_bohm", "p_bohm", "q_newton", "p_newton"], traj),
    ]
    asserts.add("max_residual", max(run.residual), 1e-3)
    asserts.add("max_gap", max(run.gap), 1e-3)
    asserts.add("density_l1", np.nanmax(run.density_l1), 0.05)
    return files


def _ensemble0(cfg, grid, c):
    psi = build_initial(cfg, grid, c)
    tr = delta_ansatz_ensemble(psi, cfg["ensemble.size"], c, seed=cfg["noise.seed"])
    return PhaseSpaceEnsemble(tr.positions, tr.momenta, tr.weights)


def _moments(ens):
    w = ens.weights
    mq, mp = np.sum(w * ens.q), np.sum(w * ens.p)
    return mq, mp, np.sum(w * (ens.q - mq) ** 2), np.sum(w * (ens.p - mp) ** 2)


def _run_ensemble(cfg, out, asserts):
    grid, c = build_grid(cfg), build_constants(cfg)
    V = build_potential(cfg)
    dt, n, every = _steps(cfg)
    ens0 = _ensemble0(cfg, grid, c)
    snaps = self_consistent_evolve(ens0, V, _noise(cfg), dt, n, grid, cfg["ensemble.bandwidth"],
                                   cfg["ensemble.quantum_force"], c, every)
    times = [s.time for s in snaps]
    h = cfg["ensemble.bandwidth"]
    dens = [estimate_marginal_density(s, grid, h).values for s in snaps]
    last = snaps[-1]
    files = [
        write_csv(os.path.join(out, "observables.csv"), ["t", "mean_q", "mean_p", "var_q", "var_p"],
                  [(s.time, *_moments(s)) for s in snaps]),
        write_csv(os.path.join(out, "snapshots.csv"), ["t", "q", "density"], _density_rows(times, grid, dens)),
        write_csv(os.path.join(out, "samples.csv"), ["index", "q", "p", "weight"],
                  columns(np.arange(len(last)), last.q, last.p, last.weights)),
    ]
    asserts.add("weight_sum_error", max(abs(s.weights.sum() - 1.0) for s in snaps), 1e-12)
    return files


def _p_range(cfg, psi, c, t_final):
    if cfg["ck.p_range"] is not None:
        return cfg["ck.p_range"]
    f = decompose(psi, c=c)
    n = f.density / psi.grid.integrate(f.density)
    q_mean = psi.grid.integrate(n * psi.grid.points)
    var_q = psi.grid.integrate(n * (psi.grid.points - q_mean) ** 2)
    p = c.mass * np.gradient(f.action, psi.grid.dq)
    p_mean = psi.grid.integrate(n * p)
    var_p = psi.grid.integrate(n * (p - p_mean) ** 2) + cfg["noise.k_theta"] * cfg["noise.d_pp"] * t_final
    centre = abs(p_mean)
    if cfg["potential.kind"] == "harmonic":
        mw = c.mass * cfg["potential.omega"]
        centre += mw * abs(q_mean)
        var_p += mw ** 2 * var_q
    return centre + 6.0 * np.sqrt(max(var_p, 1e-12))


def _run_ck(cfg, out, asserts):
    grid, c = build_grid(cfg), build_constants(cfg)
    V = build_potential(cfg)
    dt, n, every = _steps(cfg)
    psi = build_initial(cfg, grid, c)
    pmax = _p_range(cfg, psi, c, dt * n)
    pg = Grid1D(-pmax, pmax, cfg["ck.p_points"])
    f = decompose(psi, c=c)
    pdf = GridPdf.from_marginal(grid, pg, f.density, c.mass * np.gradient(f.action, grid.dq))
    force = V.force(grid, 0.0, c)
    noise = _noise(cfg)
    times, pdfs = [0.0], [pdf]
    for k in range(every, n + every, every):
        steps = min(every, n - (k - every))
        pdf = ck_propagate(pdf, lambda q: np.interp(q, grid.points, force), noise, dt, steps, c)
        times.append(times[-1] + steps * dt)
        pdfs.append(pdf)
    obs = [(t, *p.moments("q"), *p.moments("p"), p.lost) for t, p in zip(times, pdfs)]
    obs = [(t, mq, mp, vq, vp, lost) for t, mq, vq, mp, vp, lost in obs]
    files = [
        write_csv(os.path.join(out, "observables.csv"), ["t", "mean_q", "mean_p", "var_q", "var_p", "lost"], obs),
        write_csv(os.path.join(out, "snapshots.csv"), ["t", "q", "density"],
                  _density_rows(times, grid, [p.q_marginal().values for p in pdfs])),
        write_csv(os.path.join(out, "p_marginal.csv"), ["t", "p", "density"],
                  _density_rows(times, pg, [p.p_marginal() for p in pdfs])),
    ]
    asserts.add("lost_mass", pdfs[-1].lost, 1e-6)
    return files


def _forcing(cfg) -> ForcingSpec:
    kind = cfg["kostin.forcing"]
    if kind == "sinusoidal":
        return ForcingSpec.sinusoidal(cfg["kostin.amplitude"], cfg["kostin.frequency"], cfg["kostin.phase"])
    if kind == "seeded_kicks":
        return ForcingSpec.seeded_kicks(cfg["kostin.kick_variance"], cfg["kostin.kick_interval"], cfg["noise.seed"])
    return ForcingSpec.zero()


def _run_kostin(cfg, out, asserts):
    grid, c = build_grid(cfg), build_constants(cfg)
    params = KostinParams(cfg["kostin.beta"], cfg["potential.omega"], _forcing(cfg), c)
    dt, n, every = _steps(cfg)
    psi0 = build_initial(cfg, grid, c)
    res = run_bho(psi0, params, dt, n, every)
    q0, p0 = res.mean_q[0], res.mean_p[0]
    t_all, q_cl, p_cl = ehrenfest_oracle(params, q0, p0, dt, n)
    pick = np.unique(np.r_[np.arange(0, n + 1, every), n])
    q_cl, p_cl = q_cl[pick], p_cl[pick]
    files = [
        write_csv(os.path.join(out, "observables.csv"), ["t", "mean_q", "mean_p", "energy", "norm", "c_t"],
                  columns(res.times, res.mean_q, res.mean_p, res.energy, res.norm, res.c_t)),
        write_csv(os.path.join(out, "oracle.csv"), ["t", "q_cl", "p_cl"], columns(res.times, q_cl, p_cl)),
    ]
    amp = np.hypot(q0, p0 / (c.mass * params.omega))
    scale = amp if amp > 0 else max(np.max(np.abs(q_cl)), 1e-300)
    asserts.add("ehrenfest_linf", np.max(np.abs(np.array(res.mean_q) - q_cl)) / scale, 0.01)
    asserts.add("norm_drift", np.max(np.abs(np.array(res.norm) - 1.0)), 1e-8)
    if params.beta > 0 and params.forcing.kind == "zero":
        asserts.add("energy_increase", max(np.max(np.diff(res.energy)), 0.0) if n else 0.0, 1e-9)
    return files


def _run_limit(cfg, out, asserts):
    dt = cfg["run.dt"] or 0.01
    t_final = dt * cfg["run.n_steps"] if cfg["run.n_steps"] else 1.0
    rep = deterministic_limit_check(cfg["limit.case"], cfg["limit.thetas"], cfg["ensemble.size"], t_final, dt,
                                    cfg["noise.d_pp"], cfg["noise.seed"], build_grid(cfg),
                                    cfg["ensemble.bandwidth"], build_constants(cfg))
    files = [write_csv(os.path.join(out, "limit.csv"), ["theta", "spread"], columns(rep.thetas, rep.spreads))]
    asserts.add("slope_deviation", abs(rep.slope - 0.5), rep.slope_tolerance)
    asserts.add("monotone", float(rep.monotone), 1.0, ">=")
    return files


RUNNERS = {
    "schrodinger": _run_schrodinger,
    "trajectories": _run_trajectories,
    "ensemble": _run_ensemble,
    "ck-oracle": _run_ck,
    "kostin": _run_kostin,
    "deterministic-limit": _run_limit,
}


def run_scenario(cfg: ScenarioConfig, out_dir: str) -> dict:
    """Execute ``cfg`` into ``out_dir``; the manifest is written last and returned."""
    os.makedirs(out_dir, exist_ok=True)
    started = _now()
    asserts = _Assertions()
    files = RUNNERS[cfg.scenario](cfg, out_dir, asserts)
    manifest = {
        "artifact": "qha",
        "version": __version__,
        "scenario": cfg.scenario,
        "seed": cfg["noise.seed"],
        "config": cfg.echo(),
        "started": started,
        "finished": _now(),
        "outputs": [os.path.basename(f) for f in files],
        "assertions": list(asserts),
    }
    write_manifest(out_dir, manifest)
    return manifest
