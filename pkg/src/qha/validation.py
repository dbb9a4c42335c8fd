"""The acceptance checks, runnable as one suite.

Each ``check_*`` function runs one group of related checks at ``quick`` or
``full`` size and returns :class:`Check` rows.  Tolerances live in
:data:`TOLERANCES` and can be overridden by name, which is how the suite is
shown to fail loudly when a bound is tightened past what the code achieves.
"""

from __future__ import annotations

import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .fields import Grid1D, RealField
from .hydro import build_force_field, delta_ansatz_ensemble, newtonian_step, synthetic_qha
from .kostin import ForcingSpec, KostinParams, ehrenfest_oracle, kostin_step, run_bho
from .schrodinger import PotentialSpec, cn_step, coherent_state, ground_state
from .stochastic import (GridPdf, NoiseSpec, PhaseSpaceEnsemble, ck_propagate, deterministic_limit_check,
                         em_step, estimate_cumulants, estimate_marginal_density, increment_pairs,
                         self_consistent_evolve)

TWO_PI = 2.0 * np.pi

TOLERANCES = {
    "equivalence.residual": 1e-3,
    "equivalence.gap": 1e-3,
    "equivalence.density_l1": 0.05,
    "self_sustained.growth": 10.0,
    "cancellation.force": 1e-5,
    "cancellation.drift": 1e-6,
    "limit.free_slope": 1e-9,
    "limit.free_law_se": 3.0,
    "limit.harmonic_slope": 0.15,
    "noise_structure.position_change": 0.0,
    "cumulants.order2_se": 3.0,
    "cumulants.order3_se": 3.0,
    "ck.variance_growth": 1e-3,
    "ck.ensemble_l1": 0.08,
    "kostin.reduction": 1e-10,
    "kostin.energy_increase": 1e-9,
    "kostin.norm": 1e-8,
    "ehrenfest.linf": 0.01,
    "ehrenfest.steady_amplitude": 0.02,
    "determinism.byte_diff": 0.0,
}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<34s} {self.value:<12.4g} <= {self.threshold:<10.4g} ({self.seconds:.1f} s)"


def _tol(tol, name):
    return (tol or {}).get(name, TOLERANCES[name])


# -- 1 and 3: Schrodinger versus trajectories ----------------------------------------


def check_equivalence(level="full", tol=None) -> list[Check]:
    t0 = time.perf_counter()
    grid = Grid1D(-12.0, 12.0, 1024)
    steps_per_period, n_traj = (4096, 2000) if level == "full" else (1024, 1000)
    dt = TWO_PI / steps_per_period
    psi = coherent_state(grid, 1.0, 1.0, 0.0)
    run = synthetic_qha(psi, PotentialSpec.harmonic(1.0), dt, 2 * steps_per_period, n_traj,
                        snapshot_every=steps_per_period // 64, density_every=steps_per_period // 4)
    el = time.perf_counter() - t0
    res = np.array(run.residual)
    times = np.array(run.times)
    # interpolation level of the delta-ansatz: the residual reached within the first quarter period
    initial = res[times <= TWO_PI / 4].max()
    return [
        Check("1 equivalence: max residual", res.max(), _tol(tol, "equivalence.residual"), el),
        Check("1 equivalence: bohm-newton gap", max(run.gap), _tol(tol, "equivalence.gap"), el),
        Check("1 equivalence: density L1", np.nanmax(run.density_l1), _tol(tol, "equivalence.density_l1"), el),
        Check("3 self-sustained: growth factor", res.max() / initial, _tol(tol, "self_sustained.growth"), el),
    ]


# -- 2: ground-state cancellation ------------------------------------------------------


def check_cancellation(level="full", tol=None) -> list[Check]:
    t0 = time.perf_counter()
    grid = Grid1D(-10.0, 10.0, 2049)
    psi = ground_state(grid)
    force = build_force_field(PotentialSpec.harmonic(1.0), RealField(grid, psi.density))
    cancel = np.abs(force.total[force.support]).max()
    ens = delta_ansatz_ensemble(psi, 2000, seed=0)
    e, n = ens, 1024
    for _ in range(n):
        e = newtonian_step(e, force, TWO_PI / n)
    drift = np.abs(e.positions - ens.positions).max()
    el = time.perf_counter() - t0
    return [Check("2 cancellation: |F_cl + F_qu|", cancel, _tol(tol, "cancellation.force"), el),
            Check("2 cancellation: trajectory drift", drift, _tol(tol, "cancellation.drift"), el)]


# -- 4: deterministic limit ------------------------------------------------------------


def check_limit(level="full", tol=None) -> list[Check]:
    t0 = time.perf_counter()
    n = 10_000 if level == "full" else 4000
    thetas = [0.04, 0.02, 0.01, 0.005, 0.0025]
    free = deterministic_limit_check("free", thetas + [0.0], n_samples=n)
    harm = deterministic_limit_check("harmonic", thetas + [0.0], n_samples=n)
    el = time.perf_counter() - t0
    # free Brownian law: spread(t=1) = sqrt(theta d_pp t), standard error spread / sqrt(2n)
    law = max(abs(s - np.sqrt(th)) / (np.sqrt(th) / np.sqrt(2 * n))
              for th, s in zip(thetas, free.spreads))
    return [
        Check("4 limit: free slope - 0.5", abs(free.slope - 0.5), _tol(tol, "limit.free_slope"), el),
        Check("4 limit: free sqrt law (SE)", law, _tol(tol, "limit.free_law_se"), el),
        Check("4 limit: harmonic slope - 0.5", abs(harm.slope - 0.5), _tol(tol, "limit.harmonic_slope"), el),
        Check("4 limit: monotone (0 = yes)", float(not (free.monotone and harm.monotone)), 0.0, el),
    ]


# -- 5 and 6: noise structure and cumulants -------------------------------------------


def check_noise(level="full", tol=None) -> list[Check]:
    t0 = time.perf_counter()
    grid = Grid1D(-50.0, 50.0, 256)
    zero = build_force_field(PotentialSpec("free"), RealField(grid, np.zeros(grid.n_points)), quantum=False)
    q0 = np.linspace(-3.0, 3.0, 1000)
    ens = PhaseSpaceEnsemble.uniform(q0, np.zeros_like(q0))
    noise = NoiseSpec(d_pp=0.1, seed=11)
    # positions move only by the drift p dt / m: never by a direct kick
    change = 0.0
    free = ens
    for _ in range(1000):
        nxt = em_step(ens, zero, noise, 0.01)
        change = max(change, float(np.abs(nxt.q - ens.q).max()))
        ens = PhaseSpaceEnsemble(nxt.q, np.zeros_like(q0), nxt.weights, nxt.time, nxt.step)
        nxt = em_step(free, zero, noise, 0.01)
        change = max(change, float(np.abs(nxt.q - (free.q + free.p * 0.01)).max()))
        free = nxt
    struct = Check("5 noise: position change", change, _tol(tol, "noise_structure.position_change"),
                   time.perf_counter() - t0)

    t0 = time.perf_counter()
    ens = PhaseSpaceEnsemble.gaussian(10_000, 0.0, 1.0, 0.0, 0.1, seed=12)
    snaps = self_consistent_evolve(ens, PotentialSpec("free"), noise, 0.01, 1, Grid1D(-12.0, 12.0, 256),
                                   quantum_force_on=False)
    pairs = increment_pairs(snaps, 1, "p")
    c2 = estimate_cumulants(pairs, 0.01, 2, seed=13)
    c3 = estimate_cumulants(pairs, 0.01, 3, seed=14)
    el = time.perf_counter() - t0
    return [struct,
            Check("6 cumulants: |c2 - d_pp| / SE", abs(c2.value - 0.1) / c2.stderr, _tol(tol, "cumulants.order2_se"), el),
            Check("6 cumulants: |c3| / SE", abs(c3.value) / c3.stderr, _tol(tol, "cumulants.order3_se"), el)]


# -- 7: Chapman-Kolmogorov oracle ------------------------------------------------------


def check_ck(level="full", tol=None) -> list[Check]:
    t0 = time.perf_counter()
    d_pp, var_p0, dt, n = 0.1, 0.05, 0.02, 50
    qg = Grid1D(-6.0, 6.0, 256)
    pmax = 6.0 * np.sqrt(var_p0 + d_pp * dt * n)
    pg = Grid1D(-pmax, pmax, 256)
    pdf = GridPdf.gaussian(qg, pg, 0.0, 1.0, 0.0, np.sqrt(var_p0))
    noise = NoiseSpec(d_pp=d_pp, seed=21)
    out = ck_propagate(pdf, lambda q: np.zeros_like(q), noise, dt, n)
    growth = out.moments("p")[1] - pdf.moments("p")[1]
    ens = PhaseSpaceEnsemble.gaussian(10_000, 0.0, 1.0, 0.0, np.sqrt(var_p0), seed=22)
    last = self_consistent_evolve(ens, PotentialSpec("free"), noise, dt, n, qg, quantum_force_on=False,
                                  snapshot_every=n)[-1]
    est = estimate_marginal_density(last, qg)
    l1 = qg.integrate(np.abs(est.values - out.q_marginal().values))
    el = time.perf_counter() - t0
    return [Check("7 ck: |var growth - d_pp t|", abs(growth - d_pp * dt * n), _tol(tol, "ck.variance_growth"), el),
            Check("7 ck: L1 grid vs ensemble", l1, _tol(tol, "ck.ensemble_l1"), el)]


# -- 8 and 9: Kostin -------------------------------------------------------------------


def check_kostin(level="full", tol=None) -> list[Check]:
    t0 = time.perf_counter()
    grid = Grid1D(-12.0, 12.0, 1024)
    spp = 4096 if level == "full" else 1024
    dt = TWO_PI / spp
    psi = coherent_state(grid, 1.0, 1.0, 0.0)
    lin = KostinParams(0.0, 1.0, ForcingSpec.sinusoidal(0.1, 1.0))
    red, a = 0.0, psi
    for k in range(64):
        b = kostin_step(a, lin, k * dt, dt)
        ref = cn_step(a, lin.potential, dt, t=k * dt)
        red = max(red, float(np.abs(b.values - ref.values).max()))
        a = b
    res = run_bho(psi, KostinParams(0.2, 1.0), dt, 3 * spp, snapshot_every=spp // 64)
    el = time.perf_counter() - t0
    return [Check("8 kostin: beta=0 vs linear step", red, _tol(tol, "kostin.reduction"), el),
            Check("8 kostin: energy increase", max(np.max(np.diff(res.energy)), 0.0),
                  _tol(tol, "kostin.energy_increase"), el),
            Check("8 kostin: |norm - 1|", np.max(np.abs(np.array(res.norm) - 1.0)), _tol(tol, "kostin.norm"), el)]


def _ehrenfest_linf(params, psi, dt, n):
    res = run_bho(psi, params, dt, n, snapshot_every=16)
    _, qc, _ = ehrenfest_oracle(params, res.mean_q[0], res.mean_p[0], dt, n)
    qc = qc[np.unique(np.r_[np.arange(0, n + 1, 16), n])]
    return np.max(np.abs(np.array(res.mean_q) - qc)) / abs(res.mean_q[0])


def check_ehrenfest(level="full", tol=None) -> list[Check]:
    grid = Grid1D(-12.0, 12.0, 1024)
    spp = 4096 if level == "full" else 1024
    dt = TWO_PI / spp
    psi = coherent_state(grid, 1.0, 1.0, 0.0)
    out = []
    for label, forcing in (("F=0", ForcingSpec.zero()),
                           ("sinusoidal", ForcingSpec.sinusoidal(0.1, 1.3)),
                           ("seeded kicks", ForcingSpec.seeded_kicks(0.01, TWO_PI / 16, seed=31))):
        t0 = time.perf_counter()
        linf = _ehrenfest_linf(KostinParams(0.2, 1.0, forcing), psi, dt, 3 * spp)
        out.append(Check(f"9 ehrenfest: {label}", linf, _tol(tol, "ehrenfest.linf"), time.perf_counter() - t0))

    t0 = time.perf_counter()
    f0, gamma = 0.1, 0.2
    params = KostinParams(gamma, 1.0, ForcingSpec.sinusoidal(f0, 1.0))
    dt = TWO_PI / (512 if level == "full" else 256)
    n = int(round(60.0 / dt))
    res = run_bho(ground_state(grid), params, dt, n)
    times, qc, _ = ehrenfest_oracle(params, 0.0, 0.0, dt, n)
    last = times >= times[-1] - TWO_PI
    q = np.array(res.mean_q)
    amp_q = 0.5 * (q[last].max() - q[last].min())
    amp_c = 0.5 * (qc[last].max() - qc[last].min())
    el = time.perf_counter() - t0
    out.append(Check("9 ehrenfest: steady amplitude", abs(amp_q / amp_c - 1.0),
                     _tol(tol, "ehrenfest.steady_amplitude"), el))
    return out


# -- 10: determinism -------------------------------------------------------------------


def check_determinism(level="full", tol=None) -> list[Check]:
    from .config import load_config
    from .scenarios import run_scenario

    t0 = time.perf_counter()
    runs = {
        "ensemble": {"run.dt": "0.01", "run.n_steps": "20", "run.snapshot_every": "10",
                     "grid.n_points": "256", "initial.q0": "1", "noise.d_pp": "0.1", "noise.seed": "5",
                     "ensemble.size": "2000"},
        "kostin": {"run.dt": "0.01", "run.n_steps": "40", "run.snapshot_every": "10", "grid.n_points": "256",
                   "initial.q0": "1", "kostin.beta": "0.2", "kostin.forcing": "seeded_kicks",
                   "kostin.kick_variance": "0.01", "kostin.kick_interval": "0.1", "noise.seed": "5"},
    }
    diff = 0
    tmp = tempfile.mkdtemp(prefix="qha-det-")
    try:
        for scenario, sets in runs.items():
            cfg = load_config(None, scenario, sets, env={})
            outs = []
            for rep in range(2):
                d = os.path.join(tmp, f"{scenario}-{rep}")
                outs.append((d, run_scenario(cfg, d)["outputs"]))
            (d0, files), (d1, _) = outs
            for f in files:
                with open(os.path.join(d0, f), "rb") as a, open(os.path.join(d1, f), "rb") as b:
                    diff += a.read() != b.read()
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return [Check("10 determinism: differing files", diff, _tol(tol, "determinism.byte_diff"),
                  time.perf_counter() - t0)]


CHECKS = (check_equivalence, check_cancellation, check_limit, check_noise, check_ck, check_kostin,
          check_ehrenfest, check_determinism)


def _run_one(args):
    fn, level, tol = args
    return fn(level, tol)


def workers_from_env(env=None) -> int:
    env = os.environ if env is None else env
    text = env.get("QHA_THREADS", "")
    if text.strip():
        n = int(text)
        if n < 1:
            raise ValueError("QHA_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def validate_all(level: str = "quick", tolerances: dict | None = None, workers: int | None = None) -> dict:
    """Run every check; returns a manifest-like dict with ``passed`` and the rows."""
    if level not in ("quick", "full"):
        raise ValueError(f"level must be quick or full, got {level!r}")
    unknown = set(tolerances or {}) - set(TOLERANCES)
    if unknown:
        raise KeyError(f"unknown tolerance names: {sorted(unknown)}")
    workers = min(workers or workers_from_env(), len(CHECKS))
    t0 = time.perf_counter()
    jobs = [(fn, level, tolerances) for fn in CHECKS]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_run_one, jobs))
    else:
        groups = [_run_one(j) for j in jobs]
    checks = [c for g in groups for c in g]
    return {"level": level, "seconds": time.perf_counter() - t0,
            "passed": all(c.passed for c in checks),
            "checks": [dict(asdict(c), passed=c.passed) for c in checks]}


def format_table(report: dict) -> str:
    rows = [Check(c["name"], c["value"], c["threshold"], c["seconds"]).line() for c in report["checks"]]
    n_fail = sum(not c["passed"] for c in report["checks"])
    rows.append(f"{len(report['checks']) - n_fail} passed, {n_fail} failed in {report['seconds']:.1f} s "
                f"({report['level']})")
    return "\n".join(rows)
