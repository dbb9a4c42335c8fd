import json
import os
import subprocess
import sys

import numpy as np
import pytest

from qha.cli import main
from qha.config import load_config, parse_overrides
from qha.errors import ConfigError, MissingColumn
from qha.output import read_csv, write_csv
from qha.plotdata import emit_plot_data, observables_dat
from qha.scenarios import run_scenario

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

SMALL = {
    "schrodinger": {"run.dt": "0.05", "run.n_steps": "20", "run.snapshot_every": "10", "grid.n_points": "256",
                    "initial.q0": "1"},
    "trajectories": {"run.dt": "0.02", "run.n_steps": "20", "run.snapshot_every": "10",
                     "grid.n_points": "256", "initial.q0": "1", "ensemble.size": "200"},
    "ensemble": {"run.dt": "0.01", "run.n_steps": "10", "run.snapshot_every": "5", "grid.n_points": "256",
                 "initial.q0": "1", "noise.d_pp": "0.1", "ensemble.size": "500"},
    "ck-oracle": {"run.dt": "0.02", "run.n_steps": "10", "run.snapshot_every": "5", "grid.n_points": "64",
                  "potential.kind": "free", "initial.kind": "gaussian", "noise.d_pp": "0.1"},
    "kostin": {"run.dt": "0.01", "run.n_steps": "30", "run.snapshot_every": "10", "grid.n_points": "256",
               "initial.q0": "1", "kostin.beta": "0.2"},
    "deterministic-limit": {"grid.n_points": "256", "ensemble.size": "500", "limit.case": "free",
                            "limit.thetas": "0.04, 0.02, 0", "noise.d_pp": "1"},
}

EXPECTED = {
    "schrodinger": {"observables.csv": ["t", "mean_q", "mean_p", "energy", "norm"],
                    "snapshots.csv": ["t", "q", "re_psi", "im_psi", "density"]},
    "kostin": {"observables.csv": ["t", "mean_q", "mean_p", "energy", "norm", "c_t"],
               "oracle.csv": ["t", "q_cl", "p_cl"]},
    "deterministic-limit": {"limit.csv": ["theta", "spread"]},
}


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- configuration ------------------------------------------------------------------------


def test_reference_configs_load():
    for name in os.listdir(CONFIGS):
        path = os.path.join(CONFIGS, name)
        scenario = "schrodinger" if name == "reference.cfg" else os.path.splitext(name)[0]
        assert load_config(path, scenario, env={}).scenario == scenario


def test_unknown_key_names_path(tmp_path):
    path = _write(tmp_path, "[run]\ndt = 0.1\nn_steps = 2\n[noise]\nd_pq = 0.1\n")
    with pytest.raises(ConfigError, match=r"noise\.d_pq"):
        load_config(path, "schrodinger", env={})
    with pytest.raises(ConfigError, match="bogus"):
        load_config(_write(tmp_path, "[bogus]\nx = 1\n"), "schrodinger", env={})


def test_missing_required_key(tmp_path):
    with pytest.raises(ConfigError, match=r"run\.n_steps"):
        load_config(_write(tmp_path, "[run]\ndt = 0.1\n"), "schrodinger", env={})
    cfg = load_config(None, "deterministic-limit", {"noise.d_pp": "1"}, env={})
    assert cfg["run.dt"] is None


def test_bad_values_rejected():
    base = {"run.dt": "0.1", "run.n_steps": "2"}
    for key, value in (("run.dt", "-1"), ("grid.n_points", "abc"), ("noise.d_pp", "nan"),
                       ("potential.kind", "quartic"), ("limit.thetas", "0.01 0.02")):
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            load_config(None, "schrodinger", {**base, key: value}, env={})


def test_scenario_mismatch(tmp_path):
    path = _write(tmp_path, "[run]\nscenario = kostin\ndt = 0.1\nn_steps = 2\n")
    with pytest.raises(ConfigError, match="run.scenario"):
        load_config(path, "schrodinger", env={})


def test_overrides_and_seed_env():
    assert parse_overrides(["noise.seed=4", "grid.q_min = -3"]) == {"noise.seed": "4", "grid.q_min": "-3"}
    with pytest.raises(ConfigError):
        parse_overrides(["noseparator"])
    sets = {"run.dt": "0.1", "run.n_steps": "2", "noise.seed": "4"}
    assert load_config(None, "ensemble", sets, env={})["noise.seed"] == 4
    assert load_config(None, "ensemble", sets, env={"QHA_SEED": "17"})["noise.seed"] == 17


def test_config_echo_is_complete():
    cfg = load_config(None, "schrodinger", {"run.dt": "0.1", "run.n_steps": "2"}, env={})
    echo = cfg.echo()
    assert echo["grid"]["n_points"] == 1024
    assert echo["limit"]["thetas"] == [0.04, 0.02, 0.01, 0.005, 0.0025, 0.0]
    json.dumps(echo)


# -- CSV and manifest ----------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    x = np.array([0.1, 1.0 / 3.0, -2.5e-300, np.pi])
    path = write_csv(str(tmp_path / "a.csv"), ["i", "x"], [(i, v) for i, v in enumerate(x)])
    header, data = read_csv(path)
    assert header == ["i", "x"]
    assert np.array_equal(data[:, 1], x)
    raw = open(path, "rb").read()
    assert raw.startswith(b"i,x\n") and b"\r" not in raw


@pytest.mark.parametrize("scenario", sorted(SMALL))
def test_every_scenario_runs(tmp_path, scenario):
    cfg = load_config(None, scenario, SMALL[scenario], env={})
    out = tmp_path / scenario
    manifest = run_scenario(cfg, str(out))
    assert manifest["scenario"] == scenario and manifest["artifact"] == "qha"
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk["outputs"] == manifest["outputs"]
    for name in manifest["outputs"]:
        assert (out / name).is_file()
        header, data = read_csv(str(out / name))
        assert data.shape[0] >= 1
        if name in EXPECTED.get(scenario, {}):
            assert header == EXPECTED[scenario][name]
    for a in manifest["assertions"]:
        assert set(a) == {"name", "value", "relation", "threshold", "passed"}
    assert emit_plot_data(str(out))


def test_kostin_manifest_records_ehrenfest(tmp_path):
    cfg = load_config(None, "kostin", SMALL["kostin"], env={})
    manifest = run_scenario(cfg, str(tmp_path))
    names = {a["name"]: a for a in manifest["assertions"]}
    assert names["ehrenfest_linf"]["threshold"] == 0.01
    assert names["ehrenfest_linf"]["passed"]


@pytest.mark.parametrize("scenario", ["ensemble", "kostin"])
def test_reruns_byte_identical(tmp_path, scenario):
    sets = dict(SMALL[scenario], **{"noise.seed": "3"})
    if scenario == "kostin":
        sets.update({"kostin.forcing": "seeded_kicks", "kostin.kick_variance": "0.01",
                     "kostin.kick_interval": "0.05"})
    cfg = load_config(None, scenario, sets, env={})
    a, b = run_scenario(cfg, str(tmp_path / "a")), run_scenario(cfg, str(tmp_path / "b"))
    for name in a["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a["outputs"] == b["outputs"]


def test_seed_changes_output(tmp_path):
    cfgs = [load_config(None, "ensemble", SMALL["ensemble"], env={"QHA_SEED": s}) for s in ("1", "2")]
    for cfg, d in zip(cfgs, "ab"):
        run_scenario(cfg, str(tmp_path / d))
    assert (tmp_path / "a" / "samples.csv").read_bytes() != (tmp_path / "b" / "samples.csv").read_bytes()


# -- plot data -----------------------------------------------------------------------------


def test_observables_dat_header(tmp_path):
    path = write_csv(str(tmp_path / "observables.csv"), ["t", "mean_q"], [(0.0, 1.0), (0.1, 0.9)])
    observables_dat(path, str(tmp_path))
    lines = (tmp_path / "observables.dat").read_text().splitlines()
    assert lines[0].startswith("#") and "mean_q" in lines[0]
    assert (tmp_path / "observables.plt").is_file()


def test_missing_column(tmp_path):
    path = write_csv(str(tmp_path / "observables.csv"), ["t", "mean_p"], [(0.0, 1.0)])
    with pytest.raises(MissingColumn, match="mean_q"):
        observables_dat(path, str(tmp_path))


def test_density_and_overlay_dat(tmp_path):
    cfg = load_config(None, "kostin", SMALL["kostin"], env={})
    run_scenario(cfg, str(tmp_path))
    written = [os.path.basename(p) for p in emit_plot_data(str(tmp_path))]
    assert "overlay.dat" in written and "overlay.plt" in written
    rows = [ln.split() for ln in (tmp_path / "overlay.dat").read_text().splitlines() if not ln.startswith("#")]
    assert all(len(r) == 3 for r in rows)
    ens = tmp_path / "ens"
    run_scenario(load_config(None, "ensemble", SMALL["ensemble"], env={}), str(ens))
    emit_plot_data(str(ens))
    matrix = [ln.split() for ln in (ens / "density.dat").read_text().splitlines()
              if ln.strip() and not ln.startswith("#")]
    assert int(float(matrix[0][0])) == len(matrix[0]) - 1
    assert len(matrix) == 1 + 3


# -- command line --------------------------------------------------------------------------


def test_cli_scenario_and_exit_codes(tmp_path, capsys):
    sets = sum((["--set", f"{k}={v}"] for k, v in SMALL["schrodinger"].items()), [])
    out = str(tmp_path / "run")
    assert main(["schrodinger", *sets, "--out", out, "--plot"]) == 0
    assert os.path.isfile(os.path.join(out, "observables.dat"))
    assert main(["schrodinger", *sets, "--set", "noise.bogus=1", "--out", out]) == 2
    assert "noise.bogus" in capsys.readouterr().err
    cfg = _write(tmp_path, "[run]\ndt = 0.1\nn_steps = 2\n[grid]\nq_min = -1\nq_max = 1\nn_points = 16\n"
                 "[initial]\nq0 = 0.9\n")
    assert main(["schrodinger", "--config", cfg, "--out", out]) == 3
    assert main(["plot", str(tmp_path / "empty")]) == 2


def test_cli_validate_bad_tolerance_name(capsys):
    assert main(["validate", "--tolerance", "nope=1"]) == 2
    assert "nope" in capsys.readouterr().err


@pytest.mark.slow
def test_cli_validate_tampered_tolerance_fails(tmp_path):
    report = tmp_path / "report.json"
    proc = subprocess.run([sys.executable, "-m", "qha.cli", "validate", "--level", "quick",
                           "--tolerance", "cancellation.force=1e-30", "--json", str(report)],
                          capture_output=True, text=True, env=dict(os.environ, QHA_THREADS="1"))
    assert proc.returncode == 1
    failing = [ln for ln in proc.stdout.splitlines() if ln.startswith("FAIL")]
    assert len(failing) == 1 and "cancellation" in failing[0]
    data = json.loads(report.read_text())
    assert not data["passed"]
