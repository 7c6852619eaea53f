import json
import math

import numpy as np
import pytest

from sigmavol import cli
from sigmavol.errors import ConfigError, DataError, NumericalError
from sigmavol.harness import experiment
from sigmavol.harness.config import config_from_dict, load_config
from sigmavol.harness.experiment import run_experiment, run_experiment_file
from sigmavol.rvpipe import RvSeries, SplitSpec, read_rv_csv, write_rv_csv

SMALL_SIM = """
model = "{model}"
seed = 4
target = "{target}"

[data]
source = "simulate"

[data.simulate]
n = 700

[train]
hidden = 2
epochs = 2
window = 10
lr = 0.01

[split]
n_val = 100
n_test = 100
"""


def write_config(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def sim_config(tmp_path, model="garch11", target="rv", extra=""):
    return write_config(tmp_path, SMALL_SIM.format(model=model, target=target) + extra)


def har_rv_file(path, n=400):
    rng = np.random.default_rng(0)
    rv = list(rng.uniform(0, 2, 22))
    for _ in range(22, n):
        rv.append(0.1 + 0.4 * rv[-1] + 0.3 * np.mean(rv[-5:]) + 0.2 * np.mean(rv[-22:]))
    dates = np.datetime64("2015-01-01") + np.arange(n)
    write_rv_csv(RvSeries(dates, np.array(rv), np.r_[np.nan, np.zeros(n - 1)]), path)
    return path


# ------------------------------------------------------------------ config

def test_config_defaults_and_echo(tmp_path):
    cfg = load_config(sim_config(tmp_path, "sigma-lstm"))
    assert cfg.seed == 4 and cfg.train.hidden == 2 and cfg.train.lr == 0.01
    assert cfg.scaler_mode() == "scale-only" and cfg.settings().seed == 4
    assert "seed" not in cfg.echo()["train"]
    assert load_config(sim_config(tmp_path, "lstm")).scaler_mode() == "minmax"


@pytest.mark.parametrize("doc,msg", [
    ({"model": "har"}, "seed"),
    ({"seed": 1}, "model"),
    ({"model": "har", "seed": 1, "colour": "red"}, "unknown key"),
    ({"model": "har", "seed": 1, "train": {"hiden": 3}}, "unknown key"),
    ({"model": "har", "seed": 1, "train": {"seed": 3}}, "unknown key"),
    ({"model": "har", "seed": 1, "data": {"simulate": {"n": 10, "x": 1}}}, "unknown key"),
    ({"model": "har", "seed": 1.5}, "type int"),
    ({"model": "har", "seed": 1, "train": {"epochs": "ten"}}, "type int"),
    ({"model": "arima", "seed": 1}, "model must be"),
    ({"model": "har", "seed": 1, "data": {"source": "rv"}}, "path is required"),
    ({"model": "har", "seed": 1, "data": {"source": "rv", "path": "/nonexistent.csv"}}, "does not exist"),
    ({"model": "har", "seed": 1, "train": {"warmup": 30}}, "warmup"),
    ({"model": "har", "seed": 1, "grid": {"depth": [1]}}, "grid key"),
    ({"model": "har", "seed": 1, "grid": {"hidden": []}}, "non-empty"),
    ({"model": "har", "seed": 1, "data": {"simulate": {"alpha": 0.5, "beta": 0.6}}}, "alpha"),
    ({"model": "har", "seed": 1, "target": "sigma", "data": {"source": "rv", "path": __file__}}, "simulated"),
])
def test_config_errors(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(doc)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, "model = \n"))


def test_relative_data_path_resolves_against_config(tmp_path):
    (tmp_path / "sub").mkdir()
    har_rv_file(tmp_path / "sub" / "rv.csv")
    cfg = load_config(write_config(tmp_path / "sub", 'model = "har"\nseed = 1\n[data]\nsource = "rv"\npath = "rv.csv"\n'))
    assert cfg.data.path == str((tmp_path / "sub" / "rv.csv").resolve())


def test_grid_points_product_and_coercion():
    cfg = config_from_dict({"model": "lstm", "seed": 2, "grid": {"hidden": [4, 8], "lr": [1, 0.5]}})
    pts = cfg.grid_points()
    assert [(p.train.hidden, p.train.lr) for p in pts] == [(4, 1.0), (4, 0.5), (8, 1.0), (8, 0.5)]
    assert all(isinstance(p.train.lr, float) and p.grid == {} for p in pts)
    with pytest.raises(ConfigError):
        config_from_dict({"model": "lstm", "seed": 2, "grid": {"hidden": ["big"]}}).grid_points()


# -------------------------------------------------------------- experiment

def test_garch_smoke_and_files(tmp_path):
    rep = run_experiment_file(sim_config(tmp_path), tmp_path / "out")
    assert math.isfinite(rep.rmse) and rep.prediction.size == 100
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["model"] == "garch11" and doc["metrics"]["rmse"] == rep.rmse
    assert doc["config"]["seed"] == 4 and doc["n_test"] == 100
    lines = (tmp_path / "out" / "forecasts.csv").read_text().splitlines()
    assert lines[0] == "date,prediction,target" and len(lines) == 101
    assert (tmp_path / "out" / "loss_history.csv").read_text() == "epoch,objective\n"


@pytest.mark.parametrize("model", ["garch11", "sigma-lstm", "lstm"])
def test_runs_are_byte_identical(tmp_path, model):
    path = sim_config(tmp_path, model)
    run_experiment_file(path, tmp_path / "a")
    run_experiment_file(path, tmp_path / "b")
    for name in ("report.json", "forecasts.csv", "loss_history.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    path = sim_config(tmp_path)
    a = run_experiment_file(path, seed=4)
    b = run_experiment_file(path, seed=5)
    assert a.rmse != b.rmse


def test_har_noiseless_exact(tmp_path):
    har_rv_file(tmp_path / "rv.csv")
    cfg = write_config(tmp_path, 'model = "har"\nseed = 0\n[data]\nsource = "rv"\npath = "rv.csv"\n'
                                 '[split]\nn_val = 50\nn_test = 100\n')
    assert run_experiment_file(cfg).rmse < 1e-6


def test_prices_source(tmp_path):
    rng = np.random.default_rng(1)
    rows = []
    price = 100.0
    for day in range(160):
        for k in range(40):
            price *= math.exp(rng.normal(0, 1e-3))
            rows.append(f"{day * 86400 + 3600 + 60 * k},{price!r}")
    (tmp_path / "p.csv").write_text("timestamp,price\n" + "\n".join(rows) + "\n")
    cfg = write_config(tmp_path, 'model = "har"\nseed = 0\n[data]\nsource = "prices"\npath = "p.csv"\n'
                                 '[split]\nn_val = 20\nn_test = 20\n')
    rep = run_experiment_file(cfg)
    assert rep.prediction.size == 20 and math.isfinite(rep.rmse)


def test_sigma_target(tmp_path):
    rep = run_experiment_file(sim_config(tmp_path, target="sigma"))
    assert rep.rmse < 0.1


def test_grid_in_experiment(tmp_path):
    extra = "\n[grid]\nhidden = [1, 2]\n"
    path = sim_config(tmp_path, "lstm", extra=extra)
    rep = run_experiment_file(path, tmp_path / "out")
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert len(doc["grid"]) == 2 and {g["seed"] for g in doc["grid"]} == {4, 5}
    assert math.isfinite(rep.rmse)


def test_stage_tagging(tmp_path):
    cfg = load_config(sim_config(tmp_path))
    cfg.split = SplitSpec(n_val=690)
    with pytest.raises(DataError, match=r"\[split\]"):
        run_experiment(cfg)


def test_stage_maps_builtin_errors():
    with pytest.raises(DataError, match=r"\[x\]"):
        with experiment.stage("x"):
            raise ValueError("bad")
    with pytest.raises(NumericalError, match=r"\[y\]"):
        with experiment.stage("y"):
            raise FloatingPointError("overflow")


# --------------------------------------------------------------------- CLI

def test_cli_simulate_and_rv_roundtrip(tmp_path):
    assert cli.main(["simulate", "--n", "300", "--seed", "2", "--rv-noise", "0.1", "--out", str(tmp_path)]) == 0
    rv = read_rv_csv(tmp_path / "rv.csv")
    assert len(rv) == 300 and np.all(rv.rv > 0)
    assert (tmp_path / "sigma.csv").read_text().splitlines()[0] == "date,sigma2"


def test_cli_rv(tmp_path):
    rows = [f"{60 * k},{100 + (k % 3)}" for k in range(40)]
    (tmp_path / "p.csv").write_text("timestamp,price\n" + "\n".join(rows) + "\n")
    assert cli.main(["rv", str(tmp_path / "p.csv"), str(tmp_path / "rv.csv")]) == 0
    assert len(read_rv_csv(tmp_path / "rv.csv")) == 1


def test_cli_fit_then_forecast(tmp_path, capsys):
    cfg = str(sim_config(tmp_path))
    assert cli.main(["fit", cfg, "--out", str(tmp_path / "g.txt")]) == 0
    assert "variant = garch11" in (tmp_path / "g.txt").read_text()
    assert cli.main(["forecast", cfg, "--params", str(tmp_path / "g.txt"), "--out", str(tmp_path / "f")]) == 0
    fc = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert cli.main(["run", cfg, "--out", str(tmp_path / "r")]) == 0
    run = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert fc["rmse"] == run["rmse"]


def test_cli_grid(tmp_path):
    cfg = str(sim_config(tmp_path, "lstm", extra="\n[grid]\nepochs = [1, 2]\n"))
    assert cli.main(["grid", cfg, "--out", str(tmp_path / "g")]) == 0
    doc = json.loads((tmp_path / "g" / "grid.json").read_text())
    assert len(doc["leaderboard"]) == 2


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["run", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2
    bad = write_config(tmp_path, 'model = "har"\nseed = 1\nfoo = 2\n', "bad.toml")
    assert cli.main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert "unknown key" in capsys.readouterr().err
    (tmp_path / "p.csv").write_text("timestamp,price\n1,0\n")
    assert cli.main(["rv", str(tmp_path / "p.csv"), str(tmp_path / "rv.csv")]) == 3
    assert "[rv]" in capsys.readouterr().err
    short = write_config(tmp_path, SMALL_SIM.format(model="har", target="rv").replace("n = 700", "n = 150"), "s.toml")
    assert cli.main(["run", str(short), "--out", str(tmp_path)]) == 3

    def diverge(cfg, out_dir=None):
        raise NumericalError("[fit] sigma-LSTM training diverged at epoch 3")

    monkeypatch.setattr(cli, "run_experiment", diverge)
    assert cli.main(["run", str(sim_config(tmp_path)), "--out", str(tmp_path)]) == 4
    assert "epoch 3" in capsys.readouterr().err
