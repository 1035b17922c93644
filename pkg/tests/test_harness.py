import csv
import os

import numpy as np
import pytest

from pinnbench.cli import main as cli_main
from pinnbench.harness import (
    ExperimentConfig,
    config_from_dict,
    parse_config,
    run_sweep,
    run_trial,
)
from pinnbench.network import load_params
from pinnbench.optim import LrSchedule


def tiny_config(**kw):
    base = dict(
        name="tiny", problem="riccati", epochs=5, trials=2, seed=1,
        test_every=2, widths=(1, 6, 1),
        problem_kwargs={"n_interior": 20},
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- config ------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(epochs=0)
    with pytest.raises(ValueError):
        tiny_config(norm="l7")
    with pytest.raises(ValueError):
        tiny_config(policy="magic")


def test_config_from_dict_full():
    cfg = config_from_dict({
        "name": "x", "problem": "burgers", "norm": "l2", "policy": "relobralo",
        "epochs": "100", "trials": "3", "seed": "9", "widths": "2,8,8,1",
        "lr": "piecewise:0@1e-2,50@1e-3", "temperature": "0.5",
        "n_interior": "64", "n_ic": "16", "n_bc": "16",
    })
    assert cfg.problem == "burgers" and cfg.widths == (2, 8, 8, 1)
    assert cfg.lr.lr_at(0) == 1e-2 and cfg.lr.lr_at(60) == 1e-3
    assert cfg.temperature == 0.5
    assert cfg.problem_kwargs == {"n_interior": 64, "n_ic": 16, "n_bc": 16}


def test_config_lr_formats():
    assert config_from_dict({"problem": "riccati", "lr": "constant:1e-3"}).lr.lr_at(99) == 1e-3
    c = config_from_dict({"problem": "riccati", "lr": "cyclical:1e-4:1e-2:50"})
    assert c.lr.lr_at(0) == pytest.approx(1e-4)
    assert c.lr.lr_at(50) == pytest.approx(1e-2)


def test_config_unknown_key_rejected():
    with pytest.raises(ValueError):
        config_from_dict({"problem": "riccati", "warp": "9"})


def test_parse_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# riccati baseline\n"
        "name = base\n"
        "problem = riccati\n"
        "epochs = 7   # short\n"
        "trials = 1\n"
        "n_interior = 25\n"
    )
    cfg = parse_config(path)
    assert cfg.name == "base" and cfg.epochs == 7
    assert cfg.problem_kwargs == {"n_interior": 25}
    path.write_text("problem riccati\n")
    with pytest.raises(ValueError):
        parse_config(path)


# -- trials ------------------------------------------------------------------


def test_single_epoch_single_record():
    cfg = tiny_config(epochs=1, trials=1)
    res = run_trial(cfg, 0)
    assert len(res.records) == 1 and res.records[0].epoch == 0
    assert np.isfinite(res.records[0].test_mse)  # epoch 0 always scored


def test_trial_determinism():
    cfg = tiny_config()
    a = run_trial(cfg, 0)
    b = run_trial(cfg, 0)
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        assert ra.epoch == rb.epoch
        assert ra.total == rb.total
        assert np.array_equal(ra.losses, rb.losses)
        assert np.array_equal(ra.lambdas, rb.lambdas)
        assert (np.isnan(ra.test_mse) and np.isnan(rb.test_mse)) \
            or ra.test_mse == rb.test_mse


def test_trials_differ_by_seed():
    cfg = tiny_config()
    a = run_trial(cfg, 0)
    b = run_trial(cfg, 1)
    assert a.records[0].total != b.records[0].total


def test_test_mse_cadence():
    cfg = tiny_config(epochs=7, trials=1, test_every=3)
    res = run_trial(cfg, 0)
    scored = [r.epoch for r in res.records if np.isfinite(r.test_mse)]
    assert scored == [0, 3, 6]


def test_monotone_epochs_and_total_consistency():
    cfg = tiny_config(policy="softadapt")
    res = run_trial(cfg, 0)
    epochs = [r.epoch for r in res.records]
    assert epochs == sorted(epochs)
    for r in res.records:
        assert r.total == pytest.approx(float(np.dot(r.lambdas, r.losses)))


# -- sweeps and outputs ------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = tiny_config(epochs=6, trials=2, test_every=2)
    result = run_sweep(cfg, out_dir=out)
    return out, cfg, result


def test_sweep_files_written(sweep_dir):
    out, cfg, result = sweep_dir
    for name in ("records.csv", "curve.csv", "summary.csv", "curve.svg",
                 "trial-0.params", "trial-1.params"):
        assert os.path.exists(os.path.join(out, name))
    assert result.diverged == 0
    assert np.isfinite(result.final_mean)


def test_curve_matches_recomputation_from_records(sweep_dir):
    out, cfg, result = sweep_dir
    with open(os.path.join(out, "records.csv")) as f:
        rows = list(csv.DictReader(f))
    by_epoch = {}
    for row in rows:
        mse = float(row["test_mse"])
        if np.isfinite(mse):
            by_epoch.setdefault(int(row["epoch"]), []).append(mse)
    with open(os.path.join(out, "curve.csv")) as f:
        for row in csv.DictReader(f):
            vals = by_epoch[int(row["epoch"])]
            assert float(row["mean_test_mse"]) == pytest.approx(np.mean(vals), abs=1e-12)
            assert float(row["std_test_mse"]) == pytest.approx(np.std(vals), abs=1e-12)
            assert int(row["n_trials"]) == len(vals)


def test_std_zero_for_single_trial(tmp_path):
    result = run_sweep(tiny_config(trials=1, epochs=3), out_dir=tmp_path)
    assert np.all(result.curve[:, 2] == 0.0)


def test_saved_params_reload_and_predict(sweep_dir):
    out, cfg, result = sweep_dir
    spec, params = load_params(os.path.join(out, "trial-0.params"))
    assert spec.widths == (1, 6, 1)
    prob = cfg.make_problem()
    pred = prob.predict(spec, params, np.linspace(0, 0.9, 5))
    expect = prob.predict(result.trials[0].spec, result.trials[0].params,
                          np.linspace(0, 0.9, 5))
    assert np.array_equal(pred, expect)


def test_records_byte_identical_modulo_walltime(tmp_path):
    def strip_walltime(path):
        with open(path) as f:
            rows = list(csv.reader(f))
        i = rows[0].index("wall_time")
        return [row[:i] + row[i + 1:] for row in rows]

    cfg = tiny_config(policy="stoch-uniform", epochs=4, trials=2)
    run_sweep(cfg, out_dir=tmp_path / "a")
    run_sweep(cfg, out_dir=tmp_path / "b")
    assert strip_walltime(tmp_path / "a" / "records.csv") \
        == strip_walltime(tmp_path / "b" / "records.csv")


# -- cli ---------------------------------------------------------------------


def test_cli_train_and_eval(tmp_path, capsys):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text(
        "name = clitest\nproblem = riccati\nepochs = 3\ntrials = 1\n"
        "widths = 1,5,1\nn_interior = 15\n"
    )
    out = tmp_path / "run"
    assert cli_main(["train", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert (out / "records.csv").exists()
    assert cli_main(["eval", "--params", str(out / "trial-0.params"),
                     "--problem", "riccati"]) == 0
    text = capsys.readouterr().out
    assert "test MSE" in text


def test_cli_oracle(tmp_path, capsys):
    out = tmp_path / "pb.csv"
    assert cli_main(["oracle", "--problem", "pb-linear", "--out", str(out)]) == 0
    from pinnbench.oracle import ReferenceGrid

    grid = ReferenceGrid.from_csv(out)
    assert grid.metadata["problem"] == "pb-linear-radial"


def test_cli_sweep(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    (d / "a.cfg").write_text(
        "name = swA\nproblem = riccati\nepochs = 2\ntrials = 1\n"
        "widths = 1,5,1\nn_interior = 10\n"
    )
    out = tmp_path / "runs"
    assert cli_main(["sweep", "--config-dir", str(d), "--out", str(out)]) == 0
    assert (out / "summary.csv").exists()
    assert (out / "swA" / "curve.csv").exists()
