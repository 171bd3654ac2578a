import numpy as np
import pytest

from rmpcpg import config
from rmpcpg.cli import EXIT_CONFIG, EXIT_INFEASIBLE, main
from rmpcpg.config import ConfigError
from rmpcpg.experiments import read_csv, write_csv


def test_defaults_roundtrip(tmp_path):
    for exp in config.EXPERIMENTS:
        cfg = config.resolve(exp)
        p = tmp_path / f"{exp}.cfg"
        p.write_text(config.dump(exp, cfg))
        assert config.resolve(exp, p) == cfg


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("eta_bar = 0.1\nbogus = 3\n")
    with pytest.raises(ConfigError, match="bogus"):
        config.resolve("fig1", p)
    with pytest.raises(ConfigError):
        config.resolve("fig1", overrides=["nokey"])
    with pytest.raises(ConfigError):
        config.resolve("fig1", overrides=["grid_points=abc"])
    with pytest.raises(ConfigError):
        config.resolve("fig1", overrides=["gamma=1.5"])


def test_override_precedence(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nN = 12   # inline\nradii = 0.1, 0.05\n")
    cfg = config.resolve("rmpc_limit", p, ["N=8"])
    assert cfg["N"] == 8 and cfg["radii"] == (0.1, 0.05)


def test_wrong_experiment_in_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("experiment = fig3\n")
    with pytest.raises(ConfigError):
        config.resolve("fig1", p)


def test_default_origin_flags():
    f = config.schema("fig1")
    assert f["theta"].benchmark and f["eta_bar"].benchmark and not f["N"].benchmark
    assert "non-paper default" in config.dump("fig1", config.resolve("fig1"))


def test_csv_format(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["a", "b", "c"], [(0.1, 3, "z")])
    assert p.read_text() == "a,b,c\n0.10000000000000001,3,z\n"
    t = read_csv(p)
    assert t["a"][0] == 0.1 and t["c"][0] == "z"
    with pytest.raises(ValueError):
        write_csv(tmp_path / "y.csv", ["a"], [(1, 2)])


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "solver_corpus", "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
    assert (tmp_path / "o" / "resolved.cfg").exists()
    t = read_csv(tmp_path / "o" / "solver_corpus.csv")
    assert len(t["problem"]) >= 10
    assert main(["run", "fig1", "--out", str(tmp_path / "b"), "--set", "nope=1"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as err:
        main(["run", "fig1", "--out", str(tmp_path / "c"), "--seed", "-1"])
    assert err.value.code == EXIT_CONFIG
    assert main(["config", "fig3"]) == 0
    assert "theta0 = 0.1" in capsys.readouterr().out


def test_cli_infeasible_exit(tmp_path, monkeypatch):
    from rmpcpg import experiments
    from rmpcpg.mpc import InfeasibleState

    def boom(cfg, streams, out):
        raise InfeasibleState("no feasible input")

    monkeypatch.setitem(experiments.RUNNERS, "rmpc_limit", boom)
    assert main(["run", "rmpc_limit", "--out", str(tmp_path)]) == EXIT_INFEASIBLE


def test_small_fig1_run(tmp_path):
    assert main(["run", "fig1", "--out", str(tmp_path), "--set", "grid_points=11", "--set", "eps_draws=50",
                 "--set", "dp_states=101", "--set", "dp_actions=101"]) == 0
    pol = read_csv(tmp_path / "policies.csv")
    assert list(pol) == ["s", "pi_mpc", "pi_rmpc", "pi_dp"] and len(pol["s"]) == 11
    rad = read_csv(tmp_path / "radius.csv")
    assert rad["eta"][5] == pytest.approx(0.05, abs=1e-6) and rad["eta"][0] <= 1e-6


def test_rmpc_limit_first_order_rate(tmp_path):
    # the first-stage back-off moves the input by eta_bar, so the limit constant tends to 1
    assert main(["run", "rmpc_limit", "--out", str(tmp_path), "--set", "grid_points=41"]) == 0
    t = read_csv(tmp_path / "rmpc_limit.csv")
    assert t["C"][0] == pytest.approx(1.0, abs=0.02)
    assert np.all(t["max_dev"] <= t["eta_bar"] * (1 + 1e-9))
