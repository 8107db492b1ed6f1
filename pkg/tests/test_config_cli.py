"""Config parsing, CSV cache, and end-to-end CLI runs (in process)."""

import os

import numpy as np
import pytest

from qdetect import (
    CacheMiss,
    ConfigError,
    Policy,
    config_hash,
    load_config,
    value_iteration,
)
from qdetect.cli import _parse_box, _parse_f_values, main
from qdetect.serialize import (
    atomic_write_text,
    read_csv,
    read_kernel,
    read_policy,
    read_value,
    write_csv,
    write_episode_trace,
    write_kernel,
    write_policy,
    write_value,
)

BASE_INI = """
[frame]
n_states = 2
n_actions = 2
utility = 20 5 ; 25 10

[params]
alpha = 0.812
lambda = 10.495
phi = 0.9

[change]
p = 0.95

[observation]
b = 0.6 0.25 0.15 ; 0.15 0.25 0.6

[costs]
f = 5
d = 1

[solver]
grid_n = 60
seed = 11
"""


def write_ini(tmp_path, text=BASE_INI, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_config_roundtrip():
    cfg = load_config(BASE_INI)
    assert cfg.frame.n_states == 2
    np.testing.assert_array_equal(
        cfg.frame.utility, [[20.0, 5.0], [25.0, 10.0]]
    )
    assert cfg.params.alpha == 0.812
    assert cfg.params.lam == 10.495
    assert cfg.change.p == 0.95
    assert cfg.obs.B.shape == (2, 3)
    assert cfg.costs.f == 5.0
    assert cfg.grid.n_cells == 60
    assert cfg.seed == 11
    assert cfg.vi_tol == 1e-8          # defaults kick in
    assert cfg.max_iter == 10000
    assert cfg.out_dir == "out"
    assert cfg.mixture is None
    assert len(cfg.hash) == 12


def test_load_config_mixture_and_comments():
    text = BASE_INI + """
[mixture]
atom1 = 0.712 10.495 0.9 0.5   # equal halves
atom2 = 0.912 10.495 0.9 0.5
"""
    cfg = load_config(text)
    assert cfg.mixture is not None
    atoms = cfg.mixture.atoms
    assert len(atoms) == 2
    assert atoms[0][0].alpha == 0.712
    assert atoms[0][1] == 0.5


def test_config_hash_canonicalization():
    reordered = """
[params]
phi = 0.9
lambda = 10.495
alpha = 0.812

[solver]
seed = 11
grid_n = 60

[costs]
d = 1
f = 5

[observation]
b = 0.6 0.25 0.15 ; 0.15 0.25 0.6

[change]
p = 0.95

[frame]
utility = 20 5 ; 25 10
n_actions = 2
n_states = 2
"""
    assert load_config(BASE_INI).hash == load_config(reordered).hash

    with_output = BASE_INI + "\n[output]\ndir = somewhere/else\n"
    assert load_config(with_output).hash == load_config(BASE_INI).hash
    assert load_config(with_output).out_dir == "somewhere/else"

    bumped = load_config(BASE_INI, overrides={"solver.grid_n": "80"})
    assert bumped.grid.n_cells == 80
    assert bumped.hash != load_config(BASE_INI).hash
    relocated = load_config(BASE_INI, overrides={"output.dir": "elsewhere"})
    assert relocated.hash == load_config(BASE_INI).hash


def test_config_hash_direct():
    sections = {"b": {"y": "2", "x": "1"}, "a": {"k": " 3  4 "}}
    assert config_hash(sections) == config_hash(
        {"a": {"k": "3 4"}, "b": {"x": "1", "y": "2"}}
    )
    assert config_hash(sections) != config_hash({"a": {"k": "3 5"}, "b": sections["b"]})


def test_require_names_sections():
    cfg = load_config(BASE_INI)
    cfg.require("change", "obs", "costs")    # present, no raise
    with pytest.raises(ConfigError, match=r"\[solver\] seed"):
        load_config(BASE_INI.replace("seed = 11", "")).require("seed")
    minimal = """
[frame]
n_states = 2
n_actions = 2
utility = 20 5 ; 25 10

[params]
alpha = 0.5
lambda = 10
phi = 0.5
"""
    with pytest.raises(ConfigError, match=r"\[costs\]"):
        load_config(minimal).require("costs")


def test_load_config_bad_values():
    with pytest.raises(ConfigError):
        load_config(BASE_INI.replace("utility = 20 5 ; 25 10",
                                     "utility = 20 5 ; 25"))
    with pytest.raises(ConfigError):
        load_config(BASE_INI.replace("lambda = 10.495", "lambda = brr"))
    with pytest.raises(ConfigError):
        load_config(BASE_INI.replace("p = 0.95", "p = -0.2"))
    with pytest.raises(ConfigError, match="both f and d"):
        load_config(BASE_INI.replace("d = 1\n", ""))
    with pytest.raises(ConfigError):
        load_config("[frame]\nn_states = 2\n")     # missing keys
    with pytest.raises(ConfigError):
        load_config("not ini at all [[[")


def test_write_csv_layout(tmp_path):
    path = str(tmp_path / "t.csv")
    write_csv(
        path, ("a", "b"), [(1, True), (0.5, False)], "deadbeef0123",
        meta={"note": 7},
    )
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == "# config=deadbeef0123"
    assert lines[1] == "# note=7"
    assert lines[2] == "a,b"
    assert lines[3] == "1,1"
    assert lines[4] == "0.5,0"

    meta, columns, rows = read_csv(path)
    assert meta == {"config": "deadbeef0123", "note": "7"}
    assert columns == ["a", "b"]
    assert rows == [["1", "1"], ["0.5", "0"]]


def test_read_csv_misses(tmp_path):
    with pytest.raises(CacheMiss):
        read_csv(str(tmp_path / "absent.csv"))
    empty = tmp_path / "empty.csv"
    empty.write_text("# config=x\n", encoding="utf-8")
    with pytest.raises(CacheMiss):
        read_csv(str(empty))


def test_kernel_roundtrip_exact(tmp_path, pd_kernel_small):
    path = str(tmp_path / "kernel.csv")
    write_kernel(path, pd_kernel_small, "cafe01234567")
    back = read_kernel(path, "cafe01234567")
    assert back.grid == pd_kernel_small.grid
    np.testing.assert_array_equal(back.table, pd_kernel_small.table)
    with pytest.raises(CacheMiss):
        read_kernel(path, "000000000000")


def test_value_policy_roundtrip_exact(tmp_path, pd_kernel_small, pd_change, pd_costs):
    table, policy = value_iteration(pd_kernel_small, pd_change, pd_costs)
    vpath = str(tmp_path / "value.csv")
    ppath = str(tmp_path / "policy.csv")
    write_value(vpath, table, "cafe01234567")
    write_policy(ppath, policy, "cafe01234567")
    vback = read_value(vpath, "cafe01234567")
    pback = read_policy(ppath, "cafe01234567")
    np.testing.assert_array_equal(vback.values, table.values)
    np.testing.assert_array_equal(pback.u, policy.u)
    assert pback.threshold == policy.threshold
    assert pback.crossings == policy.crossings


def test_policy_roundtrip_no_threshold(tmp_path):
    pts = np.array([0.0, 0.5, 1.0])
    policy = Policy(points=pts, u=np.array([1, 2, 1]), threshold=None, crossings=2)
    path = str(tmp_path / "p.csv")
    write_policy(path, policy, "cafe01234567")
    back = read_policy(path, "cafe01234567")
    assert back.threshold is None
    assert back.crossings == 2


def test_episode_trace_csv(
    tmp_path, pd_frame, pd_params, pd_change, pd_obs, pd_kernel_small,
    pd_costs, pd_action_map,
):
    from qdetect import always_stop_policy, simulate_episode

    trace = simulate_episode(
        pd_frame, pd_params, pd_change, pd_obs,
        always_stop_policy(pd_kernel_small.grid), pd_kernel_small, 3,
        costs=pd_costs, action_map=pd_action_map,
    )
    path = str(tmp_path / "trace.csv")
    write_episode_trace(path, trace, "cafe01234567")
    meta, columns, rows = read_csv(path)
    assert columns == ["n", "x", "y", "eta1", "a", "pi1", "u"]
    assert len(rows) == len(trace.records)
    assert meta["stop_time"] == "1"
    assert float(meta["cost"]) == trace.cost


def test_atomic_write(tmp_path):
    path = tmp_path / "nested" / "file.txt"
    atomic_write_text(str(path), "first\n")
    atomic_write_text(str(path), "second\n")
    assert path.read_text(encoding="utf-8") == "second\n"
    leftovers = [p for p in path.parent.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []


def test_parse_helpers():
    assert _parse_f_values("1:3,5") == [1.0, 2.0, 3.0, 5.0]
    assert _parse_f_values("0") == [0.0]
    with pytest.raises(ConfigError):
        _parse_f_values("a:b")
    assert _parse_box("0.1:0.5,10:100,0.2:0.2") == (
        (0.1, 0.5), (10.0, 100.0), (0.2, 0.2)
    )
    with pytest.raises(ConfigError):
        _parse_box("0.1:0.5,10:100")


def test_cli_solve_then_simulate(tmp_path, capsys):
    ini = write_ini(tmp_path)
    out = str(tmp_path / "out")
    assert main(["--config", ini, "--out", out, "solve"]) == 0
    cfg_hash = load_config(BASE_INI).hash
    cache = os.path.join(out, cfg_hash)
    for name in ("kernel.csv", "value.csv", "policy.csv"):
        assert os.path.exists(os.path.join(cache, name))
    assert "solve: threshold" in capsys.readouterr().out

    assert main(["--config", ini, "--out", out, "simulate",
                 "--episodes", "40"]) == 0
    episodes = os.path.join(cache, "episodes.csv")
    first = open(episodes, "rb").read()
    assert main(["--config", ini, "--out", out, "simulate",
                 "--episodes", "40"]) == 0
    assert open(episodes, "rb").read() == first
    assert "simulate: mean cost" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.ini"), "solve"]) == 2
    assert "error [config]" in capsys.readouterr().err

    no_costs = BASE_INI.replace("[costs]\nf = 5\nd = 1\n", "")
    ini = write_ini(tmp_path, no_costs, "nocosts.ini")
    assert main(["--config", ini, "--out", str(tmp_path / "o"), "solve"]) == 2
    assert "error [config]" in capsys.readouterr().err

    ini = write_ini(tmp_path)
    out = str(tmp_path / "out2")
    assert main(["--config", ini, "--out", out, "simulate"]) == 4
    err = capsys.readouterr().err
    assert "error [cache-miss]" in err
    assert "run the solve command first" in err

    strict = BASE_INI.replace("seed = 11", "seed = 11\nmax_iter = 1")
    ini = write_ini(tmp_path, strict, "strict.ini")
    assert main(["--config", ini, "--out", str(tmp_path / "o3"),
                 "--tol", "1e-15", "solve"]) == 3
    assert "error [numerical]" in capsys.readouterr().err


def test_cli_cache_keyed_by_hash(tmp_path, capsys):
    # a grid override changes the hash, so the old cache must not be reused
    ini = write_ini(tmp_path)
    out = str(tmp_path / "out")
    assert main(["--config", ini, "--out", out, "solve"]) == 0
    assert main(["--config", ini, "--out", out, "--grid", "50",
                 "simulate", "--episodes", "5"]) == 4
    capsys.readouterr()


def test_cli_stp_sweep(tmp_path, capsys):
    ini = write_ini(tmp_path)
    out = str(tmp_path / "out")
    assert main(["--config", ini, "--out", out, "stp-sweep",
                 "--phi-points", "5"]) == 0
    stdout = capsys.readouterr().out
    assert "violation onset" in stdout
    cache = os.path.join(out, load_config(BASE_INI).hash)
    meta, columns, rows = read_csv(os.path.join(cache, "stp_sweep.csv"))
    assert columns == ["phi", "p_defect_given_defect", "p_defect_given_coop",
                       "p_defect_unknown", "violation"]
    assert len(rows) == 5
    assert rows[0][0] == "0.0"
    assert rows[0][4] == "0"       # uncoupled row cannot violate
    assert rows[-1][0] == "1.0"


def test_cli_threshold_sweep(tmp_path, capsys):
    ini = write_ini(tmp_path)
    out = str(tmp_path / "out")
    assert main(["--config", ini, "--out", out, "threshold-sweep",
                 "--f-values", "0,2,5"]) == 0
    capsys.readouterr()
    cache = os.path.join(out, load_config(BASE_INI).hash)
    meta, columns, rows = read_csv(os.path.join(cache, "thresholds.csv"))
    assert columns == ["f", "thr_quantum", "thr_classical"]
    got = {float(r[0]): (float(r[1]), float(r[2])) for r in rows}
    assert got[0.0] == (0.0, 0.0)
    for f in (2.0, 5.0):
        thr_q, thr_c = got[f]
        assert thr_q >= thr_c - 1e-12


def test_cli_region_scan(tmp_path, capsys):
    ini = write_ini(tmp_path)
    out = str(tmp_path / "out")
    code = main([
        "--config", ini, "--out", out, "region-scan",
        "--ref-box", "0.9:0.9,50:50,0.3:0.3",
        "--test-box", "0.2:0.2,50:50,0.3:0.3",
        "--points-per-axis", "1", "--pi-samples", "5",
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "alpha-separated dominating/dominated pair certified: yes" in stdout
    cache = os.path.join(out, load_config(BASE_INI).hash)
    meta, columns, rows = read_csv(os.path.join(cache, "region_scan.csv"))
    assert len(rows) == 2
    by_dir = {r[6]: r for r in rows}
    assert by_dir["ref_to_test"][7] == "1"
    assert by_dir["test_to_ref"][7] == "0"


def test_cli_sensitivity(tmp_path, capsys):
    with_mix = BASE_INI + """
[mixture]
atom1 = 0.712 10.495 0.9 0.5
atom2 = 0.912 10.495 0.9 0.5
"""
    ini = write_ini(tmp_path, with_mix, "mix.ini")
    out = str(tmp_path / "out")
    assert main(["--config", ini, "--out", out, "sensitivity"]) == 0
    stdout = capsys.readouterr().out
    assert "worst slack" in stdout
    cache = os.path.join(out, load_config(with_mix).hash)
    meta, columns, rows = read_csv(os.path.join(cache, "sensitivity.csv"))
    assert columns == ["pi1", "lhs", "rhs", "slack"]
    assert float(meta["distance"]) > 0.0
    assert all(float(r[3]) >= -1e-9 for r in rows)
