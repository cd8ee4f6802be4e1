import json
import math

import numpy as np
import pytest

from bobylev import cli, io
from bobylev.config import ConfigError, TOLERANCES, tolerances, validate


@pytest.mark.parametrize("cfg,path", [
    ({"alpha": 3}, "alpha"),
    ({"p": 0}, "p"),
    ({"kernel": {"family": "hard_spheres"}}, "kernel.family"),
    ({"grid": {"n_log": 1}}, "grid.n_log"),
    ({"truncation_sequence": [4, 0]}, "truncation_sequence.1"),
    ({"unknown": 1}, "<root>"),
])
def test_schema_errors_name_the_field(cfg, path):
    with pytest.raises(ConfigError) as info:
        validate(cfg)
    assert info.value.path == path
    assert path in str(info.value)


def test_valid_config_is_copied():
    cfg = {"kernel": {"family": "constant", "kappa_or_c": 2.0}, "alphas": [1.0]}
    out = validate(cfg)
    assert out == cfg and out is not cfg


def test_tolerance_overrides():
    tol = tolerances({"growth": 1e-3})
    assert tol["growth"] == 1e-3 and tol["picard"] == TOLERANCES["picard"]
    with pytest.raises(ValueError):
        tolerances({"nonsense": 1.0})
    with pytest.raises(ConfigError) as info:
        validate({"tolerances": {"nonsense": 1.0}})
    assert info.value.path == "tolerances"


def test_jsonable_flags_non_finite():
    out = io.jsonable({"a": math.inf, "b": np.float64(np.nan), "c": np.arange(2), "d": np.bool_(True)})
    assert out == {"a": "inf", "b": "nan", "c": [0, 1], "d": True}
    json.loads(io.dumps(out))


def test_csv_round_trip_and_sidecar(tmp_path):
    rows = [{"x": 0.1, "ok": True, "n": 3}, {"x": 1 / 3, "ok": False, "n": 4}]
    path = io.write_csv(tmp_path / "t.csv", rows, {"seed": 1})
    back = io.read_csv(path)
    assert float(back[1]["x"]) == 1 / 3
    assert back[0]["ok"] == "true"
    side = json.loads((tmp_path / "t.csv.json").read_text())
    assert side == {"columns": ["x", "ok", "n"], "config": {"seed": 1}, "rows": 2}


def test_writes_are_byte_identical(tmp_path):
    rows = [{"v": float(x)} for x in np.linspace(0, 1, 7)]
    io.write_csv(tmp_path / "a" / "f.csv", rows, {"k": [1, 2]})
    io.write_csv(tmp_path / "b" / "f.csv", rows, {"k": [1, 2]})
    assert io.digest(tmp_path / "a") == io.digest(tmp_path / "b")


def _run(tmp_path, command, cfg=None, name="out"):
    argv = [command, "--out", str(tmp_path / name)]
    if cfg is not None:
        cfg_path = tmp_path / f"{name}.json"
        cfg_path.write_text(json.dumps(cfg))
        argv += ["--config", str(cfg_path)]
    return cli.main(argv)


@pytest.mark.parametrize("command", ["constants", "levy", "collide", "nonexist"])
def test_fast_commands_pass(tmp_path, command):
    assert _run(tmp_path, command) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["summary"]["passed"] is True
    assert not (tmp_path / "out" / "failures.json").exists()


def test_evolve_command_outputs(tmp_path):
    cfg = {"grid": {"r_min": 1e-3, "r_max": 50.0, "n_log": 64, "n_linear": 0}, "T_final": 0.2, "n_outputs": 2}
    assert _run(tmp_path, "evolve", cfg) == 0
    rows = io.read_csv(tmp_path / "out" / "trajectory.csv")
    assert list(rows[0]) == ["t", "r", "phi"]
    assert len(rows) == 3 * 64


def test_failed_check_exits_1(tmp_path):
    code = _run(tmp_path, "nonexist", {"tolerances": {"slope_rel": 1e-12}})
    assert code == 1
    failures = json.loads((tmp_path / "out" / "failures.json").read_text())
    assert failures[0]["check"] == "slope"


def test_invalid_config_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "evolve", {"alpha": 3}) == 2
    assert "alpha" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["levy", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert _run(tmp_path, "evolve", {"dt": 1.0, "scheme": "picard", "kernel": {"family": "maxwellian_singular"}}) == 2


def test_divergence_exits_3(tmp_path):
    # W_{1/2} has too weak an anchor for the theta^(-3/2) kernel: the operator is infinite
    cfg = {"initial": {"preset": "w_p", "p": 0.5}}
    assert _run(tmp_path, "collide", cfg) == 3
    failures = json.loads((tmp_path / "out" / "failures.json").read_text())
    assert failures[0]["error"] == "DivergenceError"


def test_stale_failures_are_removed(tmp_path):
    assert _run(tmp_path, "nonexist", {"tolerances": {"slope_rel": 1e-12}}) == 1
    assert _run(tmp_path, "nonexist") == 0
    assert not (tmp_path / "out" / "failures.json").exists()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env_out"))
    assert cli.main(["levy"]) == 0
    assert (tmp_path / "env_out" / "density.csv").exists()
    # --out wins over the environment
    assert cli.main(["levy", "--out", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "summary.json").exists()


def test_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.ENV_OUT, raising=False)
    monkeypatch.chdir(tmp_path)
    assert cli.main(["nonexist"]) == 0
    assert (tmp_path / cli.DEFAULT_OUT / "nonexist.csv").exists()


def test_initial_from_file(tmp_path):
    r = np.geomspace(1e-5, 200.0, 400)
    lines = ["r,phi"] + [f"{float(a)!r},{math.exp(-a)!r}" for a in r]
    (tmp_path / "phi.csv").write_text("\n".join(lines) + "\n")
    cfg = {"initial": {"file": str(tmp_path / "phi.csv")}, "kernel": {"family": "constant"}}
    assert _run(tmp_path, "collide", cfg) == 0
    (tmp_path / "phi.csv").write_text("r,phi\n1,x\n")
    assert _run(tmp_path, "collide", cfg) == 2
    cfg["initial"]["file"] = str(tmp_path / "missing.csv")
    assert _run(tmp_path, "collide", cfg) == 2


def test_mixture_preset_needs_components(tmp_path):
    assert _run(tmp_path, "collide", {"initial": {"preset": "mixture"}}) == 2


def test_cli_seed_controls_diagnostics(tmp_path):
    cfg = {"grid": {"r_min": 1e-3, "r_max": 50.0, "n_log": 48, "n_linear": 0}, "T_final": 0.1, "n_outputs": 2}
    for name, seed in (("a", 1), ("b", 1), ("c", 2)):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(cfg))
        cli.main(["evolve", "--config", str(cfg_path), "--out", str(tmp_path / name), "--seed", str(seed)])
    a, b, c = (io.digest(tmp_path / n) for n in "abc")
    assert a == b
    assert a["diagnostics.csv"] != c["diagnostics.csv"]
