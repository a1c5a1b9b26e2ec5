import numpy as np
import pytest

from lrwh import cli

SMALL = """
[scenario]
name = tiny
[grid]
dim = 2
extents = 0 1, 0 1
partition = 2 2
n = 9
[boundary]
default = nonreflecting
north = neumann
[source]
kind = gaussian_point
center = 0.5 0.5
omega = 2pi
[solver]
method = lowrank
memory = {memory}
theta = 0.01
eps_star = 1e-4
max_iters = {max_iters}
[oracle]
compare = {compare}
"""


def _cfg(memory=0, max_iters=100, compare="dense_waveholtz"):
    return SMALL.format(memory=memory, max_iters=max_iters, compare=compare)


@pytest.mark.parametrize("text", ["5pi", "5*pi", "pi/2", "2.5", "1e-3"])
def test_num_parsing(text):
    ref = {"5pi": 5 * np.pi, "5*pi": 5 * np.pi, "pi/2": np.pi / 2, "2.5": 2.5, "1e-3": 1e-3}[text]
    assert cli._num(text) == pytest.approx(ref)


def test_parse_valid():
    cfg = cli.parse_config(_cfg())
    assert cfg.name == "tiny" and cfg.partition == (2, 2) or list(cfg.partition) == [2, 2]
    assert cfg.omega == pytest.approx(2 * np.pi)
    assert cfg.boundary["north"] == "neumann"


@pytest.mark.parametrize("bad,needle,line", [
    ("n = 9", "n = nine", 8),
    ("memory = {memory}", "memory = zero", 18),
    ("method = lowrank", "method = spectral", 17),
    ("eps_star = 1e-4", "eps_star = 1e-4\ncolour = red", 21),
])
def test_errors_carry_line_numbers(bad, needle, line):
    text = SMALL.replace(bad, needle).format(memory=0, max_iters=100, compare="none")
    with pytest.raises(cli.ConfigError) as exc:
        cli.parse_config(text, "s.cfg")
    assert f"s.cfg:{line}:" in str(exc.value)


def test_semantic_errors():
    with pytest.raises(cli.ConfigError, match="coordinates"):
        cli.parse_config(_cfg().replace("center = 0.5 0.5", "center = 0.5 0.5 0.5"))
    with pytest.raises(cli.ConfigError, match="unknown section"):
        cli.parse_config(_cfg() + "\n[extras]\nx = 1\n")


def test_bundled_scenarios_validate(capsys):
    names = cli.bundled_scenarios()
    assert len(names) >= 6
    for name in names:
        assert cli.main(["validate", "--config", name]) == 0
    assert "PPW" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[grid]\nn = x\n")
    assert cli.main(["validate", "--config", str(p)]) == 1
    assert cli.main(["validate", "--config", "missing.cfg"]) == 1
    ok = tmp_path / "ok.cfg"
    ok.write_text(_cfg())
    assert cli.main(["validate", "--config", str(ok), "--seed", "-1"]) == 1
    assert cli.main(["validate", "--config", str(ok), "--threads", "0"]) == 1
    short = tmp_path / "short.cfg"
    short.write_text(_cfg(max_iters=1, compare="none"))
    assert cli.main(["run", "--config", str(short), "--out", str(tmp_path / "o1")]) == 2


def test_run_writes_schema_csvs(tmp_path):
    p = tmp_path / "ok.cfg"
    p.write_text(_cfg(memory=2))
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(p), "--out", str(out)]) == 0
    for name in ("residuals", "ranks", "errors", "timings"):
        assert (out / f"{name}.csv").read_text().startswith("# schema_version=1\n")
    res = cli.read_csv(out / "residuals.csv")
    assert min(float(res[-1]["rho_G"]), float(res[-1]["rho_X"])) <= 1e-4
    err = {(r["metric"], r["block"]): float(r["value"]) for r in cli.read_csv(out / "errors.csv")}
    assert err[("error_vs_dense_waveholtz", "all")] < 1e-3
    ranks = cli.read_csv(out / "ranks.csv")
    assert {r["block"] for r in ranks} == {"0:0", "0:1", "1:0", "1:1"}


def test_helmholtz_direct_comparison():
    rep = cli.run_scenario(cli.parse_config(_cfg(compare="helmholtz_direct")))
    assert rep.converged
    assert any(e["metric"] == "error_vs_helmholtz_direct" for e in rep.errors)


def test_greens_study(tmp_path):
    text = """
[scenario]
name = g
study = greens
[grid]
extents = 0 5, 0 1
partition = 5 1
n = 21
[source]
center = -0.1 0.5
omega = 5pi
[study]
eps_scales = 1e-3
resolutions = 21
"""
    cfg = cli.parse_config(text)
    assert cli.main(["run", "--config", _write(tmp_path, text), "--out", str(tmp_path / "g")]) == 0
    rows = cli.read_csv(tmp_path / "g" / "ranks.csv")
    assert len(rows) == 5 and cfg.study == "greens"
    assert all(int(r["rank_real"]) >= 1 for r in rows)


def test_timing_study_small():
    cfg = cli.parse_config(_cfg().replace("center = 0.5 0.5", "center = 0.53 0.47").replace("[solver]", "[study]\neps_scales = 1e-3\nrepetitions = 2\n[solver]"))
    rows = cli.run_timing_study(cfg)
    assert len(rows) == 4
    assert all(r["step_difference"] < 10 * r["eps"] for r in rows)


def test_csv_roundtrip(tmp_path):
    cli.write_csv(tmp_path / "x.csv", ["a", "b"], [dict(a=1, b=0.1), dict(a=2, b=True)])
    rows = cli.read_csv(tmp_path / "x.csv")
    assert rows[0]["b"] == "1.0000000000000001e-01" and rows[1]["b"] == "1"
    (tmp_path / "y.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        cli.read_csv(tmp_path / "y.csv")


def _write(tmp_path, text):
    p = tmp_path / "s.cfg"
    p.write_text(text)
    return str(p)


def test_reports_are_deterministic(tmp_path):
    p = tmp_path / "ok.cfg"
    p.write_text(_cfg(memory=2, compare="none"))
    for name in ("a", "b"):
        assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / name), "--seed", "7"]) == 0
    for f in ("residuals.csv", "ranks.csv", "errors.csv"):
        a = [{k: v for k, v in r.items() if k != "seconds"} for r in cli.read_csv(tmp_path / "a" / f)]
        b = [{k: v for k, v in r.items() if k != "seconds"} for r in cli.read_csv(tmp_path / "b" / f)]
        assert a == b
