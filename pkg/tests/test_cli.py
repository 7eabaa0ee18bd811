import json

import pytest

from setattract import scenario_path
from setattract.cli import (ConfigError, MissingArtifact, load_scenario, main, parse_scenario, plot, run)

SHIPPED = ["example1", "example1_k9", "example2", "amr_fig3_a", "amr_fig3_b", "amr_fig3_c", "amr_fig4",
           "amr_fig4_b10k"]


def raw(name):
    return json.loads(scenario_path(name).read_text())


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_validate(name):
    sc = load_scenario(scenario_path(name))
    assert sc.name == name
    assert len(sc.config_hash) == 64


def test_config_hash_ignores_key_order():
    a = raw("example1")
    b = dict(reversed(list(a.items())))
    assert parse_scenario(a).config_hash == parse_scenario(b).config_hash
    c = dict(a, algorithm={"k_stop": 5, "eps": 1e-6})
    assert parse_scenario(c).config_hash != parse_scenario(a).config_hash


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.pop("modes"), "$.modes"),
    (lambda d: d.update(modes=[[[1, 0], [0, 1]]]), "$.modes"),
    (lambda d: d.update(modes=[[[1, 0], [0, 1]], [[0, 0], [0, 0]]]), "$.modes"),
    (lambda d: d["algorithm"].update(k_stop=0), "$.algorithm.k_stop"),
    (lambda d: d["algorithm"].update(eps=-1.0), "$.algorithm.eps"),
    (lambda d: d.update(W={"lower": [-5, -5], "upper": [5, 5]}), "$.omega0"),
    (lambda d: d.update(W={"foo": 1}), "$.W"),
    (lambda d: d["omega0"]["ball"].update(radius=9.0), "$.omega0"),
    (lambda d: d["simulation"].update(x0=[1.0]), "$.simulation.x0"),
    (lambda d: d["simulation"].update(target="moon"), "$.simulation.target"),
    (lambda d: d.update(type="quantum"), "$.type"),
])
def test_linear_validation_errors(mutate, path):
    d = raw("example1")
    mutate(d)
    with pytest.raises(ConfigError) as exc:
        parse_scenario(d)
    assert exc.value.path == path


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["params"].update(beta=0.5), "$.params"),
    (lambda d: d["params"].pop("mu"), "$.params.mu"),
    (lambda d: d.update(delta=0.0), "$.delta"),
    (lambda d: d.update(bmax=1e9), "$.bmax"),
    (lambda d: d["omega0"].update(b0=2e5), "$.omega0.b0"),
    (lambda d: d.update(grid={"per_axis": 1}), "$.grid.per_axis"),
    (lambda d: d["W"].update(wb=-1.0), "$.W"),
])
def test_amr_validation_errors(mutate, path):
    d = raw("amr_fig3_a")
    mutate(d)
    with pytest.raises(ConfigError) as exc:
        parse_scenario(d)
    assert exc.value.path == path


def test_malformed_file_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out"
    assert main(["run", str(bad), "--out", str(out)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "nope.json")]) == 1


def test_validate_ok(capsys):
    assert main(["validate", str(scenario_path("example2"))]) == 0
    assert "ok: example2" in capsys.readouterr().out


def small_linear(tmp_path):
    d = raw("example1")
    d.update(name="small", algorithm={"k_stop": 3, "eps": 1e-6},
             simulation={"x0": [0.5, 0.5], "steps": 5, "n_runs": 3, "seed": 1, "target": "rcis"},
             plot={"law_grid": 15})
    p = tmp_path / "small.json"
    p.write_text(json.dumps(d))
    return p


def test_run_linear_and_plots(tmp_path):
    p = small_linear(tmp_path)
    out = tmp_path / "run"
    code = main(["run", str(p), "--out", str(out)])
    assert code == 2  # Unsuccessful certificate with k_stop = 3
    report = json.loads((out / "report.json").read_text())
    assert report["certificate"]["rcis_k"] == 3
    for f in report["manifest"]:
        assert (out / f).exists()
    listed = set(report["manifest"])
    actual = {str(q.relative_to(out)) for q in out.rglob("*") if q.is_file()}
    assert listed == actual
    for fig in ("sets", "trajectories", "law", "ladder"):
        svg = plot(out, fig)
        first = svg.read_bytes()
        assert first.startswith(b"<?xml")
        assert plot(out, fig).read_bytes() == first
    with pytest.raises(MissingArtifact):
        plot(out, "grid")


def test_run_is_deterministic(tmp_path):
    p = small_linear(tmp_path)
    r1, _ = run(p, tmp_path / "a")
    r2, _ = run(p, tmp_path / "b")
    assert r1["config_hash"] == r2["config_hash"]
    assert r1["certificate"] == r2["certificate"]
    for f in r1["manifest"]:
        if f.endswith(".csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_override(tmp_path):
    p = small_linear(tmp_path)
    run(p, tmp_path / "a", seed=100)
    run(p, tmp_path / "b", seed=200)
    a = (tmp_path / "a" / "trajectories" / "run_000.csv").read_text()
    b = (tmp_path / "b" / "trajectories" / "run_000.csv").read_text()
    assert a != b


def test_run_amr_and_plots(tmp_path):
    out = tmp_path / "amr"
    assert main(["run", str(scenario_path("amr_fig3_a")), "--out", str(out)]) == 0
    assert json.loads((out / "certificate.json").read_text())["verdict"] == "RCCS"
    assert (out / "classification.csv").exists() and (out / "hulls" / "hull_0001.json").exists()
    assert plot(out, "grid").exists() and plot(out, "ladder").exists()
    out_c = tmp_path / "amr_c"
    assert main(["run", str(scenario_path("amr_fig3_c")), "--out", str(out_c)]) == 2


def test_plot_missing_artifacts(tmp_path):
    (tmp_path / "trajectories").mkdir()
    with pytest.raises(MissingArtifact):
        plot(tmp_path, "trajectories")
    assert main(["plot", str(tmp_path), "--figure", "sets"]) == 1


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "setattract", "validate", str(scenario_path("amr_fig4"))],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "amr_fig4" in r.stdout
