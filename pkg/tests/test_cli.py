import json
import textwrap
import warnings

import pytest

from stablercm.cli import EXPERIMENT_KINDS, main, parse_config, parse_text, run_experiment
from stablercm.cli import experiments
from stablercm.cli.experiments import Check, Outcome
from stablercm.cli.main import atomic_write
from stablercm.cli.plots import Plot, Series, render_svg
from stablercm.errors import ConfigurationError

HOMOG = """
[experiment]
kind = "homogenization-rate"
[model]
d = 1
alpha = 0.5
T = 0.25
[environment]
kind = "piecewise-linear"
[lattice]
R = 4
k_list = [4, 8, 16]
[solver]
n_snapshots = 4
[run]
seeds = [0, 1, 2]
"""


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def minimal(alpha=1.5, d=1, extra=""):
    return f'[experiment]\nkind = "homogenization-rate"\n[model]\nd = {d}\nalpha = {alpha}\n{extra}'


# -- parsing and validation ---------------------------------------------------


def test_minimal_config_resolves_defaults():
    with pytest.warns(UserWarning, match="d > alpha"):
        cfg = parse_text(minimal())
    assert cfg.get("solver", "cfl_fraction") == 0.5
    assert cfg.get("solver", "n_snapshots") == 32
    assert cfg.seeds == [0] and cfg.threads == 1
    assert cfg.notes
    echo = cfg.echo()
    assert echo["model"]["alpha"] == 1.5 and echo["lattice"]["k_list"] == [8, 16, 32, 64]


def test_resolved_config_round_trips():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = parse_text(HOMOG)
        again = parse_text(cfg.to_text())
    assert again.echo() == cfg.echo()


@pytest.mark.parametrize("text,field", [
    (minimal(alpha=1.0), "model.alpha"),
    (minimal(alpha=2.5), "model.alpha"),
    (minimal(extra="[run]\nseeds = [1, 1]\n"), "run.seeds"),
    (minimal(extra="[run]\nseeds = [-1]\n"), "run.seeds"),
    (minimal(extra="[lattice]\nk_list = [8, 12]\n"), "lattice.k_list"),
    (minimal(extra="[lattice]\nk_list = [16, 8]\n"), "lattice.k_list"),
    (minimal(extra="[lattice]\nR = 0.3\nk_list = [1, 2]\n"), "lattice.R"),
    (minimal(extra="[solver]\ncfl_fraction = 1.5\n"), "solver.cfl_fraction"),
    (minimal(extra="[solver]\ncfl_fracton = 0.5\n"), "cfl_fracton"),
    (minimal(extra="[solvers]\nscheme = \"heun\"\n"), "solvers"),
    ("[model]\nalpha = 0.5\n", "experiment.kind"),
    ('[experiment]\nkind = "nope"\n[model]\nalpha = 0.5\n', "experiment.kind"),
    ('[experiment]\nkind = "cutoff-lemma"\n[model]\nalpha = 0.5\n', "model.beta"),
    (minimal(alpha=0.5, extra='[environment]\nkind = "modulated-static"\n'), "environment"),
    ("this is not ini", "malformed"),
])
def test_invalid_configs_name_the_field(text, field):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ConfigurationError, match=field.replace(".", r"\.")):
            parse_text(text)


def test_missing_file_is_a_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "absent.ini")


# -- command line ------------------------------------------------------------


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    assert all(kind in out for kind in EXPERIMENT_KINDS)


def test_validate_exit_codes(tmp_path, capsys):
    good = write(tmp_path, minimal(alpha=0.5), "good.ini")
    bad = write(tmp_path, minimal(alpha=1.0), "bad.ini")
    assert main(["validate", str(good)]) == 0
    assert "alpha = 0.5" in capsys.readouterr().out
    assert main(["validate", str(bad)]) == 2
    assert "model.alpha" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.ini")]) == 2


def test_run_writes_outputs_and_is_deterministic(tmp_path):
    cfg_path = write(tmp_path, HOMOG)
    csvs = []
    for threads, out in ((1, "a"), (1, "b"), (3, "c")):
        code = main(["run", str(cfg_path), "--threads", str(threads), "--out", str(tmp_path / out)])
        assert code == 0
        csvs.append((tmp_path / out / "measurements.csv").read_bytes())
    assert csvs[0] == csvs[1] == csvs[2]
    header = csvs[0].decode().splitlines()[0]
    assert header == "experiment,quantity,d,alpha,k,m,R,seed,t,value"
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["passed"] and summary["checks"]
    assert summary["config"]["run"]["seeds"] == [0, 1, 2]
    assert list((tmp_path / "a").glob("*.svg"))
    assert not list((tmp_path / "a").glob(".*"))


def test_seed_offset_shifts_seeds(tmp_path):
    cfg_path = write(tmp_path, HOMOG)
    assert main(["run", str(cfg_path), "--seed-offset", "10", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["run"]["seeds"] == [10, 11, 12]


def test_bad_thread_count_is_a_configuration_error(tmp_path):
    cfg_path = write(tmp_path, HOMOG)
    assert main(["run", str(cfg_path), "--threads", "0"]) == 2


def test_constant_environment_corrector_scaling_passes(tmp_path):
    cfg_path = write(tmp_path, """
        [experiment]
        kind = "corrector-scaling"
        [model]
        d = 1
        alpha = 0.5
        [environment]
        kind = "constant"
        [corrector]
        m_list = [2, 3, 4]
        [solver]
        n_snapshots = 4
        """)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert all(row["Q"] == 0.0 for row in summary["fits"]["rows"])


def test_time_change_check_passes(tmp_path):
    cfg_path = write(tmp_path, """
        [experiment]
        kind = "time-change-check"
        [model]
        d = 1
        alpha = 0.5
        T = 0.5
        [environment]
        kind = "modulated-static"
        [environment.profile]
        kind = "decaying"
        K = 1.0
        A = 0.5
        rho = 1.0
        [lattice]
        R = 2
        k_list = [4]
        [solver]
        n_snapshots = 8
        scheme = "heun"
        """)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o")]) == 0


def test_acceptance_failure_exit_code(tmp_path, monkeypatch):
    def failing(cfg, rec):
        rec.add("dummy", 1.0, seed=0)
        return Outcome(checks=[Check("always fails", False, 1.0, "< 0")])

    monkeypatch.setitem(experiments.DRIVERS, "homogenization-rate", failing)
    cfg_path = write(tmp_path, HOMOG)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o")]) == 1
    assert (tmp_path / "o" / "measurements.csv").exists()


def test_worker_failure_writes_partial_manifest(tmp_path, monkeypatch):
    def crashing(cfg, rec):
        rec.add("dummy", 1.0, seed=0)
        raise RuntimeError("worker exploded")

    monkeypatch.setitem(experiments.DRIVERS, "homogenization-rate", crashing)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = parse_text(HOMOG)
    report = run_experiment(cfg, tmp_path / "o")
    assert report.exit_code == 3 and "worker exploded" in report.error
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "aborted" and manifest["partial_rows"] == 1
    assert (tmp_path / "o" / "measurements.partial.csv").read_text().count("\n") == 2
    assert not (tmp_path / "o" / "measurements.csv").exists()
    cfg_path = write(tmp_path, HOMOG)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "p")]) == 3


# -- helpers -----------------------------------------------------------------


def test_atomic_write_replaces_in_place(tmp_path):
    path = tmp_path / "sub" / "x.txt"
    atomic_write(path, "one")
    atomic_write(path, "two")
    assert path.read_text() == "two"
    assert [p.name for p in path.parent.iterdir()] == ["x.txt"]


def test_svg_is_well_formed():
    import xml.etree.ElementTree as ET

    plot = Plot(title="err < 1 & more", xlabel="k", ylabel="error",
                series=[Series("data", [8, 16, 32], [1.0, 0.5, 0.25]),
                        Series("fit", [8, 32], [1.0, 0.25], line=True, dashed=True)])
    root = ET.fromstring(render_svg(plot))
    assert root.tag.endswith("svg")
