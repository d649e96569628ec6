import json
from pathlib import Path

import numpy as np
import pytest

from riskfilter import cli
from riskfilter.estimate import DescentConfig
from riskfilter.scenarios import run_scenario

ROOT = Path(__file__).resolve().parents[1]
SMALL = ROOT / "presets" / "oscillator_small.toml"
DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["--jobs", "1", "run", str(SMALL), "-o", str(out)]) == 0
    return out


def load_traj(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


def test_run_writes_artifacts(small_run):
    names = {p.relative_to(small_run).as_posix() for p in small_run.rglob("*") if p.is_file()}
    expected = {"config.json", "report.csv", "report.json", "groundtruth.json", "manifest.json"}
    assert expected <= names
    assert {f"trajectories/theta_{n}.csv" for n in ("0", "0.5", "20", "inf")} <= names
    man = json.loads((small_run / "manifest.json").read_text())
    assert man["seed"] == 7 and man["grid"] == {"t_end": 5.0, "num_intervals": 200}
    assert set(man["artifact_hashes"]) == names - {"manifest.json"}


def test_report_matches_baseline(small_run):
    assert (small_run / "report.csv").read_bytes() == (DATA / "baseline_oscillator_small_report.csv").read_bytes()
    assert (small_run / "trajectories" / "theta_20.csv").read_bytes() == (
        DATA / "baseline_oscillator_small_theta_20.csv"
    ).read_bytes()


def test_rerun_is_byte_identical(small_run, tmp_path):
    assert cli.main(["run", str(SMALL), "-o", str(tmp_path)]) == 0
    for p in small_run.rglob("*"):
        if p.is_file():
            assert (tmp_path / p.relative_to(small_run)).read_bytes() == p.read_bytes(), p.name


def test_json_and_toml_configs_agree(small_run, tmp_path):
    cfg = {
        "preset": "oscillator",
        "seed": 7,
        "N_A": 20,
        "num_intervals": 200,
        "substeps": 10,
        "theta_list": [0.5, 20.0],
        "sampler": {"kind": "lognormal", "mean": [-0.25], "var": [0.5]},
    }
    path = tmp_path / "small.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", str(path), "-o", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "report.csv").read_bytes() == (small_run / "report.csv").read_bytes()


def test_substep_refinement(small_run, tmp_path):
    assert cli.main(["run", str(SMALL), "-o", str(tmp_path), "--set", "substeps=1"]) == 0
    for name in ("0", "0.5", "20", "inf"):
        a = load_traj(small_run / "trajectories" / f"theta_{name}.csv")[:, 1:3]
        b = load_traj(tmp_path / "trajectories" / f"theta_{name}.csv")[:, 1:3]
        assert np.max(np.abs(a - b)) <= 1e-5 * np.max(np.abs(a))


def test_overrides(tmp_path):
    assert cli.main(["run", str(SMALL), "-o", str(tmp_path), "--set", "seed=8", "--set", "theta_list=1", "--set", "N_A=6"]) == 0
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["seed"] == 8 and cfg["theta_list"] == [1.0] and cfg["N_A"] == 6
    assert (tmp_path / "report.csv").read_text().splitlines()[0] == "level,0,1,inf"


def test_parse_overrides():
    assert cli.parse_overrides(["theta_list=0.5,20", "seed=3", "preset=amplidyne"]) == {
        "theta_list": [0.5, 20],
        "seed": 3,
        "preset": "amplidyne",
    }


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "/nonexistent/config.json"],
        ["run", str(SMALL), "--set", "colour=blue"],
        ["run", str(SMALL), "--set", "seed"],
        ["run", str(SMALL), "--set", "N_A=-4"],
        ["verify", "everything"],
        ["report", "/nonexistent/run"],
        ["--jobs", "0", "verify", "riccati"],
    ],
)
def test_usage_and_config_errors_exit_2(argv, tmp_path):
    if argv[0] == "run":
        argv = argv + ["-o", str(tmp_path)]
    assert cli.main(argv) == 2


def test_unknown_subcommand_exit_code():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 2


def test_nonconverged_exit_3(tmp_path, monkeypatch, capsys):
    def starved(config, jobs=1, descent=None):
        return run_scenario(config, jobs, DescentConfig(max_iters=1))

    monkeypatch.setattr(cli, "run_scenario", starved)
    assert cli.main(["run", str(SMALL), "-o", str(tmp_path)]) == 3
    assert "non-converged" in capsys.readouterr().err
    assert cli.main(["report", str(tmp_path)]) == 3


def test_runtime_failure_exit_1(tmp_path, capsys):
    cfg = {
        "preset": "custom",
        "custom": {"A": [[[400.0]]], "B": [[1.0]], "C": [[1.0]], "x0": [1.0], "t_end": 10.0},
        "num_intervals": 10,
        "substeps": 1,
        "theta_list": [1.0],
    }
    path = tmp_path / "unstable.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", str(path), "-o", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err
    assert "t=" in err


def test_report_command(small_run, capsys):
    assert cli.main(["report", str(small_run)]) == 0
    out = capsys.readouterr().out
    assert "esssup improvement" in out and "inf" in out


def test_synth_command(tmp_path):
    assert cli.main(["synth", str(SMALL), "-o", str(tmp_path)]) == 0
    gt = json.loads((tmp_path / "groundtruth.json").read_text())
    assert len(gt["y"]["values"]) == 201
    assert gt["generator"] == "numpy.random.Philox-4x64"


def test_verify_riccati(capsys):
    assert cli.main(["verify", "riccati"]) == 0
    assert capsys.readouterr().out.startswith("PASS  riccati")


def test_jobs_env(monkeypatch, tmp_path):
    monkeypatch.setenv("RISKFILTER_JOBS", "2")
    seen = {}

    def spy(config, jobs=1, descent=None):
        seen["jobs"] = jobs
        return run_scenario(config.replace(N_A=3, num_intervals=20, theta_list=[1.0]), jobs)

    monkeypatch.setattr(cli, "run_scenario", spy)
    assert cli.main(["run", str(SMALL), "-o", str(tmp_path)]) == 0
    assert seen["jobs"] == 2
