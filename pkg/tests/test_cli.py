import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from msgan import cli
from msgan.experiments import PLAN_COUNTERS, read_rows, verify_report
from msgan.gan import Dataset, GeneratorEnsemble
from msgan.scenario import load_scenario

TINY = """\
schema = 1
name = "tiny"

[chain]
link_lengths = [1.0, 0.8]
joint_lower = [-3.0, -3.0]
joint_upper = [3.0, 3.0]

[world]
obstacles = [{ circle = { center = [1.1, 1.0], radius = 0.3 } }]

[[constraints]]
kind = "joint_limit"

[task]
kind = "ee_pose"
w_diag = [1.0, 1.0, 0.0]

[planner]
max_iter = 300
goal_count = 3

[gan]
epochs = 3
batch_size = 32

[model]
n_nets = 2
hidden = [16, 16]
disc_hidden = [8, 8]

[experiment]
dataset_size = 120
coverage_clusters = 4
"""

BLOCKED = TINY.replace("center = [1.1, 1.0], radius = 0.3", "center = [0.0, 0.0], radius = 0.5")


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """A scenario file, a dataset and a trained model shared by the module."""
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.toml").write_text(TINY)
    assert run("gen-data", "--scenario", d / "tiny.toml", "--seed", 1, "--out", d / "data.csv") == 0
    assert run("train", "--scenario", d / "tiny.toml", "--data", d / "data.csv", "--seed", 1,
               "--out", d / "model") == 0
    return d


# --- gen-data and train --------------------------------------------------


def test_gen_data_row_count_and_acceptance(tmp_path, capsys):
    (tmp_path / "s.toml").write_text(TINY.replace("obstacles = [{ circle = { center = [1.1, 1.0], radius = 0.3 } }]",
                                                  "obstacles = []"))
    assert run("gen-data", "--scenario", tmp_path / "s.toml", "--n", 37, "--out", tmp_path / "d.csv") == 0
    assert len(Dataset.load(tmp_path / "d.csv")) == 37
    assert "acceptance rate 100.0%" in capsys.readouterr().out


def test_gen_data_is_deterministic(work, tmp_path):
    assert run("gen-data", "--scenario", work / "tiny.toml", "--seed", 1, "--out", tmp_path / "again.csv") == 0
    assert (tmp_path / "again.csv").read_bytes() == (work / "data.csv").read_bytes()


def test_gen_data_defaults_to_scenario_size(work):
    assert len(Dataset.load(work / "data.csv")) == 120


def test_train_writes_model_and_history(work):
    ens = GeneratorEnsemble.load(work / "model")
    assert ens.n_nets == 2 and ens.dof == 2
    lines = (work / "model" / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,g_loss,d_loss,c_ee,c_s,c_l"
    assert len(lines) == 1 + 3
    assert np.all(np.isfinite(np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])))
    assert (work / "model" / "dataset.csv").read_bytes() == (work / "data.csv").read_bytes()


def test_train_zero_epochs_gives_untrained_manifest(work, tmp_path):
    (tmp_path / "zero.toml").write_text("[gan]\nepochs = 0\n[model]\nn_nets = 3\n")
    assert run("train", "--scenario", work / "tiny.toml", "--data", work / "data.csv", "--config",
               tmp_path / "zero.toml", "--out", tmp_path / "m") == 0
    assert (tmp_path / "m" / "manifest.json").exists()
    assert GeneratorEnsemble.load(tmp_path / "m").n_nets == 3
    assert (tmp_path / "m" / "history.csv").read_text().splitlines() == ["epoch,g_loss,d_loss,c_ee,c_s,c_l"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code(work, tmp_path):
    (tmp_path / "hot.toml").write_text("[gan]\nepochs = 20\nlr_d = 1e300\nlr_g = 1e300\ngrad_clip = 0.0\n")
    code = run("train", "--scenario", work / "tiny.toml", "--data", work / "data.csv", "--config",
               tmp_path / "hot.toml", "--out", tmp_path / "m")
    assert code == cli.EXIT_DIVERGED


# --- exit codes ----------------------------------------------------------


def test_config_errors_exit_2(work, tmp_path):
    assert run("gen-data", "--scenario", tmp_path / "missing.toml", "--out", tmp_path / "x.csv") == 2
    assert run("gen-data", "--scenario", "no_such_builtin", "--out", tmp_path / "x.csv") == 2
    (tmp_path / "bad.toml").write_text("[gan]\nno_such_option = 1\n")
    assert run("train", "--scenario", work / "tiny.toml", "--data", work / "data.csv", "--config",
               tmp_path / "bad.toml", "--out", tmp_path / "m") == 2
    (tmp_path / "extra.toml").write_text("[surprise]\nx = 1\n")
    assert run("train", "--scenario", work / "tiny.toml", "--data", work / "data.csv", "--config",
               tmp_path / "extra.toml", "--out", tmp_path / "m") == 2
    assert run("eval-ik", "--scenario", work / "tiny.toml", "--model", work / "model", "--trials", 0,
               "--out", tmp_path / "x.csv") == 2
    assert run("eval-ik", "--scenario", work / "tiny.toml", "--model", tmp_path / "nowhere", "--out",
               tmp_path / "x.csv") == 2


def test_model_dof_mismatch_exit_2(work, tmp_path):
    assert run("eval-projection", "--scenario", "reference6", "--model", work / "model", "--trials", 1,
               "--out", tmp_path / "x.csv") == 2


def test_infeasible_scenario_exit_3(tmp_path):
    (tmp_path / "blocked.toml").write_text(BLOCKED)
    assert run("gen-data", "--scenario", tmp_path / "blocked.toml", "--out", tmp_path / "d.csv") == 3


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen-data"])
    assert exc.value.code == 2


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "msgan.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("gen-data", "train", "eval-projection", "eval-ik", "bench-plan", "plan", "coverage"):
        assert name in out.stdout


# --- evaluation suites ---------------------------------------------------


@pytest.mark.parametrize("command", ["eval-projection", "eval-ik"])
def test_eval_produces_paired_rows(work, tmp_path, command):
    out = tmp_path / "ev.csv"
    assert run(command, "--scenario", work / "tiny.toml", "--model", work / "model", "--trials", 6,
               "--seed", 3, "--out", out) == 0
    rows = read_rows(out, ("iterations", "evaluations"))
    assert len(rows) == 12
    assert [r["method"] for r in rows[:2]] == ["random", "gan"]
    assert all(r["iterations"] >= 0 and r["evaluations"] >= 0 for r in rows)
    assert verify_report(out, command, ("iterations", "evaluations"))
    assert (tmp_path / "ev.summary.csv").exists() and (tmp_path / "ev.timing.csv").exists()


def test_bench_plan_is_byte_identical_and_valid(work, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("bench-plan", "--scenario", work / "tiny.toml", "--model", work / "model", "--trials", 3,
                   "--seed", 5, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.summary.csv").read_bytes() == (tmp_path / "b.summary.csv").read_bytes()
    rows = read_rows(a, PLAN_COUNTERS)
    assert len(rows) == 6
    assert all(r[c] >= 0 for r in rows for c in PLAN_COUNTERS)
    assert all(r["path_nodes"] > 0 for r in rows if r["success"])


def test_bench_plan_independent_of_worker_count(work, tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("MS_THREADS", threads)
        out = tmp_path / f"t{threads}.csv"
        assert run("bench-plan", "--scenario", work / "tiny.toml", "--model", work / "model", "--trials", 3,
                   "--seed", 9, "--out", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_tampered_summary_is_detected(work, tmp_path):
    out = tmp_path / "ev.csv"
    assert run("eval-projection", "--scenario", work / "tiny.toml", "--model", work / "model", "--trials", 3,
               "--out", out) == 0
    summary = tmp_path / "ev.summary.csv"
    summary.write_text(summary.read_text().replace("random,3,", "random,4,"))
    with pytest.raises(Exception):
        verify_report(out, "projection", ("iterations", "evaluations"))


@pytest.mark.parametrize("with_model", [True, False])
def test_plan_writes_validated_paths(work, tmp_path, with_model):
    from msgan.planner import validate_path

    out = tmp_path / "paths.csv"
    args = ["plan", "--scenario", work / "tiny.toml", "--trials", 2, "--seed", 1, "--out", out]
    if with_model:
        args += ["--model", work / "model"]
    assert run(*args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "trial,node,q0,q1"
    table = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, 4)
    problem = load_scenario(work / "tiny.toml").problem
    for t in np.unique(table[:, 0]):
        path = table[table[:, 0] == t][:, 2:]
        assert validate_path(problem, path)


# --- coverage ------------------------------------------------------------


def test_coverage_outputs(work, tmp_path):
    prefix = tmp_path / "cov"
    assert run("coverage", "--scenario", work / "tiny.toml", "--model", work / "model", "--out", prefix) == 0
    ET.parse(str(prefix) + ".svg")
    lines = (tmp_path / "cov.csv").read_text().splitlines()
    assert lines[0] == "model,n_nets,samples,epsilon,coverage,clusters"
    dataset = lines[1].split(",")
    assert dataset[0] == "dataset" and float(dataset[4]) == 1.0 and int(dataset[5]) == 4
    # the ensemble row plus one row per member net
    assert [ln.split(",")[0] for ln in lines[2:]] == ["model", "model/net0", "model/net1"]


def test_coverage_of_model_directory_tree(work, tmp_path):
    import shutil

    root = tmp_path / "models"
    shutil.copytree(work / "model", root / "a")
    shutil.copytree(work / "model", root / "b")
    assert run("coverage", "--scenario", work / "tiny.toml", "--model", root, "--out", tmp_path / "c.svg") == 0
    names = [ln.split(",")[0] for ln in (tmp_path / "c.csv").read_text().splitlines()[1:]]
    assert names[0] == "dataset" and "a" in names and "b" in names


def test_coverage_without_models_exit_2(work, tmp_path):
    assert run("coverage", "--scenario", work / "tiny.toml", "--model", tmp_path, "--out", tmp_path / "c") == 2
