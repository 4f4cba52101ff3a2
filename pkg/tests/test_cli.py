import json
import shutil
import subprocess
import sys

import pytest

from prefsqa.cli import main

SMALL = ["--systems", "6", "--utterances", "4", "--ratings-per-utterance", "4", "--listeners", "12"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", *SMALL, "--dev-per-utterance", "1", "--seed", "3", "-o", str(out)]) == 0
    return out


def test_synth_outputs(data_dir):
    for name in ("dataset.csv", "latent.csv", "train.csv", "dev.csv", "manifest.json"):
        assert (data_dir / name).exists()
    lines = (data_dir / "dataset.csv").read_text().splitlines()
    assert lines[0] == "system_id,utterance_id,listener_id,score"
    assert len(lines) == 1 + 6 * 4 * 4
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 3


def test_synth_deterministic(tmp_path, data_dir):
    assert main(["synth", *SMALL, "--dev-per-utterance", "1", "--seed", "3", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "dataset.csv").read_bytes() == (data_dir / "dataset.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["simulate"],
    ["synth", "--systems", "0"],
    ["synth", "--bias-sd", "-1"],
    ["plan", "--method", "link", "--k", "7", "--systems", "6"],
    ["plan", "--method", "bs", "--k", "10", "--systems", "6"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(argv, tmp_path):
    if argv[0] in ("synth", "plan"):
        argv = argv + ["-o", str(tmp_path)]
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse rejects the arguments
        code = exc.code
    assert code == 1


def test_plan_on_data(tmp_path, data_dir, capsys):
    assert main(["plan", "--method", "bs", "--k", "15", "--data", str(data_dir / "dataset.csv"),
                 "--same-listener", "-o", str(tmp_path)]) == 0
    assert len((tmp_path / "plan.csv").read_text().splitlines()) == 16
    assert len((tmp_path / "pairs.csv").read_text().splitlines()) == 16
    assert "realized 15 pairs" in capsys.readouterr().out


def test_simulate(tmp_path, data_dir):
    out = tmp_path / "sim"
    assert main(["simulate", "--data", str(data_dir / "dataset.csv"), "--truth", str(data_dir / "latent.csv"),
                 "--method", "bs", "--agg", "dc,btl", "--k", "15,30", "--runs", "5", "--svg", "-o", str(out)]) == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 5
    assert len((out / "summary.csv").read_text().splitlines()) == 1 + 4
    assert (out / "chart.svg").read_text().startswith("<svg")


def test_simulate_rejects_ps(tmp_path, data_dir):
    assert main(["simulate", "--data", str(data_dir / "dataset.csv"), "--method", "bs", "--agg", "ps",
                 "--k", "15", "-o", str(tmp_path)]) == 1


def test_missing_input_exit_3(tmp_path):
    assert main(["simulate", "--data", str(tmp_path / "nope.csv"), "--method", "bs", "--k", "15",
                 "-o", str(tmp_path)]) == 3


def test_malformed_input_exit_1(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("system_id,utterance_id,listener_id,score\nA,u1,L,notanumber\n")
    assert main(["simulate", "--data", str(bad), "--method", "bs", "--k", "1", "-o", str(tmp_path)]) == 1


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("model")
    assert main(["train", "--data", str(data_dir / "train.csv"), "--epochs", "20", "-o", str(out)]) == 0
    return out


def test_train_outputs(model_dir):
    assert (model_dir / "theta.csv").read_text().startswith("utterance_id,theta\n")
    assert (model_dir / "bias.csv").read_text().startswith("listener_id,bias\n")


def test_eval_and_ttest(tmp_path, data_dir, model_dir, capsys):
    base = ["eval", "--model", str(model_dir), "--data", str(data_dir / "train.csv"), "--repeats", "4"]
    assert main(base + ["--threshold", "eer", "--agg", "dc", "--dev", str(data_dir / "dev.csv"),
                        "-o", str(tmp_path / "dc")]) == 0
    assert "UTP_BS_EER_DC" in capsys.readouterr().out
    th = json.loads((tmp_path / "dc" / "thresholds.json").read_text())
    assert th["t_lose"] <= 0 <= th["t_win"]
    assert main(base + ["--agg", "ps", "-o", str(tmp_path / "ps")]) == 0
    assert main(base + ["--agg", "mean", "-o", str(tmp_path / "mean")]) == 0
    assert "UTP_SC" in capsys.readouterr().out
    a, b = tmp_path / "dc" / "results.csv", tmp_path / "ps" / "results.csv"
    assert len(a.read_text().splitlines()) == 5
    assert main(["ttest", str(a), str(b), "-o", str(tmp_path / "t.json")]) == 0
    assert set(json.loads((tmp_path / "t.json").read_text())) == {"t", "p", "df", "n"}
    # identical files have zero-variance differences
    assert main(["ttest", str(a), str(a)]) == 1


def test_eval_usage_errors(tmp_path, data_dir, model_dir):
    base = ["eval", "--model", str(model_dir), "--data", str(data_dir / "train.csv"), "-o", str(tmp_path)]
    assert main(base + ["--agg", "ps", "--threshold", "er"]) == 1
    assert main(base + ["--agg", "dc"]) == 1
    assert main(base + ["--agg", "dc", "--threshold", "eer"]) == 1


def test_eval_zero_model_exit_2(tmp_path, data_dir, model_dir, capsys):
    zero = tmp_path / "zero"
    shutil.copytree(model_dir, zero)
    for name, head in (("theta.csv", "utterance_id,theta"), ("bias.csv", "listener_id,bias")):
        lines = (zero / name).read_text().splitlines()
        (zero / name).write_text("\n".join([head] + [f"{ln.split(',')[0]},0.0" for ln in lines[1:]]) + "\n")
    code = main(["eval", "--model", str(zero), "--data", str(data_dir / "train.csv"), "--threshold", "er",
                 "--agg", "dc", "--repeats", "2", "-o", str(tmp_path / "out")])
    assert code == 2
    assert "error:" in (tmp_path / "out" / "results.csv").read_text()


def test_rerun_reproduces(tmp_path, data_dir):
    out = tmp_path / "sim"
    argv = ["simulate", "--data", str(data_dir / "dataset.csv"), "--method", "link", "--k", "6,12",
            "--runs", "3", "-o", str(out)]
    assert main(argv) == 0
    first = (out / "results.csv").read_bytes()
    (out / "results.csv").unlink()
    assert main(["rerun", str(out / "manifest.json")]) == 0
    assert (out / "results.csv").read_bytes() == first


def test_console_script(tmp_path):
    exe = shutil.which("prefsqa")
    cmd = [exe] if exe else [sys.executable, "-m", "prefsqa.cli"]
    proc = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "prefsqa" in proc.stdout
