import json

import pandas as pd
import pytest
from click.testing import CliRunner

from ridge_loocv.cli import cli
from ridge_loocv.core.config import settings
from ridge_loocv.services.loocv import read_curve_csv


@pytest.fixture
def runner():
    """Click runner with separate stderr"""
    return CliRunner(mix_stderr=False)


def _envelope(stderr: str) -> dict:
    return json.loads(stderr[stderr.index('{\n  "error"'):])


def _manifest(out) -> dict:
    return json.loads(open(f"{out}.manifest.json", encoding="utf-8").read())


def test_version(runner):
    """Test --version reports the package version"""
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert settings.VERSION in result.stdout


def test_classify_writes_verdict_and_manifest(runner, csv_dataset, tmp_path):
    """Test classify emits a verdict record and a provenance manifest"""
    out = tmp_path / "verdict.json"
    result = runner.invoke(cli, ["classify", "--input", str(csv_dataset), "--target", "quality",
                                 "--categorical", "colour", "--points", "200", "--out", str(out)])
    assert result.exit_code == 0, result.stderr

    verdict = json.loads(out.read_text())
    assert isinstance(verdict["is_qvx"], bool)
    assert verdict["grid"]["points"] == 200
    for minimum in verdict["minima"]:
        assert set(minimum) == {"lambda", "loss", "kind"}

    manifest = _manifest(out)
    assert manifest["command"] == "classify"
    assert manifest["flags"]["points"] == 200
    assert manifest["summary"]["is_qvx"] == verdict["is_qvx"]
    assert len(manifest["config_hash"]) == 64


def test_classify_to_stdout(runner, csv_dataset, tmp_path):
    """Test classify prints JSON when no output file is given"""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        result = runner.invoke(cli, ["classify", "--input", str(csv_dataset), "--target", "quality",
                                     "--points", "100"])
        assert result.exit_code == 0, result.stderr
        assert "is_qvx" in json.loads(result.stdout)


def test_curve_command(runner, csv_dataset, tmp_path):
    """Test the curve command writes a readable curve file"""
    out = tmp_path / "curve.csv"
    result = runner.invoke(cli, ["curve", "--input", str(csv_dataset), "--target", "quality",
                                 "--points", "50", "--pcr-rank", "2", "--out", str(out)])
    assert result.exit_code == 0, result.stderr

    curve = read_curve_csv(out)
    assert curve.points == 50
    assert _manifest(out)["summary"]["tail_limit"] == pytest.approx(curve.tail_limit)


def test_preprocess_command(runner, csv_dataset, tmp_path):
    """Test preprocess writes standardized columns"""
    out = tmp_path / "std.csv"
    result = runner.invoke(cli, ["preprocess", "--input", str(csv_dataset), "--target", "quality",
                                 "--out", str(out)])
    assert result.exit_code == 0, result.stderr

    frame = pd.read_csv(out)
    assert "colour_white" in frame.columns
    assert frame["alcohol"].abs().sum() > 0
    assert abs(frame["alcohol"].mean()) < 1e-10
    assert (frame["alcohol"] ** 2).sum() == pytest.approx(len(frame))


def test_diagnose_command(runner, csv_dataset, tmp_path):
    """Test diagnose reports assumption quantities with a certificate"""
    out = tmp_path / "report.json"
    result = runner.invoke(cli, ["diagnose", "--input", str(csv_dataset), "--target", "quality",
                                 "--certificate", "--out", str(out)])
    assert result.exit_code == 0, result.stderr

    report = json.loads(out.read_text())
    assert report["n"] == 40 and report["d"] == 5
    assert report["certificate"] is not None
    assert not report["flat_spectrum"]


def test_experiment_command(runner, tmp_path):
    """Test an experiment run from a config file"""
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"n_values": [10], "alphas": [0.0, 1.0], "u_reps": 2, "y_reps": 2,
                                  "grid_points": 80}))
    out = tmp_path / "delta.csv"
    result = runner.invoke(cli, ["experiment", "--kind", "delta_sweep", "--seed", "5",
                                 "--config", str(config), "--out", str(out)])
    assert result.exit_code == 0, result.stderr

    rows = pd.read_csv(out)
    assert list(rows["alpha"]) == [0.0, 1.0]
    manifest = _manifest(out)
    assert manifest["seed"] == 5
    assert manifest["summary"]["scale"] == "desk"
    assert manifest["summary"]["config"]["u_reps"] == 2


@pytest.mark.parametrize("flag", ["--paper-scale", "--full-scale"])
def test_experiment_paper_scale_flag(runner, tmp_path, flag):
    """Test the published-scale flag and its alias are recorded in the manifest"""
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"n_values": [10], "alphas": [0.0], "u_reps": 1, "y_reps": 2,
                                  "grid_points": 60}))
    out = tmp_path / "delta.csv"
    result = runner.invoke(cli, ["experiment", "--kind", "delta_sweep", flag, "--config", str(config),
                                 "--out", str(out)])
    assert result.exit_code == 0, result.stderr

    manifest = _manifest(out)
    assert manifest["summary"]["scale"] == "full"
    assert manifest["summary"]["config"]["full_scale"] is True
    assert manifest["summary"]["config"]["u_reps"] == 1


def test_missing_target_exits_with_input_code(runner, csv_dataset, tmp_path):
    """Test dataset errors print the error envelope and exit 2"""
    result = runner.invoke(cli, ["classify", "--input", str(csv_dataset), "--target", "price",
                                 "--out", str(tmp_path / "v.json")])
    assert result.exit_code == 2
    assert _envelope(result.stderr)["error"]["code"] == "DATASET_FORMAT"


def test_bad_rank_exits_with_input_code(runner, csv_dataset, tmp_path):
    """Test an out-of-range PCR rank exits 2"""
    result = runner.invoke(cli, ["classify", "--input", str(csv_dataset), "--target", "quality",
                                 "--pcr-rank", "9", "--out", str(tmp_path / "v.json")])
    assert result.exit_code == 2
    assert _envelope(result.stderr)["error"]["code"] == "BAD_RANK"


def test_bad_experiment_config_exits_with_config_code(runner, tmp_path):
    """Test invalid experiment settings exit 4"""
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"n_values": [10], "alphas": [], "u_reps": 2}))
    result = runner.invoke(cli, ["experiment", "--kind", "delta_sweep", "--config", str(config),
                                 "--out", str(tmp_path / "x.csv")])
    assert result.exit_code == 4
    assert _envelope(result.stderr)["error"]["code"] == "EXPERIMENT_CONFIG"


def test_malformed_config_file(runner, tmp_path):
    """Test a config file that is not JSON exits 4"""
    config = tmp_path / "config.json"
    config.write_text("n_values: [10]")
    result = runner.invoke(cli, ["experiment", "--kind", "atlas", "--config", str(config),
                                 "--out", str(tmp_path / "x.csv")])
    assert result.exit_code == 4
