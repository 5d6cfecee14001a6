import json

import pytest
from typer.testing import CliRunner

from app.cli import app

runner = CliRunner()


def report_json(output: str) -> dict:
    # log records may share the captured stream
    return json.loads(output[output.index("{\n") :])


def test_simulate(tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(
        app,
        ["simulate", "--preset", "quick", "--methods", "omp", "--snr", "30", "--out", str(out)],
    )
    assert result.exit_code == 0
    report = report_json(result.stdout)
    assert report["preset"] == "quick"
    assert [m["method"] for m in report["methods"]] == ["omp"]
    assert json.loads(out.read_text()) == report
    omp = report["methods"][0]
    assert omp["channel_c"]["shape"] == [8, 16]
    assert len(omp["channel_c"]["real"]) == 8
    assert len(omp["gains_r"]["imag"]) == 26


def test_unknown_preset():
    result = runner.invoke(app, ["simulate", "--preset", "huge"])
    assert result.exit_code == 2
    assert "unknown preset" in result.output


def test_unknown_method():
    result = runner.invoke(app, ["simulate", "--preset", "quick", "--methods", "omp,music"])
    assert result.exit_code == 2
    assert "unknown method" in result.output


def test_simulate_has_no_workers_option():
    result = runner.invoke(app, ["simulate", "--preset", "quick", "--workers", "2"])
    assert result.exit_code == 2
    assert "--workers" in result.output


def test_missing_config_file(tmp_path):
    result = runner.invoke(app, ["sweep", "--config", str(tmp_path / "absent.toml")])
    assert result.exit_code == 2


def test_keys():
    result = runner.invoke(app, ["keys"])
    assert result.exit_code == 0
    assert "[system]" in result.stdout
    assert "  resolution:" in result.stdout


def test_sweep(tmp_path):
    config = tmp_path / "tiny.toml"
    config.write_text(
        '[scene]\nnum_targets = 2\nnum_scatterers = 2\noverlap = 1\n\n'
        '[system]\nresolution = 10.0\narea_x_min = -25.0\narea_y_min = -25.0\n'
        'area_width = 50.0\narea_height = 50.0\nnum_antennas = 16\nnum_subcarriers = 256\n'
        'bs_x = -25.0\nuser_x = 25.0\nuser_y = 5.0\n\n'
        '[sweep]\ntrials = 1\nsnr_db = [30.0]\nplots = false\n'
    )
    out = tmp_path / "results"
    result = runner.invoke(
        app, ["sweep", "--config", str(config), "--methods", "omp", "--out", str(out)]
    )
    assert result.exit_code == 0
    assert (out / "records.csv").exists()
    assert (out / "aggregate.csv").exists()
    assert not (out / "rmse.svg").exists()


@pytest.mark.slow
def test_validate():
    result = runner.invoke(app, ["validate", "--preset", "quick"])
    assert result.exit_code == 0
    assert "FAIL" not in result.stdout
    lines = result.stdout.splitlines()
    assert sum(line.startswith("PASS  ") for line in lines) == 6
