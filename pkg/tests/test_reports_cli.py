"""Report pipeline, schema validation and the CLI surface."""

import csv
import io
import json

import numpy as np
import pytest

from convlab.cli import main
from convlab.errors import ConfigError
from convlab.reports import (AnalysisConfig, canonical_json, load_config,
                             report_csv, run_analyze, run_cutlocus,
                             validate_report)

TORUS_CFG = {
    "model": "flat_torus",
    "points": [[0.25, 0.6]],
    "bound": 2.0,
    "seed": 5,
    "conditions": [],
    "ball_radii": [],
    "cut_directions": [],
}


@pytest.fixture(scope="module")
def torus_doc():
    return run_analyze(AnalysisConfig.from_dict(TORUS_CFG))


def test_config_validation_errors(tmp_path):
    with pytest.raises(ConfigError):
        AnalysisConfig.from_dict({"points": [[0, 0]]})
    with pytest.raises(ConfigError):
        AnalysisConfig.from_dict({"model": "sphereX", "points": [[0, 0]]})
    with pytest.raises(ConfigError):
        AnalysisConfig.from_dict({"model": "flat_torus",
                                  "points": [[0.1, 0.2]], "bound": -1})
    with pytest.raises(ConfigError):
        AnalysisConfig.from_dict({"model": "flat_torus",
                                  "points": [[0.1, 0.2]],
                                  "budgets": {"bogus": 3}})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_grid_point_resolution():
    cfg = AnalysisConfig.from_dict({
        "model": "flat_torus",
        "points": {"grid": [[0.1, 0.4, 2], [0.2, 0.3, 2]]},
    })
    assert len(cfg.points) == 4


def test_report_validates_and_serializes(torus_doc):
    validate_report(torus_doc)
    blob = canonical_json(torus_doc)
    assert "timestamp" not in blob and "wall_time_s" not in blob
    assert json.loads(blob)["kind"] == "analyze"


def test_report_csv_shape(torus_doc):
    rows = list(csv.reader(io.StringIO(report_csv(torus_doc))))
    header, data = rows[0], rows[1:]
    assert header[:2] == ["x1", "x2"]
    assert "i" in header and "i_halfwidth" in header
    assert len(data) == 1
    assert len(data[0]) == len(header)


def test_report_csv_encodes_exceeded_bounds():
    doc = run_analyze(AnalysisConfig.from_dict({
        "model": "euclidean", "points": [[0.0, 0.0]], "bound": 10.0,
        "conditions": [],
    }))
    rows = list(csv.reader(io.StringIO(report_csv(doc))))
    header, row = rows[0], rows[1]
    i_col = header.index("i")
    assert float(row[i_col]) == 10.0
    assert row[header.index("i_halfwidth")] == "nan"


def test_cli_analyze_writes_csv(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(TORUS_CFG))
    out = tmp_path / "report.csv"
    code = main(["analyze", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    assert out.read_text().startswith("x1,x2,")


def test_cli_rejects_unknown_model(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"model": "sphereX",
                                    "points": [[0.0, 0.0]]}))
    code = main(["analyze", "--config", str(cfg_path)])
    assert code == 2
    assert "sphereX" in capsys.readouterr().err


def test_cli_rejects_bad_point_syntax(tmp_path):
    out = tmp_path / "cut.json"
    code = main(["cutlocus", "--model", "flat_torus", "--point", "a,b",
                 "--out", str(out)])
    assert code == 2


def test_cutlocus_report(tmp_path):
    doc = run_cutlocus("flat_torus", [0.37, 0.81], bound=2.0, n_dirs=32)
    validate_report(doc)
    finite = [t for t in doc["t_cut"] if t is not None]
    assert len(doc["t_cut"]) == 32
    assert abs(min(finite) - 0.5) < 0.01
    assert not doc["summary"]["exceeds_bound"]
