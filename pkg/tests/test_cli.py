import json

import numpy as np
import pytest

from splinekern.cli import ConfigError, main, parse_config, read_fit_csv
from splinekern.core import (
    ConfigurationError,
    DesignDensity,
    ModelConfig,
    NoiseSpec,
    make_grid,
    sample_regression,
    sine,
    write_sample_csv,
)
from splinekern.spline import spline_objective

MINIMAL = {"model": {"regression": {"name": "sin"}}, "m": 2, "n_values": [200, 400, 800], "replications": 2}


def config_text(**changes):
    doc = json.loads(json.dumps(MINIMAL))
    for key, value in changes.items():
        doc[key] = value
    return json.dumps(doc)


@pytest.fixture
def sample_csv(tmp_path):
    grid = make_grid(2000)
    cfg = ModelConfig(sine(1.0), DesignDensity.uniform(grid), NoiseSpec("gaussian", 0.5), 1000)
    path = tmp_path / "s.csv"
    write_sample_csv(path, sample_regression(cfg, 4))
    return path


@pytest.fixture
def study_json(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(config_text(range="H", h_count=2, grid=400))
    return path


# --- configuration ----------------------------------------------------------------------


def test_defaults():
    cfg = parse_config(config_text())
    assert cfg.gamma == 1.0 and cfg.grid == 2000 and cfg.range == "H"
    assert cfg.noise == {"kind": "gaussian", "scale": 1.0, "kappa": 4.0, "shape": None}
    assert cfg.lam is None and cfg.seed == 0 and cfg.threads == 1


def test_g_range_lambda_midpoint():
    n_values = [10**6, 2 * 10**6, 4 * 10**6]
    text = config_text(range="G", model={"noise": {"kappa": 2.5}}, n_values=n_values)
    assert parse_config(text).lam == 2.25


def test_kappa_two_rejected():
    with pytest.raises(ConfigError, match="kappa > 2"):
        parse_config(config_text(model={"noise": {"kappa": 2}}))


def test_unknown_fields_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(config_text(colour="blue", model={"noise": {"sigma": 1}}))
    assert any("colour" in v for v in err.value.violations)
    assert any("model.noise.sigma" in v for v in err.value.violations)


def test_all_violations_reported():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({"model": {}, "m": 7, "n_values": [], "replications": 0, "threads": -1}))
    fields = {v.split(":")[0] for v in err.value.violations}
    assert {"m", "n_values", "replications", "threads"} <= fields


def test_json_error_position():
    with pytest.raises(ConfigurationError, match=r"line 2, column \d+"):
        parse_config('{"m": 2,\n "n_values": [1,, 2]}')


def test_empty_range_in_config():
    with pytest.raises(ConfigError, match="empty F-range"):
        parse_config(config_text(range="F", gamma=50.0, n_values=[10, 20, 40]))


def test_hash_ignores_threads():
    a = parse_config(config_text(threads=1))
    b = parse_config(config_text(threads=8))
    c = parse_config(config_text(seed=5))
    assert a.hash == b.hash != c.hash


# --- subcommands --------------------------------------------------------------------------


def test_fit_round_trip(tmp_path, sample_csv, capsys):
    out = tmp_path / "f.csv"
    assert main(["fit", "--input", str(sample_csv), "--m", "2", "--h", "0.1", "--output", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "seed:" in printed and "config hash:" in printed
    diag = json.loads(out.with_suffix(".json").read_text())
    assert out.read_text().startswith(f"# config_hash={diag['config_hash']} version=")
    f = read_fit_csv(out)
    data = np.loadtxt(sample_csv, delimiter=",", skiprows=1)
    assert spline_objective(f, data[:, 0], data[:, 1], 2, 0.1) == pytest.approx(diag["objective"], abs=1e-9)
    assert f.sup_norm() == pytest.approx(diag["sup_norm"], abs=1e-9)


def test_fit_missing_input(tmp_path):
    assert main(["fit", "--input", str(tmp_path / "nope.csv"), "--m", "2", "--h", "0.1", "--output", "x"]) == 1


def test_fit_bad_h(tmp_path, sample_csv):
    assert main(["fit", "--input", str(sample_csv), "--m", "2", "--h", "1.5", "--output", str(tmp_path / "f.csv")]) == 1


def test_kernel(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernel", "--m", "1", "--h", "0.1", "--grid", "200", "--output", str(out)]) == 0
    K = np.loadtxt(out, delimiter=",", comments="#")
    assert K.shape == (201, 201)
    np.testing.assert_allclose(K, K.T, atol=1e-9 * np.abs(K).max())
    diag = json.loads(out.with_suffix(".json").read_text())
    assert diag["row_integral_defect"] < 1e-8
    assert set(diag["convolution_like"]) >= {"l1", "sup", "bv"}


def test_simulate_deterministic_and_rates(tmp_path, study_json, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["simulate", "--config", str(study_json), "--output", str(a)]) == 0
    assert main(["simulate", "--config", str(study_json), "--output", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".csv").read_bytes() == b.with_suffix(".csv").read_bytes()
    capsys.readouterr()
    assert main(["rates", "--report", str(a)]) == 0
    out = capsys.readouterr().out
    assert "T_UE" in out and "trend" in out


def test_seed_override(tmp_path, study_json, monkeypatch, capsys):
    monkeypatch.setenv("SPLINEKERN_SEED", "17")
    out = tmp_path / "r.json"
    assert main(["simulate", "--config", str(study_json), "--output", str(out)]) == 0
    assert "seed: 17 (from SPLINEKERN_SEED)" in capsys.readouterr().out
    assert json.loads(out.read_text())["config"]["plan"]["seed"] == 17


def test_rates_refuses_mismatched_csv(tmp_path, study_json):
    a = tmp_path / "a.json"
    assert main(["simulate", "--config", str(study_json), "--output", str(a)]) == 0
    csv_path = a.with_suffix(".csv")
    text = csv_path.read_text()
    csv_path.write_text(text.replace("config_hash=", "config_hash=0", 1))
    assert main(["rates", "--report", str(a)]) == 1
    lines = text.splitlines()
    lines[-1] = lines[-1].replace("1", "2", 1)
    csv_path.write_text("\n".join(lines) + "\n")
    assert main(["rates", "--report", str(a)]) == 1


def test_bands(tmp_path, sample_csv):
    out = tmp_path / "band.csv"
    assert main(["bands", "--input", str(sample_csv), "--m", "2", "--h", "0.2", "--q", "2", "--output", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", comments="#", skiprows=2)
    assert data.shape == (2001, 4)
    assert np.all(data[:, 1] <= data[:, 2]) and np.all(data[:, 2] <= data[:, 3])


def test_bands_refused(tmp_path, sample_csv, capsys):
    code = main(["bands", "--input", str(sample_csv), "--m", "2", "--h", "0.3", "--q", "2",
                 "--output", str(tmp_path / "b.csv")])
    assert code == 1
    assert "h outside F-range: bias not negligible" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(config_text(m=9))
    assert main(["simulate", "--config", str(bad)]) == 1


def test_diagnose(tmp_path, study_json):
    out = tmp_path / "d.csv"
    assert main(["diagnose", "--config", str(study_json), "--h", "0.1", "--h", "0.2", "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].split(",")[:3] == ["h", "n", "zeta"]
    assert len(lines) == 2 + 3 * 2
