import json
import subprocess
import sys

import numpy as np
import pytest

from maternkrig import MaternParams, simulate_gp
from maternkrig.cli import _read_table, main


def _write_observations(path, n=25, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 2))
    z = simulate_gp(x, MaternParams(1.0, 0.3, 0.5), rng.standard_normal(n))
    lines = ["x,y,z"]
    for row, value in zip(x, z):
        lines.append(f"{float(row[0])!r},{float(row[1])!r},{float(value)!r}")
    path.write_text("\n".join(lines) + "\n")
    return x, z


def _micro_config(path, **overrides):
    cfg = dict(
        nu_list=[0.5],
        effective_ranges=[0.3],
        sample_sizes=[10, 18],
        replicates=4,
        fixed_rho_multipliers=[0.5],
        master_seed=5,
        grid_side=8,
        grid_step=0.12,
        grid_origin=0.06,
        perturb_half_width=0.04,
        prediction_grid_side=3,
    )
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return cfg


class TestReadTable:
    def test_skips_header_and_comments(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("# comment\nx,y\n1.0,2.0\n\n3.0,4.0\n")
        table = _read_table(str(p))
        assert table.shape == (2, 2)

    def test_rejects_second_text_row(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("x,y\n1.0,2.0\noops,3.0\n")
        with pytest.raises(ValueError, match="non-numeric"):
            _read_table(str(p))

    def test_rejects_ragged_and_empty(self, tmp_path):
        ragged = tmp_path / "r.csv"
        ragged.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="ragged"):
            _read_table(str(ragged))
        empty = tmp_path / "e.csv"
        empty.write_text("# nothing\n")
        with pytest.raises(ValueError, match="no data"):
            _read_table(str(empty))

    def test_column_count_enforced(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("1.0,2.0\n")
        with pytest.raises(ValueError, match="columns"):
            _read_table(str(p), columns=3)


class TestFitCommand:
    def test_writes_fit_json(self, tmp_path, capsys):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        out = tmp_path / "run"
        code = main(["fit", "--data", str(data), "--nu", "0.5", "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "fit.json").read_text())
        assert payload["mode"] == "mle"
        assert payload["n"] == 25
        assert payload["ci_c"][0] < payload["c_hat"] < payload["ci_c"][1]
        assert payload["data"].endswith("obs.csv")
        assert "rho_hat=" in capsys.readouterr().out

    def test_quiet_silences_stdout(self, tmp_path, capsys):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        code = main(["fit", "--data", str(data), "--nu", "0.5",
                     "--out", str(tmp_path / "run"), "--quiet"])
        assert code == 0
        assert capsys.readouterr().out == ""

    def test_fixed_mode_requires_rho(self, tmp_path, capsys):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        assert main(["fit", "--data", str(data), "--nu", "0.5",
                     "--mode", "fixed"]) == 2
        assert "requires --rho" in capsys.readouterr().err

    def test_tapered_mode_requires_support(self, tmp_path):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        assert main(["fit", "--data", str(data), "--nu", "0.5",
                     "--mode", "tapered"]) == 2

    def test_missing_data_file(self, tmp_path):
        assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--nu", "0.5"]) == 2

    def test_degenerate_data_is_a_numerical_failure(self, tmp_path, capsys):
        data = tmp_path / "obs.csv"
        rng = np.random.default_rng(1)
        lines = [f"{float(v)!r},{float(w)!r},0.0"
                 for v, w in rng.uniform(size=(10, 2))]
        data.write_text("\n".join(lines) + "\n")
        assert main(["fit", "--data", str(data), "--nu", "0.5"]) == 3
        assert "numerical failure" in capsys.readouterr().err


class TestPredictCommand:
    def test_supplied_parameters(self, tmp_path):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        targets = tmp_path / "targets.csv"
        targets.write_text("0.5,0.5\n0.25,0.75\n")
        out = tmp_path / "run"
        code = main(["predict", "--data", str(data), "--targets", str(targets),
                     "--nu", "0.5", "--rho", "0.3", "--out", str(out), "--quiet"])
        assert code == 0
        lines = (out / "predictions.csv").read_text().strip().split("\n")
        assert lines[0] == "x,y,z_hat,mspe,lower,upper"
        assert len(lines) == 3
        row = [float(v) for v in lines[1].split(",")]
        assert row[4] <= row[2] <= row[5]

    def test_fitted_parameters_and_truth_column(self, tmp_path, capsys):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        targets = tmp_path / "targets.csv"
        targets.write_text("0.5,0.5\n")
        out = tmp_path / "run"
        code = main(["predict", "--data", str(data), "--targets", str(targets),
                     "--nu", "0.5", "--true-rho", "0.3", "--true-sigma2", "1.0",
                     "--out", str(out)])
        assert code == 0
        assert "fitted rho=" in capsys.readouterr().out
        lines = (out / "predictions.csv").read_text().strip().split("\n")
        assert lines[0].endswith(",true_mspe")
        assert float(lines[1].split(",")[-1]) > 0

    def test_truth_flags_must_pair(self, tmp_path):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        targets = tmp_path / "targets.csv"
        targets.write_text("0.5,0.5\n")
        assert main(["predict", "--data", str(data), "--targets", str(targets),
                     "--nu", "0.5", "--true-rho", "0.3"]) == 2

    def test_target_dimension_mismatch(self, tmp_path):
        data = tmp_path / "obs.csv"
        _write_observations(data)
        targets = tmp_path / "targets.csv"
        targets.write_text("0.5,0.5,0.5\n")
        assert main(["predict", "--data", str(data), "--targets", str(targets),
                     "--nu", "0.5", "--rho", "0.3"]) == 2


class TestSimulateCommand:
    def test_grid_csv_fields(self, tmp_path):
        out = tmp_path / "sim"
        code = main(["simulate", "--grid-side", "4", "--nu", "0.5", "--rho", "0.3",
                     "--replicates", "2", "--seed", "7", "--out", str(out), "--quiet"])
        assert code == 0
        locs = np.loadtxt(out / "locations.csv", delimiter=",")
        assert locs.shape == (16, 2)
        z0 = np.loadtxt(out / "field_00000.csv")
        z1 = np.loadtxt(out / "field_00001.csv")
        assert z0.shape == (16,)
        assert not np.array_equal(z0, z1)

    def test_binary_format_matches_csv(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["simulate", "--grid-side", "3", "--nu", "1.5", "--rho", "0.2",
                "--seed", "3", "--quiet"]
        assert main(base + ["--format", "csv", "--out", str(a)]) == 0
        assert main(base + ["--format", "f64", "--out", str(b)]) == 0
        z_csv = np.loadtxt(a / "field_00000.csv")
        raw = (b / "field_00000.f64").read_bytes()
        z_bin = np.frombuffer(raw, dtype="<f8")
        assert np.array_equal(z_csv, z_bin)

    def test_seed_reproducibility(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["simulate", "--grid-side", "3", "--nu", "0.5", "--rho", "0.4",
                "--seed", "11", "--quiet"]
        assert main(base + ["--out", str(a)]) == 0
        assert main(base + ["--out", str(b)]) == 0
        assert (a / "field_00000.csv").read_text() == (b / "field_00000.csv").read_text()

    def test_site_source_is_exclusive(self, tmp_path):
        locs = tmp_path / "locs.csv"
        locs.write_text("0.1,0.2\n0.3,0.4\n")
        both = main(["simulate", "--locations", str(locs), "--grid-side", "3",
                     "--nu", "0.5", "--rho", "0.3"])
        neither = main(["simulate", "--nu", "0.5", "--rho", "0.3"])
        assert both == 2
        assert neither == 2


class TestExperimentCommand:
    def test_end_to_end(self, tmp_path, capsys):
        cfg_path = tmp_path / "config.json"
        _micro_config(cfg_path)
        out = tmp_path / "run"
        code = main(["experiment", "--config", str(cfg_path), "--out", str(out)])
        assert code == 0
        assert (out / "report.csv").exists()
        payload = json.loads((out / "report.json").read_text())
        assert payload["config"]["master_seed"] == 5
        assert payload["failed_replicates"] == 0
        assert "coverage" in capsys.readouterr().out

    def test_seed_override(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        _micro_config(cfg_path)
        out = tmp_path / "run"
        code = main(["experiment", "--config", str(cfg_path), "--seed", "123",
                     "--out", str(out), "--quiet"])
        assert code == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["config"]["master_seed"] == 123

    def test_dump_fields(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        _micro_config(cfg_path, replicates=2)
        out = tmp_path / "run"
        code = main(["experiment", "--config", str(cfg_path), "--dump-fields",
                     "--out", str(out), "--quiet"])
        assert code == 0
        assert len(list((out / "fields").iterdir())) == 2

    def test_unknown_config_key_fails_before_writing(self, tmp_path, capsys):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"replicate_count": 3}))
        out = tmp_path / "run"
        code = main(["experiment", "--config", str(cfg_path), "--out", str(out)])
        assert code == 2
        assert "replicate_count" in capsys.readouterr().err
        assert not (out / "report.csv").exists()

    def test_config_file_errors(self, tmp_path):
        missing = main(["experiment", "--config", str(tmp_path / "nope.json")])
        assert missing == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["experiment", "--config", str(bad)]) == 2


class TestVerifyCommand:
    def test_passes_cleanly(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "kernel_closed_forms: ok" in out
        assert "all verification suites passed" in out

    def test_detects_seeded_defect(self, monkeypatch, capsys):
        # corrupt the incurred-error formula; the consistency suite must object
        import maternkrig.prediction as pred
        original = pred.true_mspe
        monkeypatch.setattr(pred, "true_mspe",
                            lambda *a, **k: 1.01 * original(*a, **k))
        assert main(["verify"]) == 1
        assert "FAILED" in capsys.readouterr().err


class TestParser:
    def test_version_subprocess(self):
        proc = subprocess.run([sys.executable, "-m", "maternkrig", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "maternkrig 0.1.0" in proc.stdout

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_bad_choice(self):
        with pytest.raises(SystemExit):
            main(["fit", "--data", "x.csv", "--nu", "0.5", "--mode", "bayes"])
