import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.distance import pdist

from maternkrig import (
    ExperimentConfig,
    ExperimentReport,
    MaternParams,
    design_stream,
    nested_subsets,
    perturbed_grid,
    prediction_grid,
    replicate_stream,
    run_experiment,
    simulate_gp,
)
from maternkrig.simulation import RngStream


def micro_config(**overrides):
    base = dict(
        nu_list=[0.5],
        effective_ranges=[0.3],
        sample_sizes=[12, 25],
        replicates=6,
        fixed_rho_multipliers=[0.5, 2.0],
        master_seed=99,
        grid_side=10,
        grid_step=0.1,
        grid_origin=0.05,
        perturb_half_width=0.03,
        prediction_grid_side=4,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestStreams:
    def test_replay(self):
        a = RngStream(7, 3).generator().standard_normal(5)
        b = RngStream(7, 3).generator().standard_normal(5)
        assert np.array_equal(a, b)

    def test_indices_are_independent(self):
        a = RngStream(7, 0).generator().standard_normal(5)
        b = RngStream(7, 1).generator().standard_normal(5)
        assert not np.array_equal(a, b)

    def test_stream_roles(self):
        assert design_stream(11) == RngStream(11, 0)
        assert replicate_stream(11, 0) == RngStream(11, 1)
        assert replicate_stream(11, 41) == RngStream(11, 42)
        with pytest.raises(ValueError):
            replicate_stream(11, -1)


class TestDesigns:
    def test_perturbed_grid_geometry(self):
        cfg = micro_config()
        grid = perturbed_grid(cfg, design_stream(cfg.master_seed))
        assert grid.shape == (100, 2)
        axis = cfg.grid_origin + cfg.grid_step * np.arange(cfg.grid_side)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        base = np.column_stack([xx.ravel(), yy.ravel()])
        offsets = np.abs(grid - base)
        assert offsets.max() <= cfg.perturb_half_width
        # jitter below half the step keeps all sites separated
        assert pdist(grid).min() >= cfg.grid_step - 2 * cfg.perturb_half_width - 1e-12

    def test_zero_jitter_is_exact(self):
        cfg = micro_config(perturb_half_width=0.0)
        grid = perturbed_grid(cfg, design_stream(0))
        assert grid[0, 0] == cfg.grid_origin

    def test_nested_subsets(self):
        design = perturbed_grid(micro_config(), design_stream(1))
        subsets = nested_subsets(design, (5, 20, 60), RngStream(1, 0))
        assert [s.shape[0] for s in subsets] == [5, 20, 60]
        assert np.array_equal(subsets[0], subsets[1][:5])
        assert np.array_equal(subsets[1], subsets[2][:20])
        # subsets are samples without replacement from the design
        assert len(np.unique(subsets[2], axis=0)) == 60

    def test_nested_subsets_validation(self):
        design = np.random.default_rng(0).uniform(size=(10, 2))
        with pytest.raises(ValueError):
            nested_subsets(design, (4, 4), RngStream(0, 0))
        with pytest.raises(ValueError):
            nested_subsets(design, (5, 11), RngStream(0, 0))

    def test_prediction_grid_midpoints(self):
        grid = prediction_grid(micro_config(prediction_grid_side=2))
        expected = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        assert_allclose(grid, expected, rtol=0, atol=0)


class TestSimulateGp:
    def test_deterministic_given_deviates(self):
        x = np.random.default_rng(2).uniform(size=(15, 2))
        dev = np.random.default_rng(3).standard_normal(15)
        params = MaternParams(1.5, 0.3, 0.5)
        assert np.array_equal(simulate_gp(x, params, dev), simulate_gp(x, params, dev))

    def test_variance_scaling(self):
        x = np.random.default_rng(4).uniform(size=(10, 2))
        dev = np.random.default_rng(5).standard_normal(10)
        a = simulate_gp(x, MaternParams(1.0, 0.3, 0.5), dev)
        b = simulate_gp(x, MaternParams(4.0, 0.3, 0.5), dev)
        assert_allclose(b, 2.0 * a, rtol=1e-15)

    def test_length_mismatch(self):
        x = np.random.default_rng(6).uniform(size=(10, 2))
        with pytest.raises(ValueError):
            simulate_gp(x, MaternParams(1.0, 0.3, 0.5), np.zeros(9))


class TestConfig:
    def test_defaults_match_protocol(self):
        cfg = ExperimentConfig()
        assert cfg.nu_list == (0.5, 1.5)
        assert cfg.effective_ranges == (0.1, 0.3, 1.0)
        assert cfg.sample_sizes == (400, 900, 1600)
        assert cfg.fixed_rho_multipliers == (0.2, 0.5, 1.0, 2.0, 5.0)
        assert cfg.replicates == 1000
        assert cfg.grid_side == 67
        assert cfg.prediction_grid_side == 50
        assert cfg.ci_level == 0.95

    def test_round_trip(self):
        cfg = micro_config()
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert again.hash() == cfg.hash()

    def test_hash_tracks_content(self):
        assert micro_config().hash() != micro_config(master_seed=100).hash()

    def test_unknown_key_is_named(self):
        with pytest.raises(ValueError, match="replicate_count"):
            ExperimentConfig.from_dict({"replicate_count": 5})

    @pytest.mark.parametrize("overrides", [
        {"sample_sizes": [25, 12]},
        {"sample_sizes": []},
        {"sample_sizes": [101], "grid_side": 10},
        {"perturb_half_width": 0.05, "grid_step": 0.1},
        {"replicates": 0},
        {"master_seed": -1},
        {"ci_level": 1.0},
        {"nu_list": [0.5, -1.0]},
        {"effective_ranges": "0.3"},
        {"rho_bounds_multiplier": 0.0},
    ])
    def test_rejects_bad_settings(self, overrides):
        with pytest.raises(ValueError):
            micro_config(**overrides)


class TestRunExperiment:
    def test_report_shape_and_tables(self):
        cfg = micro_config()
        report = run_experiment(cfg)
        labels = {c.estimator for c in report.cells}
        assert labels == {"mle", "fixed_0.5", "fixed_2"}
        assert len(report.cells) == 2 * 3  # two sizes, three estimators
        for c in report.cells:
            assert c.replicates_used == cfg.replicates
            assert 0.0 <= c.coverage_pct <= 100.0
            assert c.pct_mspe_increase is not None
            assert c.prediction_interval_coverage_pct is not None
        assert report.failed_replicates == 0
        assert "coverage" in report.summary()
        mle_small = report.cell(0.5, 0.3, 12, "mle")
        assert mle_small.n == 12
        with pytest.raises(KeyError):
            report.cell(0.5, 0.3, 12, "fixed_5")

    def test_worker_count_does_not_change_bytes(self):
        cfg = micro_config()
        serial = run_experiment(cfg, jobs=1)
        parallel = run_experiment(cfg, jobs=3)
        assert serial.to_csv() == parallel.to_csv()
        assert serial.to_json() == parallel.to_json()

    def test_csv_round_trips_floats(self):
        report = run_experiment(micro_config())
        lines = report.to_csv().strip().split("\n")
        assert lines[0] == ExperimentReport.CSV_HEADER
        rows = [line.split(",") for line in lines[1:]]
        by_metric = {(r[4], r[5], int(r[3])): float(r[6]) for r in rows}
        cell = report.cell(0.5, 0.3, 25, "mle")
        assert by_metric[("mle", "coverage_pct", 25)] == cell.coverage_pct
        assert by_metric[("mle", "pct_mspe_increase", 25)] == cell.pct_mspe_increase

    def test_json_round_trip(self):
        report = run_experiment(micro_config())
        again = ExperimentReport.from_json(report.to_json())
        assert again.config == report.config
        assert again.cells == report.cells
        assert again.to_json() == report.to_json()

    def test_predict_false_drops_prediction_metrics(self):
        report = run_experiment(micro_config(predict=False))
        for c in report.cells:
            assert c.pct_mspe_increase is None
            assert c.prediction_interval_coverage_pct is None
        assert "disabled" in report.mspe_table()

    def test_redrawn_designs_still_aggregate(self):
        cfg = micro_config(replicates=3, redraw_design_per_replicate=True)
        report = run_experiment(cfg)
        assert len(report.cells) == 6
        for c in report.cells:
            assert c.pct_mspe_increase is not None

    def test_field_dump_writes_unions(self, tmp_path):
        out = tmp_path / "fields"
        cfg = micro_config(replicates=2)
        run_experiment(cfg, field_dump=str(out))
        files = sorted(p.name for p in out.iterdir())
        assert files == ["field_nu0.5_er0.3_rep00000.csv",
                         "field_nu0.5_er0.3_rep00001.csv"]
        body = (out / files[0]).read_text().strip().split("\n")
        assert body[0] == "x,y,z"
        assert len(body) == 1 + 25 + 16  # header, observations, prediction grid

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            run_experiment({"replicates": 2})
        with pytest.raises(ValueError):
            run_experiment(micro_config(), jobs=0)
