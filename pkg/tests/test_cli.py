"""End-to-end CLI coverage: subcommands, chaining, env var, exit codes."""

import csv

import matplotlib
import numpy as np
import pytest

from acqinv.classify import TissueClassifierConfig
from acqinv.cli import main
from acqinv.config import ExperimentConfig, dump_config, load_config
from acqinv.dataio import load_pairs, load_patches, read_sidecar
from acqinv.network import Network
from acqinv.siamese import SiameseConfig, TrainHistory


@pytest.fixture
def mini_ini(tmp_path):
    cfg = ExperimentConfig(
        phantom_size=64,
        n_source_subjects=1,
        n_target_train_subjects=1,
        n_heldout_subjects=1,
        grid=(1, 2),
        repetitions=1,
        source_patches_per_tissue=4,
        test_patches_per_tissue=4,
        da_patches_per_tissue=5,
        pair_budget=64,
        svm_c=1.0,
        cv_folds=2,
        siamese=SiameseConfig(epochs=1, batch_size=64),
        classifier=TissueClassifierConfig(epochs=1, batch_size=64),
    )
    path = tmp_path / "mini.ini"
    dump_config(cfg, path)
    return str(path)


class TestArgumentHandling:
    def test_unknown_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["curve", "--out", "x", "--turbo"])
        assert exc.value.code != 0

    def test_unknown_subcommand_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate", "--out", "x"])
        assert exc.value.code != 0

    def test_missing_out_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate"])
        assert exc.value.code != 0

    def test_malformed_config_returns_error(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[experiment]\nseed = banana\n")
        rc = main(["config", "--config", str(bad), "--out", str(tmp_path / "o.ini")])
        assert rc == 1

    def test_missing_config_file_returns_error(self, tmp_path):
        rc = main(["config", "--config", str(tmp_path / "nope.ini"),
                   "--out", str(tmp_path / "o.ini")])
        assert rc == 1


class TestConfigCommand:
    def test_writes_loadable_defaults(self, tmp_path):
        out = tmp_path / "default.ini"
        assert main(["config", "--out", str(out)]) == 0
        assert load_config(out) == ExperimentConfig()

    def test_seed_override_lands_in_file(self, tmp_path):
        out = tmp_path / "seeded.ini"
        assert main(["--quiet", "config", "--seed", "42", "--out", str(out)]) == 0
        assert load_config(out).seed == 42


class TestPipelineChain:
    def test_simulate_through_evaluate(self, tmp_path, mini_ini):
        data_dir = tmp_path / "data"
        assert main(["--quiet", "simulate", "--config", mini_ini,
                     "--seed", "0", "--out", str(data_dir)]) == 0
        for name in ("source_train.apd", "target_train.apd", "target_test.apd",
                     "da_source.apd", "da_target.apd", "simulate.json"):
            assert (data_dir / name).exists()
        source = load_patches(data_dir / "source_train.apd")
        assert len(source) == 4 * 3
        assert set(source.scanner_ids) == {"A"}
        target = load_patches(data_dir / "target_train.apd")
        assert set(target.scanner_ids) == {"B"}
        sidecar = read_sidecar(data_dir / "simulate.json")
        assert sidecar["seed"] == 0
        assert sidecar["files"]["source_train.apd"]["patches"] == 12

        pair_path = tmp_path / "pairs.apd"
        assert main(["--quiet", "pairs", "--config", mini_ini, "--seed", "0",
                     "--source", str(data_dir / "source_train.apd"),
                     "--target", str(data_dir / "target_train.apd"),
                     "--budget", "40",
                     "--out", str(pair_path)]) == 0
        pairs = load_pairs(pair_path)
        assert len(pairs) == 40
        assert read_sidecar(tmp_path / "pairs.apd.json")["n_pairs"] == 40

        model_path = tmp_path / "model.apw"
        assert main(["--quiet", "train", "--config", mini_ini, "--seed", "0",
                     "--pairs", str(pair_path), "--out", str(model_path)]) == 0
        net = Network.load(model_path)
        history = TrainHistory.from_csv(str(model_path) + ".history.csv")
        assert history.epochs_completed() == 1

        feats_path = tmp_path / "features.csv"
        assert main(["--quiet", "features", "--model", str(model_path),
                     "--data", str(data_dir / "target_test.apd"),
                     "--out", str(feats_path)]) == 0
        with open(feats_path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 4 * 3
        assert set(rows[0]) == {"x0", "x1", "tissue", "scanner", "subject"}
        assert all(r["scanner"] == "B" for r in rows)

        metrics_path = tmp_path / "metrics.csv"
        assert main(["--quiet", "evaluate", "--config", mini_ini, "--seed", "0",
                     "--model", str(model_path),
                     "--source", str(data_dir / "da_source.apd"),
                     "--target", str(data_dir / "da_target.apd"),
                     "--out", str(metrics_path)]) == 0
        with open(metrics_path, newline="") as f:
            metrics = {r["metric"]: float(r["value"]) for r in csv.DictReader(f)}
        assert set(metrics) == {"raw_e_scanner", "raw_d_A",
                                "feature_e_scanner", "feature_d_A"}
        assert 0.0 <= metrics["raw_d_A"] <= 2.0
        del net

    def test_simulate_deterministic_across_runs(self, tmp_path, mini_ini):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert main(["--quiet", "simulate", "--config", mini_ini,
                         "--seed", "3", "--out", str(out)]) == 0
        for name in ("source_train.apd", "target_train.apd", "target_test.apd"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_simulate_n_target_override(self, tmp_path, mini_ini):
        out = tmp_path / "data"
        assert main(["--quiet", "simulate", "--config", mini_ini,
                     "--n-target", "5", "--out", str(out)]) == 0
        assert len(load_patches(out / "target_train.apd")) == 5 * 3


class TestCurveAndPlot:
    def test_curve_writes_csv_and_is_deterministic(self, tmp_path, mini_ini):
        a = tmp_path / "run_a"
        b = tmp_path / "run_b"
        for out in (a, b):
            assert main(["--quiet", "curve", "--config", mini_ini,
                         "--seed", "0", "--out", str(out)]) == 0
        assert (a / "curve.csv").read_bytes() == (b / "curve.csv").read_bytes()
        with open(a / "curve.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        # 2 grid cells x (2 discrepancy + 3 model rows)
        assert len(rows) == 10
        assert not (a / "failures.txt").exists()

    def test_plot_outputs_and_legend(self, tmp_path, mini_ini):
        run_dir = tmp_path / "run"
        assert main(["--quiet", "curve", "--config", mini_ini,
                     "--seed", "0", "--out", str(run_dir)]) == 0
        plot_dir = tmp_path / "plots"
        matplotlib.rcParams["svg.fonttype"] = "none"
        try:
            assert main(["--quiet", "plot", "--curve", str(run_dir / "curve.csv"),
                         "--out", str(plot_dir)]) == 0
        finally:
            matplotlib.rcParams["svg.fonttype"] = "path"
        assert (plot_dir / "dA.svg").exists()
        error_svg = (plot_dir / "error.svg").read_text()
        for label in ("source", "target", "mrai"):
            assert label in error_svg
        da_svg = (plot_dir / "dA.svg").read_text()
        assert "raw patches" in da_svg
        assert "mrai features" in da_svg

    def test_plot_missing_curve_returns_error(self, tmp_path):
        rc = main(["--quiet", "plot", "--curve", str(tmp_path / "none.csv"),
                   "--out", str(tmp_path / "plots")])
        assert rc == 1


class TestOutRoot:
    def test_relative_out_rooted_at_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ACQINV_OUT_ROOT", str(tmp_path))
        assert main(["--quiet", "config", "--out", "sub/default.ini"]) == 0
        assert (tmp_path / "sub" / "default.ini").exists()

    def test_absolute_out_ignores_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ACQINV_OUT_ROOT", str(tmp_path / "elsewhere"))
        out = tmp_path / "here.ini"
        assert main(["--quiet", "config", "--out", str(out)]) == 0
        assert out.exists()
        assert not (tmp_path / "elsewhere").exists()

    def test_no_env_uses_cwd_relative(self, tmp_path, monkeypatch):
        monkeypatch.delenv("ACQINV_OUT_ROOT", raising=False)
        monkeypatch.chdir(tmp_path)
        assert main(["--quiet", "config", "--out", "local.ini"]) == 0
        assert (tmp_path / "local.ini").exists()
