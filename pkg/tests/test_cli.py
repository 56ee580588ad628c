import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from infoplane.cli import build_parser, load_config, main
from infoplane.data import write_idx_images
from infoplane.experiments import RunConfig
from infoplane.nets import Autoencoder

SCHEMA = Path(__file__).resolve().parents[1] / "docs" / "metadata.schema.json"

TINY = ["--set", "encoder_widths=[8]", "--set", "batch_size=20", "--set", "probe_batches=2",
        "--set", "probe_size=16", "--set", "cadence=1", "--set", "smoothing_span=3"]


@pytest.fixture(scope="module")
def tiny_mnist(tmp_path_factory):
    root = tmp_path_factory.mktemp("idx")
    rng = np.random.default_rng(0)
    write_idx_images(root / "train-images-idx3-ubyte.gz",
                     rng.integers(0, 256, (60, 28, 28), dtype=np.uint8))
    write_idx_images(root / "t10k-images-idx3-ubyte",
                     rng.integers(0, 256, (40, 28, 28), dtype=np.uint8))
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestEstimate:
    def test_self_information_saturates(self, tmp_path, capsys):
        X = np.random.default_rng(0).random((64, 10))
        np.save(tmp_path / "x.npy", X)
        assert main(["estimate", str(tmp_path / "x.npy"), str(tmp_path / "x.npy"),
                     "--gamma", "0.3", "--json"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert abs(out["mi_bits"] - math.log2(64)) < 0.01

    def test_constant_y(self, tmp_path, capsys):
        np.savetxt(tmp_path / "x.csv", np.random.default_rng(1).random((30, 3)), delimiter=",")
        np.savetxt(tmp_path / "y.csv", np.ones((30, 1)), delimiter=",")
        assert main(["estimate", str(tmp_path / "x.csv"), str(tmp_path / "y.csv"), "--json"]) == 0
        assert abs(json.loads(capsys.readouterr().out)["mi_bits"]) < 1e-9

    def test_json_echoes_rule(self, tmp_path, capsys):
        np.save(tmp_path / "x.npy", np.random.default_rng(2).random((20, 2)))
        main(["estimate", str(tmp_path / "x.npy"), str(tmp_path / "x.npy"), "--rule", "old",
              "--gamma", "2.5", "--alpha", "1.05", "--json"])
        out = json.loads(capsys.readouterr().out)
        assert out["rule"] == "old" and out["gamma"] == 2.5 and out["alpha"] == 1.05
        assert out["N"] == 20 and out["eps"] == 1e-8

    def test_text_output(self, tmp_path, capsys):
        np.save(tmp_path / "x.npy", np.random.default_rng(2).random((20, 2)))
        main(["estimate", str(tmp_path / "x.npy"), str(tmp_path / "x.npy")])
        assert capsys.readouterr().out.startswith("I = ")

    def test_row_mismatch(self, tmp_path, capsys):
        np.save(tmp_path / "a.npy", np.zeros((5, 2)))
        np.save(tmp_path / "b.npy", np.zeros((6, 2)))
        assert main(["estimate", str(tmp_path / "a.npy"), str(tmp_path / "b.npy")]) == 1
        assert "mismatch" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["estimate", str(tmp_path / "nope.npy"), str(tmp_path / "nope.npy")]) == 1


class TestConfig:
    def _args(self, argv):
        return build_parser().parse_args(argv)

    def test_precedence(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"lr": 0.05, "epochs": 3, "seed": 4}))
        args = self._args(["train", "--config", str(cfg_file), "--epochs", "7"])
        cfg = load_config(args, {"epochs": args.epochs})
        assert (cfg.lr, cfg.epochs, cfg.seed, cfg.momentum) == (0.05, 7, 4, 0.5)

    def test_preset_below_file(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"preset": "desk", "epochs": 2}))
        cfg = load_config(self._args(["train", "--config", str(cfg_file)]))
        assert (cfg.train_size, cfg.epochs, cfg.init_gain) == (2000, 2, 4.0)

    def test_set_parses_json(self):
        cfg = load_config(self._args(["gaussians", "--set", "dims=[10]", "--set", "runs=3"]))
        assert cfg.dims == [10] and cfg.runs == 3

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.build({"learning_rate": 1})

    def test_gamma_overrides(self):
        cfg = RunConfig(rule="old")
        rule, over = cfg.width_rule()
        assert rule.gamma == 5.0 and over == {"Z": 25.0}
        rule, over = RunConfig(rule="old", gamma=3.0).width_rule()
        assert rule.gamma == 3.0 and over == {}
        rule, over = RunConfig(rule="new", gamma_overrides={"Z": 1.5}).width_rule()
        assert rule.gamma == 0.8 and over == {"Z": 1.5}

    def test_rho_grid_guard(self):
        with pytest.raises(ValueError):
            RunConfig(rhos=[0.999])


class TestGaussians:
    def test_outputs(self, tmp_path, capsys):
        argv = ["gaussians", "--out", str(tmp_path), "--json", "--set", "dims=[2]",
                "--set", "runs=3", "--set", "rhos=[-0.5, 0, 0.5]", "--set", "nsweep_dim=2",
                "--set", "nsweep_sizes=[16, 32]", "--set", "n_samples=16"]
        assert main(argv) == 0
        summary = json.loads(capsys.readouterr().out)
        rows = _rows(tmp_path / "gaussians.csv")
        assert list(rows[0]) == ["rule", "d", "N", "rho", "mean_bits", "std_bits", "analytic_bits"]
        assert len(rows) == 2 * 3
        assert {r["rule"] for r in _rows(tmp_path / "gaussians_nsweep.csv")} == {"new"}
        assert summary["rows"] == 6 + 6


    def test_symmetric_grid(self, tmp_path):
        main(["gaussians", "--out", str(tmp_path), "--set", "dims=[10]", "--set", "runs=20",
              "--set", "n_samples=64", "--set", "rhos=[-0.9, -0.5, 0, 0.5, 0.9]",
              "--set", "nsweep_sizes=[16]", "--set", "nsweep_dim=2"])
        for rule in ("old", "new"):
            rows = {float(r["rho"]): r for r in _rows(tmp_path / "gaussians.csv") if r["rule"] == rule}
            assert float(rows[0.0]["analytic_bits"]) == 0.0
            for rho in (0.5, 0.9):
                a, b = rows[rho], rows[-rho]
                gap = abs(float(a["mean_bits"]) - float(b["mean_bits"]))
                assert gap <= 2 * max(float(a["std_bits"]), float(b["std_bits"]))


class TestTrain:
    def test_train_outputs(self, tiny_mnist, tmp_path, capsys):
        out = tmp_path / "run"
        argv = ["train", "--data-dir", str(tiny_mnist), "--out", str(out), "--K", "3",
                "--epochs", "1", "--json", *TINY]
        assert main(argv) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["checkpoints"] == 4  # iterations 0..3
        rows = _rows(out / "trajectory.csv")
        assert list(rows[0]) == ["iteration", "layer_id", "input_mi_bits", "output_mi_bits",
                                 "mean_variance", "smoothed", "logspace"]
        assert {r["layer_id"] for r in rows} == {"E1", "Z", "D1"}
        for r in rows:
            assert 0 <= float(r["input_mi_bits"]) <= math.log2(16) + 1e-6
        meta = json.loads((out / "metadata.json").read_text())
        jsonschema.validate(meta, json.loads(SCHEMA.read_text()))
        assert meta["K"] == 3 and meta["architecture"]["encoder_widths"] == [8]
        assert len(_rows(out / "loss.csv")) == 3

    def test_zero_epochs_single_checkpoint(self, tiny_mnist, tmp_path, capsys):
        out = tmp_path / "e0"
        assert main(["train", "--data-dir", str(tiny_mnist), "--out", str(out), "--epochs", "0",
                     *TINY]) == 0
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["n_checkpoints"] == 1
        assert {r["iteration"] for r in _rows(out / "trajectory.csv")} == {"0"}
        jsonschema.validate(meta, json.loads(SCHEMA.read_text()))

    def test_gamma_flag_reaches_metadata(self, tiny_mnist, tmp_path):
        out = tmp_path / "g"
        main(["train", "--data-dir", str(tiny_mnist), "--out", str(out), "--epochs", "0",
              "--rule", "old", "--gamma", "3.5", *TINY])
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["rule"] == "old" and meta["gamma"] == 3.5 and meta["gamma_overrides"] == {}

    def test_old_rule_bottleneck_override(self, tiny_mnist, tmp_path):
        out = tmp_path / "old"
        main(["train", "--data-dir", str(tiny_mnist), "--out", str(out), "--epochs", "0",
              "--rule", "old", *TINY])
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["gamma"] == 5.0 and meta["gamma_overrides"] == {"Z": 25.0}

    def test_env_data_dir(self, tiny_mnist, tmp_path, monkeypatch):
        monkeypatch.setenv("INFOPLANE_DATA_DIR", str(tiny_mnist))
        assert main(["train", "--out", str(tmp_path / "env"), "--epochs", "0", *TINY]) == 0

    def test_missing_data(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("INFOPLANE_DATA_DIR", raising=False)
        assert main(["train", "--data-dir", str(tmp_path), "--out", str(tmp_path / "x")]) == 1
        assert "no MNIST" in capsys.readouterr().err

    def test_divergence_exit_code(self, tiny_mnist, tmp_path, monkeypatch):
        real = Autoencoder.gradients

        def poisoned(self, X):
            loss, gw, gb = real(self, X)
            return (float("nan") if self.iteration == 2 else loss), gw, gb

        monkeypatch.setattr(Autoencoder, "gradients", poisoned)
        out = tmp_path / "div"
        code = main(["train", "--data-dir", str(tiny_mnist), "--out", str(out), "--epochs", "1",
                     *TINY])
        assert code == 2
        assert (out / "divergence_checkpoint.npz").exists()
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["diverged"] is True and meta["n_checkpoints"] == 3
        assert Autoencoder.load(out / "divergence_checkpoint.npz").iteration == 2


class TestSweep:
    def test_sweep_outputs(self, tiny_mnist, tmp_path, capsys):
        out = tmp_path / "sw"
        assert main(["sweep", "--data-dir", str(tiny_mnist), "--out", str(out), "--Ks", "2,4",
                     "--epochs", "1", "--json", *TINY]) == 0
        rows = _rows(out / "sweep.csv")
        assert list(rows[0]) == ["K", "layer_id", "input_mi_bits", "output_mi_bits",
                                 "mean_variance", "knee_K"]
        assert [(r["K"], r["layer_id"]) for r in rows] == [
            ("2", "E1"), ("2", "Z"), ("2", "D1"), ("4", "E1"), ("4", "Z"), ("4", "D1")]
        summary = json.loads((out / "sweep_summary.json").read_text())
        assert summary["failed"] == {}
        assert "knee_K" in summary
        assert summary["knee_K"] is None or summary["knee_K"] >= 2
        assert json.loads(capsys.readouterr().out)["knee_K"] == summary["knee_K"]

    def test_single_k_matches_train(self, tiny_mnist, tmp_path):
        main(["sweep", "--data-dir", str(tiny_mnist), "--out", str(tmp_path / "s"), "--Ks", "3",
              "--epochs", "1", *TINY])
        main(["train", "--data-dir", str(tiny_mnist), "--out", str(tmp_path / "t"), "--K", "3",
              "--epochs", "1", *TINY])
        raw = [r for r in _rows(tmp_path / "t" / "trajectory.csv") if r["smoothed"] == "0"]
        sweep = {r["layer_id"]: float(r["input_mi_bits"]) for r in _rows(tmp_path / "s" / "sweep.csv")}
        for layer in ("E1", "Z", "D1"):
            vals = [float(r["input_mi_bits"]) for r in raw if r["layer_id"] == layer][-5:]
            assert sweep[layer] == pytest.approx(np.mean(vals), abs=1e-8)
