"""End-to-end tests of the command-line interface."""

import json

import numpy as np
import pytest

from degalign import cli
from degalign import degradations as dg


def run(argv):
    return cli.main(argv)


def tree_bytes(root):
    return {p.relative_to(root): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


TINY_TRAIN = {
    "steps": 8, "dataset_size": 4, "batch_size": 2, "eval_size": 2,
    "checkpoint_every": 4,
    "model": {"width": 6, "blocks": 1, "scale": 2},
}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(TINY_TRAIN))
    out = root / "run"
    assert run(["train", "--config", str(config_path),
                "--out", str(out)]) == 0
    return out / "checkpoint_000008.ckpt"


class TestDispatch:
    def test_no_arguments_is_usage_error(self, capsys):
        assert run([]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 2

    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert "degrade" in capsys.readouterr().out

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        assert run(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"),
                    "--out", str(tmp_path / "o")]) == 1
        assert "error" in capsys.readouterr().err


class TestDegrade:
    def test_paired_runs_are_byte_identical(self, tmp_path):
        argv = ["degrade", "--paired", "--seed", "7", "--count", "3",
                "--size", "16"]
        assert run(argv + ["--out", str(tmp_path / "a")]) == 0
        assert run(argv + ["--out", str(tmp_path / "b")]) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_outputs_and_manifest(self, tmp_path):
        out = tmp_path / "d"
        assert run(["degrade", "--out", str(out), "--count", "2",
                    "--size", "16", "--seed", "1"]) == 0
        assert (out / "hr_0000.png").exists()
        assert (out / "lr1_0001.png").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "degrade"
        assert manifest["config"]["seed"] == 1
        recipes = json.loads((out / "recipes.json").read_text())
        assert len(recipes) == 2
        # recipes round-trip through the documented JSON schema
        dg.DegradationRecipe.from_dict(recipes[0]["first"])


class TestTrainAndEval:
    def test_train_writes_artifacts(self, trained):
        run_dir = trained.parent
        assert trained.exists()
        assert (run_dir / "metrics.csv").exists()
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["config"]["steps"] == 8

    def test_eval_csv_and_plot(self, trained, tmp_path):
        out = tmp_path / "eval"
        assert run(["eval", "--checkpoint", str(trained),
                    "--out", str(out), "--plot"]) == 0
        rows = (out / "eval.csv").read_text().strip().splitlines()
        assert rows[0].startswith("condition,")
        assert len(rows) == 10  # header + 8 conditions + summary
        svg = (out / "mape.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg

    def test_config_validation_exit_code(self, tmp_path, capsys):
        config_path = tmp_path / "bad.json"
        config_path.write_text(json.dumps({"stepz": 3}))
        assert run(["train", "--config", str(config_path),
                    "--out", str(tmp_path / "o")]) == 2
        assert "stepz" in capsys.readouterr().err

    def test_empty_config_reports_defaults(self, tmp_path, capsys):
        config_path = tmp_path / "empty.json"
        config_path.write_text("")
        config = cli.load_config(config_path)
        err = capsys.readouterr().err
        assert "using default for steps" in err
        assert config.steps == 5000


class TestAnalyzeCommands:
    def test_analyze_freq(self, tmp_path):
        rng = np.random.default_rng(0)
        gt = np.round(rng.random((16, 16, 3)) * 255) / 255
        pred = np.clip(gt + 0.05, 0, 1)
        dg.save_png(tmp_path / "gt.png", gt)
        dg.save_png(tmp_path / "pred.png", np.round(pred * 255) / 255)
        out = tmp_path / "freq"
        assert run(["analyze-freq", "--pred", str(tmp_path / "pred.png"),
                    "--gt", str(tmp_path / "gt.png"), "--out", str(out),
                    "--bands", "8", "--plot"]) == 0
        rows = (out / "mape.csv").read_text().strip().splitlines()
        assert rows[0] == "band,edge_lo,edge_hi,mape"
        assert len(rows) == 9
        assert (out / "mape.svg").exists()

    def test_analyze_entropy(self, trained, tmp_path, capsys):
        out = tmp_path / "ent"
        assert run(["analyze-entropy", "--checkpoint", str(trained),
                    "--out", str(out), "--bands", "8"]) == 0
        rows = (out / "entropy.csv").read_text().strip().splitlines()
        assert rows[0] == "channel,dominant_band"
        assert rows[-1].startswith("__entropy_bits__,")
        assert len(rows) == 2 + TINY_TRAIN["model"]["width"]

    def test_analyze_ddr(self, trained, tmp_path):
        out = tmp_path / "ddr"
        assert run(["analyze-ddr", "--checkpoint", str(trained),
                    "--out", str(out)]) == 0
        rows = (out / "ddr.csv").read_text().strip().splitlines()
        assert rows[0] == "chi,mean_single_degradation_psnr"
        chi = float(rows[1].split(",")[0])
        assert chi > 0


class TestVerifyCommands:
    def test_verify_lemma(self, capsys):
        assert run(["verify-lemma", "--seed", "3", "--games", "5"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_verify_gradcheck(self, capsys):
        assert run(["verify-gradcheck", "--seed", "7", "--rounds", "1"]) == 0
        assert "PASS" in capsys.readouterr().out
