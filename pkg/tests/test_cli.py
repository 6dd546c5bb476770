"""Command-line surface: exit codes, artifact layout, and config replay."""
from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import fuzz_params, write_bundle_dir

from engramnca.checks import CheckResult
from engramnca.cli import build_parser, main
from engramnca.grid import ChannelLayout
from engramnca.models import ROLE_GENE, ROLE_PROP
from engramnca.persistence import save_checkpoint


TINY_TRAIN = {
    "iterations": 3, "pool_size": 6, "batch_per_primitive": 2, "batch_cap": 8,
    "t_min": 4, "t_max": 6, "hidden_units_gene": 16, "hidden_units_prop": 12,
    "bptt_segment": 8, "rng_seed": 5,
}


@pytest.fixture
def bundle_on_disk(tmp_path, tiny_bundle):
    assets_dir = tmp_path / "assets"
    write_bundle_dir(assets_dir / "tiny", tiny_bundle)
    return assets_dir


@pytest.fixture
def train_config_file(tmp_path, bundle_on_disk):
    values = dict(TINY_TRAIN)
    values.update({"assets_dir": str(bundle_on_disk), "bundle": "tiny",
                   "grid_h": 12, "grid_w": 12})
    path = tmp_path / "tiny_train.json"
    path.write_text(json.dumps(values))
    return path


@pytest.fixture
def gene_checkpoint(tmp_path):
    params = fuzz_params(ROLE_GENE, ChannelLayout.standard(), hidden_units=16, seed=7)
    params.w2.data *= 0.1
    path = tmp_path / "gene.nca"
    save_checkpoint(params, path, rng_seed=7)
    return path


class TestParser:
    def test_all_subcommands_registered(self):
        parser = build_parser()
        args = parser.parse_args(["grow", "--steps", "12", "--frame-every", "3"])
        assert args.command == "grow"
        assert args.steps == 12 and args.frame_every == 3

    def test_common_flags(self):
        args = build_parser().parse_args(
            ["train-geneca", "--seed", "9", "--override", "lr=0.5",
             "--override", "iterations=2"])
        assert args.seed == 9
        assert args.override == ["lr=0.5", "iterations=2"]


class TestExitCodes:
    def test_missing_config_file_is_usage_error(self, tmp_path):
        code = main(["train-geneca", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_malformed_override_is_usage_error(self, tmp_path):
        code = main(["train-geneca", "--override", "lr", "--out", str(tmp_path)])
        assert code == 2

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        code = main(["train-geneca", "--override", "warp_factor=9",
                     "--out", str(tmp_path)])
        assert code == 2

    def test_geneprop_requires_backbone_checkpoint(self, tmp_path):
        code = main(["train-geneprop", "--out", str(tmp_path / "out")])
        assert code == 2

    def test_grow_requires_checkpoint(self, tmp_path):
        code = main(["grow", "--out", str(tmp_path / "out")])
        assert code == 2

    def test_grow_missing_checkpoint_file(self, tmp_path):
        code = main(["grow", "--override", f"gene_checkpoint={tmp_path}/ghost.nca",
                     "--out", str(tmp_path / "out")])
        assert code == 3

    def test_missing_bundle_is_asset_error(self, tmp_path):
        code = main(["train-geneca", "--override", f"assets_dir={tmp_path}",
                     "--override", "bundle=absent", "--override", "iterations=1",
                     "--out", str(tmp_path / "out")])
        assert code == 3


class TestGradcheckCommand:
    def _patch_results(self, monkeypatch, results):
        monkeypatch.setattr("engramnca.checks.run_gradient_checks",
                            lambda *a, **kw: results)

    def test_writes_report_and_succeeds(self, tmp_path, monkeypatch, capsys):
        self._patch_results(monkeypatch, [
            CheckResult("gene_ca", 1, 2.5e-4, 1e-3, 0.5),
            CheckResult("ensemble_multi", 3, 1.1e-3, 1e-2, 1.5),
        ])
        code = main(["gradcheck", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "gradcheck.json").read_text())
        assert report["all_passed"] is True
        assert [c["name"] for c in report["cases"]] == ["gene_ca", "ensemble_multi"]
        assert report["total_elapsed_sec"] == pytest.approx(2.0)
        out = capsys.readouterr().out
        assert "gene_ca" in out and "ok" in out

    def test_failure_exits_numeric_error(self, tmp_path, monkeypatch, capsys):
        self._patch_results(monkeypatch, [CheckResult("gene_ca", 1, 0.5, 1e-3, 0.1)])
        code = main(["gradcheck", "--out", str(tmp_path)])
        assert code == 4
        report = json.loads((tmp_path / "gradcheck.json").read_text())
        assert report["all_passed"] is False
        assert "FAIL" in capsys.readouterr().out


class TestTrainGeneCa:
    def test_run_emits_artifacts(self, tmp_path, train_config_file):
        out = tmp_path / "run1"
        code = main(["train-geneca", "--config", str(train_config_file),
                     "--out", str(out)])
        assert code == 0
        assert (out / "config.json").exists()
        assert (out / "gene_ca.nca").exists()
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0] == "iteration,loss,t_steps,lr"
        assert len(lines) == 1 + TINY_TRAIN["iterations"]

    def test_replay_from_emitted_config_is_byte_identical(self, tmp_path,
                                                          train_config_file):
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert main(["train-geneca", "--config", str(train_config_file),
                     "--out", str(out1)]) == 0
        assert main(["train-geneca", "--config", str(out1 / "config.json"),
                     "--out", str(out2)]) == 0
        for name in ("config.json", "metrics.csv", "gene_ca.nca"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_seed_flag_changes_metrics(self, tmp_path, train_config_file):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["train-geneca", "--config", str(train_config_file), "--out", str(out1)])
        main(["train-geneca", "--config", str(train_config_file), "--out", str(out2),
              "--seed", "99"])
        assert (out1 / "metrics.csv").read_bytes() != (out2 / "metrics.csv").read_bytes()
        assert json.loads((out2 / "config.json").read_text())["rng_seed"] == 99


class TestGrowCommand:
    def _grow(self, tmp_path, gene_checkpoint, out_name, extra=()):
        out = tmp_path / out_name
        argv = ["grow", "--override", f"gene_checkpoint={gene_checkpoint}",
                "--override", "grid_h=12", "--override", "grid_w=12",
                "--steps", "6", "--frame-every", "2", "--out", str(out)]
        argv.extend(extra)
        assert main(argv) == 0
        return out

    def test_artifacts(self, tmp_path, gene_checkpoint):
        out = self._grow(tmp_path, gene_checkpoint, "grow1")
        final = json.loads((out / "final.json").read_text())
        assert final["step"] == 6
        assert isinstance(final["alive_count"], int) and final["alive_count"] >= 0
        assert (out / "run.gif").exists()
        frames = sorted(p.name for p in (out / "frames").glob("*.png"))
        assert frames == ["frame_0000.png", "frame_0002.png", "frame_0004.png",
                          "frame_0006.png"]
        state = np.load(out / "final_state.npy")
        assert state.shape == (12, 12, 16)

    def test_log_records_default_seed(self, tmp_path, gene_checkpoint):
        out = self._grow(tmp_path, gene_checkpoint, "grow1")
        log = json.loads((out / "log.json").read_text())
        assert log["grid"] == {"h": 12, "w": 12}
        assert log["log"][0]["type"] == "place_seed"
        assert log["log"][0]["bits"] == "00000001"

    def test_deterministic_rerun(self, tmp_path, gene_checkpoint):
        out1 = self._grow(tmp_path, gene_checkpoint, "grow1")
        out2 = self._grow(tmp_path, gene_checkpoint, "grow2")
        a = np.load(out1 / "final_state.npy")
        b = np.load(out2 / "final_state.npy")
        np.testing.assert_array_equal(a, b)
        assert (out1 / "log.json").read_bytes() == (out2 / "log.json").read_bytes()

    def test_script_drives_interventions(self, tmp_path, gene_checkpoint):
        script = tmp_path / "script.json"
        script.write_text(json.dumps([
            {"at_step": 0, "event": {"type": "place_seed", "x": 6, "y": 6,
                                     "bits": "10000000"}},
            {"at_step": 3, "event": {"type": "damage", "x": 6, "y": 6, "r": 2}},
        ]))
        out = self._grow(tmp_path, gene_checkpoint, "scripted",
                         extra=["--script", str(script)])
        log = json.loads((out / "log.json").read_text())
        kinds = [event["type"] for event in log["log"] if event["type"] != "step"]
        assert kinds == ["place_seed", "damage"]

    def test_missing_script_file(self, tmp_path, gene_checkpoint):
        code = main(["grow", "--override", f"gene_checkpoint={gene_checkpoint}",
                     "--script", str(tmp_path / "ghost.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 3

    def test_invalid_script_json(self, tmp_path, gene_checkpoint):
        script = tmp_path / "script.json"
        script.write_text("{not json")
        code = main(["grow", "--override", f"gene_checkpoint={gene_checkpoint}",
                     "--script", str(script), "--out", str(tmp_path / "out")])
        assert code == 2

    def test_prop_checkpoint_round(self, tmp_path, gene_checkpoint):
        prop = fuzz_params(ROLE_PROP, ChannelLayout.standard(), hidden_units=12,
                           seed=8)
        prop.w2.data *= 0.1
        prop_path = tmp_path / "prop.nca"
        save_checkpoint(prop, prop_path, rng_seed=8)
        out = self._grow(tmp_path, gene_checkpoint, "with_prop",
                         extra=["--override", f"prop_checkpoint={prop_path}"])
        final = json.loads((out / "final.json").read_text())
        assert final["step"] == 6
