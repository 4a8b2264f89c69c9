import json

import numpy as np
import pytest
from click.testing import CliRunner

from pinsight.cli import cli_main, main

from conftest import fig9_distributions


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def fig9_json(tmp_path):
    path = tmp_path / "fig9.json"
    path.write_text(json.dumps([d.tolist() for d in fig9_distributions()]))
    return path


class TestUsage:
    def test_no_arguments_exits_2(self):
        assert cli_main([]) == 2

    def test_unknown_subcommand_exits_2(self):
        assert cli_main(["frobnicate"]) == 2

    def test_help(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        assert "rank" in result.output


class TestRankCommand:
    def test_worked_example_output(self, runner, fig9_json):
        result = runner.invoke(main, ["rank", "--dists", str(fig9_json), "--k", "3"])
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert lines[0].startswith("1. 73632")
        assert lines[1].startswith("2. 73633")
        assert lines[2].startswith("3. 73636")

    def test_swap_strategy(self, runner, fig9_json):
        result = runner.invoke(main, ["rank", "--dists", str(fig9_json), "--k", "2",
                                      "--strategy", "swap"])
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert lines[0].startswith("1. 73632")
        assert lines[1].startswith("2. 73633")

    def test_json_output_deterministic(self, runner, fig9_json, tmp_path):
        out_a = tmp_path / "a.json"
        out_b = tmp_path / "b.json"
        for out in (out_a, out_b):
            result = runner.invoke(main, ["rank", "--dists", str(fig9_json), "--k", "5",
                                          "--out", str(out)])
            assert result.exit_code == 0
        assert out_a.read_bytes() == out_b.read_bytes()


class TestPipelineCommands:
    def test_synth_gen_then_ingest_then_detect(self, runner, tmp_path):
        corpus = tmp_path / "corpus"
        result = runner.invoke(main, ["synth-gen", "--participants", "2", "--pins", "1",
                                      "--seed", "3", "--out", str(corpus)])
        assert result.exit_code == 0, result.output
        assert (corpus / "manifest.json").exists()
        assert (corpus / "run.json").exists()

        manifest_path = tmp_path / "manifest.json"
        result = runner.invoke(main, ["ingest", "--root", str(corpus),
                                      "--out", str(manifest_path)])
        assert result.exit_code == 0, result.output
        manifest = json.loads(manifest_path.read_text())
        assert manifest["summary"]["recordings"] == 2

        wav = manifest["records"][0]["audio_path"]
        result = runner.invoke(main, ["detect", "--audio", wav, "--feedback-freq", "2900"])
        assert result.exit_code == 0, result.output
        assert len(result.output.strip().splitlines()) >= 5

    def test_segment_writes_archives(self, runner, tiny_corpus, tmp_path):
        root, _, manifest = tiny_corpus
        manifest_path = tmp_path / "manifest.json"
        manifest.save(manifest_path)
        out = tmp_path / "samples"
        result = runner.invoke(main, ["segment", "--manifest", str(manifest_path),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        archives = list(out.glob("*.npy"))
        assert len(archives) == len(manifest.records)
        stack = np.load(archives[0])
        assert stack.shape[1:] == (11, 64, 64)

    def test_evaluate_full_pipeline(self, runner, tmp_path):
        corpus = tmp_path / "corpus"
        result = runner.invoke(main, ["synth-gen", "--participants", "6", "--pins", "2",
                                      "--seed", "4", "--out", str(corpus)])
        assert result.exit_code == 0, result.output
        out = tmp_path / "eval"
        result = runner.invoke(main, [
            "evaluate", "--manifest", str(corpus / "manifest.json"),
            "--scenario", "single", "--epochs", "1", "--seed", "0", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert (out / "report.json").exists()
        assert (out / "model.pt").exists()
        assert (out / "run.json").exists()
        report = json.loads((out / "report.json").read_text())
        assert set(report["key_top_n"]) == {"1", "2", "3"}

    def test_run_record_has_no_volatile_fields(self, runner, tmp_path):
        corpus = tmp_path / "corpus"
        for _ in range(2):
            result = runner.invoke(main, ["synth-gen", "--participants", "1", "--pins", "1",
                                          "--seed", "3", "--out", str(corpus)])
            assert result.exit_code == 0
        record = json.loads((corpus / "run.json").read_text())
        assert set(record) == {"tool", "version", "subcommand", "params"}
