"""Command-line interface: exit codes, config files, staged invocations."""
from __future__ import annotations

import json
import subprocess
import sys

import pytest

import class_atlas as ca
from class_atlas import cli
from class_atlas import errors as E
from class_atlas import pipeline as pl
from class_atlas.seriation import Partition


def run_cli(*argv) -> int:
    return cli.main(list(argv))


@pytest.fixture()
def scores_dir(tmp_path):
    """Directory with small synthetic scores.bsm/labels.csv inside."""
    out = tmp_path / "work"
    assert run_cli("synth", "--depth", "2", "--branching", "2",
                   "--samples-per-class", "8", "--seed", "4",
                   "-o", str(out)) == 0
    return out


class TestStagedChain:
    def test_every_stage_exits_zero(self, scores_dir, capsys):
        out = str(scores_dir)
        assert run_cli("sim", "-o", out) == 0
        assert run_cli("order", "-o", out) == 0
        assert run_cli("cut", "--k", "2", "-o", out) == 0
        assert run_cli("cooccur", "-o", out) == 0
        assert run_cli("groups", "-o", out) == 0
        assert run_cli("stats", "-o", out) == 0
        assert run_cli("render", "-o", out) == 0
        assert run_cli("report", "-o", out) == 0
        for name in ("similarity.bsm", "ordering.json", "partition.json",
                     "groups.json", "cooccurrence.bsm", "stats.json",
                     "heatmap.svg", "dendrogram.svg", "report.html"):
            assert (scores_dir / name).exists(), name
        assert "report.html" in capsys.readouterr().out

    def test_staged_chain_matches_pipeline_subcommand(self, scores_dir,
                                                      tmp_path, capsys):
        staged = str(scores_dir)
        for argv in (["sim"], ["order"], ["cut"], ["groups"], ["stats"],
                     ["render"], ["report"]):
            assert run_cli(*argv, "-o", staged) == 0
        single = tmp_path / "single"
        assert run_cli("pipeline", "--scores",
                       str(scores_dir / "scores.bsm"),
                       "-o", str(single)) == 0
        capsys.readouterr()
        for name in ("similarity.bsm", "dendrogram.json", "ordering.json",
                     "partition.json", "memberships.bsm", "groups.json",
                     "stats.json", "histogram.svg", "heatmap.svg",
                     "dendrogram.svg", "report.html"):
            assert (single / name).read_bytes() == \
                (scores_dir / name).read_bytes(), name

    def test_validate_reports_ok(self, scores_dir, capsys):
        assert run_cli("validate", "-o", str(scores_dir),
                       "--labels", str(scores_dir / "labels.csv")) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["ok"] is True

    def test_confusion_writes_counts(self, scores_dir):
        assert run_cli("confusion", "-o", str(scores_dir)) == 0
        cm = pl.load_counts(str(scores_dir / "confusion.bsm"))
        assert cm.kind == "confusion"
        assert int(cm.counts.sum()) == 32  # 4 classes x 8 samples


class TestExitCodes:
    def test_missing_input_exits_two(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.bsm")
        assert run_cli("sim", "--scores", missing, "-o", str(tmp_path)) == 2
        assert "nope.bsm" in capsys.readouterr().err

    def test_missing_default_artifact_exits_two(self, tmp_path, capsys):
        assert run_cli("order", "-o", str(tmp_path)) == 2
        assert "similarity.bsm" in capsys.readouterr().err

    def test_misaligned_labels_exit_two(self, scores_dir, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("sample_id,labels\ns0_0,ghost\n")
        assert run_cli("validate", "-o", str(scores_dir),
                       "--labels", str(bad)) == 2

    def test_unknown_flag_exits_three(self, tmp_path, capsys):
        assert run_cli("sim", "--turbo", "-o", str(tmp_path)) == 3
        assert "turbo" in capsys.readouterr().err

    def test_bad_choice_exits_three(self, tmp_path, capsys):
        assert run_cli("sim", "--measure", "kendall",
                       "-o", str(tmp_path)) == 3

    def test_unknown_subcommand_exits_three(self, capsys):
        assert run_cli("frobnicate") == 3

    def test_malformed_clip_exits_three(self, scores_dir, capsys):
        assert run_cli("render", "--clip", "broken",
                       "-o", str(scores_dir)) == 3

    def test_taxonomy_method_without_file_exits_three(self, scores_dir,
                                                      capsys):
        assert run_cli("sim", "-o", str(scores_dir)) == 0
        assert run_cli("order", "--method", "taxonomy",
                       "-o", str(scores_dir)) == 3

    def test_out_of_range_cut_exits_three(self, scores_dir, capsys):
        assert run_cli("sim", "-o", str(scores_dir)) == 0
        assert run_cli("order", "-o", str(scores_dir)) == 0
        assert run_cli("cut", "--k", "99", "-o", str(scores_dir)) == 3

    def test_invariant_failure_exits_four(self, scores_dir, monkeypatch,
                                          capsys):
        def boom(*a, **kw):
            raise E.InvariantError("objective increased")
        monkeypatch.setattr(pl, "stage_sim", boom)
        assert run_cli("sim", "-o", str(scores_dir)) == 4
        assert "internal error" in capsys.readouterr().err


class TestThreadsEnv:
    def test_accepts_valid_settings(self, scores_dir, monkeypatch, capsys):
        for value in ("0", "1", "8"):
            monkeypatch.setenv(cli.ENV_THREADS, value)
            assert run_cli("sim", "-o", str(scores_dir)) == 0

    def test_rejects_garbage(self, scores_dir, monkeypatch, capsys):
        monkeypatch.setenv(cli.ENV_THREADS, "many")
        assert run_cli("sim", "-o", str(scores_dir)) == 3
        assert cli.ENV_THREADS in capsys.readouterr().err

    def test_rejects_negative(self, scores_dir, monkeypatch, capsys):
        monkeypatch.setenv(cli.ENV_THREADS, "-2")
        assert run_cli("sim", "-o", str(scores_dir)) == 3

    def test_setting_does_not_change_output(self, scores_dir, monkeypatch,
                                            capsys):
        blobs = []
        for value in ("1", "8"):
            monkeypatch.setenv(cli.ENV_THREADS, value)
            assert run_cli("sim", "-o", str(scores_dir)) == 0
            blobs.append((scores_dir / "similarity.bsm").read_bytes())
        assert blobs[0] == blobs[1]


class TestConfigFile:
    def test_supplies_defaults(self, scores_dir, capsys):
        out = str(scores_dir)
        assert run_cli("sim", "-o", out) == 0
        assert run_cli("order", "-o", out) == 0
        conf = scores_dir / "cut.conf"
        conf.write_text("# block count\nk = 3\n")
        assert run_cli("cut", "--config", str(conf), "-o", out) == 0
        part = Partition.from_json(
            (scores_dir / "partition.json").read_text())
        assert part.n_blocks == 3

    def test_command_line_beats_config(self, scores_dir, capsys):
        out = str(scores_dir)
        assert run_cli("sim", "-o", out) == 0
        assert run_cli("order", "-o", out) == 0
        conf = scores_dir / "cut.conf"
        conf.write_text("k=3\n")
        assert run_cli("cut", "--config", str(conf), "--k", "4",
                       "-o", out) == 0
        part = Partition.from_json(
            (scores_dir / "partition.json").read_text())
        assert part.n_blocks == 4

    def test_unknown_key_exits_three(self, scores_dir, capsys):
        conf = scores_dir / "bad.conf"
        conf.write_text("verbosity=11\n")
        assert run_cli("cut", "--config", str(conf),
                       "-o", str(scores_dir)) == 3
        assert "verbosity" in capsys.readouterr().err

    def test_malformed_line_exits_three(self, scores_dir, capsys):
        conf = scores_dir / "bad.conf"
        conf.write_text("just some words\n")
        assert run_cli("cut", "--config", str(conf),
                       "-o", str(scores_dir)) == 3

    def test_dashed_keys_accepted(self, scores_dir, capsys):
        out = str(scores_dir)
        assert run_cli("sim", "-o", out) == 0
        assert run_cli("order", "-o", out) == 0
        assert run_cli("cut", "-o", out) == 0
        conf = scores_dir / "groups.conf"
        conf.write_text("fuzzy-c = 2\nmax-iter = 50\n")
        assert run_cli("groups", "--config", str(conf), "-o", out) == 0


class TestInstalledEntryPoint:
    def test_version_flag(self):
        proc = subprocess.run(["class-atlas", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert ca.__version__ in proc.stdout

    def test_help_lists_subcommands(self):
        proc = subprocess.run(["class-atlas", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        for name in ("validate", "sim", "order", "cut", "groups", "render",
                     "report", "synth", "stats"):
            assert name in proc.stdout

    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "class_atlas", "synth", "--depth", "1",
             "--samples-per-class", "2", "-o", str(tmp_path)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert (tmp_path / "scores.bsm").exists()
