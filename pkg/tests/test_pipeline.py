"""Pipeline orchestration: staged calls and the all-in-one runner agree."""
from __future__ import annotations

import json
import os
import pathlib

import numpy as np
import pytest

import class_atlas as ca
from class_atlas import errors as E
from class_atlas import pipeline as pl


def tree_bytes(root) -> dict[str, bytes]:
    root = pathlib.Path(root)
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture()
def synth_inputs(tmp_path):
    """Small planted dataset written as pipeline inputs."""
    cfg = ca.SynthConfig(depth=2, branching=2, samples_per_class=10,
                         sigma=0.5, seed=5)
    indir = tmp_path / "inputs"
    pl.stage_synth(cfg, str(indir))
    return {
        "scores": str(indir / "scores.bsm"),
        "labels": str(indir / "labels.csv"),
        "taxonomy": str(indir / "taxonomy.json"),
    }


class TestRunPipeline:
    def test_reported_artifacts_exist_and_are_complete(self, synth_inputs,
                                                       tmp_path):
        out = tmp_path / "out"
        cfg = pl.PipelineConfig(scores_path=synth_inputs["scores"],
                                labels_path=synth_inputs["labels"],
                                outdir=str(out))
        paths = pl.run_pipeline(cfg)
        for p in paths:
            assert os.path.isfile(p), p
        assert sorted(os.listdir(out)) == sorted(
            os.path.basename(p) for p in paths)

    def test_same_config_byte_identical_trees(self, synth_inputs, tmp_path):
        trees = []
        for name in ("a", "b"):
            out = tmp_path / name
            pl.run_pipeline(pl.PipelineConfig(
                scores_path=synth_inputs["scores"],
                labels_path=synth_inputs["labels"],
                outdir=str(out)))
            trees.append(tree_bytes(out))
        assert trees[0] == trees[1]

    def test_staged_calls_reproduce_pipeline_tree(self, synth_inputs,
                                                  tmp_path):
        auto = tmp_path / "auto"
        pl.run_pipeline(pl.PipelineConfig(
            scores_path=synth_inputs["scores"],
            labels_path=synth_inputs["labels"],
            outdir=str(auto)))

        manual = tmp_path / "manual"
        outdir = str(manual)
        scores = pl.load_scores(synth_inputs["scores"])
        labels = pl.load_labels(synth_inputs["labels"])
        pl.stage_validate(scores, labels, None, outdir)
        sim = pl.stage_sim(scores, "pearson", "none", outdir)
        dend, ordering = pl.stage_order(sim, "hclust", None, outdir)
        part = pl.stage_cut(dend, 2, outdir)
        counts = pl.stage_cooccur(labels, scores.class_names, outdir)
        _, groups = pl.stage_groups(sim, part, pl.GroupParams(), outdir,
                                    counts=counts)
        pl.stage_stats(sim, 32, outdir)
        pl.stage_render(sim, ordering, part, groups, dend, outdir)
        pl.stage_report(outdir)
        assert tree_bytes(manual) == tree_bytes(auto)

    def test_transform_writes_transformed_scores(self, synth_inputs,
                                                 tmp_path):
        out = tmp_path / "out"
        pl.run_pipeline(pl.PipelineConfig(
            scores_path=synth_inputs["scores"], transform="softmax",
            outdir=str(out)))
        transformed = pl.load_scores(str(out / "scores_transformed.bsm"))
        assert transformed.kind == "probability"
        sim = pl.load_similarity(str(out / "similarity.bsm"))
        expected = ca.pearson_similarity(
            ca.softmax_rows(pl.load_scores(synth_inputs["scores"])))
        assert sim.values.tobytes() == expected.values.tobytes()

    def test_taxonomy_ordering_skips_tree_artifacts(self, synth_inputs,
                                                    tmp_path):
        out = tmp_path / "out"
        paths = pl.run_pipeline(pl.PipelineConfig(
            scores_path=synth_inputs["scores"],
            taxonomy_path=synth_inputs["taxonomy"],
            ordering="taxonomy", outdir=str(out)))
        names = {os.path.basename(p) for p in paths}
        assert "ordering.json" in names
        assert "dendrogram.json" not in names
        assert "partition.json" not in names
        assert "groups.json" not in names
        ordering = ca.Ordering.from_json(
            (out / "ordering.json").read_text())
        sim = pl.load_similarity(str(out / "similarity.bsm"))
        assert sorted(ordering.permutation) == list(range(sim.n_classes))

    def test_png_format_adds_raster_heatmap(self, synth_inputs, tmp_path):
        out = tmp_path / "out"
        pl.run_pipeline(pl.PipelineConfig(
            scores_path=synth_inputs["scores"], fmt="png", outdir=str(out)))
        raw = (out / "heatmap.png").read_bytes()
        assert raw[:8] == b"\x89PNG\r\n\x1a\n"
        assert (out / "heatmap.svg").exists()

    def test_misaligned_labels_fail_after_writing_report(self, synth_inputs,
                                                         tmp_path):
        bad = tmp_path / "bad_labels.csv"
        bad.write_text("sample_id,labels\ns0_0,nosuchclass\n")
        out = tmp_path / "out"
        with pytest.raises(E.InputError):
            pl.run_pipeline(pl.PipelineConfig(
                scores_path=synth_inputs["scores"],
                labels_path=str(bad), outdir=str(out)))
        report = json.loads((out / "validation.json").read_text())
        assert report["ok"] is False
        assert "nosuchclass" in report["unknown_classes"]

    def test_rejects_unknown_measure(self, synth_inputs):
        with pytest.raises(E.ConfigError):
            pl.PipelineConfig(scores_path=synth_inputs["scores"],
                              measure="kendall")

    def test_rejects_bad_cut_size(self, synth_inputs):
        with pytest.raises(E.ConfigError):
            pl.PipelineConfig(scores_path=synth_inputs["scores"], k=0)


class TestStageHelpers:
    def test_clustering_input_zeroes_diagonal_for_degenerate(self):
        values = np.array([[1.0, 0.5, 0.0],
                           [0.5, 1.0, 0.0],
                           [0.0, 0.0, 0.0]])
        sim = ca.SimilarityMatrix(
            class_names=("a", "b", "c"), values=values, measure="pearson",
            source_kind="logit", degenerate_classes=frozenset({2}))
        d = pl.clustering_input(sim)
        assert np.all(np.diag(d) == 0.0)
        assert d[0, 1] == 0.5
        assert d[0, 2] == 1.0

    def test_load_scores_dispatches_on_extension(self, tmp_path):
        scores = ca.ScoreMatrix(class_names=("a", "b"),
                                values=np.array([[0.5, 1.0], [2.0, 0.25]]),
                                kind="logit")
        csv_path = tmp_path / "s.csv"
        csv_path.write_bytes(ca.write_scores_csv(scores))
        bin_path = tmp_path / "s.bsm"
        bin_path.write_bytes(ca.write_scores_binary(scores))
        from_csv = pl.load_scores(str(csv_path))
        from_bin = pl.load_scores(str(bin_path))
        assert from_csv.values.tobytes() == scores.values.tobytes()
        assert from_bin.values.tobytes() == scores.values.tobytes()
        assert from_csv.kind == "logit"

    def test_load_scores_missing_file(self, tmp_path):
        with pytest.raises(E.InputError):
            pl.load_scores(str(tmp_path / "absent.bsm"))

    def test_memberships_round_trip(self, tmp_path):
        mem = ca.fuzzy_cmeans(np.array([[0.0], [0.1], [5.0], [5.2]]),
                              c=2, seed=3)
        path = str(tmp_path / "m.bsm")
        pl.write_memberships(mem, ("a", "b", "c", "d"), path)
        loaded, names = pl.load_memberships(path)
        assert names == ("a", "b", "c", "d")
        assert loaded.weights.tobytes() == mem.weights.tobytes()

    def test_load_memberships_rejects_other_container(self, tmp_path):
        scores = ca.ScoreMatrix(class_names=("a", "b"),
                                values=np.zeros((2, 2)), kind="logit")
        path = tmp_path / "scores.bsm"
        path.write_bytes(ca.write_scores_binary(scores))
        with pytest.raises(E.ConfigError):
            pl.load_memberships(str(path))

    def test_report_requires_similarity_artifact(self, tmp_path):
        with pytest.raises(E.InputError):
            pl.stage_report(str(tmp_path))

    def test_report_reads_partition_into_metadata(self, synth_inputs,
                                                  tmp_path):
        out = tmp_path / "out"
        pl.run_pipeline(pl.PipelineConfig(
            scores_path=synth_inputs["scores"], k=3, outdir=str(out)))
        html_text = (out / "report.html").read_text()
        start = html_text.index('id="metadata">') + len('id="metadata">')
        end = html_text.index("</script>", start)
        metadata = json.loads(html_text[start:end])
        assert metadata["n_blocks"] == 3
        assert metadata["measure"] == "pearson"
        assert metadata["n_classes"] == 4
