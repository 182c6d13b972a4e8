import numpy as np
import pytest

from crowdanom.cli import main, synth_main
from crowdanom.core import InputError, PipelineConfig
from crowdanom.pipeline import (
    DUMP_KINDS,
    STAGES,
    bench_text,
    metrics_text,
    roc_csv_text,
    run_pipeline,
    scores_csv_text,
    write_outputs,
)
from crowdanom.synth import render, static_scene_script, two_walker_script

# synthetic rectangles are flat inside, so the texture gate has to sit below
# the entropy of a near-uniform noisy patch
SYNTH_CFG = dict(min_entropy=0.2)


@pytest.fixture(scope="module")
def walker_result():
    scene = render(two_walker_script())
    return run_pipeline(scene.frames, PipelineConfig(**SYNTH_CFG))


@pytest.fixture(scope="module")
def labeled_result():
    scene = render(two_walker_script())
    labels = np.zeros(len(scene.frames), dtype=np.int64)
    labels[32:34] = 1  # arbitrary split so the post-warmup tail has both classes
    return run_pipeline(scene.frames, PipelineConfig(**SYNTH_CFG), labels=labels)


class TestRunPipeline:
    def test_static_scene_never_scores(self):
        scene = render(static_scene_script(20))
        result = run_pipeline(scene.frames)
        np.testing.assert_array_equal(result.fa_raw, 0.0)
        assert not result.flags.any()
        assert all(r.n_observers == 0 for r in result.records)
        assert all(r.pools == () for r in result.records)

    def test_walkers_get_observed(self, walker_result):
        assert max(r.n_observers for r in walker_result.records) >= 1
        assert max(len(r.pools) for r in walker_result.records) >= 2

    def test_records_are_coherent(self, walker_result):
        assert len(walker_result.records) == walker_result.n_frames
        for t, r in enumerate(walker_result.records):
            assert r.index == t
            assert len(r.observers) == r.n_observers
            for snap in r.pools:
                assert 1 <= snap.n_templates <= walker_result.config.max_pool_templates

    def test_frame_zero_only_creates(self, walker_result):
        assert walker_result.records[0].n_observers == 0

    def test_pool_ids_never_reused(self, walker_result):
        seen = []
        for r in walker_result.records:
            seen.extend(r.created_ids)
        assert seen == sorted(set(seen))

    def test_score_arrays_well_formed(self, walker_result):
        n = walker_result.n_frames
        assert walker_result.fa_raw.shape == (n,)
        assert walker_result.fa_smoothed.shape == (n,)
        assert walker_result.normalized.min() >= 0.0
        assert walker_result.normalized.max() <= 1.0
        assert (walker_result.fa_raw >= 0.0).all()

    def test_deterministic_csv(self, walker_result):
        again = run_pipeline(render(two_walker_script()).frames,
                             PipelineConfig(**SYNTH_CFG))
        assert scores_csv_text(again) == scores_csv_text(walker_result)

    def test_label_length_mismatch(self):
        scene = render(static_scene_script(10))
        with pytest.raises(InputError, match="labels"):
            run_pipeline(scene.frames, labels=np.zeros(7, dtype=np.int64))

    def test_unknown_dump_kind(self, tmp_path):
        scene = render(static_scene_script(5))
        with pytest.raises(InputError, match="unknown dump"):
            run_pipeline(scene.frames, dumps=("masks", "spectra"), out_dir=tmp_path)

    def test_dumps_need_out_dir(self):
        scene = render(static_scene_script(5))
        with pytest.raises(InputError, match="out_dir"):
            run_pipeline(scene.frames, dumps=("masks",))

    def test_dump_artifacts(self, tmp_path):
        scene = render(two_walker_script(), length=12)
        run_pipeline(scene.frames, PipelineConfig(**SYNTH_CFG),
                     dumps=DUMP_KINDS, out_dir=tmp_path)
        masks = sorted((tmp_path / "masks").glob("mask_*.pgm"))
        assert len(masks) == 12
        flows = sorted((tmp_path / "flow").glob("flow_*.bin"))
        assert len(flows) == 11  # no flow for frame 0
        assert flows[0].name == "flow_00001.bin"
        # two float32 planes of 96 x 128
        assert flows[0].stat().st_size == 2 * 96 * 128 * 4
        pools_lines = (tmp_path / "pools.csv").read_text().splitlines()
        assert pools_lines[0] == "frame_index,pool_id,n_templates,x,y,w,h"
        assert len(pools_lines) > 1
        desc_lines = (tmp_path / "descriptors.csv").read_text().splitlines()
        assert desc_lines[0] == "frame_index,observer_id,neighbor_ids,weights,features"


class TestSerialization:
    def test_scores_csv_shape(self, walker_result):
        lines = scores_csv_text(walker_result).splitlines()
        assert lines[0] == "frame_index,fa_raw,fa_smoothed,normalized,flag,n_observers,in_warmup"
        assert len(lines) == walker_result.n_frames + 1
        warmup = walker_result.config.warmup_frames
        for t, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert int(cells[0]) == t
            assert int(cells[6]) == int(t < warmup)
            if t < warmup:
                assert cells[4] == "0"  # flags suppressed during warmup

    def test_metrics_text_without_labels(self, walker_result):
        text = metrics_text(walker_result)
        assert "frames_total = 36" in text
        assert "metrics = unavailable" in text

    def test_metrics_text_with_labels(self, labeled_result):
        assert labeled_result.metrics is not None
        text = metrics_text(labeled_result)
        assert "positives = 2" in text
        assert "auc = " in text
        assert "eer = " in text

    def test_roc_csv(self, walker_result, labeled_result):
        assert roc_csv_text(walker_result) is None
        text = roc_csv_text(labeled_result)
        lines = text.splitlines()
        assert lines[0] == "fpr,tpr,threshold"
        assert len(lines) == len(labeled_result.metrics.points) + 1

    def test_bench_text_lists_every_stage(self, walker_result):
        lines = bench_text(walker_result).splitlines()
        assert len(lines) == len(STAGES) + 2  # header + stages + total
        for name, line in zip(STAGES, lines[1:]):
            assert line.startswith(name)
        assert lines[-1].startswith("total")

    def test_write_outputs_without_labels(self, walker_result, tmp_path):
        written = write_outputs(walker_result, tmp_path / "out")
        assert sorted(written) == ["manifest", "metrics", "scores"]
        assert (tmp_path / "out" / "scores.csv").is_file()
        assert not (tmp_path / "out" / "roc.csv").exists()

    def test_write_outputs_with_labels_and_bench(self, labeled_result, tmp_path):
        written = write_outputs(labeled_result, tmp_path / "out",
                                manifest_extra={"input": "/tmp/frames"},
                                bench=True)
        assert sorted(written) == ["bench", "manifest", "metrics", "roc", "scores"]
        manifest = (tmp_path / "out" / "manifest.txt").read_text()
        assert "input = /tmp/frames" in manifest
        assert "frames = 36" in manifest
        assert "# effective configuration" in manifest
        assert "min_entropy = 0.2" in manifest

    def test_manifest_round_trips_config(self, walker_result, tmp_path):
        write_outputs(walker_result, tmp_path)
        manifest = (tmp_path / "manifest.txt").read_text()
        cfg_text = manifest.split("# effective configuration\n", 1)[1]
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text(cfg_text)
        assert PipelineConfig.from_file(cfg_file) == walker_result.config


class TestCli:
    def _render_scene(self, tmp_path, length=12):
        scene_dir = tmp_path / "scene"
        rc = synth_main(["--preset", "two-walker", "--out", str(scene_dir),
                         "--length", str(length)])
        assert rc == 0
        return scene_dir

    def test_synth_writes_scene_files(self, tmp_path, capsys):
        scene_dir = self._render_scene(tmp_path)
        out = capsys.readouterr().out
        assert "rendered 12 frames (0 anomalous)" in out
        assert len(list((scene_dir / "frames").glob("*.pgm"))) == 12
        assert (scene_dir / "labels.csv").is_file()
        assert (scene_dir / "script.txt").is_file()
        tracks = (scene_dir / "tracks.csv").read_text().splitlines()
        assert tracks[0] == "frame_index,actor,x,y,w,h"
        assert len(tracks) == 1 + 2 * 12

    def test_synth_from_script_file(self, tmp_path, capsys):
        script = tmp_path / "scene.txt"
        script.write_text(
            "width = 64\nheight = 48\nbackground = 128\nlength = 5\nseed = 2\n"
            "actor = w:6 h:8 value:200 x:4 y:4 vel:0-3:1,0\n"
        )
        rc = synth_main(["--script", str(script), "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "rendered 5 frames" in capsys.readouterr().out

    def test_synth_bad_script_exits_2(self, tmp_path, capsys):
        script = tmp_path / "scene.txt"
        script.write_text("width = 64\n")
        rc = synth_main(["--script", str(script), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_main_end_to_end(self, tmp_path, capsys):
        scene_dir = self._render_scene(tmp_path)
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("min_entropy = 0.2\n")
        out_dir = tmp_path / "out"
        rc = main(["--input", str(scene_dir / "frames"),
                   "--out", str(out_dir),
                   "--labels", str(scene_dir / "labels.csv"),
                   "--config", str(cfg),
                   "--dump", "pools",
                   "--bench"])
        captured = capsys.readouterr()
        assert rc == 0
        assert "scored 12 frames" in captured.out
        assert "wrote" in captured.out
        assert (out_dir / "scores.csv").is_file()
        assert (out_dir / "bench.txt").is_file()
        assert (out_dir / "pools.csv").is_file()
        manifest = (out_dir / "manifest.txt").read_text()
        assert "seed = 0" in manifest
        assert "config_file" in manifest
        assert "labels_file" in manifest

    def test_main_missing_input_exits_2(self, tmp_path, capsys):
        rc = main(["--input", str(tmp_path / "nowhere"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_main_bad_config_exits_2(self, tmp_path, capsys):
        scene_dir = self._render_scene(tmp_path)
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("no_such_knob = 1\n")
        rc = main(["--input", str(scene_dir / "frames"),
                   "--out", str(tmp_path / "out"),
                   "--config", str(cfg)])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_main_bad_dump_kind_exits_2(self, tmp_path, capsys):
        scene_dir = self._render_scene(tmp_path, length=5)
        rc = main(["--input", str(scene_dir / "frames"),
                   "--out", str(tmp_path / "out"),
                   "--dump", "spectra"])
        assert rc == 2
        assert "error:" in capsys.readouterr().err
