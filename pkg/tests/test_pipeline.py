import numpy as np
import pytest

from tinstitch import (
    LayerSpec,
    MemoryTracker,
    NetworkGraph,
    forward,
)
from tinstitch.imageio import load_image, save_image, to_pixels, to_tensor
from tinstitch.pipeline import (
    PipelineConfig,
    StyleConsistencyHazard,
    estimate_memory,
    resize_pixels,
    run_pipeline,
    stats_sweep,
    stylize,
    thumb_dims,
)
from tinstitch.nets import reference_graph, reference_weights
from tinstitch.testimages import multi_octave, smooth_blobs

class TestThumbnail:
    def test_dims_shorter_side(self):
        assert thumb_dims(2000, 3000, 1024) == (1024, 1536)
        assert thumb_dims(3000, 2000, 1024) == (1536, 1024)
        assert thumb_dims(500, 500, 1024) == (1024, 1024)

    def test_resize_pixels_matches_tensor_path(self):
        from tinstitch import resize_bilinear
        img = multi_octave(90, 130, seed=1)
        banded = resize_pixels(img, 40, 64)
        dense = resize_bilinear(to_tensor(img), 40, 64)
        assert np.array_equal(banded.data, dense.data)


class TestImageIO:
    def test_png_round_trip(self, tmp_path):
        img = multi_octave(63, 117, seed=2)
        path = tmp_path / "x.png"
        save_image(path, img)
        assert np.array_equal(load_image(path), img)

    def test_pixel_tensor_round_trip_exact(self):
        img = multi_octave(32, 32, seed=4)
        assert np.array_equal(to_pixels(to_tensor(img)), img)


class TestRunPipeline:
    def test_identity_graph_any_resolution(self):
        empty = NetworkGraph([])
        for h, w in ((70, 50), (300, 200), (97, 211)):
            img = multi_octave(h, w, seed=h)
            res = run_pipeline(img, None, empty, None,
                               PipelineConfig(thumb_short_side=32, k=96, s=64))
            assert np.array_equal(res.output, img)

    def test_tiled_equals_whole_toy(self, toy):
        graph, weights = toy
        img = multi_octave(300, 340, seed=6)
        cfg = PipelineConfig(thumb_short_side=96, k=96, s=64)
        res = run_pipeline(img, None, graph, weights, cfg)
        whole = to_pixels(forward(graph, weights, to_tensor(img), res.bank, 1.0))
        assert np.abs(res.output.astype(int) - whole.astype(int)).max() <= 1

    def test_worker_determinism(self, toy):
        graph, weights = toy
        img = multi_octave(256, 256, seed=7)
        outs = []
        for workers in (1, 3):
            cfg = PipelineConfig(thumb_short_side=64, k=96, s=64, workers=workers,
                                 batch_size=2)
            outs.append(run_pipeline(img, None, graph, weights, cfg).output)
        assert np.array_equal(outs[0], outs[1])

    def test_batching_matches_single(self, toy):
        graph, weights = toy
        img = multi_octave(256, 256, seed=8)
        base = run_pipeline(img, None, graph, weights,
                            PipelineConfig(thumb_short_side=64, k=96, s=64)).output
        batched = run_pipeline(img, None, graph, weights,
                               PipelineConfig(thumb_short_side=64, k=96, s=64,
                                              batch_size=3)).output
        assert np.array_equal(base, batched)

    def test_plain_norm_rejected(self, toy):
        graph, _ = toy
        swapped = NetworkGraph([LayerSpec(**l.to_json()) for l in graph.layers])
        for layer in swapped.layers:
            if layer.kind == "norm":
                layer.variant = "in"
        img = multi_octave(128, 128, seed=9)
        with pytest.raises(StyleConsistencyHazard):
            run_pipeline(img, None, swapped, toy[1],
                         PipelineConfig(thumb_short_side=64, k=96, s=64))

    def test_adain_alpha_zero_ignores_style(self):
        graph, weights = reference_graph(), reference_weights()
        img = multi_octave(200, 200, seed=10)
        outs = []
        for style_seed in (1, 2):
            style = smooth_blobs(128, 128, seed=style_seed)
            cfg = PipelineConfig(thumb_short_side=64, k=96, s=64, alpha=0.0,
                                 style_size=128)
            outs.append(run_pipeline(img, style, graph, weights, cfg).output)
        assert np.array_equal(outs[0], outs[1])

    def test_adain_styles_differ_at_alpha_one(self):
        graph, weights = reference_graph(), reference_weights()
        img = multi_octave(200, 200, seed=11)
        outs = []
        for style_seed in (1, 2):
            style = smooth_blobs(128, 128, seed=style_seed)
            cfg = PipelineConfig(thumb_short_side=64, k=96, s=64, alpha=1.0,
                                 style_size=128)
            outs.append(run_pipeline(img, style, graph, weights, cfg).output)
        assert not np.array_equal(outs[0], outs[1])

    def test_adain_requires_style(self):
        graph, weights = reference_graph(), reference_weights()
        img = multi_octave(128, 128, seed=12)
        with pytest.raises(Exception):
            run_pipeline(img, None, graph, weights,
                         PipelineConfig(thumb_short_side=64, k=96, s=64))

    def test_metrics_path(self, toy):
        graph, weights = toy
        img = multi_octave(224, 224, seed=13)
        cfg = PipelineConfig(thumb_short_side=64, k=96, s=64, compute_metrics=True)
        res = run_pipeline(img, None, graph, weights, cfg)
        assert res.metric_values is not None
        assert res.metric_values["l_sp"] >= 0.0
        assert res.metric_values["gram_consistency"] >= 0.0
        assert res.thumb_stylized is not None

    def test_stylize_writes_png(self, toy, tmp_path):
        graph, weights = toy
        content = tmp_path / "c.png"
        save_image(content, multi_octave(150, 170, seed=14))
        out = tmp_path / "o.png"
        cfg = PipelineConfig(thumb_short_side=64, k=96, s=64)
        result = stylize(content, None, graph, weights, cfg, out)
        pixels = load_image(out)
        assert pixels.shape == (150, 170, 3)
        assert np.array_equal(pixels, run_pipeline(
            load_image(content), None, graph, weights, cfg).output)
        assert result.report.total > 0


class TestMemory:
    def test_patch_term_resolution_independent(self, toy):
        graph, _ = toy
        cfg = PipelineConfig()
        reports = [estimate_memory(graph, cfg, (size, size))
                   for size in (1000, 2000, 4000, 8000)]
        assert len({r.patch_pass for r in reports}) == 1
        totals = {r.total for r in reports}
        assert len(totals) == 1
        outputs = [r.output_buffer for r in reports]
        assert outputs == sorted(outputs) and outputs[0] < outputs[-1]

    def test_batch_doubles_patch_term(self, toy):
        graph, _ = toy
        one = estimate_memory(graph, PipelineConfig(batch_size=1), (2000, 2000))
        two = estimate_memory(graph, PipelineConfig(batch_size=2), (2000, 2000))
        assert two.patch_pass == 2 * one.patch_pass

    def test_estimate_within_2x_of_measured(self, toy):
        graph, weights = toy
        img = multi_octave(512, 512, seed=15)
        cfg = PipelineConfig(thumb_short_side=128, k=200, s=160)
        with MemoryTracker() as tracker:
            run_pipeline(img, None, graph, weights, cfg, collect=False)
        est = estimate_memory(graph, cfg, (512, 512), weights.nbytes, 0)
        assert est.total / 2 <= tracker.peak <= est.total * 2

    def test_tracker_releases(self, toy):
        graph, weights = toy
        img = multi_octave(128, 128, seed=16)
        with MemoryTracker() as tracker:
            run_pipeline(img, None, graph, weights,
                         PipelineConfig(thumb_short_side=64, k=96, s=64),
                         collect=False)
            import gc
            gc.collect()
            assert tracker.current < tracker.peak / 4


class TestStatsSweep:
    def test_constant_image_scale_invariant_means(self):
        graph, weights = reference_graph(), reference_weights()
        img = np.full((256, 256, 3), 128, dtype=np.uint8)
        rows = stats_sweep(img, graph, weights, [64, 128, 256])
        by_layer = {}
        for r in rows:
            by_layer.setdefault(r["layer"], []).append(r["mean_abs_mu"])
        for layer, vals in by_layer.items():
            assert max(vals) - min(vals) < 1e-4, layer

    def test_row_count_contract(self):
        graph, weights = reference_graph(), reference_weights()
        img = multi_octave(256, 256, seed=17)
        rows = stats_sweep(img, graph, weights, [32, 64, 128, 192, 256])
        assert len(rows) == 5 * 4

    def test_full_scale_equals_whole_image_stats(self):
        from tinstitch.network import _apply_layer
        from tinstitch import channel_stats
        graph, weights = reference_graph(), reference_weights()
        img = multi_octave(200, 200, seed=18)
        rows = stats_sweep(img, graph, weights, [200])
        cur = to_tensor(img)
        probe_rows = {}
        for layer_id, layer in enumerate(graph.layers):
            if layer.kind == "norm":
                break
            cur = _apply_layer(layer, layer_id, weights, cur, None, 1.0)
            if layer.name:
                st = channel_stats(cur)
                probe_rows[layer.name] = (float(np.abs(st.mean).mean()),
                                          float(st.std.mean()))
        for r in rows:
            mu, sigma = probe_rows[r["layer"]]
            assert r["mean_abs_mu"] == mu
            assert r["mean_sigma"] == sigma

    def test_oversized_scale_clamped_with_warning(self):
        graph, weights = reference_graph(), reference_weights()
        img = multi_octave(64, 64, seed=19)
        with pytest.warns(UserWarning, match="clamping"):
            rows = stats_sweep(img, graph, weights, [64, 128])
        assert len(rows) == 2 * 4
