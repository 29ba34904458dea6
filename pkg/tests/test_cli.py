import csv
import json

import numpy as np
import pytest

from tinstitch.cli import main
from tinstitch.imageio import save_image
from tinstitch.nets import reference_graph, reference_weights, toy_graph, toy_weights
from tinstitch.testimages import multi_octave, smooth_blobs


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_assets")
    toy_graph().save(root / "toy.json")
    toy_weights().save(root / "toy.urstw")
    reference_graph().save(root / "ref.json")
    reference_weights().save(root / "ref.urstw")
    save_image(root / "content.png", multi_octave(220, 260, seed=20))
    save_image(root / "style.png", smooth_blobs(96, 96, seed=21))
    return root


def run(argv):
    return main([str(a) for a in argv])


class TestStylizeCommand:
    def test_toy_ok(self, assets, tmp_path, capsys):
        code = run(["stylize", "--content", assets / "content.png",
                    "--graph", assets / "toy.json", "--weights", assets / "toy.urstw",
                    "--out", tmp_path / "out.png",
                    "--patch-size", 96, "--stride", 64, "--thumb", 64])
        assert code == 0
        out = capsys.readouterr().out
        assert "memory estimate" in out
        from tinstitch.imageio import load_image
        assert load_image(tmp_path / "out.png").shape == (220, 260, 3)

    def test_missing_style_file(self, assets, tmp_path):
        code = run(["stylize", "--content", assets / "content.png",
                    "--style", assets / "missing.png",
                    "--graph", assets / "ref.json", "--weights", assets / "ref.urstw",
                    "--out", tmp_path / "out.png"])
        assert code == 2

    def test_plain_in_graph_exits_3(self, assets, tmp_path, capsys):
        graph = toy_graph()
        for layer in graph.layers:
            if layer.kind == "norm":
                layer.variant = "in"
        graph.save(tmp_path / "plain.json")
        code = run(["stylize", "--content", assets / "content.png",
                    "--graph", tmp_path / "plain.json", "--weights", assets / "toy.urstw",
                    "--out", tmp_path / "out.png",
                    "--patch-size", 96, "--stride", 64, "--thumb", 64])
        assert code == 3
        assert "inconsistent" in capsys.readouterr().err

    def test_documented_defaults_accepted(self, assets, tmp_path):
        # paper-scale defaults parse; a small image still runs (one window)
        code = run(["stylize", "--content", assets / "content.png",
                    "--graph", assets / "toy.json", "--weights", assets / "toy.urstw",
                    "--out", tmp_path / "out.png",
                    "--patch-size", 1064, "--stride", 1000, "--thumb", 1024])
        assert code == 0

    def test_metrics_json(self, assets, tmp_path):
        metrics = tmp_path / "m.json"
        code = run(["stylize", "--content", assets / "content.png",
                    "--graph", assets / "toy.json", "--weights", assets / "toy.urstw",
                    "--out", tmp_path / "out.png", "--metrics", metrics,
                    "--patch-size", 96, "--stride", 64, "--thumb", 64])
        assert code == 0
        doc = json.loads(metrics.read_text())
        assert set(doc) == {"l_sp", "gram_consistency"}

    def test_env_overrides_workers(self, assets, tmp_path, monkeypatch):
        monkeypatch.setenv("TINSTITCH_THREADS", "2")
        code = run(["stylize", "--content", assets / "content.png",
                    "--graph", assets / "toy.json", "--weights", assets / "toy.urstw",
                    "--out", tmp_path / "a.png",
                    "--patch-size", 96, "--stride", 64, "--thumb", 64])
        assert code == 0
        monkeypatch.delenv("TINSTITCH_THREADS")
        run(["stylize", "--content", assets / "content.png",
             "--graph", assets / "toy.json", "--weights", assets / "toy.urstw",
             "--out", tmp_path / "b.png",
             "--patch-size", 96, "--stride", 64, "--thumb", 64])
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


class TestStatsSweepCommand:
    def test_row_count_and_figure(self, assets, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = run(["stats-sweep", "--image", assets / "content.png",
                    "--graph", assets / "ref.json", "--weights", assets / "ref.urstw",
                    "--out", out, "--scales", "32,64,128,220"])
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 4 * 4
        assert (tmp_path / "sweep.png").exists()
        assert "monotone" in capsys.readouterr().out


class TestSeamCheckCommand:
    def test_default_toy(self, capsys):
        code = run(["seam-check", "--size", 320])
        assert code == 0
        out = capsys.readouterr().out
        diff = int(out.split("tiled vs whole:")[1].split()[0])
        assert diff <= 1

    def test_allow_in_warns(self, capsys, tmp_path):
        code = run(["seam-check", "--size", 320, "--allow-in",
                    "--plan", tmp_path / "plan.json"])
        assert code == 0
        out = capsys.readouterr().out
        assert "warning" in out
        assert (tmp_path / "plan.json").exists()
        doc = json.loads((tmp_path / "plan.json").read_text())
        assert doc["k"] == 96 and doc["s"] == 64

    def test_mismatched_dims_exit_2(self):
        assert run(["seam-check", "--size", 320, "--patch-size", 64,
                    "--stride", 96]) == 2


class TestMemReportCommand:
    def test_columns_and_figure(self, assets, tmp_path):
        out = tmp_path / "mem.csv"
        code = run(["mem-report", "--graph", assets / "toy.json",
                    "--weights", assets / "toy.urstw", "--out", out,
                    "--resolutions", "1000,2000,4000"])
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["resolution"] for r in rows] == ["1000", "2000", "4000"]
        assert len({r["patch_pass"] for r in rows}) == 1
        assert len({r["total"] for r in rows}) == 1
        outputs = [int(r["output_buffer"]) for r in rows]
        assert outputs == sorted(outputs) and outputs[0] < outputs[-1]
        assert (tmp_path / "mem.png").exists()

    def test_batch_doubles_column(self, assets, tmp_path):
        vals = []
        for batch in (1, 2):
            out = tmp_path / f"mem{batch}.csv"
            run(["mem-report", "--graph", assets / "toy.json",
                 "--weights", assets / "toy.urstw", "--out", out,
                 "--resolutions", "2000", "--batch", batch])
            vals.append(int(next(iter(csv.DictReader(out.open())))["patch_pass"]))
        assert vals[1] == 2 * vals[0]


class TestDumpFeatures:
    def test_dump_and_reload(self, assets, tmp_path):
        out = tmp_path / "feats.urstw"
        code = run(["dump-features", "--image", assets / "content.png",
                    "--graph", assets / "ref.json", "--weights", assets / "ref.urstw",
                    "--layer", "relu4_1", "--out", out])
        assert code == 0
        from tinstitch import load_weights
        store = load_weights(out)
        feats = store.get("features/relu4_1")
        assert feats.ndim == 4 and feats.shape[1] == 64
        assert np.all(np.isfinite(feats))
