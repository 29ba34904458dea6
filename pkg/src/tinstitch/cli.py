"""Command-line surface.

Exit codes: 0 success, 2 usage or file problems, 3 configuration hazards
(a graph that would normalize patches independently).  Report commands
write delimited output plus a rendered figure alongside it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import nets, testimages
from .imageio import load_image, save_image, to_pixels, to_tensor
from .metrics import FeatureExtractor, gram_consistency
from .network import (
    LayerSpec,
    NetworkGraph,
    forward,
    load_weights,
    save_stats_bank,
)
from .pipeline import (
    PipelineConfig,
    StyleConsistencyHazard,
    estimate_memory,
    run_pipeline,
    stats_sweep,
    stylize,
)
from .tensor import ConfigError, ShapeError
from .tiler import plan_tiles

DEFAULT_SCALES = [128, 256, 512, 1024, 2048]


def _workers(args) -> int:
    env = os.environ.get("TINSTITCH_THREADS")
    if env:
        return max(1, int(env))
    return args.workers


def _cfg_from(args) -> PipelineConfig:
    return PipelineConfig(
        thumb_short_side=args.thumb, k=args.patch_size, s=args.stride,
        batch_size=args.batch, alpha=args.alpha, workers=_workers(args),
        allow_plain_norm=args.allow_in,
        compute_metrics=getattr(args, "metrics", None) is not None,
    )


def _load_net(args):
    graph = NetworkGraph.load(args.graph)
    weights = load_weights(args.weights) if args.weights else None
    return graph, weights


def _print_report(report) -> None:
    print("memory estimate (bytes):")
    for name, value in report.rows():
        print(f"  {name:>15}: {value:>14,}")


def cmd_stylize(args) -> int:
    cfg = _cfg_from(args)
    graph, weights = _load_net(args)
    t0 = time.time()
    result = stylize(args.content, args.style, graph, weights, cfg, args.out)
    elapsed = time.time() - t0
    _print_report(result.report)
    print(f"stylized {args.content} -> {args.out} "
          f"({result.plan.count} patches, {elapsed:.1f}s)")
    if args.metrics:
        with open(args.metrics, "w") as fh:
            json.dump(result.metric_values, fh)
            fh.write("\n")
        print(f"metrics written to {args.metrics}: {result.metric_values}")
    if args.save_stats:
        save_stats_bank(result.bank, args.save_stats)
        print(f"captured statistics written to {args.save_stats}")
    return 0


def _sweep_convergence(rows) -> tuple[int, int]:
    """Count (layer, aggregate) series whose deviation from the largest
    scale shrinks monotonically as scale grows."""
    scales = sorted({r["scale"] for r in rows})
    layers = sorted({r["layer"] for r in rows})
    table = {(r["scale"], r["layer"]): r for r in rows}
    monotone, total = 0, 0
    for layer in layers:
        for key in ("mean_abs_mu", "mean_sigma"):
            devs = [abs(table[(s, layer)][key] - table[(scales[-1], layer)][key])
                    for s in scales[:-1]]
            total += 1
            if all(a >= b for a, b in zip(devs, devs[1:])):
                monotone += 1
    return monotone, total


def _plot_sweep(rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    layers = sorted({r["layer"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for key, ax, title in (("mean_abs_mu", axes[0], "mean |feature mean|"),
                           ("mean_sigma", axes[1], "mean feature stddev")):
        for layer in layers:
            pts = sorted((r["scale"], r[key]) for r in rows if r["layer"] == layer)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=layer)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("thumbnail scale (px)")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_stats_sweep(args) -> int:
    graph, weights = _load_net(args)
    pixels = load_image(args.image)
    scales = [int(s) for s in args.scales.split(",")]
    rows = stats_sweep(pixels, graph, weights, scales)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["scale", "layer", "mean_abs_mu", "mean_sigma"])
        writer.writeheader()
        writer.writerows(rows)
    monotone, total = _sweep_convergence(rows)
    print(f"sweep written to {args.out} ({len(rows)} rows); "
          f"deviation monotone for {monotone}/{total} layer aggregates")
    plot_path = args.plot or os.path.splitext(args.out)[0] + ".png"
    _plot_sweep(rows, plot_path)
    print(f"figure written to {plot_path}")
    return 0


def cmd_seam_check(args) -> int:
    if args.graph:
        graph, weights = _load_net(args)
    else:
        graph, weights = nets.toy_graph(), nets.toy_weights()
    pixels = (load_image(args.image) if args.image
              else testimages.banded_shading(args.size, args.size, seed=args.seed))
    cfg = _cfg_from(args)

    run_graph = graph
    if args.allow_in:
        run_graph = NetworkGraph([LayerSpec(**l.to_json()) for l in graph.layers])
        for layer in run_graph.layers:
            if layer.kind == "norm" and layer.variant == "tin":
                layer.variant = "in"
            elif layer.kind == "norm" and layer.variant == "tiw":
                layer.variant = "iw"

    result = run_pipeline(pixels, None, run_graph, weights, cfg)
    whole = to_pixels(forward(run_graph, weights, to_tensor(pixels), result.bank, cfg.alpha))
    max_diff = int(np.abs(result.output.astype(np.int64) - whole.astype(np.int64)).max())

    # cross-patch gram scores for the thumbnail-conditioned and per-patch variants
    probe = next(l.name for l in graph.layers if l.kind == "relu" and l.name)
    fx = FeatureExtractor(graph, weights, probe)
    image_tensor = to_tensor(pixels)
    from .tiler import extract_patch
    scores = {}
    for label, g in (("tin", graph), ("in", run_graph if args.allow_in else None)):
        if g is None:
            swapped = NetworkGraph([LayerSpec(**l.to_json()) for l in graph.layers])
            for layer in swapped.layers:
                if layer.kind == "norm" and layer.variant == "tin":
                    layer.variant = "in"
            g = swapped
        sub = run_pipeline(pixels, None, g, weights,
                           PipelineConfig(thumb_short_side=cfg.thumb_short_side,
                                          k=cfg.k, s=cfg.s, allow_plain_norm=True))
        outs = [forward(g, weights, extract_patch(image_tensor, win), sub.bank, cfg.alpha)
                for win in sub.plan.windows]
        scores[label] = gram_consistency(outs, fx) if len(outs) >= 2 else 0.0
    ratio = scores["in"] / max(scores["tin"], 1e-12)

    print(f"max pixel difference, tiled vs whole: {max_diff}")
    print(f"gram consistency: per-patch-norm {scores['in']:.6f} / "
          f"thumbnail-norm {scores['tin']:.6f} = {ratio:.1f}x")
    if args.allow_in:
        print("warning: plain per-patch normalization requested; patch styles "
              "are expected to be inconsistent")
    if args.plan:
        plan_tiles(pixels.shape[1], pixels.shape[0], cfg.k, cfg.s).save(args.plan)
        print(f"tile plan written to {args.plan}")
    return 0


def _plot_mem(rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    res = [r["resolution"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for key in ("total", "patch_pass", "output_buffer"):
        ax.plot(res, [r[key] / 1e6 for r in rows], marker="o", label=key)
    ax.set_xlabel("content resolution (px per side)")
    ax.set_ylabel("MB")
    ax.set_title("estimated working set vs content resolution")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_mem_report(args) -> int:
    graph, weights = _load_net(args)
    cfg = _cfg_from(args)
    sizes = [int(s) for s in args.resolutions.split(",")]
    rows = []
    for size in sizes:
        rep = estimate_memory(graph, cfg, (size, size),
                              weights.nbytes if weights else 0, 0)
        row = {"resolution": size}
        row.update({name: val for name, val in rep.rows()})
        rows.append(row)
    fields = ["resolution"] + [name for name, _ in rows[0].items() if name != "resolution"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"memory table written to {args.out}")
    constant = len({r["patch_pass"] for r in rows}) == 1
    print(f"patch-stage estimate constant across resolutions: {constant}")
    plot_path = args.plot or os.path.splitext(args.out)[0] + ".png"
    _plot_mem(rows, plot_path)
    print(f"figure written to {plot_path}")
    return 0


def cmd_dump_features(args) -> int:
    graph, weights = _load_net(args)
    fx = FeatureExtractor(graph, weights, args.layer)
    feats = fx.features(to_tensor(load_image(args.image)))
    from .network import WeightStore, save_weights
    store = WeightStore()
    store.add(f"features/{args.layer}", feats.data)
    save_weights(store, args.out)
    print(f"features at {args.layer} {feats.dims} written to {args.out}")
    return 0


def cmd_demo_assets(args) -> int:
    os.makedirs(args.dir, exist_ok=True)
    toy = nets.toy_graph()
    ref = nets.reference_graph()
    toy.save(os.path.join(args.dir, "toy_graph.json"))
    ref.save(os.path.join(args.dir, "reference_graph.json"))
    nets.toy_weights().save(os.path.join(args.dir, "toy_weights.urstw"))
    nets.reference_weights().save(os.path.join(args.dir, "reference_weights.urstw"))
    save_image(os.path.join(args.dir, "content.png"),
               testimages.multi_octave(768, 1024, seed=5))
    save_image(os.path.join(args.dir, "style.png"),
               testimages.smooth_blobs(512, 512, seed=11))
    save_image(os.path.join(args.dir, "banded.png"),
               testimages.banded_shading(736, 736, seed=0))
    print(f"demo assets written to {args.dir}/")
    print("try:")
    print(f"  tinstitch stylize --content {args.dir}/content.png "
          f"--style {args.dir}/style.png --graph {args.dir}/reference_graph.json "
          f"--weights {args.dir}/reference_weights.urstw --out {args.dir}/out.png "
          f"--patch-size 256 --stride 192 --thumb 256")
    return 0


def _add_net_args(p, required=True):
    p.add_argument("--graph", required=required, help="network graph JSON")
    p.add_argument("--weights", default=None, help="weight container")


def _add_cfg_args(p):
    p.add_argument("--patch-size", type=int, default=1064, dest="patch_size")
    p.add_argument("--stride", type=int, default=1000)
    p.add_argument("--thumb", type=int, default=1024)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-in", action="store_true", dest="allow_in",
                   help="permit plain per-patch normalization (demonstrates "
                        "the style-inconsistency failure)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tinstitch",
                                 description="memory-bounded tiled stylization")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stylize", help="stylize an image patch-wise")
    p.add_argument("--content", required=True)
    p.add_argument("--style", default=None)
    p.add_argument("--out", required=True)
    _add_net_args(p)
    _add_cfg_args(p)
    p.add_argument("--metrics", default=None, help="write metrics JSON here")
    p.add_argument("--save-stats", default=None, dest="save_stats",
                   help="write the captured statistics bank here")
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("stats-sweep", help="feature statistics vs thumbnail scale")
    p.add_argument("--image", required=True)
    _add_net_args(p)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--scales", default=",".join(str(s) for s in DEFAULT_SCALES))
    p.add_argument("--plot", default=None, help="figure path (default: CSV stem + .png)")
    p.set_defaults(func=cmd_stats_sweep)

    p = sub.add_parser("seam-check", help="whole-image vs tiled comparison")
    p.add_argument("--image", default=None, help="content image (default: synthesized)")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    _add_net_args(p, required=False)
    _add_cfg_args(p)
    p.set_defaults(patch_size=96, stride=64, thumb=128)
    p.add_argument("--plan", default=None, help="dump the tile plan JSON here")
    p.set_defaults(func=cmd_seam_check)

    p = sub.add_parser("mem-report", help="analytic memory estimates per resolution")
    _add_net_args(p)
    _add_cfg_args(p)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--resolutions",
                   default=",".join(str(s) for s in range(1000, 10001, 1000)))
    p.add_argument("--plot", default=None)
    p.set_defaults(func=cmd_mem_report)

    p = sub.add_parser("dump-features", help="save encoder features at a probe layer")
    p.add_argument("--image", required=True)
    _add_net_args(p)
    p.add_argument("--layer", default="relu4_1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_features)

    p = sub.add_parser("demo-assets", help="write bundled graphs, weights, and images")
    p.add_argument("--dir", default="demo")
    p.set_defaults(func=cmd_demo_assets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StyleConsistencyHazard as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
