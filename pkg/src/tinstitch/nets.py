"""Bundled reference networks.

Two graphs ship with the package as JSON data:

* ``toy``: four 3x3 convs around a thumbnail-conditioned norm layer
  (receptive radius 4).  Small enough that whole-image oracle runs are
  cheap, so the equivalence and consistency tests use it.
* ``reference``: a slim encoder / feature-transfer / mirrored-decoder
  stylization network.  One conv block per downsampling stage, probe-named
  relu layers at the four encoder depths, nearest upsampling and reflection
  padding in the decoder.  Real weights come from the exporter; the seeded
  generator below provides deterministic stand-ins so everything here runs
  self-contained.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .network import NetworkGraph, WeightStore
from .tensor import DT

PROBE_LAYERS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1")


def _load_bundled(name: str) -> NetworkGraph:
    ref = resources.files("tinstitch.data").joinpath(name)
    with resources.as_file(ref) as path:
        return NetworkGraph.load(path)


def toy_graph() -> NetworkGraph:
    return _load_bundled("toy_graph.json")


def reference_graph() -> NetworkGraph:
    return _load_bundled("reference_graph.json")


def _he_kernel(rng, out_ch, in_ch, k, gain=1.0):
    std = gain * np.sqrt(2.0 / (in_ch * k * k))
    return rng.normal(0.0, std, size=(out_ch, in_ch, k, k)).astype(DT)


def seeded_weights(graph: NetworkGraph, seed: int) -> WeightStore:
    """Deterministic weights for any bundled graph.

    Kernels are variance-scaled for stable activations through relu stacks;
    the final conv is nudged toward mid-gray output so stylized images stay
    in a useful range.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    store = WeightStore()
    conv_ids = [i for i, l in enumerate(graph.layers) if l.kind == "conv"]
    last_conv = conv_ids[-1] if conv_ids else -1
    for i, layer in enumerate(graph.layers):
        if layer.kind == "conv":
            kernel = _he_kernel(rng, layer.out_channels, layer.in_channels, layer.kernel)
            bias = rng.normal(0.0, 0.02, size=layer.out_channels).astype(DT)
            if i == last_conv:
                kernel *= DT(0.6)
                bias = np.full(layer.out_channels, 0.45, dtype=DT)
            store.add(f"{layer.weight}/kernel", kernel)
            store.add(f"{layer.weight}/bias", bias)
        elif layer.kind == "norm" and layer.affine:
            ch = graph.channels_at(i)
            gamma = rng.uniform(0.8, 1.2, size=ch).astype(DT)
            beta = rng.uniform(-0.15, 0.15, size=ch).astype(DT)
            store.add(f"{layer.weight}/gamma", gamma)
            store.add(f"{layer.weight}/beta", beta)
    return store


def toy_weights(seed: int = 7) -> WeightStore:
    """Fixed initialization for the toy network.

    Encoder convs are plain variance-scaled draws.  The first decoder conv
    is scale-sensitive on purpose: its kernels are centered to zero sum
    (blind to constant offsets) and its biases are drawn negative, acting
    as activation thresholds.  Trained stylization decoders respond to the
    absolute scale of their inputs the same way, and the cross-patch
    consistency diagnostics rely on that behavior; a bias-free random
    stack would be positively homogeneous and scale-blind.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    store = WeightStore()
    store.add("enc1/kernel", _he_kernel(rng, 8, 3, 3))
    store.add("enc1/bias", rng.normal(0.0, 0.02, 8).astype(DT))
    store.add("enc2/kernel", _he_kernel(rng, 8, 8, 3))
    store.add("enc2/bias", rng.normal(0.0, 0.02, 8).astype(DT))
    store.add("norm1/gamma", rng.uniform(0.8, 1.2, 8).astype(DT))
    store.add("norm1/beta", rng.uniform(-0.1, 0.1, 8).astype(DT))
    k1 = _he_kernel(rng, 8, 8, 3)
    k1 -= k1.mean(axis=(1, 2, 3), keepdims=True)
    store.add("dec1/kernel", k1)
    store.add("dec1/bias", (-rng.uniform(0.4, 0.75, 8)).astype(DT))
    store.add("dec2/kernel", _he_kernel(rng, 3, 8, 3, gain=0.6))
    store.add("dec2/bias", np.full(3, 0.45, dtype=DT))
    return store


def reference_weights(seed: int = 0) -> WeightStore:
    return seeded_weights(reference_graph(), seed)
