"""tinstitch: memory-bounded tiled stylization with thumbnail-captured
normalization statistics."""

from .memtrack import MemoryTracker
from .normstats import (
    AdainStats,
    AffineParams,
    ChannelStats,
    StatsBank,
    StatsError,
    WhiteningStats,
    adain_transfer,
    blend_style,
    channel_stats,
    instance_norm,
    instance_whiten,
    thumbnail_instance_norm,
    thumbnail_instance_whiten,
    whitening_stats,
)
from .network import (
    LayerSpec,
    NetworkGraph,
    WeightFormatError,
    WeightStore,
    forward,
    load_stats_bank,
    load_weights,
    receptive_field,
    save_stats_bank,
    save_weights,
)
from .pipeline import (
    MemoryReport,
    PipelineConfig,
    estimate_memory,
    run_pipeline,
    stats_sweep,
    stylize,
)
from .tensor import (
    ConfigError,
    ConvWeights,
    PadSpec,
    ShapeError,
    Tensor,
    conv2d,
    maxpool2,
    pad,
    relu,
    resize_bilinear,
    resize_nearest,
)
from .tiler import Rect, TilePlan, assemble, extract_patch, plan_tiles

__version__ = "0.1.0"

__all__ = [
    "AdainStats", "AffineParams", "ChannelStats", "ConfigError", "ConvWeights",
    "LayerSpec", "MemoryReport", "MemoryTracker", "NetworkGraph", "PadSpec",
    "PipelineConfig", "Rect", "ShapeError", "StatsBank", "StatsError", "Tensor",
    "TilePlan", "WeightFormatError", "WeightStore", "WhiteningStats",
    "adain_transfer", "assemble", "blend_style", "channel_stats", "conv2d",
    "estimate_memory", "extract_patch", "forward", "instance_norm",
    "instance_whiten", "load_stats_bank", "load_weights", "maxpool2", "pad",
    "plan_tiles", "receptive_field", "relu", "resize_bilinear", "resize_nearest",
    "run_pipeline", "save_stats_bank", "save_weights", "stats_sweep", "stylize",
    "thumbnail_instance_norm", "thumbnail_instance_whiten", "whitening_stats",
]
