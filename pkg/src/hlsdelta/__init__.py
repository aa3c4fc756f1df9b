"""Differential QoR prediction for paired HLS kernel/design graphs."""

from .graphs import (
    TARGET_RANGES,
    TARGETS,
    CdfgGraph,
    DataError,
    DatasetManifest,
    GraphBatch,
    NodeAttr,
    PairedSample,
    SplitAssignment,
    batch_graphs,
    load_dataset,
    save_dataset,
    split_design_level,
    validate_ranges,
)
from .embeddings import EmbeddingTable, load_embeddings, save_embeddings
from .metrics import HeadMetrics, MetricsReport, compute_metrics
from .model import (
    BaselineDeltaModel,
    ForwardOutputs,
    ModelConfig,
    TargetNormalizer,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .synth import (
    PragmaSpec,
    SynthConfig,
    differential_advantage_experiment,
    generate,
    surrogate_embedding,
)
from .training import Adam, PlateauScheduler, TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"
