"""Multimodal decoding of interleaved text and number sequences.

A desk-scale encoder-decoder transformer whose number positions carry
continuous values: scaled-embedding (xVal-style) or MLP number encoders
on the way in, a routing layer choosing between a text head and a
scalar number head on the way out. Ships with its own float64 autodiff
engine, a deterministic arithmetic/algebra question generator, a
training loop with exact-resume checkpoints, and the regression /
modality-F1 metric suite.
"""

__version__ = "0.1.0"

from .tensor import Tensor, backward, no_grad
from .encoding import (
    Modality,
    MixedSequence,
    NumberScheme,
    Vocab,
    extract_numbers,
    slog,
    sinv,
    encode_example,
    build_vocab,
)
from .datagen import Example, GenSpec, generate_corpus, read_jsonl, write_jsonl
from .model import ModelConfig, ModelOutput, init_params, forward, generate, count_params
from .training import TrainConfig, Checkpoint, composite_loss, fit, save_checkpoint, load_checkpoint
from .evaluation import MetricsReport, regression_metrics, modality_f1, evaluate, scatter_export

__all__ = [
    "__version__",
    "Tensor",
    "backward",
    "no_grad",
    "Modality",
    "MixedSequence",
    "NumberScheme",
    "Vocab",
    "extract_numbers",
    "slog",
    "sinv",
    "encode_example",
    "build_vocab",
    "Example",
    "GenSpec",
    "generate_corpus",
    "read_jsonl",
    "write_jsonl",
    "ModelConfig",
    "ModelOutput",
    "init_params",
    "forward",
    "generate",
    "count_params",
    "TrainConfig",
    "Checkpoint",
    "composite_loss",
    "fit",
    "save_checkpoint",
    "load_checkpoint",
    "MetricsReport",
    "regression_metrics",
    "modality_f1",
    "evaluate",
    "scatter_export",
]
