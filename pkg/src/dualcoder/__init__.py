"""Version-agnostic clinical code assignment.

Two text encoders share one embedding table: one reads the note, one
reads each code's registry description. A label-wise attention head
matches them without any per-code parameters, so the same trained model
scores any code registry, including versions it never saw in training.
"""

from .attention import DualCoder, ModelConfig, predict_matrix
from .batching import Batch, LabelSpace, build_label_space, count_epoch_batches, epoch_batches
from .corpus import (
    CodeEntry,
    CorpusSchema,
    Document,
    compute_strata,
    load_corpus,
    load_registry,
    save_corpus,
)
from .encoders import EncoderConfig, SequenceEncoder
from .errors import ConfigError, DataError, DualcoderError, NumericalError
from .metrics import EvalReport, evaluate, evaluate_matrix
from .presets import preset
from .synth import SynthConfig, generate, mixing_experiment
from .textproc import SgnsConfig, Vocabulary, build_vocab, pretrain_embeddings, tokenize
from .training import TrainConfig, TrainResult, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "CodeEntry",
    "ConfigError",
    "CorpusSchema",
    "DataError",
    "Document",
    "DualCoder",
    "DualcoderError",
    "EncoderConfig",
    "EvalReport",
    "LabelSpace",
    "ModelConfig",
    "NumericalError",
    "SequenceEncoder",
    "SgnsConfig",
    "SynthConfig",
    "TrainConfig",
    "TrainResult",
    "Vocabulary",
    "build_label_space",
    "build_vocab",
    "compute_strata",
    "count_epoch_batches",
    "epoch_batches",
    "evaluate",
    "evaluate_matrix",
    "generate",
    "load_checkpoint",
    "load_corpus",
    "load_registry",
    "mixing_experiment",
    "predict_matrix",
    "preset",
    "pretrain_embeddings",
    "save_checkpoint",
    "save_corpus",
    "tokenize",
    "train",
    "__version__",
]
