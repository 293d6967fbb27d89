"""genoseq: DNA tokenization and positional-encoding comparison toolkit.

Implements fixed-length k-mer and learned BPE tokenizers, three positional
schemes (sinusoidal, ALiBi, RoPE) inside a from-scratch Transformer encoder
classifier with its own gradient engine, plus a resumable grid-experiment
runner with MCC-based robustness evaluation.
"""

__version__ = "0.1.0"

from .corpus import (
    EndSubstitution,
    HeadDeleteTailFill,
    Original,
    PerturbationKind,
    TaskDataset,
    load_task,
    load_task_csv,
    perturb,
    validate_against_registry,
)
from .positional import (
    ALiBi,
    PositionalScheme,
    Rotary,
    Sinusoidal,
    alibi_bias,
    default_alibi_slopes,
    rope_rotate,
    sinusoid_table,
)
from .tokenizers import (
    BpeTokenizer,
    KmerTokenizer,
    Vocabulary,
    bpe_encode,
    bpe_train,
    encode_ids,
    kmer_tokenize,
    kmer_vocabulary,
    load_vocabulary,
    save_vocabulary,
)
from .model import ModelConfig, count_parameters, forward, init_params, loss_and_gradients
from .training import adamw_step, confusion_matrix, evaluate, lr_at, mcc, train
from .classifier import TransformerSequenceClassifier
from .synthetic import make_motif_task, write_task_dir
from .experiment import GridConfig, run_grid, report

__all__ = [
    "ALiBi",
    "BpeTokenizer",
    "EndSubstitution",
    "GridConfig",
    "HeadDeleteTailFill",
    "KmerTokenizer",
    "ModelConfig",
    "Original",
    "PerturbationKind",
    "PositionalScheme",
    "Rotary",
    "Sinusoidal",
    "TaskDataset",
    "TransformerSequenceClassifier",
    "Vocabulary",
    "adamw_step",
    "alibi_bias",
    "bpe_encode",
    "bpe_train",
    "confusion_matrix",
    "count_parameters",
    "default_alibi_slopes",
    "encode_ids",
    "evaluate",
    "forward",
    "init_params",
    "kmer_tokenize",
    "kmer_vocabulary",
    "load_task",
    "load_task_csv",
    "load_vocabulary",
    "loss_and_gradients",
    "lr_at",
    "make_motif_task",
    "mcc",
    "perturb",
    "report",
    "rope_rotate",
    "run_grid",
    "save_vocabulary",
    "sinusoid_table",
    "train",
    "validate_against_registry",
    "write_task_dir",
]
