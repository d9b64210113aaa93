"""Continuous semantic augmentation for toy sequence translation.

Thin re-export of the native module: corpus synthesis, the two training
phases, translation, scoring, and the sampling primitives.
"""

from ._core import (
    BOS,
    EOS,
    PAD,
    UNK,
    ConfigError,
    DimError,
    NumericError,
    ParseError,
    PreconditionError,
    SemanticEncoder,
    Translator,
    Vocab,
    adjacency_samples,
    bleu,
    bleu_text,
    evaluate,
    interpolate_negative,
    perturb,
    pretrain_semantic,
    synth,
    train_baseline,
    train_translator,
    ttr,
)

__all__ = [
    "BOS",
    "EOS",
    "PAD",
    "UNK",
    "ConfigError",
    "DimError",
    "NumericError",
    "ParseError",
    "PreconditionError",
    "SemanticEncoder",
    "Translator",
    "Vocab",
    "adjacency_samples",
    "bleu",
    "bleu_text",
    "evaluate",
    "interpolate_negative",
    "perturb",
    "pretrain_semantic",
    "synth",
    "train_baseline",
    "train_translator",
    "ttr",
]
