"""Specificity-increasing logit reweighting for language-model decoding."""

from .bias import BiasTable, NiwfParams, inspect_bias, niwf_bias, ppmi_bias
from .corpus import (CooccurrenceStats, CountTable, SentenceRecord, build_cooccurrence, build_counts,
                     normalize, segment)
from .decode import GenerationConfig, Hypothesis, beam_search, generate_batch, reweight, topk_sample
from .lm import LanguageModel, LogitVector, NGramModel, train_ngram
from .metrics import dist_n, ent_n, score_condition
from .vocab import VocabMap

__all__ = [
    "BiasTable", "NiwfParams", "inspect_bias", "niwf_bias", "ppmi_bias",
    "CooccurrenceStats", "CountTable", "SentenceRecord", "build_cooccurrence", "build_counts", "normalize", "segment",
    "GenerationConfig", "Hypothesis", "beam_search", "generate_batch", "reweight", "topk_sample",
    "LanguageModel", "LogitVector", "NGramModel", "train_ngram",
    "dist_n", "ent_n", "score_condition", "VocabMap",
]

__version__ = "0.1.0"
