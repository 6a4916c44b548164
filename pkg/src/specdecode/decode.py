"""Reweighted decoding: beam search, top-k sampling and batched generation.

Every step goes through :func:`reweight`, which adds the bias table to the
model's logits, divides by the temperature and masks banned tokens, in that
order.  Hypothesis scores are sums of per-step ``log_softmax`` values of the
reweighted logits, so a reweighted model is a properly normalized model.

Ties are always broken toward the lower token id.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .bias import BiasTable, log_softmax
from .errors import ExhaustedVocabulary, InputError, SizeMismatch
from .lm import LanguageModel, LogitVector

MODES = ("beam", "topk")
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class GenerationConfig:
    mode: str = "beam"
    beam_width: int = 5
    k: int = 50
    temperature: float = 1.0
    max_new_tokens: int = 10
    seed: int = 0
    banned_first_tokens: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.beam_width < 1:
            raise InputError("beam_width must be >= 1")
        if self.k < 1:
            raise InputError("k must be >= 1")
        if not self.temperature > 0:
            raise InputError("temperature must be > 0")
        if self.max_new_tokens < 1:
            raise InputError("max_new_tokens must be >= 1")
        object.__setattr__(self, "banned_first_tokens", frozenset(int(t) for t in self.banned_first_tokens))

    def check_vocab(self, vocab_size: int) -> None:
        if self.mode == "topk" and self.k > vocab_size:
            raise InputError(f"top-k needs k <= vocabulary size ({self.k} > {vocab_size})")


@dataclass(frozen=True)
class Hypothesis:
    token_ids: tuple[int, ...]
    score: float
    step_scores: tuple[float, ...] = ()
    seed: int | None = None


def reweight(logits: LogitVector | np.ndarray, bias: BiasTable | np.ndarray | None = None,
             temperature: float = 1.0, ban: Sequence[int] | frozenset[int] = ()) -> LogitVector:
    a = np.asarray(getattr(logits, "values", logits), dtype=np.float64)
    step = getattr(logits, "step_index", 0)
    if bias is not None:
        b = bias.biases if isinstance(bias, BiasTable) else np.asarray(bias, dtype=np.float64)
        if len(b) != len(a):
            raise SizeMismatch(f"{len(a)} logits vs {len(b)} biases")
        a = a + b
    if temperature != 1.0:
        a = a / temperature
    if ban:
        a = a.copy()
        a[sorted(ban)] = -np.inf
    return LogitVector(a, step)


def _adjusted(model: LanguageModel, prefix: tuple[int, ...], bias, config: GenerationConfig,
              first: bool) -> np.ndarray:
    ban = config.banned_first_tokens if first else ()
    return reweight(model.next_logits(prefix), bias, config.temperature, ban).values


def _check(model: LanguageModel, prompt: Sequence[int], bias, config: GenerationConfig) -> tuple[int, ...]:
    prompt = tuple(int(i) for i in prompt)
    model.vocab.check_ids(prompt)
    if bias is not None and len(bias) != len(model.vocab):
        raise SizeMismatch(f"bias table has {len(bias)} entries, vocabulary {len(model.vocab)}")
    config.check_vocab(len(model.vocab))
    return prompt


def score_sequence(model: LanguageModel, prompt: Sequence[int], token_ids: Sequence[int],
                   bias=None, config: GenerationConfig = GenerationConfig()) -> float:
    """Recompute a hypothesis score from its token sequence."""
    prompt = tuple(prompt)
    total = 0.0
    for i, t in enumerate(token_ids):
        lp = log_softmax(_adjusted(model, prompt + tuple(token_ids[:i]), bias, config, i == 0))
        total += lp[t]
    return total


def greedy_decode(model: LanguageModel, prompt: Sequence[int], bias=None,
                  config: GenerationConfig = GenerationConfig()) -> Hypothesis:
    prompt = _check(model, prompt, bias, config)
    seq: list[int] = []
    steps = []
    for i in range(config.max_new_tokens):
        adj = _adjusted(model, prompt + tuple(seq), bias, config, i == 0)
        if not np.isfinite(adj).any():
            raise ExhaustedVocabulary("every token is banned at this step")
        t = int(np.argmax(adj))
        steps.append(float(log_softmax(adj)[t]))
        seq.append(t)
    return Hypothesis(tuple(seq), float(sum(steps)), tuple(steps), config.seed)


def beam_search(model: LanguageModel, prompt: Sequence[int], bias=None,
                config: GenerationConfig = GenerationConfig()) -> list[Hypothesis]:
    """Fixed-length beam search; returns the final beams, best first.

    No length normalization and no early stopping: every hypothesis has
    exactly ``max_new_tokens`` tokens.
    """
    prompt = _check(model, prompt, bias, config)
    seqs: list[tuple[int, ...]] = [()]
    scores = np.zeros(1)
    steps: list[tuple[float, ...]] = [()]
    v = len(model.vocab)
    for i in range(config.max_new_tokens):
        logp = np.stack([log_softmax(_adjusted(model, prompt + s, bias, config, i == 0)) for s in seqs])
        total = (scores[:, None] + logp).ravel()
        hyp = np.repeat(np.arange(len(seqs)), v)
        tok = np.tile(np.arange(v), len(seqs))
        lex = np.empty(len(seqs), dtype=np.int64)
        lex[sorted(range(len(seqs)), key=seqs.__getitem__)] = np.arange(len(seqs))
        order = np.lexsort((lex[hyp], tok, -total))
        order = order[np.isfinite(total[order])][:config.beam_width]
        if len(order) == 0:
            raise ExhaustedVocabulary("no unbanned continuation available")
        seqs = [seqs[hyp[j]] + (int(tok[j]),) for j in order]
        steps = [steps[hyp[j]] + (float(logp[hyp[j], tok[j]]),) for j in order]
        scores = total[order]
    ranked = sorted(zip(seqs, scores.tolist(), steps), key=lambda x: (-x[1], x[0]))
    return [Hypothesis(s, sc, st, config.seed) for s, sc, st in ranked]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _U64))


def topk_survivors(adjusted: np.ndarray, k: int) -> np.ndarray:
    """Ids of the ``k`` highest scores (lower id first on ties), banned ids dropped."""
    order = np.argsort(-adjusted, kind="stable")[:k]
    return order[np.isfinite(adjusted[order])]


def sample_step(adjusted: np.ndarray, k: int, rng: np.random.Generator) -> int:
    ids = topk_survivors(adjusted, k)
    if len(ids) == 0:
        raise ExhaustedVocabulary("every top-k candidate is banned")
    vals = adjusted[ids]
    p = np.exp(vals - vals.max())
    cdf = np.cumsum(p / p.sum())
    j = int(np.searchsorted(cdf, rng.random(), side="right"))
    return int(ids[min(j, len(ids) - 1)])


def topk_sample(model: LanguageModel, prompt: Sequence[int], bias=None,
                config: GenerationConfig = GenerationConfig(mode="topk")) -> Hypothesis:
    prompt = _check(model, prompt, bias, config)
    rng = make_rng(config.seed)
    seq: list[int] = []
    steps = []
    for i in range(config.max_new_tokens):
        adj = _adjusted(model, prompt + tuple(seq), bias, config, i == 0)
        t = sample_step(adj, config.k, rng)
        steps.append(float(log_softmax(adj)[t]))
        seq.append(t)
    return Hypothesis(tuple(seq), float(sum(steps)), tuple(steps), config.seed)


def batch_seed(seed: int, index: int) -> int:
    return (int(seed) + index) & _U64


def generate(model: LanguageModel, prompt: Sequence[int], bias=None,
             config: GenerationConfig = GenerationConfig()) -> Hypothesis:
    """One output: the top beam in beam mode, one sample in top-k mode."""
    if config.mode == "beam":
        return beam_search(model, prompt, bias, config)[0]
    return topk_sample(model, prompt, bias, config)


def generate_batch(model: LanguageModel, prompt: Sequence[int], bias=None,
                   config: GenerationConfig = GenerationConfig(), m: int = 5) -> list[Hypothesis]:
    """Generate ``m`` outputs whose first generated tokens are pairwise distinct.

    Output ``i`` is an ordinary single generation with seed
    ``batch_seed(config.seed, i)`` and every earlier output's first token
    added to ``banned_first_tokens``.
    """
    if m < 1:
        raise InputError("m must be >= 1")
    if m > len(model.vocab):
        raise ExhaustedVocabulary(f"cannot draw {m} distinct first tokens from {len(model.vocab)}")
    bans = set(config.banned_first_tokens)
    out = []
    for i in range(m):
        cfg = replace(config, seed=batch_seed(config.seed, i), banned_first_tokens=frozenset(bans))
        h = generate(model, prompt, bias, cfg)
        out.append(h)
        bans.add(h.token_ids[0])
    return out
