"""Language-model contract and the built-in add-alpha n-gram model.

A model exposes a :class:`VocabMap` and ``next_logits(prefix)``, returning
unnormalized log probabilities over the whole vocabulary for the token that
follows ``prefix``.  Anything satisfying :class:`LanguageModel` can be
decoded, including remote models reached through :mod:`specdecode.bridge`.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

from .corpus import SentenceRecord, tokenize
from .errors import EmptyCorpus, FormatError, InputError, SizeMismatch
from .vocab import VocabMap

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
NGRAM_FORMAT = "specdecode-ngram"


@dataclass(frozen=True)
class LogitVector:
    """One decoding step's scores over the vocabulary.

    Values may be ``-inf`` (banned tokens) but never NaN or ``+inf``.
    """

    values: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise SizeMismatch("logits must be a 1-D vector")
        if np.isnan(v).any() or np.isposinf(v).any():
            raise InputError("logits contain NaN or +inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@runtime_checkable
class LanguageModel(Protocol):
    vocab: VocabMap

    def next_logits(self, prefix: Sequence[int]) -> LogitVector: ...

    def encode(self, text: str) -> list[int]: ...


def encode_words(vocab: VocabMap, text: str, unk: int | None = None) -> list[int]:
    """Map each normalized word of ``text`` to the lowest matching token id."""
    index = vocab.word_index()
    ids = []
    for w in tokenize(text):
        if w in index:
            ids.append(index[w])
        elif unk is not None:
            ids.append(unk)
        else:
            raise InputError(f"word {w!r} is not in the model vocabulary")
    return ids


class FunctionModel:
    """Wrap a plain ``prefix -> array`` callable as a language model."""

    def __init__(self, vocab: VocabMap, fn: Callable[[tuple[int, ...]], Sequence[float]]):
        self.vocab = vocab
        self._fn = fn

    def next_logits(self, prefix: Sequence[int]) -> LogitVector:
        prefix = tuple(prefix)
        self.vocab.check_ids(prefix)
        values = np.asarray(self._fn(prefix), dtype=np.float64)
        if len(values) != len(self.vocab):
            raise SizeMismatch(f"model returned {len(values)} logits for vocabulary of {len(self.vocab)}")
        if not np.all(np.isfinite(values)):
            raise InputError("model logits must be finite")
        return LogitVector(values, len(prefix))

    def encode(self, text: str) -> list[int]:
        return encode_words(self.vocab, text)


class NGramModel:
    """Add-alpha smoothed n-gram model over a closed word vocabulary.

    ``p(w | ctx) = (count(ctx, w) + alpha) / (count(ctx) + alpha * V)`` where
    ``V`` counts every vocabulary entry, markers included.  Contexts are
    left-padded with ``<s>``.
    """

    def __init__(self, vocab: VocabMap, order: int, alpha: float,
                 ngrams: dict[tuple[int, ...], dict[int, int]]):
        if order < 1:
            raise InputError(f"order must be >= 1, got {order}")
        if not alpha > 0:
            raise InputError(f"alpha must be positive, got {alpha}")
        self.vocab = vocab
        self.order = order
        self.alpha = float(alpha)
        self.bos = vocab.id_to_surface.index(BOS)
        self.unk = vocab.id_to_surface.index(UNK) if UNK in vocab.id_to_surface else None
        self._rows: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray, int]] = {}
        for ctx, nxt in ngrams.items():
            ids = np.array(sorted(nxt), dtype=np.int64)
            cnt = np.array([nxt[i] for i in ids], dtype=np.float64)
            self._rows[tuple(ctx)] = (ids, cnt, int(cnt.sum()))

    def context_of(self, prefix: Sequence[int]) -> tuple[int, ...]:
        if self.order == 1:
            return ()
        hist = (self.bos,) * (self.order - 1) + tuple(prefix)
        return hist[len(hist) - (self.order - 1):]

    def count(self, context: Sequence[int], token: int) -> int:
        row = self._rows.get(tuple(context))
        if row is None:
            return 0
        ids, cnt, _ = row
        j = np.searchsorted(ids, token)
        return int(cnt[j]) if j < len(ids) and ids[j] == token else 0

    def context_total(self, context: Sequence[int]) -> int:
        row = self._rows.get(tuple(context))
        return 0 if row is None else row[2]

    def next_logits(self, prefix: Sequence[int]) -> LogitVector:
        prefix = tuple(prefix)
        self.vocab.check_ids(prefix)
        v = len(self.vocab)
        row = np.full(v, self.alpha)
        total = 0
        hit = self._rows.get(self.context_of(prefix))
        if hit is not None:
            ids, cnt, total = hit
            row[ids] += cnt
        return LogitVector(np.log(row) - math.log(total + self.alpha * v), len(prefix))

    def encode(self, text: str) -> list[int]:
        return encode_words(self.vocab, text, unk=self.unk)

    # -- persistence

    def to_json(self) -> dict:
        ngrams = []
        for ctx in sorted(self._rows):
            ids, cnt, _ = self._rows[ctx]
            ngrams.extend([*ctx, int(i), int(c)] for i, c in zip(ids, cnt))
        return {
            "format": NGRAM_FORMAT, "version": 1, "order": self.order, "alpha": self.alpha,
            "vocab": list(self.vocab.id_to_surface), "ngrams": ngrams,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NGramModel":
        if obj.get("format") != NGRAM_FORMAT or obj.get("version") != 1:
            raise FormatError(f"not a {NGRAM_FORMAT} v1 model file")
        order = int(obj["order"])
        ngrams: dict[tuple[int, ...], dict[int, int]] = defaultdict(dict)
        for rec in obj["ngrams"]:
            if len(rec) != order + 1:
                raise FormatError(f"n-gram record {rec} does not match order {order}")
            *ctx, nxt, c = rec
            ngrams[tuple(ctx)][nxt] = c
        return cls(VocabMap(tuple(obj["vocab"])), order, obj["alpha"], dict(ngrams))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, separators=(",", ":")) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError(f"{path}: no such file") from None
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: malformed JSON ({e})") from None
        return cls.from_json(obj)


def train_ngram(sentences: Iterable[SentenceRecord], order: int = 3, alpha: float = 0.01) -> NGramModel:
    if order < 1:
        raise InputError(f"order must be >= 1, got {order}")
    sents = [s.tokens for s in sentences]
    if not sents:
        raise EmptyCorpus("cannot train on an empty corpus")
    words = sorted({t for s in sents for t in s} - {BOS, EOS, UNK})
    vocab = VocabMap((BOS, EOS, UNK, *words))
    index = {w: i for i, w in enumerate(vocab.id_to_surface)}
    bos, eos = index[BOS], index[EOS]
    grams: Counter[tuple[int, ...]] = Counter()
    for s in sents:
        seq = [bos] * (order - 1) + [index[t] for t in s] + [eos]
        for j in range(order - 1, len(seq)):
            grams[tuple(seq[j - order + 1:j + 1])] += 1
    ngrams: dict[tuple[int, ...], dict[int, int]] = defaultdict(dict)
    for g, c in grams.items():
        ngrams[g[:-1]][g[-1]] = c
    return NGramModel(vocab, order, alpha, dict(ngrams))
