"""Additive per-token biases from corpus statistics.

Two schemes turn corpus counts into a dense bias vector over a model
vocabulary:

NIWF
    ``b = min(max(w0, n_star / (k * n_t)), w1)``.  Rare words get up to
    ``w1``; the most frequent word gets ``1 / k``.
PPMI
    ``b = max(0, ln(p(c, t) / (p(c) p(t))))`` estimated from sentence
    counts, where ``c`` is a context word set.

Vocabulary tokens are matched to corpus words through
:func:`specdecode.corpus.normalize`.  Tokens with no corpus match count as
maximally rare for NIWF (``w1``) and as unassociated for PPMI (``0``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import SENTENCE, CooccurrenceStats, CountTable, normalize
from .errors import EmptyCorpus, FormatError, InputError, MismatchedCorpus, SizeMismatch
from .vocab import VocabMap

BIAS_FORMAT = "specdecode-bias"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NiwfParams:
    k: float = 100.0
    w0: float = math.exp(-5)
    w1: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise InputError(f"k must be positive, got {self.k}")
        if not self.w0 <= self.w1:
            raise InputError(f"need w0 <= w1, got w0={self.w0} w1={self.w1}")


@dataclass(frozen=True)
class BiasTable:
    biases: np.ndarray
    surfaces: tuple[str, ...]
    provenance: dict = field(default_factory=lambda: {"scheme": "none"})

    def __post_init__(self):
        b = np.array(self.biases, dtype=np.float64)
        b.setflags(write=False)
        object.__setattr__(self, "biases", b)
        if b.ndim != 1 or len(b) != len(self.surfaces):
            raise SizeMismatch(f"{len(b)} biases for {len(self.surfaces)} vocabulary entries")
        if not np.all(np.isfinite(b)):
            raise InputError("bias values must be finite")
        scheme = self.scheme
        if scheme == "niwf":
            lo, hi = self.provenance["w0"], self.provenance["w1"]
            if len(b) and (b.min() < lo or b.max() > hi):
                raise InputError("NIWF bias outside [w0, w1]")
        elif scheme == "ppmi" and len(b) and b.min() < 0:
            raise InputError("PPMI bias must be non-negative")

    @property
    def scheme(self) -> str:
        return self.provenance.get("scheme", "none")

    def __len__(self) -> int:
        return len(self.biases)

    @classmethod
    def zeros(cls, vocab: VocabMap) -> "BiasTable":
        return cls(np.zeros(len(vocab)), vocab.id_to_surface, {"scheme": "none"})


def _excluded(exclude: Iterable[str]) -> frozenset[str]:
    return frozenset(t for t in map(normalize, exclude) if t is not None)


def niwf_value(n_t: int, n_star: int, params: NiwfParams = NiwfParams()) -> float:
    if n_t <= 0:
        return params.w1
    return min(max(params.w0, n_star / (params.k * n_t)), params.w1)


def niwf_bias(table: CountTable, vocab: VocabMap, params: NiwfParams = NiwfParams(),
              exclude: Iterable[str] = ()) -> BiasTable:
    """NIWF bias for every vocabulary token.

    Tokens whose normalized surface is listed in ``exclude`` get ``w0``,
    the smallest boost any token can receive.
    """
    if table.n_star == 0:
        raise EmptyCorpus("count table is empty (n_star = 0)")
    skip = _excluded(exclude)
    n = np.array([table.get(t) if t is not None else 0 for t in vocab.normalized], dtype=np.float64)
    b = np.full(len(n), params.w1)
    seen = n > 0
    b[seen] = np.minimum(np.maximum(params.w0, table.n_star / (params.k * n[seen])), params.w1)
    for i, t in enumerate(vocab.normalized):
        if t in skip:
            b[i] = params.w0
    prov = {
        "scheme": "niwf", "k": params.k, "w0": params.w0, "w1": params.w1,
        "count_mode": table.mode, "n_star": table.n_star, "exclude": sorted(skip),
    }
    return BiasTable(b, vocab.id_to_surface, prov)


def ppmi_value(n_ct: int, n_c: int, n_t: int, n_s: int) -> float:
    if n_ct == 0 or n_c == 0 or n_t == 0:
        return 0.0
    p_ct, p_c, p_t = n_ct / n_s, n_c / n_s, n_t / n_s
    return max(0.0, math.log(p_ct / (p_c * p_t)))


def ppmi_bias(counts: CountTable, cooc: CooccurrenceStats, vocab: VocabMap,
              exclude: Iterable[str] = ()) -> BiasTable:
    if counts.mode != SENTENCE:
        raise MismatchedCorpus(f"PPMI needs sentence-occurrence counts, got {counts.mode}")
    if counts.n_sentences != cooc.n_sentences:
        raise MismatchedCorpus(
            f"count table has {counts.n_sentences} sentences, co-occurrence stats {cooc.n_sentences}")
    if counts.n_sentences == 0:
        raise EmptyCorpus("corpus has no sentences")
    skip = _excluded(exclude)
    b = np.zeros(len(vocab))
    for i, t in enumerate(vocab.normalized):
        if t is None or t in skip:
            continue
        b[i] = ppmi_value(cooc.get(t), cooc.n_context, counts.get(t), counts.n_sentences)
    prov = {
        "scheme": "ppmi", "context": sorted(cooc.context), "n_context": cooc.n_context,
        "n_sentences": cooc.n_sentences, "exclude": sorted(skip),
    }
    return BiasTable(b, vocab.id_to_surface, prov)


# -- inspection --------------------------------------------------------------

@dataclass(frozen=True)
class InspectRow:
    token_id: int
    token: str
    logit: float
    bias: float
    adjusted: float
    logprob_before: float
    logprob_after: float
    rank_before: int
    rank_after: int


def log_softmax(x: np.ndarray) -> np.ndarray:
    m = np.max(x)
    if not np.isfinite(m):
        return np.full_like(x, -np.inf, dtype=np.float64)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted)))


def ranks(values: np.ndarray) -> np.ndarray:
    """1-based descending ranks; equal values are ordered by lower id."""
    order = np.lexsort((np.arange(len(values)), -values))
    r = np.empty(len(values), dtype=np.int64)
    r[order] = np.arange(1, len(values) + 1)
    return r


def inspect_bias(bias: BiasTable, logits, top_n: int = 20, sort_by: str = "adjusted") -> list[InspectRow]:
    """Report how a bias table reorders one step's logits.

    Rows are sorted by adjusted score (or by the original logit with
    ``sort_by="original"``) and cut to ``top_n``.
    """
    a = np.asarray(getattr(logits, "values", logits), dtype=np.float64)
    if len(a) != len(bias):
        raise SizeMismatch(f"{len(a)} logits vs {len(bias)} biases")
    if top_n < 1:
        raise InputError("top_n must be positive")
    b = bias.biases
    adj = a + b
    lp_before, lp_after = log_softmax(a), log_softmax(adj)
    r_before, r_after = ranks(a), ranks(adj)
    key = r_after if sort_by == "adjusted" else r_before
    order = np.argsort(key)[:top_n]
    return [
        InspectRow(int(i), bias.surfaces[i], float(a[i]), float(b[i]), float(adj[i]),
                   float(lp_before[i]), float(lp_after[i]), int(r_before[i]), int(r_after[i]))
        for i in order
    ]


# -- persistence -------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def dumps_bias(bias: BiasTable) -> str:
    lines = [_dump({"format": BIAS_FORMAT, "version": FORMAT_VERSION, "provenance": bias.provenance})]
    lines.extend(_dump({"id": i, "t": t, "b": float(v)})
                 for i, (t, v) in enumerate(zip(bias.surfaces, bias.biases)))
    return "\n".join(lines) + "\n"


def read_bias(path: str | Path) -> BiasTable:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        records = [json.loads(line) for line in lines if line.strip()]
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: malformed JSON-lines ({e})") from None
    if not records or records[0].get("format") != BIAS_FORMAT:
        raise FormatError(f"{path}: expected a {BIAS_FORMAT!r} header record")
    if records[0].get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {records[0].get('version')!r}")
    body = records[1:]
    if [r.get("id") for r in body] != list(range(len(body))):
        raise FormatError(f"{path}: bias records must cover ids 0..V-1 in order")
    return BiasTable(np.array([float(r["b"]) for r in body]), tuple(r["t"] for r in body),
                     records[0].get("provenance", {"scheme": "none"}))
