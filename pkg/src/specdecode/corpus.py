"""Corpus ingestion and count tables.

Text is segmented into sentences on terminal punctuation, split into word
and punctuation tokens, and normalized (NFC + case folding).  Two count
tables come out of a corpus:

* a :class:`CountTable` of per-token counts, either every occurrence
  (``raw-token``) or the number of sentences a token occurs in
  (``sentence-occurrence``);
* a :class:`CooccurrenceStats` for a context word set: how many sentences
  contain any context word, and for each token how many of those sentences
  also contain it.

Both persist as JSON-lines with a header record followed by one record per
token in codepoint order, so identical corpora give byte-identical files.
"""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import EmptyContext, FormatError, InputError

RAW = "raw-token"
SENTENCE = "sentence-occurrence"
MODES = (RAW, SENTENCE)
_MODE_ALIASES = {"raw": RAW, "token": RAW, RAW: RAW, "sentence": SENTENCE, SENTENCE: SENTENCE}

COUNTS_FORMAT = "specdecode-counts"
COOC_FORMAT = "specdecode-cooc"
FORMAT_VERSION = 1

# Leading markers used by subword vocabularies (GPT-2 byte-level BPE,
# SentencePiece, WordPiece continuation).
SUBWORD_MARKERS = ("Ġ", "Ċ", "▁", "##")

_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")
_TOKEN = re.compile(r"\w+|[^\w\s]")


def _strip_markers(s: str) -> str:
    while True:
        prev = s
        s = s.strip()
        for marker in SUBWORD_MARKERS:
            if s.startswith(marker):
                s = s[len(marker):]
        if s == prev:
            return s


def normalize(raw: str) -> str | None:
    """Return the normalized surface of ``raw``, or ``None`` if nothing remains.

    Strings that still contain whitespace after stripping are not single
    tokens and also map to ``None``.
    """
    s = _strip_markers(unicodedata.normalize("NFC", raw))
    s = _strip_markers(unicodedata.normalize("NFC", s.casefold()))
    if not s or any(ch.isspace() for ch in s):
        return None
    return s


def split_tokens(text: str) -> list[str]:
    """Whitespace tokenization with each punctuation character detached."""
    return _TOKEN.findall(unicodedata.normalize("NFC", text))


def tokenize(text: str) -> list[str]:
    out = []
    for piece in split_tokens(text):
        t = normalize(piece)
        if t is not None:
            out.append(t)
    return out


@dataclass(frozen=True)
class SentenceRecord:
    tokens: tuple[str, ...]
    source_id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")


def segment(document: str, source_id: str = "") -> list[SentenceRecord]:
    sentences = []
    for chunk in _SENTENCE_BREAK.split(document):
        tokens = tokenize(chunk)
        if tokens:
            sentences.append(SentenceRecord(tuple(tokens), source_id))
    return sentences


def parse_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise InputError(f"unknown count mode {mode!r}; expected one of {MODES}") from None


@dataclass(frozen=True)
class CountTable:
    """Per-token counts plus corpus totals.

    ``counts`` only stores tokens seen at least once; :meth:`get` returns 0
    for anything else.
    """

    counts: Mapping[str, int]
    mode: str
    n_sentences: int
    n_star: int = field(init=False)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown count mode {self.mode!r}")
        if any(n < 1 for n in self.counts.values()):
            raise InputError("stored counts must be >= 1")
        object.__setattr__(self, "n_star", max(self.counts.values(), default=0))
        if self.mode == SENTENCE and self.n_star > self.n_sentences:
            raise InputError("sentence-occurrence count exceeds the number of sentences")

    def get(self, token: str) -> int:
        return self.counts.get(token, 0)

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class CooccurrenceStats:
    context: frozenset[str]
    n_context: int
    cooccur: Mapping[str, int]
    n_sentences: int

    def __post_init__(self):
        if self.n_context > self.n_sentences:
            raise InputError("n_context exceeds n_sentences")
        if any(n < 1 or n > self.n_context for n in self.cooccur.values()):
            raise InputError("co-occurrence counts must lie in [1, n_context]")

    def get(self, token: str) -> int:
        return self.cooccur.get(token, 0)


def build_counts(sentences: Iterable[SentenceRecord], mode: str = RAW) -> CountTable:
    mode = parse_mode(mode)
    counts: Counter[str] = Counter()
    n_sentences = 0
    for sent in sentences:
        n_sentences += 1
        counts.update(sent.tokens if mode == RAW else set(sent.tokens))
    return CountTable(dict(counts), mode, n_sentences)


def merge_counts(tables: Sequence[CountTable]) -> CountTable:
    """Pointwise sum of tables built over disjoint shards of one corpus."""
    if not tables:
        raise InputError("nothing to merge")
    modes = {t.mode for t in tables}
    if len(modes) != 1:
        raise InputError(f"cannot merge tables of different modes {sorted(modes)}")
    total: Counter[str] = Counter()
    for t in tables:
        total.update(t.counts)
    return CountTable(dict(total), modes.pop(), sum(t.n_sentences for t in tables))


def normalize_context(words: Iterable[str]) -> frozenset[str]:
    ctx = frozenset(t for t in map(normalize, words) if t is not None)
    if not ctx:
        raise EmptyContext("context word set is empty")
    return ctx


def build_cooccurrence(sentences: Iterable[SentenceRecord], context: Iterable[str]) -> CooccurrenceStats:
    ctx = normalize_context(context)
    cooccur: Counter[str] = Counter()
    n_context = 0
    n_sentences = 0
    for sent in sentences:
        n_sentences += 1
        types = set(sent.tokens)
        if types & ctx:
            n_context += 1
            cooccur.update(types)
    return CooccurrenceStats(ctx, n_context, dict(cooccur), n_sentences)


def merge_cooccurrence(parts: Sequence[CooccurrenceStats]) -> CooccurrenceStats:
    if not parts:
        raise InputError("nothing to merge")
    contexts = {p.context for p in parts}
    if len(contexts) != 1:
        raise InputError("cannot merge co-occurrence stats for different contexts")
    total: Counter[str] = Counter()
    for p in parts:
        total.update(p.cooccur)
    return CooccurrenceStats(
        contexts.pop(),
        sum(p.n_context for p in parts),
        dict(total),
        sum(p.n_sentences for p in parts),
    )


# -- corpus files -----------------------------------------------------------

def corpus_files(path: str | Path) -> list[Path]:
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise InputError(f"{path}: no such file or directory")
    return sorted((p for p in path.rglob("*") if p.is_file() and not p.name.startswith(".")),
                  key=lambda p: p.relative_to(path).as_posix())


def iter_documents(path: str | Path, line_docs: bool = False) -> Iterator[tuple[str, str]]:
    """Yield ``(source_id, text)`` pairs for a file or directory of files."""
    path = Path(path)
    for f in corpus_files(path):
        try:
            text = f.read_text(encoding="utf-8")
        except UnicodeDecodeError as e:
            raise InputError(f"{f}: not valid UTF-8 ({e.reason} at byte {e.start})") from None
        if line_docs:
            for i, line in enumerate(text.splitlines()):
                if line.strip():
                    yield f"{f.name}:{i + 1}", line
        else:
            yield f.name, text


def iter_sentences(path: str | Path, line_docs: bool = False) -> Iterator[SentenceRecord]:
    for source_id, text in iter_documents(path, line_docs):
        yield from segment(text, source_id)


def _count_file(args: tuple[str, str, bool]) -> CountTable:
    path, mode, line_docs = args
    return build_counts(iter_sentences(path, line_docs), mode)


def count_corpus(path: str | Path, mode: str = RAW, line_docs: bool = False, workers: int = 1) -> CountTable:
    """Count a corpus, optionally one file per worker process, then merge."""
    mode = parse_mode(mode)
    files = corpus_files(path)
    if workers <= 1 or len(files) <= 1:
        return build_counts(iter_sentences(path, line_docs), mode)
    jobs = [(str(f), mode, line_docs) for f in files]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_count_file, jobs))
    return merge_counts(parts)


# -- persistence ------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def dumps_counts(table: CountTable) -> str:
    lines = [_dump({
        "format": COUNTS_FORMAT,
        "version": table.version,
        "mode": table.mode,
        "n_sentences": table.n_sentences,
        "n_star": table.n_star,
    })]
    lines.extend(_dump({"t": t, "n": table.counts[t]}) for t in sorted(table.counts))
    return "\n".join(lines) + "\n"


def dumps_cooccurrence(stats: CooccurrenceStats) -> str:
    lines = [_dump({
        "format": COOC_FORMAT,
        "version": FORMAT_VERSION,
        "context": sorted(stats.context),
        "n_context": stats.n_context,
        "n_sentences": stats.n_sentences,
    })]
    lines.extend(_dump({"t": t, "n": stats.cooccur[t]}) for t in sorted(stats.cooccur))
    return "\n".join(lines) + "\n"


def _read_jsonl(path: str | Path, fmt: str) -> tuple[dict, list[dict]]:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    try:
        records = [json.loads(line) for line in raw if line.strip()]
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: malformed JSON-lines ({e})") from None
    if not records or not isinstance(records[0], dict) or records[0].get("format") != fmt:
        raise FormatError(f"{path}: expected a {fmt!r} header record")
    header = records[0]
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
    return header, records[1:]


def _token_counts(path, body: list[dict]) -> dict[str, int]:
    try:
        return {r["t"]: int(r["n"]) for r in body}
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: token records need 't' and 'n' fields") from None


def read_counts(path: str | Path) -> CountTable:
    header, body = _read_jsonl(path, COUNTS_FORMAT)
    table = CountTable(_token_counts(path, body), parse_mode(header["mode"]), int(header["n_sentences"]))
    if table.n_star != header.get("n_star"):
        raise FormatError(f"{path}: header n_star {header.get('n_star')} != max count {table.n_star}")
    return table


def read_cooccurrence(path: str | Path) -> CooccurrenceStats:
    header, body = _read_jsonl(path, COOC_FORMAT)
    return CooccurrenceStats(
        frozenset(header["context"]),
        int(header["n_context"]),
        _token_counts(path, body),
        int(header["n_sentences"]),
    )


def write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
