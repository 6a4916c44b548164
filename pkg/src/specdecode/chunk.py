"""First-noun-phrase selection over POS-tagged text.

A noun chunk is a maximal ``DET? ADJ* (NOUN|PROPN)+`` run.  Tags come from
the caller; :class:`LexiconTagger` provides a dictionary-based fallback so
the pipeline runs without a statistical tagger.
"""

from __future__ import annotations

import json
import re
import unicodedata
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import normalize
from .errors import FormatError, InputError

COARSE_TAGS = ("DET", "ADJ", "NOUN", "PROPN", "VERB", "ADP", "PUNCT", "OTHER")

_UNIVERSAL = {
    "DET": "DET", "ADJ": "ADJ", "NOUN": "NOUN", "PROPN": "PROPN", "VERB": "VERB",
    "AUX": "VERB", "ADP": "ADP", "PUNCT": "PUNCT",
    **{t: "OTHER" for t in ("ADV", "CCONJ", "INTJ", "NUM", "PART", "PRON", "SCONJ", "SYM", "X", "SPACE", "OTHER")},
}
# Penn Treebank prefixes, longest first.
_PTB = (("NNP", "PROPN"), ("NN", "NOUN"), ("JJ", "ADJ"), ("DT", "DET"), ("VB", "VERB"),
        ("MD", "VERB"), ("IN", "ADP"), ("TO", "ADP"))
_CODE = {"DET": "D", "ADJ": "A", "NOUN": "N", "PROPN": "N"}
_CHUNK = re.compile(r"D?A*N+")

# Chunks starting this many generated words in compete with the first one.
LATE_OFFSET = 3


def coarse_tag(tag: str) -> str:
    t = tag.strip().upper()
    if t in _UNIVERSAL:
        return _UNIVERSAL[t]
    for prefix, coarse in _PTB:
        if t.startswith(prefix):
            return coarse
    if t and all(unicodedata.category(c).startswith("P") for c in t):
        return "PUNCT"
    return "OTHER"


def noun_chunks(tags: Sequence[str], start: int = 0) -> list[tuple[int, int]]:
    """Maximal chunk spans ``(begin, end)`` inside ``tags[start:]``."""
    codes = "".join(_CODE.get(coarse_tag(t), "x") for t in tags[start:])
    return [(m.start() + start, m.end() + start) for m in _CHUNK.finditer(codes)]


def extract_first_np(tagged: Sequence[tuple[str, str]], generated_start: int) -> tuple[int, int]:
    """Span of the completed noun phrase in a prompt + generation.

    Takes the first chunk at or after ``generated_start`` and the first
    chunk starting at least ``LATE_OFFSET`` words into the generation, and
    returns the longer (the earlier one on ties).  An empty span
    ``(generated_start, generated_start)`` means no noun was generated.
    """
    if not 0 <= generated_start <= len(tagged):
        raise InputError(f"generated_start {generated_start} outside 0..{len(tagged)}")
    tags = [tag for _, tag in tagged]
    early = noun_chunks(tags, generated_start)
    if not early:
        return (generated_start, generated_start)
    best = early[0]
    late = noun_chunks(tags, min(generated_start + LATE_OFFSET, len(tags)))
    if late and late[0][1] - late[0][0] > best[1] - best[0]:
        best = late[0]
    return best


def span_text(tagged: Sequence[tuple[str, str]], span: tuple[int, int]) -> str:
    return " ".join(tok for tok, _ in tagged[span[0]:span[1]])


class LexiconTagger:
    """Tag words by dictionary lookup on their normalized form.

    Unknown words are ``OTHER``; pure punctuation is ``PUNCT``.
    """

    def __init__(self, lexicon: Mapping[str, str]):
        self.lexicon = {}
        for word, tag in lexicon.items():
            key = normalize(word)
            if key is not None:
                self.lexicon[key] = coarse_tag(tag)

    def tag(self, tokens: Sequence[str]) -> list[tuple[str, str]]:
        out = []
        for tok in tokens:
            key = normalize(tok)
            if key in self.lexicon:
                tag = self.lexicon[key]
            elif tok and all(unicodedata.category(c).startswith("P") for c in tok):
                tag = "PUNCT"
            else:
                tag = "OTHER"
            out.append((tok, tag))
        return out

    @classmethod
    def load(cls, path: str | Path) -> "LexiconTagger":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError(f"{path}: no such file") from None
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: malformed JSON ({e})") from None
        if not isinstance(obj, dict):
            raise FormatError(f"{path}: tag lexicon must be a JSON object word -> tag")
        return cls(obj)
