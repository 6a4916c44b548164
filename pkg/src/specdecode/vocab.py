"""Model vocabularies: dense token id -> surface string maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import normalize
from .errors import FormatError, InputError, InvalidTokenId

_SPACE_MARKERS = {"Ġ": " ", "▁": " ", "Ċ": "\n"}


@dataclass(frozen=True)
class VocabMap:
    id_to_surface: tuple[str, ...]
    normalized: tuple[str | None, ...] = field(init=False, repr=False, compare=False)
    marker_style: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        surfaces = tuple(self.id_to_surface)
        if not surfaces:
            raise InputError("vocabulary is empty")
        if not all(isinstance(s, str) for s in surfaces):
            raise InputError("vocabulary entries must be strings")
        object.__setattr__(self, "id_to_surface", surfaces)
        object.__setattr__(self, "normalized", tuple(normalize(s) for s in surfaces))
        object.__setattr__(self, "marker_style", any(s[:1] in ("Ġ", "▁") for s in surfaces))

    def __len__(self) -> int:
        return len(self.id_to_surface)

    def surface(self, token_id: int) -> str:
        self.check_ids([token_id])
        return self.id_to_surface[token_id]

    def check_ids(self, ids: Iterable[int]) -> None:
        v = len(self.id_to_surface)
        for i in ids:
            if not isinstance(i, (int,)) or isinstance(i, bool) or not 0 <= i < v:
                raise InvalidTokenId(f"token id {i!r} outside vocabulary of size {v}")

    def word_index(self) -> dict[str, int]:
        """Normalized surface -> lowest token id carrying it."""
        index: dict[str, int] = {}
        for i, t in enumerate(self.normalized):
            if t is not None and t not in index:
                index[t] = i
        return index

    def detokenize(self, ids: Sequence[int]) -> str:
        pieces = [self.id_to_surface[i] for i in ids]
        if not self.marker_style:
            return " ".join(pieces)
        out = []
        for p in pieces:
            for marker, repl in _SPACE_MARKERS.items():
                p = p.replace(marker, repl)
            out.append(p)
        return "".join(out).strip()

    @classmethod
    def from_json(cls, obj) -> "VocabMap":
        """Accept a list of surfaces, a ``{surface: id}`` dict, or an object with a ``vocab`` key."""
        if isinstance(obj, dict) and "vocab" in obj:
            obj = obj["vocab"]
        if isinstance(obj, list):
            return cls(tuple(obj))
        if isinstance(obj, dict):
            ids = sorted(obj.values())
            if ids != list(range(len(ids))):
                raise FormatError("vocabulary ids must be dense 0..V-1")
            surfaces = [""] * len(ids)
            for s, i in obj.items():
                surfaces[i] = s
            return cls(tuple(surfaces))
        raise FormatError("vocabulary must be a JSON list or object")

    @classmethod
    def load(cls, path: str | Path) -> "VocabMap":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError(f"{path}: no such file") from None
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: malformed JSON ({e})") from None
        return cls.from_json(obj)
