"""Prompt-completion experiment grid.

An :class:`ExperimentSpec` lists topics (each with a context word set for
PPMI), prompt templates, and decoding conditions.  :func:`run_experiment`
generates ``outputs_per_prompt`` completions with distinct first tokens for
every (condition, topic, prompt) cell and returns one record per output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bias import BiasTable, NiwfParams, niwf_bias, ppmi_bias
from .chunk import LexiconTagger, extract_first_np, span_text
from .corpus import RAW, SENTENCE, SentenceRecord, build_cooccurrence, build_counts, split_tokens
from .decode import GenerationConfig, batch_seed, generate_batch
from .errors import FormatError, InputError, SpecDecodeError
from .lm import LanguageModel
from .vocab import VocabMap

BIAS_SOURCES = ("none", "niwf", "ppmi")


@dataclass(frozen=True)
class Topic:
    name: str
    context: tuple[str, ...]


@dataclass(frozen=True)
class Condition:
    label: str
    mode: str
    bias: str = "none"
    temperature: float = 1.0

    def __post_init__(self):
        if self.bias not in BIAS_SOURCES:
            raise InputError(f"condition {self.label!r}: bias must be one of {BIAS_SOURCES}")
        GenerationConfig(mode=self.mode, temperature=self.temperature)


@dataclass(frozen=True)
class ExperimentSpec:
    topics: tuple[Topic, ...]
    prompts: tuple[str, ...]
    conditions: tuple[Condition, ...]
    outputs_per_prompt: int = 5
    beam_width: int = 5
    k: int = 50
    max_new_tokens: int = 10
    seed: int = 0
    niwf: NiwfParams = field(default_factory=NiwfParams)

    def __post_init__(self):
        if not self.topics or not self.prompts or not self.conditions:
            raise InputError("experiment needs at least one topic, prompt and condition")
        if self.outputs_per_prompt < 1:
            raise InputError("outputs_per_prompt must be >= 1")
        labels = [c.label for c in self.conditions]
        if len(set(labels)) != len(labels):
            raise InputError("condition labels must be unique")

    def config_for(self, cond: Condition, seed: int) -> GenerationConfig:
        return GenerationConfig(mode=cond.mode, beam_width=self.beam_width, k=self.k,
                                temperature=cond.temperature, max_new_tokens=self.max_new_tokens, seed=seed)

    def select(self, labels: Sequence[str] | None = None) -> tuple[Condition, ...]:
        """Conditions named in ``labels`` (all when ``None``), in spec order."""
        if labels is None:
            return self.conditions
        known = {c.label for c in self.conditions}
        missing = [c for c in labels if c not in known]
        if missing:
            raise InputError(f"unknown condition(s): {', '.join(missing)}")
        return tuple(c for c in self.conditions if c.label in set(labels))

    def prompt_text(self, template: str, topic: Topic) -> str:
        return template.replace("{topic}", topic.name)

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        try:
            gen = obj.get("generation", {})
            niwf = obj.get("niwf", {})
            return cls(
                topics=tuple(Topic(t["name"], tuple(t["context"])) for t in obj["topics"]),
                prompts=tuple(obj["prompts"]),
                conditions=tuple(Condition(c["label"], c["mode"], c.get("bias", "none"),
                                           float(c.get("temperature", 1.0))) for c in obj["conditions"]),
                outputs_per_prompt=int(obj.get("outputs_per_prompt", 5)),
                beam_width=int(gen.get("beam_width", 5)),
                k=int(gen.get("k", 50)),
                max_new_tokens=int(gen.get("max_new_tokens", 10)),
                seed=int(gen.get("seed", 0)),
                niwf=NiwfParams(**niwf),
            )
        except (KeyError, TypeError) as e:
            raise FormatError(f"malformed experiment spec: {e!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise InputError(f"{path}: no such file") from None
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: malformed JSON ({e})") from None

    @classmethod
    def default(cls) -> "ExperimentSpec":
        return cls.from_json(json.loads(default_spec_text()))


def default_spec_text() -> str:
    return resources.files("specdecode").joinpath("data/default_experiment.json").read_text(encoding="utf-8")


@dataclass
class Biases:
    niwf: BiasTable | None = None
    ppmi: dict[str, BiasTable] = field(default_factory=dict)

    def for_condition(self, cond: Condition, topic: Topic) -> BiasTable | None:
        if cond.bias == "niwf":
            if self.niwf is None:
                raise InputError(f"condition {cond.label!r} needs an NIWF bias table")
            return self.niwf
        if cond.bias == "ppmi":
            if topic.name not in self.ppmi:
                raise InputError(f"condition {cond.label!r} needs a PPMI table for topic {topic.name!r}")
            return self.ppmi[topic.name]
        return None


def build_biases(spec: ExperimentSpec, vocab: VocabMap, sentences: Iterable[SentenceRecord],
                 exclude: Sequence[str] = (), conditions: Sequence[str] | None = None) -> Biases:
    """Compute the bias tables the selected conditions call for from one corpus."""
    sentences = list(sentences)
    needs = {c.bias for c in spec.select(conditions)}
    out = Biases()
    if "niwf" in needs:
        out.niwf = niwf_bias(build_counts(sentences, RAW), vocab, spec.niwf, exclude)
    if "ppmi" in needs:
        occ = build_counts(sentences, SENTENCE)
        for topic in spec.topics:
            out.ppmi[topic.name] = ppmi_bias(occ, build_cooccurrence(sentences, topic.context), vocab, exclude)
    return out


def cell_seed(base: int, *indices: int) -> int:
    ss = np.random.SeedSequence([int(base) & ((1 << 64) - 1), *indices])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def first_np(tagger: LexiconTagger, prompt: str, generated: str) -> str:
    prompt_words = split_tokens(prompt)
    tagged = tagger.tag(prompt_words + split_tokens(generated))
    return span_text(tagged, extract_first_np(tagged, len(prompt_words)))


def run_experiment(spec: ExperimentSpec, model: LanguageModel, biases: Biases,
                   tagger: LexiconTagger | None = None,
                   conditions: Sequence[str] | None = None) -> list[dict]:
    """Run the grid; records come back in condition, topic, prompt, index order."""
    chosen = spec.select(conditions)
    records = []
    for ci, cond in enumerate(spec.conditions):
        if cond not in chosen:
            continue
        for ti, topic in enumerate(spec.topics):
            bias = biases.for_condition(cond, topic)
            for pi, template in enumerate(spec.prompts):
                prompt = spec.prompt_text(template, topic)
                base = cell_seed(spec.seed, ci, ti, pi)
                try:
                    ids = model.encode(prompt)
                    hyps = generate_batch(model, ids, bias, spec.config_for(cond, base), spec.outputs_per_prompt)
                except SpecDecodeError as e:
                    raise type(e)(f"[{topic.name} | {prompt} | {cond.label}] {e}") from e
                for i, h in enumerate(hyps):
                    text = model.vocab.detokenize(h.token_ids)
                    records.append({
                        "topic": topic.name,
                        "prompt": prompt,
                        "condition": cond.label,
                        "mode": cond.mode,
                        "index": i,
                        "seed": batch_seed(base, i),
                        "token_ids": list(h.token_ids),
                        "score": h.score,
                        "text": text,
                        "first_np": first_np(tagger, prompt, text) if tagger is not None else None,
                    })
    return records


def dumps_records(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in records)


def read_records(path: str | Path) -> list[dict]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    try:
        return [json.loads(line) for line in lines if line.strip()]
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: malformed JSON-lines ({e})") from None
