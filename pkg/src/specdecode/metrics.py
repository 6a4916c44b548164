"""Diversity of generated outputs: dist-n and ent-n.

dist-n is the number of distinct n-grams in a group of outputs divided by
the group's total token count.  ent-n is the entropy (natural log) of the
group's n-gram frequency distribution.  N-grams never span two outputs.
Condition scores are the unweighted mean of per-topic scores.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Mapping, Sequence

from .errors import DegenerateGroup, InputError

DEFAULT_MEASURES = ("dist1", "dist2", "ent2")
_MEASURE = re.compile(r"^(dist|ent)-?(\d+)$")

Group = Sequence[Sequence[str] | str]


def _seqs(group: Group) -> list[tuple[str, ...]]:
    out = []
    for s in group:
        toks = tuple(s.split()) if isinstance(s, str) else tuple(s)
        if toks:
            out.append(toks)
    return out


def ngram_counts(group: Group, n: int) -> Counter:
    if n < 1:
        raise InputError("n must be >= 1")
    counts: Counter = Counter()
    for toks in _seqs(group):
        counts.update(toks[i:i + n] for i in range(len(toks) - n + 1))
    return counts


def dist_n(group: Group, n: int) -> float:
    counts = ngram_counts(group, n)
    if not counts:
        raise DegenerateGroup(f"no {n}-grams in group")
    n_tokens = sum(len(t) for t in _seqs(group))
    return len(counts) / n_tokens


def ent_n(group: Group, n: int) -> float:
    counts = ngram_counts(group, n)
    if not counts:
        raise DegenerateGroup(f"no {n}-grams in group")
    total = sum(counts.values())
    ent = -sum(f * math.log(f / total) for f in counts.values()) / total
    return max(0.0, ent)


def parse_measure(name: str) -> tuple[str, int]:
    m = _MEASURE.match(name.strip().lower())
    if not m or int(m.group(2)) < 1:
        raise InputError(f"unknown measure {name!r}; use dist<n> or ent<n>")
    return m.group(1), int(m.group(2))


def measure(group: Group, name: str) -> float:
    kind, n = parse_measure(name)
    return dist_n(group, n) if kind == "dist" else ent_n(group, n)


def score_topics(outputs: Mapping[str, Group], measures: Sequence[str] = DEFAULT_MEASURES) -> dict[str, dict[str, float]]:
    if not outputs:
        raise DegenerateGroup("no topics to score")
    per_topic = {}
    for topic, group in outputs.items():
        try:
            per_topic[topic] = {m: measure(group, m) for m in measures}
        except DegenerateGroup as e:
            raise DegenerateGroup(f"topic {topic!r}: {e}") from None
    return per_topic


def score_condition(outputs: Mapping[str, Group], measures: Sequence[str] = DEFAULT_MEASURES) -> dict[str, float]:
    per_topic = score_topics(outputs, measures)
    return {m: sum(v[m] for v in per_topic.values()) / len(per_topic) for m in measures}
