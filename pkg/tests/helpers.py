"""Fixture builders shared by the test modules."""

import math
import random

# Ten hand-written sentences for PPMI.  Context {crypto} occurs in the first
# four.  key: n_t=3 n_ct=3 -> ln 2.5; cipher: 2/2 -> ln 2.5; lock: 5/2 ->
# ratio 1; door: 5/1 -> ratio 0.5; rare, the: never with the context.
PPMI_DOC = (
    "Crypto key cipher. Crypto key lock door. Crypto key lock. Crypto cipher. "
    "Lock door. Lock door. Lock door rare. Door. The. The."
)
PPMI_EXPECTED = {
    "crypto": math.log(2.5),
    "key": math.log(2.5),
    "cipher": math.log(2.5),
    "lock": 0.0,
    "door": 0.0,
    "rare": 0.0,
    "the": 0.0,
    ".": 0.0,
}

WORDS = [f"w{i:03d}" for i in range(200)]


def zipf_sentences(n_sentences, seed=0, vocab=WORDS):
    """Random word lists with a Zipf-like frequency profile."""
    rng = random.Random(seed)
    weights = [1.0 / (r + 1) for r in range(len(vocab))]
    return [rng.choices(vocab, weights, k=rng.randint(3, 12)) for _ in range(n_sentences)]


def render(sentences):
    return " ".join(" ".join(s) + "." for s in sentences)


def log_softmax_list(values):
    m = max(values)
    z = m + math.log(sum(math.exp(v - m) for v in values))
    return [v - z for v in values]


def enumerate_all(model, prompt, length, bias=None, temperature=1.0, banned_first=()):
    """Score every sequence of ``length`` tokens by brute force.

    Returns ``(sequence, score)`` pairs; scores use plain-Python log-softmax
    over the model's raw logits plus bias, divided by temperature.
    """
    import itertools

    V = len(model.vocab)
    b = [0.0] * V if bias is None else [float(x) for x in getattr(bias, "biases", bias)]
    cache = {}

    def step(prefix, first):
        key = (prefix, first)
        if key not in cache:
            raw = model.next_logits(list(prompt) + list(prefix)).values
            adj = [(float(a) + bb) / temperature for a, bb in zip(raw, b)]
            if first:
                for t in banned_first:
                    adj[t] = -math.inf
            cache[key] = log_softmax_list(adj)
        return cache[key]

    out = []
    for seq in itertools.product(range(V), repeat=length):
        score = 0.0
        for i, t in enumerate(seq):
            score += step(seq[:i], i == 0)[t]
        if score != -math.inf:
            out.append((seq, score))
    return out


def exhaustive_best(model, prompt, length, bias=None, **kw):
    """Highest-scoring sequence; ties go to the lexicographically smallest."""
    return min(enumerate_all(model, prompt, length, bias, **kw), key=lambda x: (-x[1], x[0]))


ACCEPTANCE_LINES = []


def verdict(label, ok, detail=""):
    """Record and print one acceptance line, then fail the test if not ``ok``."""
    line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
