import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specdecode.bias import (BiasTable, NiwfParams, dumps_bias, inspect_bias, niwf_bias, ppmi_bias, ppmi_value,
                             read_bias)
from specdecode.corpus import RAW, SENTENCE, CooccurrenceStats, CountTable, build_cooccurrence, build_counts, segment
from specdecode.errors import EmptyCorpus, InputError, MismatchedCorpus, SizeMismatch
from specdecode.vocab import VocabMap

from helpers import PPMI_DOC, PPMI_EXPECTED, WORDS, render, zipf_sentences

W0 = math.exp(-5)


def eq3(n_t, n_star, k=100.0, w0=W0, w1=1.0):
    # independent scalar re-evaluation; unseen tokens are capped at w1
    if n_t == 0:
        return w1
    return min(max(w0, n_star / (k * n_t)), w1)


def test_niwf_params_defaults():
    p = NiwfParams()
    assert (p.k, p.w0, p.w1) == (100.0, math.exp(-5), 1.0)
    with pytest.raises(InputError):
        NiwfParams(k=0)
    with pytest.raises(InputError):
        NiwfParams(w0=2.0, w1=1.0)


def test_niwf_worked_example():
    table = CountTable({"the": 1000, "bitcoin": 10}, RAW, 50)
    bias = niwf_bias(table, VocabMap(("the", "Ġbitcoin", "Ġunseen")))
    assert bias.biases[0] == 0.01
    assert bias.biases[1] == 1.0
    assert bias.biases[2] == 1.0


def test_niwf_most_frequent_is_one_over_k():
    table = CountTable({"a": 777, "b": 3}, RAW, 10)
    assert niwf_bias(table, VocabMap(("a",))).biases[0] == 1 / 100
    assert niwf_bias(table, VocabMap(("a",)), NiwfParams(k=50)).biases[0] == 1 / 50


def test_niwf_lower_clamp():
    table = CountTable({"a": 1, "b": 10**6}, RAW, 10)
    # n*/(k n_t) = 1e6/(100 * 1e6) = 0.01 for b; pick k so it falls below w0
    bias = niwf_bias(table, VocabMap(("b",)), NiwfParams(k=1000.0))
    assert bias.biases[0] == W0


def test_niwf_matches_scalar_oracle():
    sents = zipf_sentences(120, seed=9)
    oracle_counts = Counter(w for s in sents for w in s)
    oracle_counts["."] = len(sents)
    n_star = max(oracle_counts.values())
    surfaces = ["Ġ" + w for w in WORDS[:150]] + [w.upper() for w in WORDS[150:]] + [".", "", "<|endoftext|>", "Ċ"]
    bias = niwf_bias(build_counts(segment(render(sents)), RAW), VocabMap(tuple(surfaces)))
    for i, s in enumerate(surfaces):
        word = s.lstrip("Ġ").lower()
        expected = eq3(oracle_counts.get(word, 0), n_star)
        assert abs(bias.biases[i] - expected) <= 1e-12, s


def test_niwf_empty_corpus():
    with pytest.raises(EmptyCorpus):
        niwf_bias(CountTable({}, RAW, 0), VocabMap(("a",)))


def test_niwf_exclusion_gets_w0():
    table = CountTable({"the": 1000, ",": 5}, RAW, 50)
    bias = niwf_bias(table, VocabMap(("the", ",")), exclude=[","])
    assert bias.biases[1] == W0
    assert bias.provenance["exclude"] == [","]


@given(st.dictionaries(st.sampled_from(WORDS[:30]), st.integers(1, 10**6), min_size=1),
       st.floats(0.5, 1000), st.floats(0, 0.5), st.floats(0.5, 5))
def test_niwf_range_and_monotonicity(counts, k, w0, w1):
    params = NiwfParams(k, w0, w1)
    vocab = VocabMap(tuple(WORDS[:30]))
    b = niwf_bias(CountTable(counts, RAW, 1), vocab, params).biases
    assert np.all((b >= w0) & (b <= w1))
    present = [(counts[w], b[i]) for i, w in enumerate(WORDS[:30]) if w in counts]
    for n_t, b_t in present:
        for n_u, b_u in present:
            if n_t <= n_u:
                assert b_t >= b_u


# -- PPMI --------------------------------------------------------------------

def _ppmi_fixture(context=("crypto",)):
    records = segment(PPMI_DOC)
    return build_counts(records, SENTENCE), build_cooccurrence(records, context)


@pytest.mark.parametrize("n_s, n_c, n_t, n_ct, expected", [
    (10, 4, 3, 3, math.log(2.5)),
    (10, 5, 4, 2, 0.0),
    (10, 5, 4, 1, 0.0),
    (10, 0, 4, 0, 0.0),
    (10, 5, 0, 0, 0.0),
])
def test_ppmi_value_cases(n_s, n_c, n_t, n_ct, expected):
    assert abs(ppmi_value(n_ct, n_c, n_t, n_s) - expected) <= 1e-12


def test_ppmi_ln_2_5_literal():
    assert abs(ppmi_value(3, 4, 3, 10) - 0.9162907318741551) <= 1e-12


def test_ppmi_fixture_hand_values():
    counts, cooc = _ppmi_fixture()
    surfaces = tuple(PPMI_EXPECTED) + ("never-seen",)
    bias = ppmi_bias(counts, cooc, VocabMap(surfaces))
    for i, s in enumerate(surfaces):
        assert abs(bias.biases[i] - PPMI_EXPECTED.get(s, 0.0)) <= 1e-12, s
    assert bias.provenance["n_context"] == 4 and bias.provenance["n_sentences"] == 10


def test_ppmi_symmetry():
    # swap the roles of a single-word context and a target token
    records = segment(PPMI_DOC)
    counts = build_counts(records, SENTENCE)
    for c, t in [("crypto", "key"), ("lock", "door"), ("key", "cipher"), ("door", "crypto")]:
        fwd = ppmi_bias(counts, build_cooccurrence(records, {c}), VocabMap((t,))).biases[0]
        rev = ppmi_bias(counts, build_cooccurrence(records, {t}), VocabMap((c,))).biases[0]
        assert abs(fwd - rev) <= 1e-12


def test_ppmi_mismatched_corpus():
    counts, cooc = _ppmi_fixture()
    other = CooccurrenceStats(cooc.context, cooc.n_context, cooc.cooccur, cooc.n_sentences + 1)
    with pytest.raises(MismatchedCorpus):
        ppmi_bias(counts, other, VocabMap(("key",)))
    raw = build_counts(segment(PPMI_DOC), RAW)
    with pytest.raises(MismatchedCorpus):
        ppmi_bias(raw, cooc, VocabMap(("key",)))


def test_ppmi_nonnegative_dense():
    records = segment(render(zipf_sentences(300, seed=2)))
    counts = build_counts(records, SENTENCE)
    bias = ppmi_bias(counts, build_cooccurrence(records, {"w010", "w050"}), VocabMap(tuple(WORDS) + ("zz",)))
    assert len(bias) == len(WORDS) + 1
    assert np.all(bias.biases >= 0) and np.all(np.isfinite(bias.biases))
    assert bias.biases[-1] == 0.0


# -- inspect -----------------------------------------------------------------

def test_inspect_uniform_logits():
    vocab = VocabMap(("t0", "t1", "t2"))
    bias = BiasTable(np.array([0.0, 1.0, 0.0]), vocab.id_to_surface)
    rows = inspect_bias(bias, np.zeros(3), top_n=3)
    assert rows[0].token == "t1" and rows[0].rank_after == 1
    assert [r.rank_after for r in rows] == [1, 2, 3]


def test_inspect_zero_bias_identity():
    vocab = VocabMap(tuple("abcdef"))
    logits = np.array([0.3, -1.0, 2.0, 0.3, 5.0, -2.0])
    rows = inspect_bias(BiasTable.zeros(vocab), logits, top_n=6)
    assert all(r.rank_before == r.rank_after for r in rows)
    assert [r.token for r in rows] == ["e", "c", "a", "d", "b", "f"]


def test_inspect_rank_inversion_from_niwf_fixture():
    table = CountTable({"people": 1000, "bitcoin": 10}, RAW, 100)
    vocab = VocabMap(("people", "bitcoin", "x"))
    bias = niwf_bias(table, vocab)
    logits = np.array([0.0, -0.6, -5.0])  # logit gap 0.6 < bias gap 0.99
    rows = {r.token: r for r in inspect_bias(bias, logits, top_n=3)}
    assert rows["people"].rank_before == 1 and rows["bitcoin"].rank_before == 2
    assert rows["bitcoin"].rank_after == 1 and rows["people"].rank_after == 2
    assert rows["bitcoin"].adjusted == pytest.approx(0.4)


def test_inspect_truncates_and_checks_size():
    vocab = VocabMap(tuple("abcd"))
    assert len(inspect_bias(BiasTable.zeros(vocab), np.arange(4.0), top_n=2)) == 2
    with pytest.raises(SizeMismatch):
        inspect_bias(BiasTable.zeros(vocab), np.zeros(5), top_n=2)


# -- files -------------------------------------------------------------------

def test_bias_file_roundtrip(tmp_path):
    table = CountTable({"the": 1000, "bitcoin": 10}, RAW, 50)
    bias = niwf_bias(table, VocabMap(("the", "Ġbitcoin", "ü")))
    text = dumps_bias(bias)
    first, *rest = text.splitlines()
    assert first.startswith('{"format":"specdecode-bias","version":1,"provenance":{"scheme":"niwf"')
    assert rest[1] == '{"id":1,"t":"Ġbitcoin","b":1.0}'
    p = tmp_path / "b.jsonl"
    p.write_text(text, encoding="utf-8")
    back = read_bias(p)
    assert np.array_equal(back.biases, bias.biases)
    assert back.surfaces == bias.surfaces and back.provenance == bias.provenance


def test_bias_table_invariants():
    with pytest.raises(InputError):
        BiasTable(np.array([-0.1]), ("a",), {"scheme": "ppmi"})
    with pytest.raises(InputError):
        BiasTable(np.array([2.0]), ("a",), {"scheme": "niwf", "w0": 0.0, "w1": 1.0})
    with pytest.raises(SizeMismatch):
        BiasTable(np.array([0.0, 1.0]), ("a",))
