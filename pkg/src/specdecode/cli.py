"""Command-line entry point.

    specdecode stats build   --in CORPUS --out counts.jsonl [--mode raw|sentence]
    specdecode stats cooc    --in CORPUS --context w1,w2 --out cooc.jsonl
    specdecode lm train      --in CORPUS --out model.json [--vocab-out vocab.json]
    specdecode lm serve      --model model.json
    specdecode lm vocab      (--model F | --bridge-cmd CMD) --out vocab.json
    specdecode bias niwf     --counts counts.jsonl --vocab vocab.json --out bias.jsonl
    specdecode bias ppmi     --context w1,w2 --vocab vocab.json --out bias.jsonl (--in CORPUS | --counts F --cooc F)
    specdecode spec          [--out experiment.json]
    specdecode generate      --corpus CORPUS (--model F | --bridge-cmd CMD) --out outputs.jsonl
    specdecode metrics       --outputs outputs.jsonl
    specdecode inspect       --bias bias.jsonl (--model F | --bridge-cmd CMD) --prompt TEXT

Exit status: 0 success, 2 usage or input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import shlex
import sys
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path

from . import corpus
from .bias import NiwfParams, dumps_bias, inspect_bias, niwf_bias, ppmi_bias, read_bias
from .bridge import ExternalModel, serve
from .chunk import LexiconTagger
from .errors import DegenerateGroup, InputError, MismatchedCorpus, MissingContext, SpecDecodeError
from .experiment import (ExperimentSpec, build_biases, default_spec_text, dumps_records, read_records,
                         run_experiment)
from .lm import NGramModel, train_ngram
from .metrics import DEFAULT_MEASURES, score_topics
from .vocab import VocabMap

log = logging.getLogger("specdecode")


class UsageError(InputError):
    pass


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, ensure_ascii=False, sort_keys=True))
    else:
        print(text)


def _words(arg: str | None) -> list[str]:
    return [w.strip() for w in (arg or "").split(",") if w.strip()]


def _read_corpus(path, line_docs: bool) -> list[corpus.SentenceRecord]:
    sents = list(corpus.iter_sentences(path, line_docs))
    if not sents:
        raise UsageError(f"{path}: empty corpus")
    return sents


@contextmanager
def _open_model(args):
    if getattr(args, "model", None):
        yield NGramModel.load(args.model)
        return
    if getattr(args, "bridge_cmd", None):
        m = ExternalModel.spawn(shlex.split(args.bridge_cmd), timeout=args.timeout)
    elif getattr(args, "bridge_tcp", None):
        host, _, port = args.bridge_tcp.rpartition(":")
        m = ExternalModel.connect(host or "127.0.0.1", int(port), timeout=args.timeout)
    else:
        raise UsageError("give --model, --bridge-cmd or --bridge-tcp")
    try:
        yield m
    finally:
        m.close()


# -- stats --------------------------------------------------------------------

def cmd_stats_build(args) -> int:
    mode = corpus.parse_mode(args.mode)
    if not corpus.corpus_files(args.inp):
        raise UsageError(f"{args.inp}: empty corpus")
    table = corpus.count_corpus(args.inp, mode, args.line_docs, args.workers)
    if table.n_sentences == 0:
        raise UsageError(f"{args.inp}: empty corpus")
    corpus.write_text(args.out, corpus.dumps_counts(table))
    _emit(args, {"out": str(args.out), "mode": table.mode, "n_sentences": table.n_sentences,
                 "vocab_size": len(table), "n_star": table.n_star},
          f"n_sentences={table.n_sentences} vocab_size={len(table)} n_star={table.n_star} -> {args.out}")
    return 0


def cmd_stats_cooc(args) -> int:
    context = _words(args.context)
    if not context:
        raise MissingContext("--context is required")
    stats = corpus.build_cooccurrence(_read_corpus(args.inp, args.line_docs), context)
    corpus.write_text(args.out, corpus.dumps_cooccurrence(stats))
    _emit(args, {"out": str(args.out), "context": sorted(stats.context), "n_context": stats.n_context,
                 "n_sentences": stats.n_sentences},
          f"n_sentences={stats.n_sentences} n_context={stats.n_context} -> {args.out}")
    return 0


# -- lm -----------------------------------------------------------------------

def cmd_lm_train(args) -> int:
    model = train_ngram(_read_corpus(args.inp, args.line_docs), args.order, args.alpha)
    model.save(args.out)
    if args.vocab_out:
        Path(args.vocab_out).write_text(
            json.dumps(list(model.vocab.id_to_surface), ensure_ascii=False) + "\n", encoding="utf-8")
    _emit(args, {"out": str(args.out), "order": model.order, "alpha": model.alpha, "vocab_size": len(model.vocab)},
          f"order={model.order} alpha={model.alpha} vocab_size={len(model.vocab)} -> {args.out}")
    return 0


def cmd_lm_serve(args) -> int:
    serve(NGramModel.load(args.model))
    return 0


def cmd_lm_vocab(args) -> int:
    with _open_model(args) as model:
        surfaces = list(model.vocab.id_to_surface)
    Path(args.out).write_text(json.dumps(surfaces, ensure_ascii=False) + "\n", encoding="utf-8")
    _emit(args, {"out": str(args.out), "vocab_size": len(surfaces)}, f"vocab_size={len(surfaces)} -> {args.out}")
    return 0


# -- bias ---------------------------------------------------------------------

def cmd_bias_niwf(args) -> int:
    params = NiwfParams(args.k, args.w0, args.w1)
    bias = niwf_bias(corpus.read_counts(args.counts), VocabMap.load(args.vocab), params, _words(args.exclude))
    corpus.write_text(args.out, dumps_bias(bias))
    _emit(args, {"out": str(args.out), "provenance": bias.provenance, "vocab_size": len(bias)},
          f"niwf k={params.k} w0={params.w0} w1={params.w1} vocab_size={len(bias)} -> {args.out}")
    return 0


def cmd_bias_ppmi(args) -> int:
    context = _words(args.context)
    if not context:
        raise MissingContext("ppmi needs --context w1,w2,...")
    vocab = VocabMap.load(args.vocab)
    if args.inp:
        sents = _read_corpus(args.inp, args.line_docs)
        counts = corpus.read_counts(args.counts) if args.counts else corpus.build_counts(sents, corpus.SENTENCE)
        cooc = corpus.build_cooccurrence(sents, context)
    elif args.counts and args.cooc:
        counts, cooc = corpus.read_counts(args.counts), corpus.read_cooccurrence(args.cooc)
        if cooc.context != corpus.normalize_context(context):
            raise MismatchedCorpus(f"{args.cooc} was built for context {sorted(cooc.context)}")
    else:
        raise UsageError("ppmi needs --in CORPUS, or both --counts and --cooc")
    bias = ppmi_bias(counts, cooc, vocab, _words(args.exclude))
    corpus.write_text(args.out, dumps_bias(bias))
    _emit(args, {"out": str(args.out), "provenance": bias.provenance, "vocab_size": len(bias)},
          f"ppmi context={sorted(cooc.context)} n_context={cooc.n_context} vocab_size={len(bias)} -> {args.out}")
    return 0


# -- experiment ---------------------------------------------------------------

def cmd_spec(args) -> int:
    text = default_spec_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_generate(args) -> int:
    spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec.default()
    overrides = {k: v for k, v in (("seed", args.seed), ("max_new_tokens", args.max_new_tokens),
                                   ("outputs_per_prompt", args.outputs_per_prompt)) if v is not None}
    if overrides:
        spec = ExperimentSpec(**{**spec.__dict__, **overrides})
    tagger = LexiconTagger.load(args.tags) if args.tags else None
    conditions = _words(args.conditions) or None
    with _open_model(args) as model:
        needs_corpus = any(c.bias != "none" for c in spec.select(conditions))
        if needs_corpus and not args.corpus:
            raise UsageError("bias conditions need --corpus")
        sents = _read_corpus(args.corpus, args.line_docs) if needs_corpus else []
        biases = build_biases(spec, model.vocab, sents, _words(args.exclude), conditions)
        records = run_experiment(spec, model, biases, tagger, conditions)
    corpus.write_text(args.out, dumps_records(records))
    per_cond = defaultdict(int)
    for r in records:
        per_cond[r["condition"]] += 1
    _emit(args, {"out": str(args.out), "records": len(records), "per_condition": dict(per_cond)},
          "\n".join(f"{c}: {n} records" for c, n in per_cond.items()) + f"\n-> {args.out}")
    return 0


def _record_tokens(rec: dict, unit: str) -> list[str]:
    text = rec.get("first_np") if unit == "np" and rec.get("first_np") is not None else rec.get("text", "")
    return corpus.tokenize(text or "")


def metrics_report(records: list[dict], measures=DEFAULT_MEASURES, unit: str = "np",
                   conditions: list[str] | None = None) -> dict:
    groups: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        groups[r["condition"]][r["topic"]].append(_record_tokens(r, unit))
    wanted = conditions or list(groups)
    report = {}
    for cond in wanted:
        if cond not in groups:
            raise DegenerateGroup(f"condition {cond!r} has no outputs")
        try:
            topics = score_topics(groups[cond], measures)
        except DegenerateGroup as e:
            raise DegenerateGroup(f"condition {cond!r}, {e}") from None
        mean = {m: sum(t[m] for t in topics.values()) / len(topics) for m in measures}
        report[cond] = {"topics": topics, "mean": mean}
    return report


def format_report(report: dict, measures) -> str:
    header = ["condition", "topic", *measures]
    rows = []
    for cond, res in report.items():
        for topic, vals in res["topics"].items():
            rows.append([cond, topic, *(f"{vals[m]:.4f}" for m in measures)])
        rows.append([cond, "(mean)", *(f"{res['mean'][m]:.4f}" for m in measures)])
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header), fmt(["-" * w for w in widths]), *map(fmt, rows)])


def cmd_metrics(args) -> int:
    measures = _words(args.measures) or list(DEFAULT_MEASURES)
    report = metrics_report(read_records(args.outputs), measures, args.unit, _words(args.conditions) or None)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(args, report, format_report(report, measures))
    return 0


def format_inspect(before, after) -> str:
    left = [f"{r.token!r:<18} {r.logprob_before:9.4f}" for r in before]
    right = [f"{r.token!r:<18} {r.logprob_after:9.4f}" for r in after]
    lines = [f"{'rank':>4}  {'original':<18} {'logp':>9}  | {'adjusted':<18} {'logp':>9}"]
    for i, (l, r) in enumerate(zip(left, right), 1):
        lines.append(f"{i:>4}  {l}  | {r}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    bias = read_bias(args.bias)
    with _open_model(args) as model:
        logits = model.next_logits(model.encode(args.prompt))
    before = inspect_bias(bias, logits, args.top, sort_by="original")
    after = inspect_bias(bias, logits, args.top, sort_by="adjusted")
    payload = {"prompt": args.prompt, "original": [r.__dict__ for r in before],
               "adjusted": [r.__dict__ for r in after]}
    _emit(args, payload, format_inspect(before, after))
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("--model", help="built-in n-gram model file")
    model_opts.add_argument("--bridge-cmd", help="command starting an external model server")
    model_opts.add_argument("--bridge-tcp", help="HOST:PORT of an external model server")
    model_opts.add_argument("--timeout", type=float, default=30.0, help="bridge response timeout (s)")

    corpus_opts = argparse.ArgumentParser(add_help=False)
    corpus_opts.add_argument("--line-docs", action="store_true", help="one document per line")

    p = argparse.ArgumentParser(prog="specdecode", description="Specificity reweighting for LM decoding.")
    sub = p.add_subparsers(dest="command", required=True)

    stats = sub.add_parser("stats", help="corpus statistics").add_subparsers(dest="sub", required=True)
    s = stats.add_parser("build", parents=[common, corpus_opts])
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", default="raw", help="raw | sentence")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_stats_build)
    s = stats.add_parser("cooc", parents=[common, corpus_opts])
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--context")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_stats_cooc)

    lm = sub.add_parser("lm", help="built-in model and bridge").add_subparsers(dest="sub", required=True)
    s = lm.add_parser("train", parents=[common, corpus_opts])
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--order", type=int, default=3)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--vocab-out")
    s.set_defaults(fn=cmd_lm_train)
    s = lm.add_parser("serve", parents=[common])
    s.add_argument("--model", required=True)
    s.set_defaults(fn=cmd_lm_serve)
    s = lm.add_parser("vocab", parents=[common, model_opts])
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_lm_vocab)

    bias = sub.add_parser("bias", help="bias tables").add_subparsers(dest="sub", required=True)
    s = bias.add_parser("niwf", parents=[common])
    s.add_argument("--counts", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=float, default=100.0)
    s.add_argument("--w0", type=float, default=math.exp(-5))
    s.add_argument("--w1", type=float, default=1.0)
    s.add_argument("--exclude", help="comma-separated words that get no boost")
    s.set_defaults(fn=cmd_bias_niwf)
    s = bias.add_parser("ppmi", parents=[common, corpus_opts])
    s.add_argument("--context")
    s.add_argument("--vocab", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--in", dest="inp")
    s.add_argument("--counts", help="sentence-occurrence count table")
    s.add_argument("--cooc", help="co-occurrence stats file")
    s.add_argument("--exclude")
    s.set_defaults(fn=cmd_bias_ppmi)

    s = sub.add_parser("spec", parents=[common], help="print the default experiment spec")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_spec)

    s = sub.add_parser("generate", parents=[common, model_opts, corpus_opts], help="run the experiment grid")
    s.add_argument("--spec", help="experiment spec JSON (default: built-in)")
    s.add_argument("--corpus", help="corpus for NIWF/PPMI statistics")
    s.add_argument("--out", required=True)
    s.add_argument("--tags", help="JSON word -> POS lexicon for noun-phrase extraction")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-new-tokens", type=int)
    s.add_argument("--outputs-per-prompt", type=int)
    s.add_argument("--conditions", help="comma-separated condition labels to run")
    s.add_argument("--exclude")
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("metrics", parents=[common], help="dist-n / ent-n report")
    s.add_argument("--outputs", required=True)
    s.add_argument("--measures", help=f"comma-separated (default {','.join(DEFAULT_MEASURES)})")
    s.add_argument("--unit", choices=["np", "full"], default="np")
    s.add_argument("--conditions")
    s.add_argument("--out", help="also write the JSON report here")
    s.set_defaults(fn=cmd_metrics)

    s = sub.add_parser("inspect", parents=[common, model_opts], help="compare original and adjusted ranks")
    s.add_argument("--bias", required=True)
    s.add_argument("--prompt", required=True)
    s.add_argument("--top", type=int, default=20)
    s.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (InputError, OSError) as e:
        print(f"specdecode: error: {e}", file=sys.stderr)
        return 2
    except SpecDecodeError as e:
        print(f"specdecode: error: {e}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
