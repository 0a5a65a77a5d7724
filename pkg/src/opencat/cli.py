"""Batch driver: run chains over a corpus, generate synthetic data, or
run the joint-distribution (Geweke) check.

Outputs (infer mode, under --out):
  assignments.tsv   doc_id <TAB> category_id <TAB> known|new
  trace_chain<i>.csv per-iteration K, M, gamma, alpha, log_joint
  k_histogram.tsv   K <TAB> relative frequency (pooled, post burn-in)
  metrics.json      when --truth is given (scored over unlabeled docs)
  config.txt        effective configuration echo
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import generative, metrics
from .corpus import CorpusFormatError, ground_truth_partition, load_corpus, save_corpus
from .sampler import ChainConfig, assign_documents, document_votes, run_chain
from .state import HyperParams

__all__ = ["main", "build_parser"]

DEFAULTS = dict(topics=128, iters=3000, zeta=1.0, beta=0.01,
                a_gamma=1.0, b_gamma=0.001, a_alpha=5.0, b_alpha=0.1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="opencat",
        description="Semi-supervised nonparametric topic model: classify "
                    "documents into known categories and discover new ones.",
    )
    p.add_argument("--mode", choices=["infer", "generate", "geweke"], required=True)
    p.add_argument("--corpus", help="bow file (infer mode)")
    p.add_argument("--labels", help="labels file for the known categories")
    p.add_argument("--truth", help="ground-truth file; enables metrics.json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--topics", type=int, default=DEFAULTS["topics"], help="number of topics L")
    p.add_argument("--iters", type=int, default=DEFAULTS["iters"], help="Gibbs iterations per chain")
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zeta", type=float, default=DEFAULTS["zeta"], help="symmetric category-topic prior")
    p.add_argument("--beta", type=float, default=DEFAULTS["beta"], help="symmetric topic-word prior")
    p.add_argument("--a-gamma", type=float, default=DEFAULTS["a_gamma"])
    p.add_argument("--b-gamma", type=float, default=DEFAULTS["b_gamma"])
    p.add_argument("--a-alpha", type=float, default=DEFAULTS["a_alpha"])
    p.add_argument("--b-alpha", type=float, default=DEFAULTS["b_alpha"])
    p.add_argument("--audit-every", type=int, default=None,
                   help="verify count-table consistency every N sweeps")
    p.add_argument("--average-votes", action="store_true",
                   help="vote with token counts accumulated over post-burn-in "
                        "sweeps instead of the last sample (new-category ids "
                        "are not aligned across sweeps; see README)")
    # generate / geweke mode
    p.add_argument("--gen-docs", type=int, default=100)
    p.add_argument("--gen-tokens", type=int, default=50)
    p.add_argument("--gen-categories", type=int, default=0,
                   help="planted categories (0 = free franchise seating)")
    p.add_argument("--gen-known", type=int, default=0,
                   help="how many planted categories get labels")
    p.add_argument("--label-fraction", type=float, default=0.4)
    p.add_argument("--separation", type=float, default=0.0,
                   help="if > 0, planted categories get peaked topic "
                        "distributions with this mass on their own topic")
    p.add_argument("--fixed-gamma", type=float, default=None)
    p.add_argument("--fixed-alpha", type=float, default=None)
    p.add_argument("--geweke-samples", type=int, default=5000)
    p.add_argument("--geweke-thin", type=int, default=2)
    return p


def _hypers(args, vocab_size: int) -> HyperParams:
    return HyperParams.create(
        n_topics=args.topics, vocab_size=vocab_size,
        zeta=args.zeta, beta=args.beta,
        a_gamma=args.a_gamma, b_gamma=args.b_gamma,
        a_alpha=args.a_alpha, b_alpha=args.b_alpha,
    )


def _echo_config(args, out_dir: Path):
    lines = [f"{key} = {value}" for key, value in sorted(vars(args).items())]
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_one_chain(payload):
    corpus, hypers, config, average = payload
    votes_acc = {}

    def collect(it, state):
        if not average or it <= config.burn_in:
            return
        for d in range(state.n_docs):
            v = document_votes(state, d)
            acc = votes_acc.setdefault(d, np.zeros(len(v), dtype=np.int64))
            if len(acc) < len(v):
                acc = np.concatenate([acc, np.zeros(len(v) - len(acc), dtype=np.int64)])
                votes_acc[d] = acc
            acc[: len(v)] += v

    state, trace = run_chain(corpus, hypers, config, on_sweep=collect if average else None)
    assignment = assign_documents(state)
    if average:
        m = state.dish_tables[: state.n_dishes]
        for d, acc in votes_acc.items():
            if state.clamps[d] >= 0 or acc.sum() == 0:
                continue
            padded = np.zeros(max(len(acc), len(m)), dtype=np.int64)
            padded[: len(acc)] = acc
            order = sorted(range(len(padded)),
                           key=lambda k: (-padded[k], -(m[k] if k < len(m) else 0), k))
            assignment[d] = order[0]
    return state, trace, assignment


def _infer(args, out_dir: Path) -> int:
    if not args.corpus:
        raise SystemExit("error: --corpus is required in infer mode")
    corpus = load_corpus(args.corpus, labels_path=args.labels)
    hypers = _hypers(args, corpus.vocab_size)
    payloads = [
        (corpus, hypers,
         ChainConfig(max_iter=args.iters, burn_in=args.burn_in,
                     seed=args.seed + i, audit_every=args.audit_every),
         args.average_votes)
        for i in range(args.chains)
    ]
    if args.chains > 1:
        with ProcessPoolExecutor(max_workers=min(args.chains, 8)) as pool:
            results = list(pool.map(_run_one_chain, payloads))
    else:
        results = [_run_one_chain(payloads[0])]

    for i, (_, trace, _) in enumerate(results):
        trace.write_csv(out_dir / f"trace_chain{i}.csv")

    hist = metrics.k_histogram([trace for _, trace, _ in results], burn_in=args.burn_in)
    with open(out_dir / "k_histogram.tsv", "w", encoding="utf-8") as fh:
        for k, freq in hist.items():
            fh.write(f"{k}\t{freq!r}\n")

    # report the chain with the best final log-joint
    best = max(range(len(results)),
               key=lambda i: (results[i][1].log_joint[-1], -i))
    state, _, assignment = results[best]
    n_known = corpus.n_known
    with open(out_dir / "assignments.tsv", "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            cat = int(assignment[doc.doc_id])
            kind = "known" if cat < n_known else "new"
            fh.write(f"{doc.doc_id}\t{cat}\t{kind}\n")

    if args.truth:
        truth = ground_truth_partition(corpus, args.truth)
        unlabeled = corpus.unlabeled_ids()
        pred_u = {d: int(assignment[d]) for d in unlabeled}
        truth_u = {d: truth[d] for d in unlabeled}
        report = metrics.MetricReport.evaluate(pred_u, truth_u, range(n_known))
        (out_dir / "metrics.json").write_text(report.to_json(), encoding="utf-8")
    return 0


def _generate(args, out_dir: Path) -> int:
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    vocab_size = max(args.topics * 5, 10)
    hypers = _hypers(args, vocab_size)
    planted = None
    topic_mix = None
    if args.gen_categories > 0:
        planted = [d % args.gen_categories for d in range(args.gen_docs)]
        if args.separation > 0:
            L = args.topics
            topic_mix = np.full((args.gen_categories, L),
                                (1.0 - args.separation) / (L - 1))
            for k in range(args.gen_categories):
                topic_mix[k, k % L] = args.separation
    spec = generative.GenSpec(
        n_docs=args.gen_docs, doc_length=args.gen_tokens, hypers=hypers,
        fixed_gamma=args.fixed_gamma, fixed_alpha=args.fixed_alpha,
        planted_labels=planted, topic_mix=topic_mix,
    )
    synth = generative.forward_sample(spec, rng)
    corpus = synth.corpus
    if args.gen_known > 0:
        corpus = generative.label_split(synth, range(args.gen_known),
                                        args.label_fraction, rng)
    save_corpus(corpus, out_dir / "corpus.bow",
                labels_path=(out_dir / "labels.txt") if args.gen_known else None,
                vocab_path=out_dir / "vocab.txt")
    names = {k: f"cat{k}" for k in set(synth.truth.values())}
    corpus_mod.save_truth(synth.truth, out_dir / "truth.txt", id_to_name=names)
    return 0


def _geweke(args, out_dir: Path) -> int:
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    vocab_size = max(args.topics * 2, 3)
    hypers = _hypers(args, vocab_size)
    spec = generative.GenSpec(
        n_docs=args.gen_docs, doc_length=args.gen_tokens, hypers=hypers,
        fixed_gamma=args.fixed_gamma, fixed_alpha=args.fixed_alpha,
    )
    marginal = generative.geweke_marginal_run(spec, args.geweke_samples, rng)
    successive = generative.geweke_successive_run(
        spec, args.geweke_samples, args.geweke_thin, rng)
    pvals = generative.geweke_compare(marginal, successive)
    with open(out_dir / "geweke_report.tsv", "w", encoding="utf-8") as fh:
        fh.write("statistic\tks_pvalue\n")
        for name, p in pvals.items():
            fh.write(f"{name}\t{p!r}\n")
    worst = min(pvals.values())
    print(f"geweke: worst KS p-value {worst:.4g} "
          f"({'pass' if worst > 0.01 else 'FAIL'} at 0.01)")
    return 0 if worst > 0.01 else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        _echo_config(args, out_dir)
        if args.mode == "infer":
            return _infer(args, out_dir)
        if args.mode == "generate":
            return _generate(args, out_dir)
        return _geweke(args, out_dir)
    except (CorpusFormatError, OSError, ValueError, SystemExit) as exc:
        if isinstance(exc, SystemExit):
            if exc.code and not isinstance(exc.code, int):
                print(exc.code, file=sys.stderr)
                return 2
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
