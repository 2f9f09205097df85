"""Command line entry point: ``evsumm <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import corpus, pipeline
from .callgraph import GraphError, parse_graph, pagerank


def _cmd_preprocess(args) -> int:
    filters = corpus.FilterConfig(min_comment=args.min_comment, max_comment=args.max_comment, max_code=args.max_code)
    kept, dropped = pipeline.preprocess_file(args.pairs, args.out, filters)
    summary = {"kept": len(kept), "dropped": dict(sorted(dropped.items()))}
    if kept:
        summary["stats"] = corpus.corpus_stats(kept)
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_train(args) -> int:
    run = pipeline.load_run_config(args.config, args.seed)
    pairs = corpus.load_pairs(args.pairs, run.filters)
    started = time.perf_counter()
    out = pipeline.train_from_pairs(pairs, run, args.out_dir, args.embeddings)
    hist = out.result.history
    print(json.dumps({
        "pairs": len(pairs),
        "split": [len(out.split.train), len(out.split.valid), len(out.split.test)],
        "code_vocab": len(out.code_vocab), "comment_vocab": len(out.comment_vocab),
        "epochs": len(hist),
        "final_train_perplexity": hist[-1].train_perplexity if hist else None,
        "best_epoch": out.result.best_epoch, "best_checkpoint": out.result.best_checkpoint,
        "seconds": round(time.perf_counter() - started, 2),
    }, indent=1))
    return 0


def _cmd_rank(args) -> int:
    graph = parse_graph(args.graph)
    raw = pagerank(graph, args.damping, args.tol, args.max_iter, normalize=False)
    ranks = raw.normalize()
    rows = [{"id": n, "label": graph.nodes[n].label, "kind": graph.nodes[n].kind,
             "out_degree": graph.out_degree(n), "predecessors": graph.predecessors(n),
             "rank": ranks[n], "raw_rank": raw[n]} for n in graph.node_ids]
    if args.json:
        payload = {"damping": args.damping, "iterations": raw.iterations, "nodes": rows}
        text = json.dumps(payload, indent=1)
        if args.json == "-":
            print(text)
        else:
            with open(args.json, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
    if args.json != "-":
        print(f"{'id':>4}  {'l_i':>3}  {'B_i':<14} {'rank':>8}  label")
        for r in rows:
            preds = "{" + ",".join(map(str, r["predecessors"])) + "}"
            print(f"{r['id']:>4}  {r['out_degree']:>3}  {preds:<14} {r['rank']:>8.4f}  {r['label']}")
    return 0


def _cmd_summarize(args) -> int:
    graph = parse_graph(args.graph)
    sources = pipeline.read_sources(args.pairs)
    results = pipeline.summarize_graph(graph, sources, args.checkpoint, args.method or None, args.beam,
                                       args.tie_rule, args.seed, args.min_block_rank, args.workers,
                                       args.damping)
    pipeline.write_summaries(results, args.out)
    for r in results:
        print(f"[{r.method_id}] {r.label}")
        for line in r.composed:
            print(f"    // {line}")
    return 0


def _cmd_evaluate(args) -> int:
    report = pipeline.run_evaluation(args.candidates, args.references, args.meteor_mode, args.bleu_aggregation,
                                     args.meteor_aggregation, args.all_meteor_modes, args.out)
    print(json.dumps(report.to_json(), indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evsumm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="tokenize and filter comment/code pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-comment", type=int, default=corpus.MIN_COMMENT)
    p.add_argument("--max-comment", type=int, default=corpus.MAX_COMMENT)
    p.add_argument("--max-code", type=int, default=corpus.MAX_CODE)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train the summarizer, one checkpoint per epoch")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--embeddings")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("rank", help="PageRank over a call graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--json", metavar="PATH", help="also write JSON ('-' for stdout only)")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("summarize", help="two-line summaries for app methods of a call graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint file or training directory")
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--tie-rule", choices=["lowest_id", "random"], default="lowest_id")
    p.add_argument("--min-block-rank", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--method", type=int, action="append", help="node id to summarize (repeatable)")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("evaluate", help="BLEU4 and METEOR for candidate summaries")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--meteor-mode", choices=["paper_literal", "standard"], default="paper_literal")
    p.add_argument("--bleu-aggregation", choices=["corpus", "mean"], default="corpus")
    p.add_argument("--meteor-aggregation", choices=["mean", "corpus"], default="mean")
    p.add_argument("--all-meteor-modes", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, GraphError) as exc:
        print(f"evsumm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
