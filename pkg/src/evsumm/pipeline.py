"""End-to-end orchestration: preprocess, train, rank, summarize, evaluate."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus, metrics
from .callgraph import CallGraph, RankVector, pagerank, select_context_block, synthesize_dummy
from .embeddings import embedding_matrix, load_vectors
from .model.checkpoint import Checkpoint, load_checkpoint
from .model.config import ModelConfig, env_seed, model_config_from_flat, read_flat_config
from .model.decoding import beam_search, model_step
from .model.network import encode as encode_source, initial_state, init_params
from .model.training import TrainResult, train
from .tokenizer import TokenSequence, tokenize

log = logging.getLogger(__name__)


class PipelineError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    filters: corpus.FilterConfig = field(default_factory=corpus.FilterConfig)
    vocab_max_size: int | None = None
    vocab_min_freq: int = 1
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    tie_rule: str = "lowest_id"
    min_block_rank: float | None = None
    meteor_mode: str = "paper_literal"
    bleu_aggregation: str = "corpus"
    seed: int = 0


_RUN_KEYS = {
    "min_comment": ("filters", int), "max_comment": ("filters", int), "max_code": ("filters", int),
    "ascii_ratio": ("filters", float),
    "vocab_max_size": (None, int), "vocab_min_freq": (None, int), "tie_rule": (None, str),
    "min_block_rank": (None, float), "meteor_mode": (None, str), "bleu_aggregation": (None, str),
    "seed": (None, int),
}


def load_run_config(path=None, seed: int | None = None) -> RunConfig:
    """Flat key=value file -> RunConfig; ``EVSUMM_SEED`` beats the file, ``seed`` beats both."""
    run = RunConfig()
    values = read_flat_config(path) if path else {}
    for key, raw in values.items():
        if key in _RUN_KEYS:
            target, kind = _RUN_KEYS[key]
            value = None if raw.lower() in ("", "none", "off", "disabled") else kind(raw)
            setattr(run.filters if target == "filters" else run, key, value)
    run.model = model_config_from_flat({k: v for k, v in values.items() if k != "seed"})
    run.seed = env_seed(run.seed)
    if seed is not None:
        run.seed = seed
    run.model = run.model.replace(seed=run.seed, max_code_len=run.filters.max_code,
                                  max_comment_len=run.filters.max_comment)
    return run


# --- Step 1/2: preprocessing and training ------------------------------------

def preprocess_file(pairs_path, out_path, filters: corpus.FilterConfig | None = None):
    kept, dropped = corpus.preprocess(corpus.read_raw_pairs(pairs_path), filters)
    corpus.write_preprocessed(kept, out_path)
    return kept, dropped


@dataclass
class TrainingRun:
    result: TrainResult
    split: corpus.SplitAssignment
    code_vocab: corpus.Vocabulary
    comment_vocab: corpus.Vocabulary
    config: ModelConfig


def train_from_pairs(pairs: Sequence[corpus.PairRecord], run: RunConfig, out_dir=None,
                     embeddings_path=None) -> TrainingRun:
    if not pairs:
        raise PipelineError("no pairs left after filtering")
    split = corpus.split_dataset([p.id for p in pairs], run.split_ratios, run.seed)
    by_id = {p.id: p for p in pairs}
    train_pairs = [by_id[i] for i in split.train]
    valid_pairs = [by_id[i] for i in split.valid]
    code_vocab, comment_vocab = corpus.build_vocabs(train_pairs, run.vocab_max_size, run.vocab_min_freq)
    corpus.encode_pairs(pairs, code_vocab, comment_vocab, run.filters.max_code, run.filters.max_comment)
    cfg = run.model.replace(code_vocab=len(code_vocab), comment_vocab=len(comment_vocab))
    rng = np.random.default_rng(cfg.seed)
    enc_emb = dec_emb = None
    frozen = {}
    if embeddings_path is not None:
        table = load_vectors(embeddings_path)
        if table.dimension != cfg.embedding_dim:
            log.info("embedding_dim set to %d from %s", table.dimension, embeddings_path)
            cfg = cfg.replace(embedding_dim=table.dimension)
        enc_emb, enc_pre = embedding_matrix(code_vocab.itos, table, rng)
        dec_emb, dec_pre = embedding_matrix(comment_vocab.itos, table, rng)
        if cfg.freeze_pretrained:
            frozen = {"enc_emb": enc_pre, "dec_emb": dec_pre}
    params = init_params(cfg, rng, enc_emb, dec_emb)
    result = train(train_pairs, params, cfg, valid_pairs, out_dir, code_vocab, comment_vocab, frozen or None)
    if out_dir is not None:
        Path(out_dir, "split.json").write_text(json.dumps(
            {"seed": split.seed, "train": split.train, "valid": split.valid, "test": split.test}, indent=1))
    return TrainingRun(result, split, code_vocab, comment_vocab, cfg)


# --- Step 5: summaries --------------------------------------------------------

def resolve_checkpoint(path) -> Path:
    """A directory means its best-validation checkpoint."""
    p = Path(path)
    if p.is_dir():
        best = p / "best.ckpt"
        if not best.exists():
            raise PipelineError(f"{p} has no best.ckpt")
        return best
    return p


class Summarizer:
    """Beam-decodes comments for token sequences with a fixed checkpoint."""

    def __init__(self, ckpt: Checkpoint, beam_width: int | None = None, min_len: int = 1):
        cfg = ckpt.config
        if cfg.code_vocab != len(ckpt.code_vocab) or cfg.comment_vocab != len(ckpt.comment_vocab):
            raise PipelineError("checkpoint vocabulary does not match its model config")
        if ckpt.params["enc_emb"].shape[0] != len(ckpt.code_vocab):
            raise PipelineError("checkpoint embedding rows do not match the code vocabulary")
        self.ckpt = ckpt
        self.beam_width = beam_width or cfg.beam_width
        self.min_len = min_len
        self.trace: list[tuple[str, ...]] = []

    @classmethod
    def from_path(cls, path, **kwargs) -> "Summarizer":
        return cls(load_checkpoint(resolve_checkpoint(path)), **kwargs)

    def summarize_method(self, tokens: TokenSequence | Sequence[str]) -> TokenSequence:
        cfg = self.ckpt.config
        toks = list(tokens)
        if not toks:
            raise PipelineError("cannot summarize an empty token sequence")
        if len(toks) > cfg.max_code_len:
            log.warning("method has %d tokens; truncating to %d", len(toks), cfg.max_code_len)
            toks = toks[: cfg.max_code_len]
        self.trace.append(tuple(toks))
        ids = corpus.encode(toks, self.ckpt.code_vocab, cfg.max_code_len)
        enc = encode_source(ids, self.ckpt.params, cfg, "infer")
        hyp = beam_search(model_step(self.ckpt.params, enc), initial_state(enc, self.ckpt.params),
                          self.beam_width, cfg.max_comment_len, min_len=self.min_len,
                          length_normalize=cfg.length_normalize)
        return TokenSequence(tuple(self.ckpt.comment_vocab.token(i) for i in hyp.tokens), "comment")


@dataclass
class ContextBlock:
    node_id: int
    label: str
    kind: str
    rank: float
    block_summary: TokenSequence
    source: dict


@dataclass
class SummaryResult:
    method_id: int
    label: str
    method_summary: TokenSequence
    context_block: ContextBlock | None
    provenance: list[dict]
    inputs: list[tuple[str, ...]]

    @property
    def composed(self) -> list[str]:
        lines = [self.method_summary.text()]
        if self.context_block is not None:
            lines.append(self.context_block.block_summary.text())
        return lines

    def to_record(self) -> dict:
        blk = self.context_block
        return {
            "method_id": self.method_id,
            "label": self.label,
            "summary_lines": self.composed,
            "context_block_id": blk.node_id if blk else None,
            "context_block_kind": blk.kind if blk else None,
            "context_block_label": blk.label if blk else None,
            "context_block_rank": blk.rank if blk else None,
            "provenance": self.provenance,
            "input_tokens": [list(t) for t in self.inputs],
        }


def read_sources(path) -> dict[str, TokenSequence]:
    """Pair id -> code tokens, from a raw or a preprocessed pairs file."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if "code_tokens" in row:
                out[str(row["id"])] = TokenSequence(tuple(row["code_tokens"]), "code")
            elif "code" in row:
                out[str(row["id"])] = tokenize(row["code"], "code")
            else:
                raise PipelineError(f"{path}: row {row.get('id')!r} has no code")
    return out


def _source_tokens(graph: CallGraph, node_id: int, sources: dict[str, TokenSequence]):
    node = graph.nodes[node_id]
    if node.kind == "app" and node.source_ref is not None and node.source_ref in sources:
        return sources[node.source_ref], {"line_source": "method_source", "node_id": node_id,
                                          "pair_id": node.source_ref}
    return None, None


def compose_summary(graph: CallGraph, ranks: RankVector, target: int, summarizer: Summarizer,
                    sources: dict[str, TokenSequence], tie_rule: str = "lowest_id", seed: int = 0,
                    min_block_rank: float | None = None) -> SummaryResult:
    if target not in graph.nodes:
        raise PipelineError(f"unknown node {target}")
    tokens, prov = _source_tokens(graph, target, sources)
    if tokens is None:
        raise PipelineError(f"node {target} ({graph.nodes[target].label}) has no resolvable source")
    inputs = [tuple(tokens)]
    line1 = summarizer.summarize_method(tokens)
    provenance = [prov]
    block = None
    block_id = select_context_block(graph, ranks, target, tie_rule, seed)
    if block_id is not None and min_block_rank is not None and ranks[block_id] < min_block_rank:
        block_id = None
    if block_id is not None:
        node = graph.nodes[block_id]
        block_tokens, block_prov = _source_tokens(graph, block_id, sources)
        if block_tokens is None:
            block_tokens = synthesize_dummy(node.label)
            block_prov = {"line_source": "dummy_method", "node_id": block_id, "label": node.label}
        inputs.append(tuple(block_tokens))
        block = ContextBlock(block_id, node.label, node.kind, ranks[block_id],
                             summarizer.summarize_method(block_tokens), block_prov)
        provenance.append(block_prov)
    return SummaryResult(target, graph.nodes[target].label, line1, block, provenance, inputs)


def summarize_graph(graph: CallGraph, sources: dict[str, TokenSequence], checkpoint, targets=None,
                    beam_width: int | None = None, tie_rule: str = "lowest_id", seed: int = 0,
                    min_block_rank: float | None = None, workers: int = 1,
                    damping: float = 0.85) -> list[SummaryResult]:
    """Summaries for every app node with a source (or just ``targets``)."""
    ranks = pagerank(graph, damping)
    if targets is None:
        targets = [n for n in graph.node_ids
                   if graph.nodes[n].kind == "app" and graph.nodes[n].source_ref in sources]
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(resolve_checkpoint(checkpoint))

    def one(target):
        return compose_summary(graph, ranks, target, Summarizer(ckpt, beam_width), sources, tie_rule, seed,
                               min_block_rank)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, targets))
    return [one(t) for t in targets]


def write_summaries(results: Sequence[SummaryResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record(), ensure_ascii=False) + "\n")


# --- evaluation -----------------------------------------------------------------

_TEXT_KEYS = ("text", "summary", "comment")


def read_texts(path) -> dict[str, str]:
    """id -> text from JSON Lines; ``summary_lines`` contributes its first line."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            key = row.get("id", row.get("method_id"))
            if key is None:
                raise PipelineError(f"{path}:{lineno}: no id")
            text = next((row[k] for k in _TEXT_KEYS if k in row), None)
            if text is None and row.get("summary_lines"):
                text = row["summary_lines"][0]
            if text is None:
                raise PipelineError(f"{path}:{lineno}: no text field")
            out[str(key)] = text
    return out


def run_evaluation(candidates_path, references_path, meteor_mode: str = "paper_literal",
                   bleu_aggregation: str = "corpus", meteor_aggregation: str = "mean",
                   all_meteor_modes: bool = False, out_path=None) -> metrics.MetricReport:
    cands = read_texts(candidates_path)
    refs = read_texts(references_path)
    if not cands or not refs:
        raise PipelineError("candidates and references must both be non-empty")
    missing = sorted(set(cands) ^ set(refs))
    if missing:
        raise PipelineError(f"ids present in only one file: {missing}")
    ids = sorted(refs)
    report = metrics.evaluate_pairs(
        ids, [list(tokenize(cands[i], "comment").tokens) for i in ids],
        [list(tokenize(refs[i], "comment").tokens) for i in ids],
        meteor_mode, bleu_aggregation, meteor_aggregation, all_meteor_modes)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report.to_json(), indent=1) + "\n", encoding="utf-8")
    return report
