"""Mini-batch training: loss -> backward -> clip -> Adam, one checkpoint per epoch."""
from __future__ import annotations

import json
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import metrics
from ..corpus import PairRecord, Vocabulary
from .checkpoint import Checkpoint, save_checkpoint
from .config import ModelConfig
from .decoding import greedy_decode
from .network import Batch, backward, forward, loss
from .optim import AdamState, adam_step, clip_gradients, global_norm

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite training loss {value} in epoch {epoch}")
        self.epoch = epoch


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_tokens: int
    grad_norm: float
    val_bleu4: float | None = None
    checkpoint: str | None = None

    @property
    def train_perplexity(self) -> float:
        return metrics.perplexity(self.train_loss, self.train_tokens)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    adam: AdamState
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_checkpoint: str | None = None


def dataset_loss(params, cfg: ModelConfig, pairs: Sequence[PairRecord], batch_size: int = 64) -> tuple[float, int]:
    """Inference-mode summed loss and target-token count."""
    total, count = 0.0, 0
    for start in range(0, len(pairs), batch_size):
        l, n = loss(params, cfg, Batch.from_pairs(pairs[start:start + batch_size]), train=False)
        total += l
        count += n
    return total, count


def validation_bleu(params, cfg, pairs: Sequence[PairRecord], comment_vocab: Vocabulary) -> float:
    cands = [comment_vocab.decode(greedy_decode(p.code_ids, params, cfg, min_len=1), strip=False) for p in pairs]
    refs = [list(p.comment_tokens.tokens) for p in pairs]
    return metrics.bleu4(cands, refs)


def train(train_pairs: Sequence[PairRecord], params: dict[str, np.ndarray], cfg: ModelConfig,
          valid_pairs: Sequence[PairRecord] = (), out_dir=None, code_vocab: Vocabulary | None = None,
          comment_vocab: Vocabulary | None = None, frozen: dict[str, np.ndarray] | None = None,
          adam: AdamState | None = None, epoch_callback=None) -> TrainResult:
    """Train in place on ``params``.

    Batches are reshuffled each epoch with seed ``cfg.seed + epoch``; dropout
    masks come from the same generator.  When ``out_dir`` is given, each
    epoch writes ``epoch_XXXX.ckpt`` and a line in ``history.jsonl``, and the
    epoch with the highest validation BLEU4 (lowest training loss when there
    is no validation set) is copied to ``best.ckpt``.
    """
    if not train_pairs:
        raise ValueError("empty training split")
    adam = adam or AdamState.zeros_like(params)
    result = TrainResult(params, adam)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        if code_vocab is None or comment_vocab is None:
            raise ValueError("writing checkpoints needs both vocabularies")
        out.mkdir(parents=True, exist_ok=True)
        code_vocab.save(out / "code_vocab.txt")
        comment_vocab.save(out / "comment_vocab.txt")
        (out / "history.jsonl").write_text("", encoding="utf-8")
    best_key = None
    frozen_rows = {k: np.flatnonzero(v).tolist() for k, v in (frozen or {}).items()}
    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng(cfg.seed + epoch)
        order = rng.permutation(len(train_pairs))
        epoch_loss, epoch_tokens, norms = 0.0, 0, []
        for start in range(0, len(order), cfg.batch_size):
            batch = Batch.from_pairs([train_pairs[i] for i in order[start:start + cfg.batch_size]])
            total, count, cache = forward(params, cfg, batch, train=True, rng=rng)
            if not math.isfinite(total):
                raise DivergenceError(epoch, total)
            try:
                grads = backward(params, cfg, cache)
            except FloatingPointError as exc:
                raise DivergenceError(epoch, float("nan")) from exc
            norms.append(global_norm(grads))
            grads = clip_gradients(grads, cfg.clip_threshold)
            adam_step(params, grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, frozen)
            epoch_loss += total
            epoch_tokens += count
        rec = EpochRecord(epoch, epoch_loss, epoch_tokens, max(norms))
        if valid_pairs and comment_vocab is not None:
            rec.val_bleu4 = validation_bleu(params, cfg, valid_pairs, comment_vocab)
        key = (rec.val_bleu4, 0.0) if rec.val_bleu4 is not None else (0.0, -rec.train_loss)
        improved = best_key is None or key > best_key
        if improved:
            best_key = key
            result.best_epoch = epoch
        if out is not None:
            path = out / f"epoch_{epoch:04d}.ckpt"
            save_checkpoint(Checkpoint(cfg, params, code_vocab, comment_vocab, adam, epoch, rec.val_bleu4,
                                       rec.train_loss, frozen_rows), path)
            rec.checkpoint = str(path)
            if improved:
                shutil.copyfile(path, out / "best.ckpt")
                result.best_checkpoint = str(out / "best.ckpt")
            with open(out / "history.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"epoch": epoch, "train_loss": rec.train_loss, "train_tokens": rec.train_tokens,
                                     "train_perplexity": rec.train_perplexity, "grad_norm": rec.grad_norm,
                                     "val_bleu4": rec.val_bleu4, "checkpoint": path.name}) + "\n")
        log.info("epoch %d loss/token %.4f val_bleu4 %s", epoch, epoch_loss / max(epoch_tokens, 1), rec.val_bleu4)
        result.history.append(rec)
        if epoch_callback is not None and epoch_callback(rec) is False:
            break
    return result
