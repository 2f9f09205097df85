import json
import math

import numpy as np
import pytest

from evsumm.model.checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from evsumm.model.config import ModelConfig, model_config_from_flat, read_flat_config
from evsumm.model.network import init_params
from evsumm.model.optim import AdamState
from evsumm.model.training import DivergenceError, dataset_loss, train
from evsumm.synthetic import encoded_memorization_corpus


@pytest.fixture(scope="module")
def corpus50():
    return encoded_memorization_corpus()


def _setup(corpus50, **kw):
    pairs, cv, mv = corpus50
    cfg = ModelConfig(code_vocab=len(cv), comment_vocab=len(mv), **kw)
    return pairs, cv, mv, cfg, init_params(cfg, np.random.default_rng(cfg.seed))


def test_loss_decreases_over_first_ten_epochs(corpus50):
    pairs, _, _, cfg, params = _setup(corpus50, epochs=10)
    losses = [h.train_loss for h in train(pairs, params, cfg).history]
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_zero_epochs_returns_initial_params(corpus50, tmp_path):
    pairs, cv, mv, cfg, params = _setup(corpus50, epochs=0)
    before = {k: v.copy() for k, v in params.items()}
    result = train(pairs, params, cfg, out_dir=tmp_path, code_vocab=cv, comment_vocab=mv)
    assert result.history == [] and result.best_checkpoint is None
    for k in before:
        np.testing.assert_array_equal(result.params[k], before[k])
    assert not list(tmp_path.glob("*.ckpt"))


def test_perplexity_is_exp_of_per_token_loss(corpus50):
    pairs, _, _, cfg, params = _setup(corpus50, epochs=1, dropout=0.0)
    rec = train(pairs, params, cfg).history[0]
    assert rec.train_perplexity == pytest.approx(math.exp(rec.train_loss / rec.train_tokens))
    total, count = dataset_loss(params, cfg, pairs)
    assert count == sum(len(p.comment_tokens) + 1 for p in pairs)
    assert math.exp(total / count) < rec.train_perplexity


def test_reproducible_trajectory(corpus50):
    runs = []
    for _ in range(2):
        pairs, _, _, cfg, params = _setup(corpus50, epochs=3, seed=5)
        runs.append([h.train_loss for h in train(pairs, params, cfg).history])
    assert runs[0] == runs[1]


def test_checkpoints_history_and_best(corpus50, tmp_path):
    pairs, cv, mv, cfg, params = _setup(corpus50, epochs=3)
    result = train(pairs[:40], params, cfg, pairs[40:], tmp_path, cv, mv)
    assert sorted(p.name for p in tmp_path.glob("epoch_*.ckpt")) == \
        ["epoch_0001.ckpt", "epoch_0002.ckpt", "epoch_0003.ckpt"]
    rows = [json.loads(line) for line in (tmp_path / "history.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2, 3]
    assert all(r["val_bleu4"] is not None for r in rows)
    best = max(rows, key=lambda r: (r["val_bleu4"], -r["epoch"]))
    assert result.best_epoch == best["epoch"]
    assert load_checkpoint(tmp_path / "best.ckpt").epoch == best["epoch"]
    # a second run into the same directory starts a fresh history
    train(pairs[:40], params, cfg.replace(epochs=1), pairs[40:], tmp_path, cv, mv)
    assert len((tmp_path / "history.jsonl").read_text().splitlines()) == 1


def test_divergence_reports_epoch(corpus50):
    pairs, _, _, cfg, params = _setup(corpus50, epochs=2)
    params["out_b"][:] = np.nan
    with pytest.raises(DivergenceError) as info:
        train(pairs, params, cfg)
    assert info.value.epoch == 1


def test_checkpoint_roundtrip(corpus50, tmp_path):
    pairs, cv, mv, cfg, params = _setup(corpus50)
    adam = AdamState.zeros_like(params)
    adam.step = 7
    adam.m["out_b"][:] = 0.25
    ckpt = Checkpoint(cfg, params, cv, mv, adam, epoch=4, val_bleu4=0.5, train_loss=12.0,
                      frozen_rows={"enc_emb": [4, 5]})
    save_checkpoint(ckpt, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.config == cfg and back.epoch == 4 and back.val_bleu4 == 0.5
    assert back.code_vocab.itos == cv.itos and back.comment_vocab.itos == mv.itos
    assert back.adam.step == 7 and back.frozen_rows == {"enc_emb": [4, 5]}
    for k in params:
        np.testing.assert_array_equal(back.params[k], params[k])
        np.testing.assert_array_equal(back.adam.m[k], adam.m[k])
    raw = (tmp_path / "a.ckpt").read_bytes()
    assert raw[:8] == b"EVSUMMCK"
    (tmp_path / "bad.ckpt").write_bytes(raw[:8] + b"\x02" + raw[9:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "long.ckpt").write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "long.ckpt")


def test_config_validation_and_flat_file(tmp_path):
    with pytest.raises(ValueError):
        ModelConfig(hidden_dim=0)
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ValueError):
        ModelConfig(clip_threshold=0)
    f = tmp_path / "run.cfg"
    f.write_text("# desk run\nhidden_dim = 16\ndropout=0.1\nfreeze_pretrained = true\n")
    cfg = model_config_from_flat(read_flat_config(f))
    assert cfg.hidden_dim == 16 and cfg.dropout == 0.1 and cfg.freeze_pretrained is True
