"""Binary checkpoint container (format version 1).

All integers little-endian::

    magic        8 bytes   b"EVSUMMCK"
    version      uint32    1
    header_len   uint64
    header       UTF-8 JSON: config, epoch, val_bleu4, train_loss,
                 adam_step, code_vocab, comment_vocab, frozen_rows,
                 tensors (names in storage order)
    per tensor, in header order:
        ndim     uint32
        dims     ndim x uint64
        values   prod(dims) x float64, row-major

Tensor names are the model parameter names, then ``adam.m.<name>`` and
``adam.v.<name>`` for the optimizer moments.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import Vocabulary
from .config import ModelConfig
from .optim import AdamState

MAGIC = b"EVSUMMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    code_vocab: Vocabulary
    comment_vocab: Vocabulary
    adam: AdamState | None = None
    epoch: int = 0
    val_bleu4: float | None = None
    train_loss: float | None = None
    frozen_rows: dict[str, list[int]] = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    tensors = dict(ckpt.params)
    if ckpt.adam is not None:
        tensors.update({f"adam.m.{k}": v for k, v in ckpt.adam.m.items()})
        tensors.update({f"adam.v.{k}": v for k, v in ckpt.adam.v.items()})
    header = {
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "val_bleu4": ckpt.val_bleu4,
        "train_loss": ckpt.train_loss,
        "adam_step": ckpt.adam.step if ckpt.adam is not None else None,
        "code_vocab": ckpt.code_vocab.itos,
        "comment_vocab": ckpt.comment_vocab.itos,
        "frozen_rows": ckpt.frozen_rows,
        "tensors": list(tensors),
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for name in header["tensors"]:
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 8 + 12
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    tensors = {}
    for name in header["tensors"]:
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * count
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    adam = None
    if header.get("adam_step") is not None:
        adam = AdamState({k: tensors[f"adam.m.{k}"] for k in params},
                         {k: tensors[f"adam.v.{k}"] for k in params}, int(header["adam_step"]))
    return Checkpoint(ModelConfig.from_dict(header["config"]), params, Vocabulary(header["code_vocab"]),
                      Vocabulary(header["comment_vocab"]), adam, header["epoch"], header["val_bleu4"],
                      header["train_loss"], header.get("frozen_rows") or {})
