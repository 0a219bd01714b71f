"""Binary model checkpoints.

Layout: a magic string, a little-endian u64 header length, a UTF-8 JSON
header, then raw little-endian float32 tensor data. The header carries the
model configuration, the vocabulary, and a tensor manifest (name and shape,
sorted by name); tensors follow in manifest order. Everything needed to
rebuild the model is inside except a vector store, which is its own artifact
and must be passed to ``load_checkpoint`` when the configuration says
``embedding: store``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from medregimen.embeddings import VectorStore
from medregimen.preprocess import Vocabulary
from medregimen.pgnet import ModelConfig, build_model

CHECKPOINT_MAGIC = b"MRCK1\0"


class CheckpointFormatError(ValueError):
    """The file is not a readable checkpoint, or disagrees with itself."""


def save_checkpoint(path: str | Path, model) -> None:
    state = model.state_dict()
    names = sorted(state)
    manifest = [{"name": n, "shape": list(state[n].shape)} for n in names]
    header = {
        "config": model.config.to_dict(),
        "vocabulary": model.vocab.to_dict(),
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(
                np.ascontiguousarray(
                    state[n].detach().cpu().numpy(), dtype="<f4"
                ).tobytes()
            )


def read_header(path: str | Path) -> dict:
    """Parse and return just the JSON header of a checkpoint."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
        raw = fh.read(8)
        if len(raw) != 8:
            raise CheckpointFormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<Q", raw)
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise CheckpointFormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"{path}: unreadable header: {exc}") from exc
    for key in ("config", "vocabulary", "tensors"):
        if key not in header:
            raise CheckpointFormatError(f"{path}: header missing {key!r}")
    return header


def load_checkpoint(path: str | Path, vector_store: VectorStore | None = None):
    """Rebuild the model a checkpoint describes and load its weights."""
    header = read_header(path)
    config = ModelConfig.from_dict(header["config"])
    vocab = Vocabulary.from_dict(header["vocabulary"])
    model = build_model(config, vocab, vector_store=vector_store)

    state = model.state_dict()
    manifest = header["tensors"]
    want = {n: list(t.shape) for n, t in state.items()}
    got = {entry["name"]: entry["shape"] for entry in manifest}
    if set(want) != set(got):
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        raise CheckpointFormatError(
            f"{path}: tensor set mismatch (missing {missing}, unexpected {extra})"
        )
    with open(path, "rb") as fh:
        fh.seek(len(CHECKPOINT_MAGIC))
        (hlen,) = struct.unpack("<Q", fh.read(8))
        fh.seek(len(CHECKPOINT_MAGIC) + 8 + hlen)
        loaded = {}
        for entry in manifest:
            name, shape = entry["name"], entry["shape"]
            if got[name] != want[name]:
                raise CheckpointFormatError(
                    f"{path}: tensor {name!r} has shape {got[name]}, model wants {want[name]}"
                )
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointFormatError(f"{path}: truncated data for {name!r}")
            arr = np.frombuffer(raw, dtype="<f4", count=count).reshape(shape)
            loaded[name] = torch.from_numpy(arr.copy())
        trailing = fh.read(1)
        if trailing:
            raise CheckpointFormatError(f"{path}: trailing bytes after tensors")
    model.load_state_dict(loaded)
    return model
