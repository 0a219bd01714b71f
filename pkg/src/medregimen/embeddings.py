"""Token embedding providers: trainable lookup, precomputed contextual, pseudo.

A provider maps a token sequence (plus a stable sequence key) to a P x d
float tensor. Three implementations:

- ``LookupEmbedding``: a trainable table over the vocabulary, the classic
  word-vector path.
- ``MixedContextualEmbedding``: frozen per-layer contextual vectors read from
  a :class:`VectorStore` file, combined through a learned softmax over layers
  and a learned scalar scale. This is how precomputed deep-LM activations
  (several layers per token) plug in without running the language model here;
  whatever produced the store handles its own tokenizer and sub-word pooling.
- ``PseudoContextualEmbedding``: a deterministic stand-in for contextual
  vectors, hashing each token together with its +-2 neighbor window to a
  unit-norm vector. No parameters; exists so contextual plumbing is testable
  without big checkpoint files.

The vector store is a little-endian binary file:

    magic b"MRVS1\\0" | u32 dim | u32 layers | u32 count
    count records, sorted by (key, position):
        u16 key length | key utf-8 | u32 position | layers*dim float32
    plain-text index, one line per record: "key<TAB>position<TAB>byte offset"

Records are keyed (sequence key, token position); a provider asks for every
position of a sequence, so a missing record is a hard error naming both.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

from medregimen.preprocess import Vocabulary

STORE_MAGIC = b"MRVS1\0"


class StoreKeyError(KeyError):
    """A vector store has no record for a requested (key, position)."""


class EmbeddingProvider(nn.Module):
    """Base: subclasses set ``dim`` and implement :meth:`embed_sequence`."""

    dim: int

    def __init__(self):
        super().__init__()
        # Tracks dtype/device through Module.to() even with no parameters.
        self.register_buffer("_anchor", torch.zeros(1), persistent=False)

    @property
    def _dtype(self) -> torch.dtype:
        return self._anchor.dtype

    def embed_sequence(self, tokens: list[str], key: str) -> torch.Tensor:
        raise NotImplementedError

    def embed_batch(
        self, token_lists: list[list[str]], keys: list[str]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Pad sequences into (B, Pmax, d); also returns the lengths."""
        if not token_lists:
            raise ValueError("cannot embed an empty batch")
        lengths = torch.tensor([len(t) for t in token_lists], dtype=torch.long)
        if int(lengths.min()) == 0:
            raise ValueError("cannot embed an empty token sequence")
        out = self._anchor.new_zeros(len(token_lists), int(lengths.max()), self.dim)
        for i, (tokens, key) in enumerate(zip(token_lists, keys)):
            out[i, : len(tokens)] = self.embed_sequence(tokens, key)
        return out, lengths


class LookupEmbedding(EmbeddingProvider):
    """Trainable per-word vectors over a fixed vocabulary; OOV shares <unk>."""

    def __init__(self, vocab: Vocabulary, dim: int = 128):
        super().__init__()
        if dim < 1:
            raise ValueError(f"embedding dim must be positive, got {dim}")
        self.vocab = vocab
        self.dim = dim
        self.table = nn.Embedding(len(vocab), dim)

    def embed_ids(self, ids: torch.Tensor) -> torch.Tensor:
        return self.table(ids)

    def embed_sequence(self, tokens: list[str], key: str = "") -> torch.Tensor:
        ids = torch.tensor([self.vocab.id(t) for t in tokens], dtype=torch.long)
        return self.table(ids)

    def embed_batch(self, token_lists, keys=None):
        if not token_lists:
            raise ValueError("cannot embed an empty batch")
        lengths = torch.tensor([len(t) for t in token_lists], dtype=torch.long)
        if int(lengths.min()) == 0:
            raise ValueError("cannot embed an empty token sequence")
        ids = torch.zeros(len(token_lists), int(lengths.max()), dtype=torch.long)
        for i, tokens in enumerate(token_lists):
            ids[i, : len(tokens)] = torch.tensor(
                [self.vocab.id(t) for t in tokens], dtype=torch.long
            )
        return self.table(ids), lengths


class VectorStore:
    """Per-(sequence, position) stacks of L frozen d-dim layer vectors."""

    def __init__(self, dim: int, layers: int, records: dict[tuple[str, int], np.ndarray]):
        if dim < 1 or layers < 1:
            raise ValueError("store dim and layers must be positive")
        self.dim = dim
        self.layers = layers
        self.records: dict[tuple[str, int], np.ndarray] = {}
        for (key, position), array in records.items():
            array = np.asarray(array, dtype=np.float32)
            if array.shape != (layers, dim):
                raise ValueError(
                    f"record {key!r}@{position} has shape {array.shape}, "
                    f"expected {(layers, dim)}"
                )
            self.records[(key, position)] = array

    def get(self, key: str, position: int) -> np.ndarray:
        try:
            return self.records[(key, position)]
        except KeyError:
            raise StoreKeyError(
                f"no stored vectors for sequence {key!r} position {position}"
            ) from None

    def __len__(self) -> int:
        return len(self.records)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        items = sorted(self.records.items(), key=lambda kv: kv[0])
        body = bytearray()
        body += STORE_MAGIC
        body += struct.pack("<III", self.dim, self.layers, len(items))
        index_lines = []
        for (key, position), array in items:
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"store key too long: {key[:40]!r}...")
            index_lines.append(f"{key}\t{position}\t{len(body)}")
            body += struct.pack("<H", len(raw))
            body += raw
            body += struct.pack("<I", position)
            body += array.astype("<f4").tobytes()
        body += ("\n".join(index_lines) + "\n").encode("utf-8") if index_lines else b""
        path.write_bytes(bytes(body))

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        blob = Path(path).read_bytes()
        if blob[: len(STORE_MAGIC)] != STORE_MAGIC:
            raise ValueError(f"{path}: not a vector store file (bad magic)")
        at = len(STORE_MAGIC)
        dim, layers, count = struct.unpack_from("<III", blob, at)
        at += 12
        records: dict[tuple[str, int], np.ndarray] = {}
        vec_bytes = layers * dim * 4
        for _ in range(count):
            (key_len,) = struct.unpack_from("<H", blob, at)
            at += 2
            key = blob[at : at + key_len].decode("utf-8")
            at += key_len
            (position,) = struct.unpack_from("<I", blob, at)
            at += 4
            vec = np.frombuffer(blob, dtype="<f4", count=layers * dim, offset=at)
            at += vec_bytes
            records[(key, position)] = vec.reshape(layers, dim).copy()
        return cls(dim=dim, layers=layers, records=records)

    @classmethod
    def build(
        cls,
        sequences: "dict[str, list[str]] | list[tuple[str, list[str]]]",
        layer_embedder,
        dim: int,
        layers: int,
    ) -> "VectorStore":
        """Fill a store by calling ``layer_embedder(tokens) -> (L, P, d)``."""
        if isinstance(sequences, dict):
            sequences = list(sequences.items())
        records = {}
        for key, tokens in sequences:
            stack = np.asarray(layer_embedder(tokens), dtype=np.float32)
            if stack.shape != (layers, len(tokens), dim):
                raise ValueError(
                    f"embedder returned {stack.shape} for {key!r}, "
                    f"expected {(layers, len(tokens), dim)}"
                )
            for position in range(len(tokens)):
                records[(key, position)] = stack[:, position, :]
        return cls(dim=dim, layers=layers, records=records)


class MixedContextualEmbedding(EmbeddingProvider):
    """Learned softmax mix over a store's frozen layers, times a learned scale."""

    def __init__(self, store: VectorStore):
        super().__init__()
        self.store = store
        self.dim = store.dim
        self.layer_logits = nn.Parameter(torch.zeros(store.layers))
        self.scale = nn.Parameter(torch.ones(1))

    def mixture_weights(self) -> torch.Tensor:
        return torch.softmax(self.layer_logits, dim=0)

    def embed_sequence(self, tokens: list[str], key: str) -> torch.Tensor:
        stack = np.stack([self.store.get(key, p) for p in range(len(tokens))])
        layers = torch.as_tensor(stack, dtype=self._dtype)  # (P, L, d), constant
        weights = self.mixture_weights().to(self._dtype)
        return self.scale * torch.einsum("pld,l->pd", layers, weights)


class PseudoContextualEmbedding(EmbeddingProvider):
    """Deterministic context-sensitive vectors from a seeded hash.

    Each position is embedded from the token plus its +-2 neighbor window, so
    the same word gets different vectors in different contexts, identical
    vectors in identical ones. Vectors are unit norm and the module has no
    parameters.
    """

    def __init__(self, dim: int = 64, seed: int = 0, window: int = 2):
        super().__init__()
        if dim < 1:
            raise ValueError(f"embedding dim must be positive, got {dim}")
        self.dim = dim
        self.seed = seed
        self.window = window
        self._cache: dict[tuple[str, ...], np.ndarray] = {}

    def _vector(self, context: tuple[str, ...]) -> np.ndarray:
        cached = self._cache.get(context)
        if cached is not None:
            return cached
        material = f"{self.seed}|{self.dim}|" + "\x1f".join(context)
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        self._cache[context] = vec
        return vec

    def embed_sequence(self, tokens: list[str], key: str = "") -> torch.Tensor:
        rows = []
        for p, token in enumerate(tokens):
            lo = max(0, p - self.window)
            window = tokens[lo : p + self.window + 1]
            # Mark where the center sits so edge windows stay unambiguous.
            context = (str(p - lo), *window)
            rows.append(self._vector(context))
        return torch.as_tensor(np.stack(rows), dtype=self._dtype)


def build_pseudo_store(
    sequences: list[tuple[str, list[str]]],
    dim: int = 32,
    layers: int = 3,
    seed: int = 0,
) -> VectorStore:
    """A store filled by layer-indexed pseudo embedders; for tests and demos."""
    embedders = [
        PseudoContextualEmbedding(dim=dim, seed=seed * 1000 + layer, window=2)
        for layer in range(layers)
    ]

    def embed_layers(tokens: list[str]) -> np.ndarray:
        return np.stack([e.embed_sequence(tokens).numpy() for e in embedders])

    return VectorStore.build(sequences, embed_layers, dim=dim, layers=layers)
