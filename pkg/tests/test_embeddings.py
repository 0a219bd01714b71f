"""Embedding providers and the vector store file format."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from medregimen.embeddings import (
    LookupEmbedding,
    MixedContextualEmbedding,
    PseudoContextualEmbedding,
    StoreKeyError,
    VectorStore,
    build_pseudo_store,
)
from medregimen.preprocess import Vocabulary


def _vocab(extra=("take", "daily", "rx-coumadin")):
    return Vocabulary(
        words=["<pad>", "<unk>", "<start>", "<stop>", *extra], threshold=1
    )


def test_lookup_shapes_and_oov():
    emb = LookupEmbedding(_vocab(), dim=16)
    out = emb.embed_sequence(["take", "rx-coumadin", "daily"])
    assert out.shape == (3, 16)
    oov = emb.embed_sequence(["zzz"])
    unk = emb.embed_sequence(["<unk>"])
    assert torch.equal(oov, unk)


def test_lookup_batch_padding():
    emb = LookupEmbedding(_vocab(), dim=8)
    out, lengths = emb.embed_batch([["take"], ["take", "daily", "take"]], ["a", "b"])
    assert out.shape == (2, 3, 8)
    assert lengths.tolist() == [1, 3]
    with pytest.raises(ValueError):
        emb.embed_batch([], [])
    with pytest.raises(ValueError):
        emb.embed_batch([["take"], []], ["a", "b"])


def test_lookup_is_trainable():
    emb = LookupEmbedding(_vocab(), dim=8)
    out = emb.embed_sequence(["take", "daily"])
    out.sum().backward()
    assert emb.table.weight.grad is not None
    assert emb.table.weight.grad.abs().sum() > 0


def test_vector_store_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    records = {
        ("seq-a", 0): rng.standard_normal((3, 8)).astype(np.float32),
        ("seq-a", 1): rng.standard_normal((3, 8)).astype(np.float32),
        ("seq-b", 0): rng.standard_normal((3, 8)).astype(np.float32),
    }
    store = VectorStore(dim=8, layers=3, records=records)
    path = tmp_path / "vectors.bin"
    store.save(path)
    loaded = VectorStore.load(path)
    assert loaded.dim == 8 and loaded.layers == 3 and len(loaded) == 3
    for key in records:
        np.testing.assert_array_equal(loaded.get(*key), store.get(*key))


def test_vector_store_save_is_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    records = {("s", p): rng.standard_normal((2, 4)).astype(np.float32) for p in range(5)}
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    VectorStore(dim=4, layers=2, records=records).save(a)
    VectorStore(dim=4, layers=2, records=dict(reversed(records.items()))).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_vector_store_missing_record():
    store = VectorStore(dim=4, layers=2, records={("s", 0): np.zeros((2, 4))})
    with pytest.raises(StoreKeyError, match="position 3"):
        store.get("s", 3)
    with pytest.raises(ValueError):
        VectorStore(dim=4, layers=2, records={("s", 0): np.zeros((3, 4))})


def test_vector_store_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"this is not a store")
    with pytest.raises(ValueError, match="magic"):
        VectorStore.load(path)


def test_vector_store_build_from_embedder():
    def embedder(tokens):
        return np.ones((2, len(tokens), 4), dtype=np.float32)

    store = VectorStore.build({"k": ["a", "b", "c"]}, embedder, dim=4, layers=2)
    assert len(store) == 3
    np.testing.assert_array_equal(store.get("k", 2), np.ones((2, 4)))
    with pytest.raises(ValueError):
        VectorStore.build({"k": ["a"]}, lambda t: np.ones((9, 1, 4)), dim=4, layers=2)


def test_mixed_contextual_embedding():
    rng = np.random.default_rng(3)
    records = {("q", p): rng.standard_normal((3, 6)).astype(np.float32) for p in range(4)}
    store = VectorStore(dim=6, layers=3, records=records)
    emb = MixedContextualEmbedding(store)
    out = emb.embed_sequence(["w", "x", "y", "z"], key="q")
    assert out.shape == (4, 6)

    weights = emb.mixture_weights()
    assert torch.allclose(weights.sum(), torch.tensor(1.0))
    # Initialized uniform: output equals scale * mean over layers.
    expected = np.stack([records[("q", p)].mean(axis=0) for p in range(4)])
    assert torch.allclose(out, torch.as_tensor(expected), atol=1e-6)

    # Layer mixing weights and scale learn; the stored vectors are constants.
    out.sum().backward()
    assert emb.layer_logits.grad is not None
    assert emb.scale.grad is not None
    with pytest.raises(StoreKeyError):
        emb.embed_sequence(["w"], key="missing")


def test_pseudo_contextual_determinism_and_context_sensitivity():
    emb = PseudoContextualEmbedding(dim=12, seed=4)
    again = PseudoContextualEmbedding(dim=12, seed=4)
    a = emb.embed_sequence(["take", "it", "daily"])
    b = again.embed_sequence(["take", "it", "daily"])
    assert torch.equal(a, b)
    assert a.shape == (3, 12)
    # Unit norm rows.
    assert torch.allclose(a.norm(dim=1), torch.ones(3), atol=1e-5)

    # Same word, different contexts -> different vectors.
    long_a = emb.embed_sequence(["take", "it", "every", "night", "okay"])
    long_b = emb.embed_sequence(["take", "it", "every", "day", "okay"])
    assert torch.equal(long_a[0], long_b[0])      # differing token outside +-2
    assert not torch.equal(long_a[3], long_b[3])  # center differs
    assert not torch.equal(long_a[2], long_b[2])  # neighbor differs

    other_seed = PseudoContextualEmbedding(dim=12, seed=5)
    assert not torch.equal(a, other_seed.embed_sequence(["take", "it", "daily"]))


def test_pseudo_edge_windows_unambiguous():
    emb = PseudoContextualEmbedding(dim=8, seed=0)
    # "a" at position 0 of [a, b] vs position 1 of [b, a]: same window
    # content when truncated, different center offset -> different vectors.
    first = emb.embed_sequence(["a", "b"])[0]
    second = emb.embed_sequence(["b", "a"])[1]
    assert not torch.equal(first, second)


def test_build_pseudo_store_round_trip(tmp_path):
    store = build_pseudo_store([("s1", ["x", "y"]), ("s2", ["z"])], dim=16, layers=2)
    assert store.dim == 16 and store.layers == 2 and len(store) == 3
    path = tmp_path / "pseudo.bin"
    store.save(path)
    loaded = VectorStore.load(path)
    np.testing.assert_array_equal(loaded.get("s1", 1), store.get("s1", 1))

    again = build_pseudo_store([("s1", ["x", "y"]), ("s2", ["z"])], dim=16, layers=2)
    np.testing.assert_array_equal(again.get("s2", 0), store.get("s2", 0))


def test_provider_dtype_follows_module():
    emb = PseudoContextualEmbedding(dim=4, seed=0).double()
    out = emb.embed_sequence(["x"])
    assert out.dtype == torch.float64
