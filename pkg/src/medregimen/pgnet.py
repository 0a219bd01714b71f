"""Pointer-generator models over conversation segments.

Three variants share one construction:

- ``SummarizationPGNet``: bi-LSTM encoder over the segment, pointer decoder
  over the encoder states. Used to pretrain the encoder on segment/summary
  pairs.
- ``QAPGNet``: the same encoder reads both the segment and a condition (a
  question or an entity token); a coattention layer fuses them; one pointer
  decoder answers whatever the condition asks.
- ``MDQAPGNet``: shared encoder, but a separate coattention + decoder head
  per field (dosage budget 1, frequency budget 3), trained jointly by adding
  the heads' losses.

Decoding is budgeted: the dosage head emits exactly one token, frequency at
most three. Each decode step attends over the memory with the previous
decoder state, feeds [input embedding; context] through an LSTM cell, mixes a
vocabulary softmax with the attention distribution through a generation gate
p_gen, and scatters copy mass onto a per-example extended vocabulary (the
base vocabulary plus this input's out-of-vocabulary tokens, ids in first-
occurrence order). With p_gen forced to 0 the output is exactly the attention
mass per token; with 1 exactly the vocabulary softmax.

Sequence loss is the sum of per-step negative log-likelihoods of the target
under the extended distribution, averaged over the batch. A target token
absent from both the vocabulary and the input cannot be produced; its step
contributes -log(1e-12) and the batch reports it as unreachable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from medregimen.embeddings import (
    EmbeddingProvider,
    LookupEmbedding,
    MixedContextualEmbedding,
    PseudoContextualEmbedding,
    VectorStore,
)
from medregimen.preprocess import Example, SummaryExample, Vocabulary

_MASK_FILL = -1e30
_EPSILON = 1e-12

VARIANTS = ("summarizer", "qa", "md")
EMBEDDINGS = ("lookup", "store", "pseudo")


class NumericalError(RuntimeError):
    """A forward pass produced a non-finite value."""


@dataclass
class ModelConfig:
    variant: str
    vocab_size: int
    hidden_dim: int = 128
    coattention_dim: int = 0  # 0 means hidden_dim
    embedding: str = "lookup"
    embedding_dim: int = 0    # 0 means hidden_dim (lookup) / provider dim
    pseudo_seed: int = 0
    store_layers: int = 0     # informational; fixed by the store file
    dosage_steps: int = 1
    frequency_steps: int = 3
    summary_steps: int = 12

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"embedding must be one of {EMBEDDINGS}, got {self.embedding!r}")
        if self.vocab_size < 5:
            raise ValueError("vocab_size must cover the reserved tokens and a word")
        for name in ("hidden_dim", "dosage_steps", "frequency_steps", "summary_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.coattention_dim < 0 or self.embedding_dim < 0:
            raise ValueError("dims must be non-negative")

    @property
    def coatt_dim(self) -> int:
        return self.coattention_dim or self.hidden_dim

    def budgets(self) -> dict[str, int]:
        return {"dosage": self.dosage_steps, "frequency": self.frequency_steps}

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "coattention_dim": self.coattention_dim,
            "embedding": self.embedding,
            "embedding_dim": self.embedding_dim,
            "pseudo_seed": self.pseudo_seed,
            "store_layers": self.store_layers,
            "dosage_steps": self.dosage_steps,
            "frequency_steps": self.frequency_steps,
            "summary_steps": self.summary_steps,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**{f.name: payload[f.name] for f in cls.__dataclass_fields__.values()
                      if f.name in payload})


def input_key(example) -> str:
    """Vector-store key of an example's input sequence."""
    return example.example_id


def condition_key(example) -> str:
    """Vector-store key of an example's condition sequence."""
    return example.example_id + "/q"


# ---------------------------------------------------------------------------
# Components


class BiLSTMEncoder(nn.Module):
    def __init__(self, in_dim: int, hidden_dim: int):
        super().__init__()
        self.lstm = nn.LSTM(in_dim, hidden_dim, batch_first=True, bidirectional=True)

    def forward(self, emb: torch.Tensor, lengths: torch.Tensor):
        packed = pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, (hn, cn) = self.lstm(packed)
        states, _ = pad_packed_sequence(out, batch_first=True, total_length=emb.shape[1])
        h_final = torch.cat([hn[0], hn[1]], dim=1)
        c_final = torch.cat([cn[0], cn[1]], dim=1)
        return states, h_final, c_final


class Coattention(nn.Module):
    """Bilinear affinity between segment and condition states, fused per token.

    For segment states H_I (P x e) and condition states H_Q (PQ x e), the
    affinity L = H_I W H_Q^T is row-softmaxed both ways; condition summaries
    [A_Q^T H_I ; H_Q] are carried back onto segment positions through A_I and
    projected to the output width. No sentinel positions and no fusion
    recurrence: budgets here are tiny, so the decoder reads [H_I ; C_D]
    directly.
    """

    def __init__(self, enc_dim: int, out_dim: int):
        super().__init__()
        self.affinity = nn.Linear(enc_dim, enc_dim, bias=False)
        self.project = nn.Linear(3 * enc_dim, out_dim)

    def forward(
        self,
        seg: torch.Tensor,        # (B, P, e)
        cond: torch.Tensor,       # (B, PQ, e)
        seg_mask: torch.Tensor,   # (B, P) bool
        cond_mask: torch.Tensor,  # (B, PQ) bool
    ) -> torch.Tensor:
        affinity = torch.bmm(self.affinity(seg), cond.transpose(1, 2))  # (B, P, PQ)
        # Per segment position: a distribution over condition positions.
        over_cond = affinity.masked_fill(~cond_mask.unsqueeze(1), _MASK_FILL)
        attn_cond = torch.softmax(over_cond, dim=2)                     # (B, P, PQ)
        # Per condition position: a distribution over segment positions.
        over_seg = affinity.transpose(1, 2).masked_fill(
            ~seg_mask.unsqueeze(1), _MASK_FILL
        )
        attn_seg = torch.softmax(over_seg, dim=2)                       # (B, PQ, P)

        cond_summary = torch.cat(
            [torch.bmm(attn_seg, seg), cond], dim=2
        )                                                               # (B, PQ, 2e)
        carried = torch.bmm(
            attn_cond, torch.cat([cond, cond_summary], dim=2)
        )                                                               # (B, P, 3e)
        return self.project(carried) * seg_mask.unsqueeze(2)


class PointerDecoder(nn.Module):
    """One attention + copy decode head over a fixed memory."""

    def __init__(self, emb_dim: int, mem_dim: int, hidden_dim: int, vocab_size: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.cell = nn.LSTMCell(emb_dim + mem_dim, hidden_dim)
        self.mem_proj = nn.Linear(mem_dim, hidden_dim)
        self.state_proj = nn.Linear(2 * hidden_dim, hidden_dim, bias=False)
        self.score = nn.Linear(hidden_dim, 1, bias=False)
        self.out_state = nn.Linear(2 * hidden_dim + mem_dim, hidden_dim)
        self.out_vocab = nn.Linear(hidden_dim, vocab_size)
        self.gen_gate = nn.Linear(mem_dim + 2 * hidden_dim + emb_dim, 1)

    def premap(self, memory: torch.Tensor) -> torch.Tensor:
        return self.mem_proj(memory)

    def step(
        self,
        x: torch.Tensor,             # (B, emb)
        state: tuple[torch.Tensor, torch.Tensor],
        memory: torch.Tensor,        # (B, P, m)
        memory_pre: torch.Tensor,    # premap(memory)
        mask: torch.Tensor,          # (B, P) bool
        ext_ids: torch.Tensor,       # (B, P) long, extended-vocab id per position
        extended_size: int,
    ):
        h_prev, c_prev = state
        prev = torch.cat([h_prev, c_prev], dim=1)
        scores = self.score(
            torch.tanh(memory_pre + self.state_proj(prev).unsqueeze(1))
        ).squeeze(2)
        scores = scores.masked_fill(~mask, _MASK_FILL)
        attn = torch.softmax(scores, dim=1)
        context = torch.bmm(attn.unsqueeze(1), memory).squeeze(1)

        h, c = self.cell(torch.cat([x, context], dim=1), (h_prev, c_prev))
        now = torch.cat([h, c], dim=1)
        p_vocab = torch.softmax(
            self.out_vocab(self.out_state(torch.cat([now, context], dim=1))), dim=1
        )
        p_gen = torch.sigmoid(self.gen_gate(torch.cat([context, now, x], dim=1)))

        dist = x.new_zeros(x.shape[0], extended_size)
        dist[:, : self.vocab_size] = p_gen * p_vocab
        dist.scatter_add_(1, ext_ids, (1.0 - p_gen) * attn)
        return (h, c), attn, p_gen.squeeze(1), dist


# ---------------------------------------------------------------------------
# Batches


@dataclass
class TargetBatch:
    dec_inputs: torch.Tensor   # (B, T) long, START then teacher tokens (UNK for OOV)
    ext_targets: torch.Tensor  # (B, T) long into the extended vocabulary
    mask: torch.Tensor         # (B, T) float, 1 on real steps
    reachable: torch.Tensor    # (B, T) bool
    unreachable: int


@dataclass
class Batch:
    examples: list
    input_tokens: list[list[str]]
    input_keys: list[str]
    cond_tokens: list[list[str]] | None
    cond_keys: list[str] | None
    ext_ids: torch.Tensor      # (B, Pmax) long
    oov_lists: list[list[str]]
    extended_size: int
    targets: dict[str, TargetBatch] = field(default_factory=dict)


def _extended_ids(token_lists: list[list[str]], vocab: Vocabulary):
    """Extended-vocabulary id per input position; OOVs by first occurrence."""
    max_len = max(len(t) for t in token_lists)
    ext = torch.zeros(len(token_lists), max_len, dtype=torch.long)
    oov_lists: list[list[str]] = []
    for i, tokens in enumerate(token_lists):
        oov: list[str] = []
        for p, tok in enumerate(tokens):
            if tok in vocab:
                ext[i, p] = vocab.id(tok)
            else:
                if tok not in oov:
                    oov.append(tok)
                ext[i, p] = len(vocab) + oov.index(tok)
        oov_lists.append(oov)
    extended_size = len(vocab) + max((len(o) for o in oov_lists), default=0)
    return ext, oov_lists, extended_size


def _encode_target(tokens: list[str], vocab: Vocabulary, oov: list[str], budget: int):
    """(decoder inputs, extended targets, reachable flags) for one sequence."""
    from medregimen.preprocess import STOP_TOKEN

    seq = (list(tokens) + [STOP_TOKEN])[:budget]
    dec_inputs = [vocab.START]
    ext_targets, reachable = [], []
    for tok in seq:
        if tok in vocab:
            ext_targets.append(vocab.id(tok))
            reachable.append(True)
        elif tok in oov:
            ext_targets.append(len(vocab) + oov.index(tok))
            reachable.append(True)
        else:
            ext_targets.append(0)
            reachable.append(False)
        dec_inputs.append(vocab.id(tok))
    return dec_inputs[:-1], ext_targets, reachable


def _stack_targets(
    per_example: list[tuple[list[int], list[int], list[bool]]]
) -> TargetBatch:
    max_t = max(len(d) for d, _, _ in per_example)
    b = len(per_example)
    dec = torch.zeros(b, max_t, dtype=torch.long)
    ext = torch.zeros(b, max_t, dtype=torch.long)
    mask = torch.zeros(b, max_t)
    reach = torch.ones(b, max_t, dtype=torch.bool)
    unreachable = 0
    for i, (dec_inputs, ext_targets, reachable) in enumerate(per_example):
        t = len(dec_inputs)
        dec[i, :t] = torch.tensor(dec_inputs, dtype=torch.long)
        ext[i, :t] = torch.tensor(ext_targets, dtype=torch.long)
        mask[i, :t] = 1.0
        reach[i, :t] = torch.tensor(reachable, dtype=torch.bool)
        unreachable += sum(1 for r in reachable if not r)
    return TargetBatch(dec, ext, mask, reach, unreachable)


def make_batch(
    examples: list[Example] | list[SummaryExample],
    vocab: Vocabulary,
    budgets: dict[str, int] | None = None,
    summary_budget: int | None = None,
) -> Batch:
    """Assemble a training batch.

    For Examples: per-field targets. A question-conditioned example carries a
    target for its own field only; an entity-conditioned example for both
    (this is what the multi-decoder variant trains on). For SummaryExamples:
    one "summary" target, no condition.
    """
    if not examples:
        raise ValueError("cannot batch zero examples")
    input_tokens = [ex.input_tokens for ex in examples]
    input_keys = [input_key(ex) for ex in examples]
    ext_ids, oov_lists, extended_size = _extended_ids(input_tokens, vocab)

    if isinstance(examples[0], SummaryExample):
        if summary_budget is None:
            raise ValueError("summary batches need summary_budget")
        per = [
            _encode_target(ex.target_tokens, vocab, oov_lists[i], summary_budget)
            for i, ex in enumerate(examples)
        ]
        return Batch(
            examples=list(examples),
            input_tokens=input_tokens,
            input_keys=input_keys,
            cond_tokens=None,
            cond_keys=None,
            ext_ids=ext_ids,
            oov_lists=oov_lists,
            extended_size=extended_size,
            targets={"summary": _stack_targets(per)},
        )

    if budgets is None:
        raise ValueError("example batches need per-field budgets")
    batch = Batch(
        examples=list(examples),
        input_tokens=input_tokens,
        input_keys=input_keys,
        cond_tokens=[ex.condition_tokens for ex in examples],
        cond_keys=[condition_key(ex) for ex in examples],
        ext_ids=ext_ids,
        oov_lists=oov_lists,
        extended_size=extended_size,
    )
    fields = {f for ex in examples for f in ex.fields_covered}
    for fld in sorted(fields):
        per = []
        for i, ex in enumerate(examples):
            if fld in ex.fields_covered:
                per.append(
                    _encode_target(ex.target_for(fld), vocab, oov_lists[i], budgets[fld])
                )
            else:
                per.append(([], [], []))  # zero steps: masked out entirely
        batch.targets[fld] = _stack_targets(per)
    return batch


# ---------------------------------------------------------------------------
# Models


class _PGBase(nn.Module):
    def __init__(self, config: ModelConfig, vocab: Vocabulary, provider: EmbeddingProvider):
        super().__init__()
        if config.vocab_size != len(vocab):
            raise ValueError(
                f"config says vocab_size={config.vocab_size}, vocabulary has {len(vocab)}"
            )
        self.config = config
        self.vocab = vocab
        self.provider = provider
        self.embedding_dropout = nn.Dropout(0.0)  # the trainer sets p
        self.encoder = BiLSTMEncoder(provider.dim, config.hidden_dim)
        self.reduce_h = nn.Linear(2 * config.hidden_dim, config.hidden_dim)
        self.reduce_c = nn.Linear(2 * config.hidden_dim, config.hidden_dim)
        if isinstance(provider, LookupEmbedding):
            self.dec_embed = provider  # tied encoder/decoder table
        else:
            self.dec_embed = LookupEmbedding(vocab, dim=config.hidden_dim)
        self.check_finite = True

    @property
    def enc_dim(self) -> int:
        return 2 * self.config.hidden_dim

    def _encode(self, token_lists: list[list[str]], keys: list[str]):
        emb, lengths = self.provider.embed_batch(token_lists, keys)
        emb = self.embedding_dropout(emb)
        states, h_final, c_final = self.encoder(emb, lengths)
        mask = torch.arange(states.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)
        return states, mask, h_final, c_final

    def _initial_state(self, h_final: torch.Tensor, c_final: torch.Tensor):
        return self.reduce_h(h_final), self.reduce_c(c_final)

    def _teacher_nll(
        self,
        decoder: PointerDecoder,
        memory: torch.Tensor,
        mask: torch.Tensor,
        state: tuple[torch.Tensor, torch.Tensor],
        ext_ids: torch.Tensor,
        extended_size: int,
        target: TargetBatch,
    ) -> torch.Tensor:
        memory_pre = decoder.premap(memory)
        nll = memory.new_zeros(memory.shape[0])
        steps = target.dec_inputs.shape[1]
        for t in range(steps):
            x = self.embedding_dropout(self.dec_embed.embed_ids(target.dec_inputs[:, t]))
            state, _, _, dist = decoder.step(
                x, state, memory, memory_pre, mask, ext_ids, extended_size
            )
            if self.check_finite and not bool(torch.isfinite(dist).all()):
                raise NumericalError("decoder produced a non-finite distribution")
            probs = dist.gather(1, target.ext_targets[:, t].unsqueeze(1)).squeeze(1)
            # Unreachable targets contribute a flat -log(eps); reachable ones
            # keep gradient even at vanishing probability.
            probs = torch.where(target.reachable[:, t], probs, probs.new_zeros(()))
            nll = nll - torch.log(probs + _EPSILON) * target.mask[:, t]
        return nll

    def _greedy(
        self,
        decoder: PointerDecoder,
        memory: torch.Tensor,
        mask: torch.Tensor,
        state: tuple[torch.Tensor, torch.Tensor],
        ext_ids: torch.Tensor,
        extended_size: int,
        oov_lists: list[list[str]],
        budget: int,
    ) -> list[list[str]]:
        vocab = self.vocab
        b = memory.shape[0]
        memory_pre = decoder.premap(memory)
        prev = torch.full((b,), vocab.START, dtype=torch.long)
        done = np.zeros(b, dtype=bool)
        outputs: list[list[str]] = [[] for _ in range(b)]
        for _ in range(budget):
            x = self.dec_embed.embed_ids(prev)
            state, _, _, dist = decoder.step(
                x, state, memory, memory_pre, mask, ext_ids, extended_size
            )
            if self.check_finite and not bool(torch.isfinite(dist).all()):
                raise NumericalError("decoder produced a non-finite distribution")
            picked = dist.detach().cpu().numpy().argmax(axis=1)  # first max on ties
            next_ids = np.zeros(b, dtype=np.int64)
            for i, ext_id in enumerate(picked):
                ext_id = int(ext_id)
                if done[i]:
                    next_ids[i] = vocab.STOP
                    continue
                if ext_id == vocab.STOP:
                    done[i] = True
                    next_ids[i] = vocab.STOP
                    continue
                if ext_id < len(vocab):
                    outputs[i].append(vocab.word(ext_id))
                    next_ids[i] = ext_id
                else:
                    outputs[i].append(oov_lists[i][ext_id - len(vocab)])
                    next_ids[i] = vocab.UNK
            if done.all():
                break
            prev = torch.from_numpy(next_ids)
        return outputs


class SummarizationPGNet(_PGBase):
    """Plain pointer-generator: encode the segment, decode its summary."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, provider: EmbeddingProvider):
        super().__init__(config, vocab, provider)
        self.decoder = PointerDecoder(
            self.dec_embed.dim, self.enc_dim, config.hidden_dim, len(vocab)
        )

    def loss(self, batch: Batch) -> tuple[torch.Tensor, dict]:
        states, mask, h_final, c_final = self._encode(batch.input_tokens, batch.input_keys)
        state = self._initial_state(h_final, c_final)
        target = batch.targets["summary"]
        nll = self._teacher_nll(
            self.decoder, states, mask, state, batch.ext_ids, batch.extended_size, target
        )
        return nll.mean(), {"unreachable": target.unreachable}

    def decode_batch(self, examples: list[SummaryExample]) -> list[list[str]]:
        batch = make_batch(examples, self.vocab, summary_budget=self.config.summary_steps)
        states, mask, h_final, c_final = self._encode(batch.input_tokens, batch.input_keys)
        state = self._initial_state(h_final, c_final)
        return self._greedy(
            self.decoder, states, mask, state, batch.ext_ids,
            batch.extended_size, batch.oov_lists, self.config.summary_steps,
        )


class QAPGNet(_PGBase):
    """Question-conditioned extraction with one shared decoder.

    The same encoder (by construction, the same module) reads the segment and
    the condition; coattention fuses them; the decoder attends over
    [segment states ; fused states].
    """

    def __init__(self, config: ModelConfig, vocab: Vocabulary, provider: EmbeddingProvider):
        super().__init__(config, vocab, provider)
        self.coattention = Coattention(self.enc_dim, config.coatt_dim)
        self.decoder = PointerDecoder(
            self.dec_embed.dim,
            self.enc_dim + config.coatt_dim,
            config.hidden_dim,
            len(vocab),
        )

    def _memory(self, batch: Batch):
        # The decoder starts from the condition encoding, not the segment
        # encoding: seeding s_0 with the question keeps the first attention
        # step conditioned on what was asked, which is what separates the two
        # medications' numbers in multi-medication segments.
        seg, seg_mask, _, _ = self._encode(batch.input_tokens, batch.input_keys)
        cond, cond_mask, h_final, c_final = self._encode(batch.cond_tokens, batch.cond_keys)
        fused = self.coattention(seg, cond, seg_mask, cond_mask)
        memory = torch.cat([seg, fused], dim=2)
        return memory, seg_mask, self._initial_state(h_final, c_final)

    def loss(self, batch: Batch) -> tuple[torch.Tensor, dict]:
        """Batch-mean of per-example sequence NLL, summed over covered fields.

        A question-conditioned example has exactly one covered field, so this
        is the plain batch mean; rows not covering a field contribute zero
        steps to it.
        """
        memory, mask, state = self._memory(batch)
        nll = memory.new_zeros(memory.shape[0])
        unreachable = 0
        for fld, target in sorted(batch.targets.items()):
            nll = nll + self._teacher_nll(
                self.decoder, memory, mask, state, batch.ext_ids,
                batch.extended_size, target,
            )
            unreachable += target.unreachable
        return nll.mean(), {"unreachable": unreachable}

    def decode_examples(self, examples: list[Example], fld: str) -> list[list[str]]:
        batch = make_batch(examples, self.vocab, budgets=self.config.budgets())
        memory, mask, state = self._memory(batch)
        return self._greedy(
            self.decoder, memory, mask, state, batch.ext_ids,
            batch.extended_size, batch.oov_lists, self.config.budgets()[fld],
        )


class MDQAPGNet(_PGBase):
    """Entity-conditioned extraction with one coattention + decoder per field."""

    FIELD_ORDER = ("dosage", "frequency")

    def __init__(self, config: ModelConfig, vocab: Vocabulary, provider: EmbeddingProvider):
        super().__init__(config, vocab, provider)
        self.coattentions = nn.ModuleDict(
            {f: Coattention(self.enc_dim, config.coatt_dim) for f in self.FIELD_ORDER}
        )
        self.decoders = nn.ModuleDict(
            {
                f: PointerDecoder(
                    self.dec_embed.dim,
                    self.enc_dim + config.coatt_dim,
                    config.hidden_dim,
                    len(vocab),
                )
                for f in self.FIELD_ORDER
            }
        )

    def _encode_both(self, batch: Batch):
        # Decoder state starts from the condition encoding, as in the shared
        # decoder variant.
        seg, seg_mask, _, _ = self._encode(batch.input_tokens, batch.input_keys)
        cond, cond_mask, h_final, c_final = self._encode(batch.cond_tokens, batch.cond_keys)
        return seg, seg_mask, cond, cond_mask, self._initial_state(h_final, c_final)

    def loss(self, batch: Batch) -> tuple[torch.Tensor, dict]:
        """Sum of the two heads' losses (each a batch-mean sequence NLL)."""
        seg, seg_mask, cond, cond_mask, state = self._encode_both(batch)
        nll = seg.new_zeros(seg.shape[0])
        unreachable = 0
        for fld in self.FIELD_ORDER:
            target = batch.targets.get(fld)
            if target is None:
                continue
            fused = self.coattentions[fld](seg, cond, seg_mask, cond_mask)
            memory = torch.cat([seg, fused], dim=2)
            nll = nll + self._teacher_nll(
                self.decoders[fld], memory, seg_mask, state, batch.ext_ids,
                batch.extended_size, target,
            )
            unreachable += target.unreachable
        return nll.mean(), {"unreachable": unreachable}

    def decode_examples(self, examples: list[Example], fld: str) -> list[list[str]]:
        batch = make_batch(examples, self.vocab, budgets=self.config.budgets())
        seg, seg_mask, cond, cond_mask, state = self._encode_both(batch)
        fused = self.coattentions[fld](seg, cond, seg_mask, cond_mask)
        memory = torch.cat([seg, fused], dim=2)
        return self._greedy(
            self.decoders[fld], memory, seg_mask, state, batch.ext_ids,
            batch.extended_size, batch.oov_lists, self.config.budgets()[fld],
        )


# ---------------------------------------------------------------------------
# Construction, decoding, utilities


def build_provider(
    config: ModelConfig, vocab: Vocabulary, vector_store: VectorStore | None = None
) -> EmbeddingProvider:
    if config.embedding == "lookup":
        return LookupEmbedding(vocab, dim=config.embedding_dim or config.hidden_dim)
    if config.embedding == "pseudo":
        return PseudoContextualEmbedding(
            dim=config.embedding_dim or config.hidden_dim, seed=config.pseudo_seed
        )
    if vector_store is None:
        raise ValueError("embedding='store' needs a vector store")
    return MixedContextualEmbedding(vector_store)


def build_model(
    config: ModelConfig,
    vocab: Vocabulary,
    vector_store: VectorStore | None = None,
    seed: int | None = None,
):
    """Construct (and optionally uniform-initialize) the configured variant."""
    provider = build_provider(config, vocab, vector_store)
    cls = {
        "summarizer": SummarizationPGNet,
        "qa": QAPGNet,
        "md": MDQAPGNet,
    }[config.variant]
    model = cls(config, vocab, provider)
    if seed is not None:
        init_parameters(model, seed)
    return model


def init_parameters(model: nn.Module, seed: int, bound: float = 0.1) -> None:
    """Uniform(-bound, bound) init over every parameter, seeded."""
    torch.manual_seed(seed)
    for p in model.parameters():
        nn.init.uniform_(p, -bound, bound)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def greedy_decode(model, example: Example) -> dict[str, list[str]]:
    """Budgeted greedy answers for the fields this example covers.

    A question-conditioned example answers its own field; an entity-
    conditioned example answers both. Ties in a step's distribution go to the
    lowest extended-vocabulary id.
    """
    model.eval()
    with torch.no_grad():
        out = {}
        for fld in example.fields_covered:
            out[fld] = model.decode_examples([example], fld)[0]
        return out


def predict_examples(
    model, examples: list[Example], batch_size: int = 64
) -> list[dict[str, list[str]]]:
    """Batched greedy decoding; one dict per example over its covered fields."""
    model.eval()
    results: list[dict[str, list[str]]] = [{} for _ in examples]
    with torch.no_grad():
        for fld in ("dosage", "frequency"):
            covered = [i for i, ex in enumerate(examples) if fld in ex.fields_covered]
            for at in range(0, len(covered), batch_size):
                chunk = covered[at : at + batch_size]
                decoded = model.decode_examples([examples[i] for i in chunk], fld)
                for i, tokens in zip(chunk, decoded):
                    results[i][fld] = tokens
    return results
