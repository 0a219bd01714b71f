"""Training loops: answer extraction, summarization pretraining, transfer.

Both loops share the same mechanics: Adagrad, gradient-norm clipping,
embedding dropout (the model ships with p=0; the trainer sets it), seeded
batch order, periodic validation, early stopping on stalled validation, and
restoring the best-scoring weights at the end. Extraction validates with
mean unigram-overlap F1 of greedy decodes (higher is better); pretraining
validates with held-out loss (lower is better).

Transfer copies the pretrained encoder into a fresh extraction model; the
extraction trainer then builds its own optimizer, so the copied weights start
with clean accumulator state.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from medregimen.evaluation import rouge1
from medregimen.pgnet import NumericalError, make_batch, predict_examples
from medregimen.embeddings import LookupEmbedding, MixedContextualEmbedding


class NumericalDivergenceError(RuntimeError):
    """Training hit a non-finite loss or distribution."""

    def __init__(self, iteration: int, example_ids: list[str]):
        self.iteration = iteration
        self.example_ids = list(example_ids)
        shown = ", ".join(self.example_ids[:4])
        super().__init__(
            f"non-finite value at iteration {iteration} (batch: {shown})"
        )


class TransferError(RuntimeError):
    """Source and target models disagree on a tensor needed for transfer."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.0015
    embedding_dropout: float = 0.5
    clip_norm: float = 2.0
    batch_size: int = 8
    max_iterations: int = 2000
    eval_every: int = 200
    patience: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.embedding_dropout < 1.0:
            raise ValueError("embedding_dropout must be in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        for name in ("batch_size", "max_iterations", "eval_every", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrainReport:
    iterations_run: int = 0
    best_iteration: int = 0
    best_score: float | None = None
    history: list[tuple[int, float]] = field(default_factory=list)
    unreachable_targets: int = 0
    train_examples: int = 0
    validation_examples: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "best_iteration": self.best_iteration,
            "best_score": self.best_score,
            "history": [[it, score] for it, score in self.history],
            "unreachable_targets": self.unreachable_targets,
            "train_examples": self.train_examples,
            "validation_examples": self.validation_examples,
            "stopped_early": self.stopped_early,
        }


def _batch_stream(n: int, batch_size: int, rng: np.random.Generator):
    """Yield index arrays forever: fresh permutation each pass, chunked."""
    while True:
        order = rng.permutation(n)
        for at in range(0, n, batch_size):
            yield order[at : at + batch_size]


def _mean_overlap_f1(model, examples) -> float:
    preds = predict_examples(model, examples)
    scores = []
    for ex, pred in zip(examples, preds):
        for fld in ex.fields_covered:
            scores.append(rouge1(pred[fld], ex.target_for(fld)).f1)
    return float(np.mean(scores)) if scores else 0.0


def _validation_loss(model, examples, vocab, budgets, summary_budget, batch_size) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for at in range(0, len(examples), batch_size):
            chunk = examples[at : at + batch_size]
            if summary_budget is not None:
                batch = make_batch(chunk, vocab, summary_budget=summary_budget)
            else:
                batch = make_batch(chunk, vocab, budgets=budgets)
            loss, _ = model.loss(batch)
            total += float(loss) * len(chunk)
            count += len(chunk)
    return total / max(count, 1)


def _train(model, train_examples, validation_examples, config, summarize: bool):
    if not train_examples:
        raise ValueError("cannot train on zero examples")
    config = config or TrainConfig()
    vocab = model.vocab
    budgets = model.config.budgets()
    summary_budget = model.config.summary_steps if summarize else None

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model.embedding_dropout.p = config.embedding_dropout
    optimizer = torch.optim.Adagrad(model.parameters(), lr=config.learning_rate)

    report = TrainReport(
        train_examples=len(train_examples),
        validation_examples=len(validation_examples or []),
    )
    higher_better = not summarize
    best_state = None
    stale = 0
    stream = _batch_stream(len(train_examples), config.batch_size, rng)

    for iteration in range(1, config.max_iterations + 1):
        idxs = next(stream)
        chunk = [train_examples[i] for i in idxs]
        model.train()
        try:
            if summarize:
                batch = make_batch(chunk, vocab, summary_budget=summary_budget)
            else:
                batch = make_batch(chunk, vocab, budgets=budgets)
            loss, aux = model.loss(batch)
        except NumericalError as exc:
            raise NumericalDivergenceError(
                iteration, [_example_name(ex) for ex in chunk]
            ) from exc
        if not bool(torch.isfinite(loss)):
            raise NumericalDivergenceError(
                iteration, [_example_name(ex) for ex in chunk]
            )
        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
        optimizer.step()
        report.unreachable_targets += aux.get("unreachable", 0)
        report.iterations_run = iteration

        at_eval = iteration % config.eval_every == 0 or iteration == config.max_iterations
        if validation_examples and at_eval:
            if summarize:
                score = _validation_loss(
                    model, validation_examples, vocab, budgets,
                    summary_budget, config.batch_size,
                )
            else:
                score = _mean_overlap_f1(model, validation_examples)
            report.history.append((iteration, score))
            improved = report.best_score is None or (
                score > report.best_score if higher_better else score < report.best_score
            )
            if improved:
                report.best_score = score
                report.best_iteration = iteration
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    report.stopped_early = True
                    break

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        report.best_iteration = report.iterations_run
    model.embedding_dropout.p = 0.0
    return report


def _example_name(ex) -> str:
    if hasattr(ex, "example_id"):
        return ex.example_id
    return getattr(ex, "source_id", repr(ex))


def train_extraction(model, train_examples, validation_examples=None,
                     config: TrainConfig | None = None) -> TrainReport:
    """Train a QA or multi-decoder model on extraction examples."""
    return _train(model, train_examples, validation_examples, config, summarize=False)


def pretrain_summarization(model, train_examples, validation_examples=None,
                           config: TrainConfig | None = None) -> TrainReport:
    """Train a summarization model on segment/summary pairs."""
    return _train(model, train_examples, validation_examples, config, summarize=True)


# ---------------------------------------------------------------------------
# Transfer


def _copy_matching(src: torch.Tensor, dst: torch.Tensor, name: str) -> None:
    if tuple(src.shape) != tuple(dst.shape):
        raise TransferError(
            f"{name}: source shape {tuple(src.shape)} != target {tuple(dst.shape)}"
        )
    with torch.no_grad():
        dst.copy_(src)


def transfer_encoder(source, target) -> list[str]:
    """Copy the pretrained encoder (and embedding weights) into ``target``.

    Copies every tensor of the bidirectional LSTM, plus whatever the
    embedding provider carries: a lookup table transfers row by row for
    surface forms both vocabularies share (the four reserved rows always); a
    layer mixer transfers wholesale. The state reducers and everything
    downstream stay at the target's fresh initialization. Returns the names
    of the tensors copied.
    """
    copied: list[str] = []
    src_lstm = dict(source.encoder.lstm.named_parameters())
    dst_lstm = dict(target.encoder.lstm.named_parameters())
    if set(src_lstm) != set(dst_lstm):
        raise TransferError(
            f"encoder parameter sets differ: {sorted(set(src_lstm) ^ set(dst_lstm))}"
        )
    for name in sorted(src_lstm):
        _copy_matching(src_lstm[name].data, dst_lstm[name].data, f"encoder.lstm.{name}")
        copied.append(f"encoder.lstm.{name}")

    sp, tp = source.provider, target.provider
    if isinstance(sp, LookupEmbedding) and isinstance(tp, LookupEmbedding):
        if sp.dim != tp.dim:
            raise TransferError(
                f"embedding width mismatch: source {sp.dim}, target {tp.dim}"
            )
        src_vocab, dst_vocab = source.vocab, target.vocab
        rows = 0
        with torch.no_grad():
            for idx in range(min(4, len(dst_vocab))):  # reserved rows share ids
                tp.table.weight[idx] = sp.table.weight[idx]
                rows += 1
            for word in dst_vocab.words:
                if word in src_vocab:
                    tp.table.weight[dst_vocab.id(word)] = sp.table.weight[
                        src_vocab.id(word)
                    ]
                    rows += 1
        copied.append(f"provider.table.weight[{rows} rows]")
    elif isinstance(sp, MixedContextualEmbedding) and isinstance(tp, MixedContextualEmbedding):
        _copy_matching(sp.layer_logits.data, tp.layer_logits.data, "provider.layer_logits")
        _copy_matching(sp.scale.data, tp.scale.data, "provider.scale")
        copied.extend(["provider.layer_logits", "provider.scale"])
    # Other provider pairings carry no learned tensors to move.
    return copied
