"""Scoring: ROUGE-1, difficulty categories, baselines, and evaluation reports.

ROUGE-1 here is the clipped unigram-overlap score with fixed conventions for
empty sequences: two empty sequences score 1.0 (predicting nothing when
nothing was wanted is correct), and an empty sequence against a non-empty one
scores 0.0. Dosage answers are single tokens on both sides, so dosage
precision, recall, and F1 coincide and equal exact match; the evaluator
enforces that identity on every run.

Categories describe why an example is hard. On the dosage side they overlap:
``none_d`` (no dosage to find), ``mm`` (a second medication in the segment),
``mn`` (a number that is not the answer), ``nbm`` (such a number sitting
between the medication and its dosage). The frequency side is a partition:
``none_f`` or ``nn``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from medregimen.corpus import NONE_LABEL
from medregimen.numwords import is_number_token
from medregimen.preprocess import FIELDS, Example

NONE_D = "none_d"
MM = "mm"
MN = "mn"
NBM = "nbm"
NONE_F = "none_f"
NN = "nn"

DOSAGE_LABELS = (NONE_D, MM, MN, NBM)
FREQUENCY_LABELS = (NONE_F, NN)


@dataclass(frozen=True)
class RougeScore:
    f1: float
    precision: float
    recall: float


def rouge1(hyp: list[str], ref: list[str]) -> RougeScore:
    """ROUGE-1 with clipped counts; see the module docstring for empty rules."""
    if not hyp and not ref:
        return RougeScore(1.0, 1.0, 1.0)
    if not hyp or not ref:
        return RougeScore(0.0, 0.0, 0.0)
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    precision = overlap / len(hyp)
    recall = overlap / len(ref)
    if precision + recall == 0.0:
        return RougeScore(0.0, precision, recall)
    return RougeScore(2 * precision * recall / (precision + recall), precision, recall)


def exact_match(hyp: list[str], ref: list[str]) -> bool:
    return list(hyp) == list(ref)


def categorize(example: Example) -> set[str]:
    """Difficulty labels for one example; see the module docstring."""
    labels: set[str] = set()
    tokens = example.input_tokens
    dosage = example.dosage_target[0] if example.dosage_target else NONE_LABEL

    if dosage == NONE_LABEL:
        labels.add(NONE_D)
    meds = {t for t in tokens if t.startswith("rx-")}
    if len(meds) >= 2:
        labels.add(MM)
    if any(is_number_token(t) and t != dosage for t in tokens):
        labels.add(MN)
    if dosage != NONE_LABEL and example.medication_token in tokens and dosage in tokens:
        med_pos = tokens.index(example.medication_token)
        dose_positions = [i for i, t in enumerate(tokens) if t == dosage]
        dose_pos = min(dose_positions, key=lambda i: (abs(i - med_pos), i))
        lo, hi = sorted((med_pos, dose_pos))
        if any(is_number_token(tokens[i]) for i in range(lo + 1, hi)):
            labels.add(NBM)

    freq = example.frequency_target
    labels.add(NONE_F if freq == [NONE_LABEL] else NN)
    return labels


def category_census(examples: list[Example]) -> dict[str, int]:
    census = {label: 0 for label in DOSAGE_LABELS + FREQUENCY_LABELS}
    for ex in examples:
        for label in ex.category_labels or sorted(categorize(ex)):
            census[label] += 1
    return census


# ---------------------------------------------------------------------------
# Baselines


class NearestNumberBaseline:
    """Dosage is the number token closest to the queried medication mention.

    Ties break toward the leftmost number; a missing medication or a segment
    with no numbers yields the none label. Frequency is always none: this
    baseline has no signal for it.
    """

    def predict(self, examples: list[Example]) -> list[dict[str, list[str]]]:
        return [
            {"dosage": [self._nearest(ex)], "frequency": [NONE_LABEL]}
            for ex in examples
        ]

    @staticmethod
    def _nearest(ex: Example) -> str:
        tokens = ex.input_tokens
        if ex.medication_token not in tokens:
            return NONE_LABEL
        number_positions = [i for i, t in enumerate(tokens) if is_number_token(t)]
        if not number_positions:
            return NONE_LABEL
        med_pos = tokens.index(ex.medication_token)
        best = min(number_positions, key=lambda i: (abs(i - med_pos), i))
        return tokens[best]


class RandomTopThreeBaseline:
    """Frequency drawn uniformly from the three most common answers."""

    ANSWERS = ((NONE_LABEL,), ("daily",), ("twice", "a", "day"))

    def __init__(self, seed: int = 0):
        self.seed = seed

    def predict(self, examples: list[Example]) -> list[dict[str, list[str]]]:
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in examples:
            pick = self.ANSWERS[int(rng.integers(len(self.ANSWERS)))]
            out.append({"dosage": [NONE_LABEL], "frequency": list(pick)})
        return out


# ---------------------------------------------------------------------------
# Reports


@dataclass
class FieldAggregate:
    count: int = 0
    f1: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    exact: float = 0.0

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "exact_match": self.exact,
        }


@dataclass
class EvaluationReport:
    overall: dict[str, FieldAggregate]
    by_category: dict[str, dict[str, FieldAggregate]]
    records: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "overall": {f: a.to_dict() for f, a in self.overall.items()},
            "by_category": {
                f: {label: a.to_dict() for label, a in table.items()}
                for f, table in self.by_category.items()
            },
            "records": self.records,
        }


def _aggregate(rows: list[dict]) -> FieldAggregate:
    n = len(rows)
    return FieldAggregate(
        count=n,
        f1=sum(r["f1"] for r in rows) / n,
        precision=sum(r["precision"] for r in rows) / n,
        recall=sum(r["recall"] for r in rows) / n,
        exact=sum(r["exact_match"] for r in rows) / n,
    )


def evaluate_model(predictor, examples: list[Example]) -> EvaluationReport:
    """Score a predictor on examples, per field and per difficulty category.

    ``predictor`` is anything with ``predict(examples) -> [{field: tokens}]``:
    a fitted estimator or a baseline. An example conditioned on one field is
    scored on that field only; an entity-conditioned example on both.
    """
    predictions = predictor.predict(examples)
    if len(predictions) != len(examples):
        raise ValueError(
            f"predictor returned {len(predictions)} predictions for {len(examples)} examples"
        )
    rows: dict[str, list[dict]] = {f: [] for f in FIELDS}
    for ex, pred in zip(examples, predictions):
        labels = ex.category_labels or sorted(categorize(ex))
        for fld in ex.fields_covered:
            hyp = list(pred[fld])
            ref = ex.target_for(fld)
            score = rouge1(hyp, ref)
            em = exact_match(hyp, ref)
            if fld == "dosage":
                if len(ref) != 1:
                    raise ValueError(f"{ex.example_id}: dosage reference must be one token")
                if not (score.f1 == score.precision == score.recall):
                    raise RuntimeError(
                        f"{ex.example_id}: dosage rouge lost the F1=P=R identity"
                    )
            rows[fld].append(
                {
                    "example_id": ex.example_id,
                    "field": fld,
                    "hypothesis": hyp,
                    "reference": ref,
                    "f1": score.f1,
                    "precision": score.precision,
                    "recall": score.recall,
                    "exact_match": float(em),
                    "category_labels": labels,
                }
            )

    field_labels = {"dosage": DOSAGE_LABELS, "frequency": FREQUENCY_LABELS}
    overall = {}
    by_category: dict[str, dict[str, FieldAggregate]] = {}
    for fld in FIELDS:
        if not rows[fld]:
            continue
        overall[fld] = _aggregate(rows[fld])
        table = {}
        for label in field_labels[fld]:
            subset = [r for r in rows[fld] if label in r["category_labels"]]
            if subset:
                table[label] = _aggregate(subset)
        by_category[fld] = table
    return EvaluationReport(
        overall=overall,
        by_category=by_category,
        records=rows["dosage"] + rows["frequency"],
    )


# ---------------------------------------------------------------------------
# Training-size ablation


def ablate_training_size(
    corpus,
    split,
    sizes: list[int],
    estimator_params: dict | None = None,
    seeds: tuple[int, ...] = (0,),
    pretrained_encoder: str | None = None,
    eval_part: str = "test",
) -> list[dict]:
    """Train at several training-set sizes and score each run on a fixed split.

    One row per (size, seed, arm); the pretrained arm runs only when a
    pretrained encoder checkpoint is given. Sizes are transcript counts drawn
    from the training split with a seeded shuffle, so smaller sizes nest
    inside larger ones for the same seed.
    """
    from medregimen.estimators import MedicationRegimenExtractor, prepare_training_examples

    params = dict(estimator_params or {})
    for size in sizes:
        if not 0 < size <= len(split.train):
            raise ValueError(
                f"ablation size {size} outside 1..{len(split.train)} train transcripts"
            )

    rows = []
    arms = [False] + ([True] if pretrained_encoder else [])
    for size in sizes:
        for seed in seeds:
            rng = np.random.default_rng(seed)
            order = rng.permutation(len(split.train))
            train_ids = [split.train[int(i)] for i in order[:size]]
            for pretrained in arms:
                est = MedicationRegimenExtractor(**params, seed=seed)
                if pretrained:
                    est.set_params(pretrained_encoder=pretrained_encoder)
                train_ex = prepare_training_examples(
                    corpus, train_ids, est.variant, augment=True, seed=seed
                )
                val_ex = prepare_training_examples(
                    corpus, split.validation, est.variant, augment=False, seed=seed
                )
                test_ex = prepare_training_examples(
                    corpus, split.part(eval_part), est.variant, augment=False, seed=seed
                )
                est.fit(train_ex, validation=val_ex)
                report = evaluate_model(est, test_ex)
                rows.append(
                    {
                        "size": size,
                        "seed": seed,
                        "pretrained": pretrained,
                        "dosage_f1": report.overall["dosage"].f1,
                        "dosage_exact_match": report.overall["dosage"].exact,
                        "frequency_f1": report.overall["frequency"].f1,
                    }
                )
    return rows
