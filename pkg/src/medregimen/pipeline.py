"""End-to-end extraction on raw transcripts, with no annotations assumed.

The chain is: detect medication mentions by lexicon string matching, window
each mention into a short segment (2 to 5 sentences, grown until a quantity
token appears), preprocess each segment exactly as training data is
preprocessed, and run the model once per detected medication. A seeded
word-level noise simulator stands in for a speech recognizer so the clean
versus noised behavior of the whole chain can be compared, and ground-truth
tags can be re-aligned onto a noised transcript by their timing information.

Duplicate hits of one medication produce separate results on purpose: a
dosage revised later in the conversation is a distinct local fact, and
collapsing them is left to consumers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from medregimen.corpus import NONE_LABEL, MRTag, Sentence, Transcript
from medregimen.evaluation import exact_match, rouge1
from medregimen.numwords import is_number_token
from medregimen.preprocess import (
    FIELDS,
    Example,
    MedicationMatcher,
    PreprocessConfig,
    _truncate_segment,
    medication_token,
    normalize_text,
    normalize_numbers,
    question_tokens,
    strip_dosage_units,
    tag_medications,
)

MIN_WINDOW = 2
MAX_WINDOW = 5


class MedicationHit(NamedTuple):
    sentence_index: int
    token_index: int
    surface: str


class QuantityDetection(NamedTuple):
    found: bool
    positions: tuple[int, ...]


@dataclass(frozen=True)
class Segment:
    """A contiguous sentence window around one detected medication mention."""

    transcript_id: str
    first_sentence: int
    last_sentence: int
    tokens: list[str]
    medication: str
    window: int

    def __post_init__(self) -> None:
        if not MIN_WINDOW <= self.window <= MAX_WINDOW:
            raise ValueError(f"window must be in [{MIN_WINDOW}, {MAX_WINDOW}]")
        if self.last_sentence < self.first_sentence:
            raise ValueError("sentence range is reversed")

    def to_dict(self) -> dict:
        return {
            "transcript_id": self.transcript_id,
            "first_sentence": self.first_sentence,
            "last_sentence": self.last_sentence,
            "tokens": list(self.tokens),
            "medication": self.medication,
            "window": self.window,
        }


@dataclass(frozen=True)
class ExtractionResult:
    """Model output for one detected medication, with its provenance."""

    medication: str
    medication_token: str
    dosage: list[str]
    frequency: list[str]
    segment: Segment

    def to_dict(self) -> dict:
        return {
            "medication": self.medication,
            "medication_token": self.medication_token,
            "dosage": list(self.dosage),
            "frequency": list(self.frequency),
            "segment": self.segment.to_dict(),
        }


# ---------------------------------------------------------------------------
# Detection


def detect_medications(
    transcript: Transcript, lexicon: Sequence[str]
) -> list[MedicationHit]:
    """Longest-match lexicon hits over the normalized transcript, in order."""
    matcher = MedicationMatcher(list(lexicon))
    hits: list[MedicationHit] = []
    for index, sentence in enumerate(transcript.sentences):
        tokens = normalize_text(sentence.text)
        for start, _end, entry in matcher.find(tokens):
            hits.append(MedicationHit(index, start, entry))
    return hits


def detect_quantity(tokens: Sequence[str]) -> QuantityDetection:
    """Whether any canonical number token is present, and where."""
    positions = tuple(i for i, t in enumerate(tokens) if is_number_token(t))
    return QuantityDetection(bool(positions), positions)


# ---------------------------------------------------------------------------
# Segmentation


def _grown_window(n_sentences: int, hit: int, size: int) -> tuple[int, int]:
    """Window of up to ``size`` sentences around ``hit``.

    Growth starts with the sentence after the hit and then alternates
    before/after, falling back to the open side at transcript edges. Windows
    for consecutive sizes nest, so re-deriving at a larger size extends the
    smaller window rather than recentering it.
    """
    lo = hi = hit
    want_after = True
    while hi - lo + 1 < size:
        if want_after:
            if hi + 1 < n_sentences:
                hi += 1
            elif lo > 0:
                lo -= 1
            else:
                break
        else:
            if lo > 0:
                lo -= 1
            elif hi + 1 < n_sentences:
                hi += 1
            else:
                break
        want_after = not want_after
    return lo, hi


def _window_tokens(transcript: Transcript, lo: int, hi: int) -> list[str]:
    tokens: list[str] = []
    for sentence in transcript.sentences[lo : hi + 1]:
        tokens.extend(normalize_text(sentence.text))
    return tokens


def segment_transcript(
    transcript: Transcript, hits: Iterable[MedicationHit]
) -> list[Segment]:
    """One windowed segment per hit; grow 2→5 until a quantity token appears.

    A window that never captures a quantity falls back to the starting
    2-sentence window.
    """
    n = len(transcript.sentences)
    segments: list[Segment] = []
    for hit in hits:
        chosen: tuple[int, int, int] | None = None
        for size in range(MIN_WINDOW, MAX_WINDOW + 1):
            lo, hi = _grown_window(n, hit.sentence_index, size)
            if detect_quantity(_window_tokens(transcript, lo, hi)).found:
                chosen = (lo, hi, size)
                break
        if chosen is None:
            lo, hi = _grown_window(n, hit.sentence_index, MIN_WINDOW)
            chosen = (lo, hi, MIN_WINDOW)
        lo, hi, size = chosen
        segments.append(
            Segment(
                transcript_id=transcript.id,
                first_sentence=lo,
                last_sentence=hi,
                tokens=_window_tokens(transcript, lo, hi),
                medication=hit.surface,
                window=size,
            )
        )
    return segments


# ---------------------------------------------------------------------------
# ASR noise simulation


_DEFAULT_CONFUSIONS = {
    # number homophones and near-homophones, the classic recognizer slips
    "one": "won",
    "two": "to",
    "four": "for",
    "eight": "ate",
    "ten": "tin",
    "daily": "dealey",
    "night": "knight",
    "morning": "mourning",
    "weekly": "weakly",
    "units": "unit",
    "milligrams": "milligram",
}


@dataclass(frozen=True)
class NoiseConfig:
    """Word-level corruption rates for the recognizer stand-in."""

    substitution_rate: float = 0.1
    deletion_rate: float = 0.0
    confusions: dict[str, str] = field(
        default_factory=lambda: dict(_DEFAULT_CONFUSIONS)
    )

    def __post_init__(self) -> None:
        for name in ("substitution_rate", "deletion_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.substitution_rate + self.deletion_rate > 1.0:
            raise ValueError("substitution_rate + deletion_rate must be <= 1")


def _substitute(word: str, confusions: dict[str, str]) -> str:
    hit = confusions.get(word.lower())
    if hit is not None:
        return hit
    return word[:-1] if len(word) > 3 else "uh"


def simulate_asr(
    transcript: Transcript, noise: NoiseConfig, seed: int
) -> Transcript:
    """Seeded word-level corruption of a transcript.

    Timestamps are preserved; sentences whose every word was deleted are
    dropped. The result carries no annotations: tags belong to the human
    transcript and must be re-aligned with :func:`align_tags`.
    """
    rng = np.random.default_rng([seed, len(transcript.sentences)])
    sentences: list[Sentence] = []
    for sentence in transcript.sentences:
        kept: list[str] = []
        for word in sentence.text.split():
            draw = rng.random()
            if draw < noise.deletion_rate:
                continue
            if draw < noise.deletion_rate + noise.substitution_rate:
                kept.append(_substitute(word, noise.confusions))
            else:
                kept.append(word)
        if kept:
            sentences.append(replace(sentence, text=" ".join(kept)))
    return Transcript(id=transcript.id, sentences=sentences)


# ---------------------------------------------------------------------------
# Tag alignment


@dataclass(frozen=True)
class AlignmentResult:
    tags: list[MRTag]
    kept_indices: list[int]
    dropped: int


def _contains_run(tokens: list[str], run: list[str]) -> bool:
    if not run:
        return False
    k = len(run)
    return any(tokens[i : i + k] == run for i in range(len(tokens) - k + 1))


def align_tags(human: Transcript, asr: Transcript) -> AlignmentResult:
    """Carry tags from a human transcript onto an ASR transcript by time.

    Each tag's grounding is re-spanned to the ASR sentences its interval
    overlaps. A tag whose medication no longer appears in that span (the
    recognizer corrupted or deleted it) is dropped and counted. Output tags
    are a subset of the input tags, in order.
    """
    tags: list[MRTag] = []
    kept: list[int] = []
    for index, tag in enumerate(human.mr_tags):
        overlapped = asr.sentences_in(tag.start_s, tag.end_s)
        if not overlapped:
            continue
        span_tokens: list[str] = []
        for sentence in overlapped:
            span_tokens.extend(normalize_text(sentence.text))
        if not _contains_run(span_tokens, normalize_text(tag.medication)):
            continue
        tags.append(
            replace(
                tag,
                start_s=min(s.start_s for s in overlapped),
                end_s=max(s.end_s for s in overlapped),
            )
        )
        kept.append(index)
    return AlignmentResult(tags=tags, kept_indices=kept, dropped=len(human.mr_tags) - len(kept))


# ---------------------------------------------------------------------------
# Document extraction


def _variant_of(predictor) -> str:
    config = getattr(predictor, "config", None)
    if config is not None:
        return config.variant
    return predictor.variant


def _predict(predictor, examples: list[Example]) -> list[dict[str, list[str]]]:
    if hasattr(predictor, "predict"):
        return predictor.predict(examples)
    from medregimen.pgnet import predict_examples

    return predict_examples(predictor, examples)


def _segment_examples(
    segment: Segment,
    ordinal: int,
    variant: str,
    matcher: MedicationMatcher,
    config: PreprocessConfig,
) -> list[Example]:
    """Inference examples for one segment, preprocessed as in training."""
    med_tok = medication_token(segment.medication)
    tagged = [NONE_LABEL] + _truncate_segment(
        tag_medications(list(segment.tokens), matcher),
        med_tok,
        config.max_input_tokens - 1,
    )
    source = f"{segment.transcript_id}#h{ordinal}"
    placeholder = [NONE_LABEL]
    if variant == "qa":
        return [
            Example(
                input_tokens=list(tagged),
                condition_tokens=question_tokens(fld, med_tok),
                dosage_target=list(placeholder),
                frequency_target=list(placeholder),
                source_tag_id=source,
                medication_token=med_tok,
                query_field=fld,
            )
            for fld in FIELDS
        ]
    return [
        Example(
            input_tokens=list(tagged),
            condition_tokens=[med_tok],
            dosage_target=list(placeholder),
            frequency_target=list(placeholder),
            source_tag_id=source,
            medication_token=med_tok,
        )
    ]


def extract_document(
    transcript: Transcript,
    predictor,
    lexicon: Sequence[str] | None = None,
    config: PreprocessConfig | None = None,
) -> list[ExtractionResult]:
    """Detect, segment, and extract every medication mention in a transcript.

    ``predictor`` is a fitted extractor (or a bare extraction model); the
    summarization variant is not an extractor. Results follow hit order.
    """
    config = config or PreprocessConfig()
    lexicon = list(lexicon) if lexicon is not None else config.medication_lexicon
    variant = _variant_of(predictor)
    if variant not in ("qa", "md"):
        raise ValueError(f"extraction requires a qa or md model, got {variant!r}")

    hits = detect_medications(transcript, lexicon)
    segments = segment_transcript(transcript, hits)
    matcher = MedicationMatcher(list(lexicon))

    examples: list[Example] = []
    spans: list[tuple[Segment, int, int]] = []
    for ordinal, segment in enumerate(segments):
        new = _segment_examples(segment, ordinal, variant, matcher, config)
        spans.append((segment, len(examples), len(new)))
        examples.extend(new)
    if not examples:
        return []

    predictions = _predict(predictor, examples)
    results: list[ExtractionResult] = []
    for segment, start, count in spans:
        merged: dict[str, list[str]] = {}
        for example, prediction in zip(
            examples[start : start + count], predictions[start : start + count]
        ):
            for fld in example.fields_covered:
                merged[fld] = list(prediction[fld])
        results.append(
            ExtractionResult(
                medication=segment.medication,
                medication_token=medication_token(segment.medication),
                dosage=merged["dosage"],
                frequency=merged["frequency"],
                segment=segment,
            )
        )
    return results


# ---------------------------------------------------------------------------
# Scoring extractions against tags


def _tag_targets(tag: MRTag, config: PreprocessConfig) -> dict[str, list[str]]:
    if tag.dosage == NONE_LABEL:
        dosage = [NONE_LABEL]
    else:
        stripped = strip_dosage_units(normalize_numbers(tag.dosage), config.unit_lexicon)
        dosage = stripped.split() if stripped != NONE_LABEL else [NONE_LABEL]
    frequency = (
        [NONE_LABEL] if tag.frequency == NONE_LABEL else normalize_text(tag.frequency)
    )
    return {"dosage": dosage, "frequency": frequency}


def _segment_interval(transcript: Transcript, segment: Segment) -> tuple[float, float]:
    first = transcript.sentences[segment.first_sentence]
    last = transcript.sentences[segment.last_sentence]
    return first.start_s, last.end_s


def _overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def evaluate_extractions(
    pairs: list[tuple[Transcript, list[ExtractionResult]]],
    config: PreprocessConfig | None = None,
) -> dict[str, float]:
    """Score extraction results against each transcript's own tags.

    For every tag with at least one non-none field, the candidate results
    with the same medication token are ranked by time overlap with the tag's
    grounding (first wins ties); an unmatched tag scores zero. Returns mean
    dosage exact match and mean ROUGE-1 F1 per field over the scored tags.
    """
    config = config or PreprocessConfig()
    dosage_em: list[float] = []
    f1: dict[str, list[float]] = {fld: [] for fld in FIELDS}
    for transcript, results in pairs:
        for tag in transcript.mr_tags:
            if tag.dosage == NONE_LABEL and tag.frequency == NONE_LABEL:
                continue
            targets = _tag_targets(tag, config)
            med_tok = medication_token(tag.medication)
            candidates = [r for r in results if r.medication_token == med_tok]
            best = None
            if candidates:
                best = max(
                    candidates,
                    key=lambda r: _overlap(
                        (tag.start_s, tag.end_s), _segment_interval(transcript, r.segment)
                    ),
                )
            for fld in FIELDS:
                hyp = list(getattr(best, fld)) if best is not None else []
                f1[fld].append(rouge1(hyp, targets[fld]).f1)
                if fld == "dosage":
                    dosage_em.append(float(exact_match(hyp, targets[fld])))
    scored = len(dosage_em)
    return {
        "tags_scored": float(scored),
        "dosage_exact_match": float(np.mean(dosage_em)) if scored else 0.0,
        "dosage_f1": float(np.mean(f1["dosage"])) if scored else 0.0,
        "frequency_f1": float(np.mean(f1["frequency"])) if scored else 0.0,
    }
