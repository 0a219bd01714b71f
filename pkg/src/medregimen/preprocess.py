"""Turn annotated transcripts into model-ready extraction examples.

The preprocessing contract, applied uniformly to inputs, questions, and
targets so the copy mechanism sees one consistent token space:

- lowercase everything;
- rewrite every numeral to its canonical hyphen-joined word form
  ("110" -> "one-hundred-ten", "3.5" and "three point five" -> "three-point-five");
- collapse each known medication mention to a single "rx-" token, longest
  match first ("baby aspirin" -> "rx-baby-aspirin");
- strip unit words out of dosage annotations ("3.5 mg" -> "three-point-five");
- prepend the sentinel token "none" to every input so a pointer can always
  copy a no-answer.

An Example carries the grounded segment for one MR tag. In "qa" mode each
tag yields one example per field, conditioned on the filled question template
"what is the <field> for <rx-medication>"; in "entity" mode one example
conditioned on the medication token alone. Segments longer than 150 words
are dropped, budgets cap the dosage answer at one token and the frequency
answer at three, and inputs are truncated to 100 tokens around the first
medication mention.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from medregimen.corpus import NONE_LABEL, Corpus
from medregimen.numwords import is_number_token, normalize_tokens

QA_MODE = "qa"
ENTITY_MODE = "entity"
FIELDS = ("dosage", "frequency")

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
START_TOKEN = "<start>"
STOP_TOKEN = "<stop>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, START_TOKEN, STOP_TOKEN)

# Decimals, grouped or plain integers, the de-identification marker, words
# (hyphens and apostrophes inside), then any leftover symbol on its own.
_TOKEN_RE = re.compile(
    r"\d+\.\d+|\d+(?:,\d{3})*|\[de-identified\]|[a-z]+(?:[-'][a-z]+)*|\S"
)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def normalize_text(text: str) -> list[str]:
    """Lowercased tokens with every numeral in canonical word form."""
    return normalize_tokens(tokenize(text))


def normalize_numbers(text: str) -> str:
    """String form of :func:`normalize_text`; idempotent."""
    return " ".join(normalize_text(text))


# ---------------------------------------------------------------------------
# Lexicons


def _parse_lexicon(text: str) -> list[str]:
    entries = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            entries.append(normalize_numbers(line))
    return list(dict.fromkeys(entries))


def load_lexicon(path: str | Path) -> list[str]:
    """Read a one-entry-per-line lexicon; '#' starts a comment."""
    return _parse_lexicon(Path(path).read_text(encoding="utf-8"))


def default_medication_lexicon() -> list[str]:
    return _parse_lexicon(
        (resources.files("medregimen") / "data" / "medications.txt").read_text("utf-8")
    )


def default_unit_lexicon() -> list[str]:
    return _parse_lexicon(
        (resources.files("medregimen") / "data" / "units.txt").read_text("utf-8")
    )


class MedicationMatcher:
    """Longest-first matcher for (possibly multi-word) medication entries."""

    def __init__(self, entries: list[str]):
        if not entries:
            raise ValueError("medication lexicon is empty")
        self._by_first: dict[str, list[tuple[str, ...]]] = {}
        for entry in entries:
            parts = tuple(entry.split())
            self._by_first.setdefault(parts[0], []).append(parts)
        for candidates in self._by_first.values():
            candidates.sort(key=len, reverse=True)

    def find(self, tokens: list[str]) -> list[tuple[int, int, str]]:
        """Non-overlapping (start, end_exclusive, entry) spans, left to right."""
        spans = []
        i = 0
        n = len(tokens)
        while i < n:
            for parts in self._by_first.get(tokens[i], ()):
                if tuple(tokens[i:i + len(parts)]) == parts:
                    spans.append((i, i + len(parts), " ".join(parts)))
                    i += len(parts)
                    break
            else:
                i += 1
        return spans


def medication_token(name: str) -> str:
    """Collapse a medication name to its single prefixed token."""
    parts = normalize_text(name)
    if not parts:
        raise ValueError(f"medication name {name!r} has no tokens")
    return "rx-" + "-".join(parts)


def tag_medications(tokens: list[str], matcher: MedicationMatcher) -> list[str]:
    """Replace each matched mention with its single rx- token."""
    out = []
    at = 0
    for start, end, entry in matcher.find(tokens):
        out.extend(tokens[at:start])
        out.append("rx-" + "-".join(entry.split()))
        at = end
    out.extend(tokens[at:])
    return out


# ---------------------------------------------------------------------------
# Examples


@dataclass
class BuildStats:
    tags_seen: int = 0
    examples_emitted: int = 0
    skipped_both_none: int = 0
    skipped_no_sentences: int = 0
    skipped_overlong_segment: int = 0
    skipped_medication_missing: int = 0
    skipped_multiword_dosage: int = 0
    skipped_overlong_frequency: int = 0
    dosage_without_number: int = 0


@dataclass
class PreprocessConfig:
    medication_lexicon: list[str] = field(default_factory=default_medication_lexicon)
    unit_lexicon: list[str] = field(default_factory=default_unit_lexicon)
    max_input_tokens: int = 100
    max_segment_words: int = 150
    max_frequency_tokens: int = 3
    max_summary_tokens: int = 12

    def __post_init__(self) -> None:
        if self.max_input_tokens < 2:
            raise ValueError("max_input_tokens must leave room for the sentinel")
        for name in ("max_segment_words", "max_frequency_tokens", "max_summary_tokens"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class Example:
    """One grounded extraction case: a segment, a condition, and its answers."""

    input_tokens: list[str]
    condition_tokens: list[str]
    dosage_target: list[str]
    frequency_target: list[str]
    source_tag_id: str
    medication_token: str
    query_field: str | None = None
    category_labels: list[str] = field(default_factory=list)

    @property
    def example_id(self) -> str:
        if self.query_field is None:
            return self.source_tag_id
        return f"{self.source_tag_id}::{self.query_field}"

    def target_for(self, fld: str) -> list[str]:
        if fld == "dosage":
            return self.dosage_target
        if fld == "frequency":
            return self.frequency_target
        raise KeyError(f"unknown field {fld!r}")

    @property
    def fields_covered(self) -> tuple[str, ...]:
        return FIELDS if self.query_field is None else (self.query_field,)


@dataclass
class SummaryExample:
    """Pretraining case: a grounded segment and its summary sentence."""

    input_tokens: list[str]
    target_tokens: list[str]
    source_id: str

    @property
    def example_id(self) -> str:
        return self.source_id


def question_tokens(fld: str, med_token: str) -> list[str]:
    if fld not in FIELDS:
        raise ValueError(f"question field must be one of {FIELDS}, got {fld!r}")
    return ["what", "is", "the", fld, "for", med_token]


def strip_dosage_units(
    dosage: str, unit_lexicon: list[str], stats: BuildStats | None = None
) -> str:
    """Drop unit words from a normalized dosage string.

    A dosage with no number token left afterwards (for example "as directed")
    becomes the none label, counted on ``stats``.
    """
    units = set(unit_lexicon)
    kept = [t for t in dosage.split() if t not in units]
    if not any(is_number_token(t) for t in kept):
        if stats is not None:
            stats.dosage_without_number += 1
        return NONE_LABEL
    return " ".join(kept)


def _truncate_segment(seg: list[str], med_tok: str, budget: int) -> list[str]:
    """Window of ``budget`` tokens centered on the first medication mention."""
    if len(seg) <= budget:
        return seg
    pos = seg.index(med_tok)
    start = min(max(pos - budget // 2, 0), len(seg) - budget)
    return seg[start:start + budget]


def segment_tokens(
    transcript, start_s: float, end_s: float, matcher: MedicationMatcher
) -> list[str]:
    """Normalized, medication-tagged tokens of the grounded interval."""
    tokens: list[str] = []
    for sentence in transcript.sentences_in(start_s, end_s):
        tokens.extend(tag_medications(normalize_text(sentence.text), matcher))
    return tokens


def build_examples(
    corpus: Corpus,
    ids: list[str] | None = None,
    mode: str = QA_MODE,
    config: PreprocessConfig | None = None,
    stats: BuildStats | None = None,
) -> list[Example]:
    """Build extraction examples for every usable MR tag.

    Tags with both fields absent are not training material and are skipped.
    Skips are tallied on ``stats`` when given.
    """
    if mode not in (QA_MODE, ENTITY_MODE):
        raise ValueError(f"mode must be {QA_MODE!r} or {ENTITY_MODE!r}, got {mode!r}")
    if config is None:
        config = PreprocessConfig()
    if stats is None:
        stats = BuildStats()
    from medregimen.evaluation import categorize  # leaf import, avoids a cycle

    matcher = MedicationMatcher(config.medication_lexicon)
    examples: list[Example] = []
    transcripts = corpus.transcripts if ids is None else [corpus[i] for i in ids]

    for transcript in transcripts:
        for tag_index, tag in enumerate(transcript.mr_tags):
            stats.tags_seen += 1
            tag_id = f"{transcript.id}#t{tag_index}"

            if tag.dosage == NONE_LABEL and tag.frequency == NONE_LABEL:
                stats.skipped_both_none += 1
                continue

            seg = segment_tokens(transcript, tag.start_s, tag.end_s, matcher)
            if not seg:
                stats.skipped_no_sentences += 1
                continue
            if len(seg) > config.max_segment_words:
                stats.skipped_overlong_segment += 1
                continue

            med_tok = medication_token(tag.medication)
            if med_tok not in seg:
                stats.skipped_medication_missing += 1
                continue

            if tag.dosage == NONE_LABEL:
                dosage_target = [NONE_LABEL]
            else:
                stripped = strip_dosage_units(
                    normalize_numbers(tag.dosage), config.unit_lexicon, stats
                )
                dosage_target = stripped.split() if stripped != NONE_LABEL else [NONE_LABEL]
                if len(dosage_target) > 1:
                    stats.skipped_multiword_dosage += 1
                    continue

            if tag.frequency == NONE_LABEL:
                frequency_target = [NONE_LABEL]
            else:
                frequency_target = normalize_text(tag.frequency)
                if len(frequency_target) > config.max_frequency_tokens:
                    stats.skipped_overlong_frequency += 1
                    continue

            window = _truncate_segment(seg, med_tok, config.max_input_tokens - 1)
            input_tokens = [NONE_LABEL] + window

            if mode == QA_MODE:
                new = [
                    Example(
                        input_tokens=list(input_tokens),
                        condition_tokens=question_tokens(fld, med_tok),
                        dosage_target=list(dosage_target),
                        frequency_target=list(frequency_target),
                        source_tag_id=tag_id,
                        medication_token=med_tok,
                        query_field=fld,
                    )
                    for fld in FIELDS
                ]
            else:
                new = [
                    Example(
                        input_tokens=list(input_tokens),
                        condition_tokens=[med_tok],
                        dosage_target=list(dosage_target),
                        frequency_target=list(frequency_target),
                        source_tag_id=tag_id,
                        medication_token=med_tok,
                    )
                ]
            for ex in new:
                ex.category_labels = sorted(categorize(ex))
            examples.extend(new)
            stats.examples_emitted += len(new)

    return examples


def build_summary_examples(
    corpus: Corpus,
    ids: list[str] | None = None,
    config: PreprocessConfig | None = None,
) -> list[SummaryExample]:
    """Segment/summary pairs for encoder pretraining, preprocessed identically."""
    if config is None:
        config = PreprocessConfig()
    matcher = MedicationMatcher(config.medication_lexicon)
    examples: list[SummaryExample] = []
    transcripts = corpus.transcripts if ids is None else [corpus[i] for i in ids]
    for transcript in transcripts:
        for index, summary in enumerate(transcript.summaries):
            seg = segment_tokens(transcript, summary.start_s, summary.end_s, matcher)
            if not seg or len(seg) > config.max_segment_words:
                continue
            target = tag_medications(normalize_text(summary.text), matcher)
            if not target:
                continue
            examples.append(
                SummaryExample(
                    input_tokens=[NONE_LABEL] + seg[:config.max_input_tokens - 1],
                    target_tokens=target[:config.max_summary_tokens],
                    source_id=f"{transcript.id}#s{index}",
                )
            )
    return examples


# ---------------------------------------------------------------------------
# Shuffle augmentation


def _distinct_in_order(tokens: list[str], keep) -> list[str]:
    return list(dict.fromkeys(t for t in tokens if keep(t)))


def augmentation_eligible(example: Example) -> bool:
    """Two or more distinct medications, or two or more distinct numbers."""
    meds = _distinct_in_order(example.input_tokens, lambda t: t.startswith("rx-"))
    nums = _distinct_in_order(example.input_tokens, is_number_token)
    return len(meds) >= 2 or len(nums) >= 2


def augment_by_shuffle(examples: list[Example], seed: int) -> list[Example]:
    """Append one value-shuffled copy of every eligible example.

    Distinct medication tokens are permuted among themselves, and distinct
    number tokens likewise, consistently across input, condition, and both
    targets, so each copy stays internally consistent while breaking any
    memorized binding between a medication and a fixed value. Output order:
    all originals first, then the shuffled copies in source order.
    """
    rng = np.random.default_rng(seed)
    out = list(examples)
    from medregimen.evaluation import categorize  # leaf import, avoids a cycle

    for ex in examples:
        meds = _distinct_in_order(ex.input_tokens, lambda t: t.startswith("rx-"))
        nums = _distinct_in_order(ex.input_tokens, is_number_token)
        if len(meds) < 2 and len(nums) < 2:
            continue
        for _ in range(20):
            med_perm = rng.permutation(len(meds))
            num_perm = rng.permutation(len(nums))
            if any(int(p) != i for i, p in enumerate(med_perm)) or any(
                int(p) != i for i, p in enumerate(num_perm)
            ):
                break
        mapping = {m: meds[int(p)] for m, p in zip(meds, med_perm)}
        mapping.update({n: nums[int(p)] for n, p in zip(nums, num_perm)})

        def remap(tokens: list[str]) -> list[str]:
            return [mapping.get(t, t) for t in tokens]

        shuffled = Example(
            input_tokens=remap(ex.input_tokens),
            condition_tokens=remap(ex.condition_tokens),
            dosage_target=remap(ex.dosage_target),
            frequency_target=remap(ex.frequency_target),
            source_tag_id=f"{ex.source_tag_id}~s",
            medication_token=mapping.get(ex.medication_token, ex.medication_token),
            query_field=ex.query_field,
        )
        shuffled.category_labels = sorted(categorize(shuffled))
        out.append(shuffled)
    return out


# ---------------------------------------------------------------------------
# Vocabulary


@dataclass
class Vocabulary:
    """Fixed word list with reserved ids 0-3 for pad/unk/start/stop."""

    words: list[str]
    threshold: int

    PAD = 0
    UNK = 1
    START = 2
    STOP = 3

    def __post_init__(self) -> None:
        if tuple(self.words[:4]) != RESERVED_TOKENS:
            raise ValueError(f"vocabulary must start with {RESERVED_TOKENS}")
        self._index = {w: i for i, w in enumerate(self.words)}
        if len(self._index) != len(self.words):
            raise ValueError("vocabulary contains duplicate words")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def id(self, word: str) -> int:
        return self._index.get(word, self.UNK)

    def word(self, idx: int) -> str:
        return self.words[idx]

    def to_dict(self) -> dict:
        return {"words": self.words, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        return cls(words=list(payload["words"]), threshold=int(payload["threshold"]))


def _example_token_streams(example) -> list[list[str]]:
    if isinstance(example, SummaryExample):
        return [example.input_tokens, example.target_tokens]
    return [
        example.input_tokens,
        example.condition_tokens,
        example.dosage_target,
        example.frequency_target,
    ]


def build_vocabulary(examples, threshold: int = 30) -> Vocabulary:
    """Count words across all example streams and keep those at threshold.

    Ties and order are fixed: words sort by descending count, then
    alphabetically, after the four reserved tokens.
    """
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    counts: Counter[str] = Counter()
    for example in examples:
        for stream in _example_token_streams(example):
            counts.update(stream)
    kept = [w for w, c in counts.items() if c >= threshold and w not in RESERVED_TOKENS]
    kept.sort(key=lambda w: (-counts[w], w))
    return Vocabulary(words=list(RESERVED_TOKENS) + kept, threshold=threshold)


# ---------------------------------------------------------------------------
# Validation and serialization


def check_examples(examples: list[Example]) -> None:
    """Validate example invariants; raises ValueError naming the offender."""
    if not examples:
        raise ValueError("no examples to train or evaluate on")
    for ex in examples:
        eid = ex.example_id
        if not ex.input_tokens or ex.input_tokens[0] != NONE_LABEL:
            raise ValueError(f"{eid}: input must start with the {NONE_LABEL!r} sentinel")
        if not ex.condition_tokens:
            raise ValueError(f"{eid}: condition tokens are empty")
        if len(ex.dosage_target) != 1:
            raise ValueError(f"{eid}: dosage target must be exactly one token")
        if not 1 <= len(ex.frequency_target) <= 3:
            raise ValueError(f"{eid}: frequency target must be 1-3 tokens")
        if not ex.medication_token.startswith("rx-"):
            raise ValueError(f"{eid}: medication token lacks the rx- prefix")
        if ex.query_field not in (None, *FIELDS):
            raise ValueError(f"{eid}: bad query_field {ex.query_field!r}")
        for stream in _example_token_streams(ex):
            for tok in stream:
                if not tok or tok != tok.lower() or " " in tok:
                    raise ValueError(f"{eid}: token {tok!r} is not normalized")


def save_examples(examples: list[Example], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "input_tokens": ex.input_tokens,
                "condition_tokens": ex.condition_tokens,
                "dosage_target": ex.dosage_target,
                "frequency_target": ex.frequency_target,
                "source_tag_id": ex.source_tag_id,
                "medication_token": ex.medication_token,
                "query_field": ex.query_field,
                "category_labels": ex.category_labels,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def load_examples(path: str | Path) -> list[Example]:
    examples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                examples.append(
                    Example(
                        input_tokens=record["input_tokens"],
                        condition_tokens=record["condition_tokens"],
                        dosage_target=record["dosage_target"],
                        frequency_target=record["frequency_target"],
                        source_tag_id=record["source_tag_id"],
                        medication_token=record["medication_token"],
                        query_field=record["query_field"],
                        category_labels=record.get("category_labels", []),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad example record: {exc}") from exc
    return examples
