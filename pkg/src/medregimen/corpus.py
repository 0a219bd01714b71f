"""Transcript corpus data model, JSONL serialization, and splitting.

A corpus file holds one transcript per line as a JSON object:

    {"id": "...",
     "sentences": [{"text": "...", "start_s": 0.0, "end_s": 2.4, "speaker": "dr"}, ...],
     "mr_tags": [{"medication": "...", "dosage": "...", "frequency": "...",
                  "start_s": ..., "end_s": ...}, ...],
     "summaries": [{"text": "...", "start_s": ..., "end_s": ...}, ...]}

Missing tag fields hold the literal string "none". Sentences, tags, and
summaries are each ordered by start time. Keys are written sorted so a corpus
serializes byte-identically for identical content.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: Literal used for an absent dosage or frequency, and as the decoder sentinel.
NONE_LABEL = "none"


class CorpusFormatError(ValueError):
    """A corpus file or record violates the transcript format."""


def _check_interval(start_s: float, end_s: float, what: str) -> None:
    if not (math.isfinite(start_s) and math.isfinite(end_s)):
        raise CorpusFormatError(f"{what}: non-finite time interval ({start_s}, {end_s})")
    if start_s < 0 or end_s < start_s:
        raise CorpusFormatError(f"{what}: bad time interval ({start_s}, {end_s})")


@dataclass
class Sentence:
    text: str
    start_s: float
    end_s: float
    speaker: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusFormatError("sentence text is empty")
        _check_interval(self.start_s, self.end_s, "sentence")


@dataclass
class MRTag:
    """One medication regimen annotation grounded to a time interval."""

    medication: str
    dosage: str
    frequency: str
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not self.medication.strip():
            raise CorpusFormatError("mr_tag medication is empty")
        if not self.dosage or not self.frequency:
            raise CorpusFormatError(
                f"mr_tag fields must be text or {NONE_LABEL!r}, got empty string"
            )
        _check_interval(self.start_s, self.end_s, "mr_tag")


@dataclass
class SummaryTag:
    text: str
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusFormatError("summary text is empty")
        _check_interval(self.start_s, self.end_s, "summary")


@dataclass
class Transcript:
    id: str
    sentences: list[Sentence]
    mr_tags: list[MRTag] = field(default_factory=list)
    summaries: list[SummaryTag] = field(default_factory=list)

    def __post_init__(self) -> None:
        # An empty sentence list is legal: heavy ASR noise can delete every
        # sentence, and the noised transcript must still round-trip.
        if not self.id:
            raise CorpusFormatError("transcript id is empty")
        for name, items in (
            ("sentences", self.sentences),
            ("mr_tags", self.mr_tags),
            ("summaries", self.summaries),
        ):
            starts = [item.start_s for item in items]
            if starts != sorted(starts):
                raise CorpusFormatError(
                    f"transcript {self.id!r}: {name} not ordered by start_s"
                )

    def sentences_in(self, start_s: float, end_s: float) -> list[Sentence]:
        """Sentences whose interval overlaps [start_s, end_s] (closed overlap)."""
        return [
            s for s in self.sentences
            if s.start_s <= end_s and s.end_s >= start_s
        ]


@dataclass
class Corpus:
    transcripts: list[Transcript]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for t in self.transcripts:
            if t.id in seen:
                raise CorpusFormatError(f"duplicate transcript id {t.id!r}")
            seen.add(t.id)
        self._by_id = {t.id: t for t in self.transcripts}

    def __len__(self) -> int:
        return len(self.transcripts)

    def __iter__(self):
        return iter(self.transcripts)

    def __getitem__(self, transcript_id: str) -> Transcript:
        return self._by_id[transcript_id]

    def __contains__(self, transcript_id: str) -> bool:
        return transcript_id in self._by_id

    def subset(self, ids: list[str]) -> "Corpus":
        missing = [i for i in ids if i not in self._by_id]
        if missing:
            raise KeyError(f"ids not in corpus: {missing[:5]}")
        return Corpus([self._by_id[i] for i in ids])


@dataclass
class CorpusSplit:
    """Disjoint transcript-id lists; holdout is the reserved evaluation set."""

    train: list[str]
    validation: list[str]
    test: list[str]
    holdout: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        all_ids = self.train + self.validation + self.test + self.holdout
        if len(all_ids) != len(set(all_ids)):
            raise CorpusFormatError("split parts overlap")

    def part(self, name: str) -> list[str]:
        if name not in ("train", "validation", "test", "holdout"):
            raise KeyError(f"unknown split part {name!r}")
        return getattr(self, name)


def _sentence_to_dict(s: Sentence) -> dict:
    d = {"text": s.text, "start_s": s.start_s, "end_s": s.end_s}
    if s.speaker is not None:
        d["speaker"] = s.speaker
    return d


def transcript_to_dict(t: Transcript) -> dict:
    return {
        "id": t.id,
        "sentences": [_sentence_to_dict(s) for s in t.sentences],
        "mr_tags": [
            {
                "medication": g.medication,
                "dosage": g.dosage,
                "frequency": g.frequency,
                "start_s": g.start_s,
                "end_s": g.end_s,
            }
            for g in t.mr_tags
        ],
        "summaries": [
            {"text": s.text, "start_s": s.start_s, "end_s": s.end_s}
            for s in t.summaries
        ],
    }


def _require(d: dict, key: str, kind, what: str):
    if key not in d:
        raise CorpusFormatError(f"{what}: missing key {key!r}")
    value = d[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CorpusFormatError(f"{what}: key {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise CorpusFormatError(f"{what}: key {key!r} must be {kind.__name__}")
    return value


def transcript_from_dict(d: dict) -> Transcript:
    if not isinstance(d, dict):
        raise CorpusFormatError("transcript record is not a JSON object")
    tid = _require(d, "id", str, "transcript")
    what = f"transcript {tid!r}"
    sentences = [
        Sentence(
            text=_require(s, "text", str, what),
            start_s=_require(s, "start_s", float, what),
            end_s=_require(s, "end_s", float, what),
            speaker=s.get("speaker"),
        )
        for s in _require(d, "sentences", list, what)
    ]
    mr_tags = [
        MRTag(
            medication=_require(g, "medication", str, what),
            dosage=_require(g, "dosage", str, what),
            frequency=_require(g, "frequency", str, what),
            start_s=_require(g, "start_s", float, what),
            end_s=_require(g, "end_s", float, what),
        )
        for g in d.get("mr_tags", [])
    ]
    summaries = [
        SummaryTag(
            text=_require(s, "text", str, what),
            start_s=_require(s, "start_s", float, what),
            end_s=_require(s, "end_s", float, what),
        )
        for s in d.get("summaries", [])
    ]
    return Transcript(id=tid, sentences=sentences, mr_tags=mr_tags, summaries=summaries)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for t in corpus:
            fh.write(json.dumps(transcript_to_dict(t), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    transcripts = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            try:
                transcripts.append(transcript_from_dict(record))
            except CorpusFormatError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    return Corpus(transcripts)


def split_corpus(
    corpus: Corpus,
    seed: int,
    fractions: tuple[float, float, float, float] = (0.8, 0.1, 0.1, 0.0),
) -> CorpusSplit:
    """Randomly partition transcript ids into train/validation/test/holdout.

    Part sizes follow the fractions by largest remainder, so each size is
    within one of ``len(corpus) * fraction`` and the parts cover the corpus.
    """
    if len(fractions) != 4:
        raise ValueError("fractions must be (train, validation, test, holdout)")
    if any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be non-negative: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    ids = [t.id for t in corpus]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]

    n = len(ids)
    raw = [f * n for f in fractions]
    sizes = [int(math.floor(r)) for r in raw]
    leftover = n - sum(sizes)
    by_remainder = sorted(range(4), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in by_remainder[:leftover]:
        sizes[i] += 1

    parts = []
    at = 0
    for size in sizes:
        parts.append(shuffled[at:at + size])
        at += size
    return CorpusSplit(*parts)


def save_split(split: CorpusSplit, path: str | Path) -> None:
    payload = {
        "train": split.train,
        "validation": split.validation,
        "test": split.test,
        "holdout": split.holdout,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=0) + "\n", encoding="utf-8")


def load_split(path: str | Path) -> CorpusSplit:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise CorpusFormatError(f"{path}: split file must hold a JSON object")
    parts = {}
    for name in ("train", "validation", "test", "holdout"):
        part = payload.get(name, [])
        if not isinstance(part, list) or not all(isinstance(i, str) for i in part):
            raise CorpusFormatError(f"{path}: split part {name!r} must be a list of ids")
        parts[name] = part
    return CorpusSplit(**parts)
