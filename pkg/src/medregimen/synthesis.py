"""Synthetic doctor-patient conversations with planted regimen annotations.

Each transcript is a short visit: greetings, one segment per medication
discussion, filler turns between segments, and a close. Every MR tag is
grounded to the exact time interval of its segment, the medication surface
always appears inside that interval, and planted dosage values appear
verbatim (as digits or spelled out, which normalize to the same token).

Distractors are planted at profile-controlled rates so every evaluation
category is populated: a second medication in the same segment (MM), an
extra non-dosage number such as a vital reading (MN), and a reading placed
between the medication mention and its dosage (NBM). Frequency tags store a
canonical phrase while the transcript may voice a paraphrase, so frequency
extraction is not purely a copy task.

Generation is deterministic in (seed, n_transcripts, profile); transcript i
draws from its own child generator, so a corpus is a prefix of any longer
corpus with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from medregimen.corpus import NONE_LABEL, Corpus, MRTag, Sentence, SummaryTag, Transcript
from medregimen.numwords import is_number_token, normalize_tokens, render_number
from medregimen.preprocess import default_medication_lexicon

_DOSAGE_VALUES = [
    "0.5", "1.5", "2.5", "3.5", "5", "7.5", "10", "12.5", "20", "25", "40",
    "50", "75", "81", "150", "200", "250", "325", "500", "1000",
]
_DOSAGE_UNITS = ["mg", "mg", "mg", "mg", "milligrams", "mcg", "units"]

_FREQUENCIES: dict[str, list[str]] = {
    "daily": ["every day", "once a day", "once daily", "each day"],
    "twice a day": ["two times a day", "twice daily", "morning and night"],
    "nightly": ["every night", "at night", "before bed"],
    "every morning": ["in the morning", "each morning", "when you wake up"],
    "at bedtime": ["before you sleep", "when you go to bed"],
    "as needed": ["when you need it", "only if you need it"],
    "every other day": ["alternate days", "every second day"],
    "weekly": ["once a week", "every week"],
    "with meals": ["with food", "at mealtimes"],
}

_VITAL_READINGS = [
    ("blood pressure", ["120 over 80", "130 over 85", "140 over 90", "118 over 76"]),
    ("sugar", ["98", "110", "126", "6.8", "7.2"]),
    ("heart rate", ["72", "88", "64", "95"]),
    ("weight", ["160", "185", "210", "148"]),
]

_DISFLUENCIES = ["uh", "um", "well", "you know", "so", "like"]

_OPENINGS = [
    ("dr", ["hi", "there", ",", "good", "to", "see", "you", "again", "."]),
    ("dr", ["how", "have", "you", "been", "feeling", "?"]),
    ("pt", ["pretty", "good", ",", "thanks", "."]),
    ("dr", ["let's", "go", "over", "your", "medicines", "."]),
]

_FILLERS = [
    ("pt", ["yes", ",", "i", "think", "so", "."]),
    ("pt", ["okay", ",", "sounds", "good", "."]),
    ("dr", ["any", "dizziness", "or", "headaches", "?"]),
    ("pt", ["no", ",", "not", "really", "."]),
    ("dr", ["alright", ",", "let", "me", "note", "that", "down", "."]),
    ("pt", ["mm", "hmm", "."]),
    ("dr", ["we", "will", "see", "how", "it", "goes", "."]),
    ("dr", ["anything", "else", "bothering", "you", "?"]),
]

_CLOSINGS = [
    ("dr", ["alright", ",", "take", "care", "."]),
    ("dr", ["see", "you", "at", "the", "next", "visit", "."]),
]


@dataclass
class GenerationProfile:
    """Knobs for the synthetic corpus; rates are per-opportunity probabilities."""

    medications: list[str] = field(default_factory=default_medication_lexicon)
    dosage_values: list[str] = field(default_factory=lambda: list(_DOSAGE_VALUES))
    dosage_units: list[str] = field(default_factory=lambda: list(_DOSAGE_UNITS))
    frequencies: dict[str, list[str]] = field(
        default_factory=lambda: {k: list(v) for k, v in _FREQUENCIES.items()}
    )
    mm_rate: float = 0.35          # second medication inside the segment
    mn_rate: float = 0.30          # extra non-dosage number after the dosage
    nbm_rate: float = 0.30         # reading between medication and dosage
    none_dosage_rate: float = 0.18
    none_frequency_rate: float = 0.18
    both_none_rate: float = 0.08
    disfluency_rate: float = 0.25
    deidentify_rate: float = 0.06
    unit_omit_rate: float = 0.15
    spelled_number_rate: float = 0.5   # dose voiced as words instead of digits
    paraphrase_rate: float = 0.5       # frequency voiced as a non-canonical surface
    summary_rate: float = 0.9
    min_tags: int = 1
    max_tags: int = 3

    def __post_init__(self) -> None:
        for name in (
            "mm_rate", "mn_rate", "nbm_rate", "none_dosage_rate",
            "none_frequency_rate", "both_none_rate", "disfluency_rate",
            "deidentify_rate", "unit_omit_rate", "spelled_number_rate",
            "paraphrase_rate", "summary_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not self.medications:
            raise ValueError("medication lexicon is empty")
        if not self.dosage_values or not self.dosage_units:
            raise ValueError("dosage lexicons are empty")
        if not self.frequencies or any(not s for s in self.frequencies.values()):
            raise ValueError("every frequency needs at least one surface form")
        if not 1 <= self.min_tags <= self.max_tags:
            raise ValueError(
                f"need 1 <= min_tags <= max_tags, got {self.min_tags}, {self.max_tags}"
            )
        # Each tag may pull in a distractor medication, all distinct.
        per_tag = 2 if self.mm_rate > 0 else 1
        if self.max_tags * per_tag > len(self.medications):
            raise ValueError("medication lexicon too small for max_tags distinct segments")


def default_profile() -> GenerationProfile:
    return GenerationProfile()


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _canonical_value(text: str) -> str:
    """Single canonical token for a number written as digits or words."""
    toks = normalize_tokens(text.split())
    return toks[0] if len(toks) == 1 else " ".join(toks)


class _TranscriptBuilder:
    def __init__(self, tid: str, rng: np.random.Generator):
        self.tid = tid
        self.rng = rng
        self.sentences: list[Sentence] = []
        self.cursor = round(float(rng.uniform(0.0, 2.0)), 1)

    def emit(self, speaker: str, chunks: list[str]) -> tuple[float, float]:
        text = " ".join(chunks)
        words = len(text.split())
        start = self.cursor
        duration = 0.8 + 0.32 * words + float(self.rng.uniform(0.0, 0.3))
        end = round(start + duration, 1)
        self.sentences.append(Sentence(text=text, start_s=start, end_s=end, speaker=speaker))
        self.cursor = round(end + float(self.rng.uniform(0.2, 0.9)), 1)
        return start, end


def _with_disfluency(rng: np.random.Generator, rate: float, chunks: list[str]) -> list[str]:
    # Chunks are atomic: filler lands between them, never inside a value phrase.
    if rng.random() >= rate or len(chunks) < 2:
        return chunks
    at = int(rng.integers(1, len(chunks)))
    return chunks[:at] + [_pick(rng, _DISFLUENCIES)] + chunks[at:]


def _dose_phrase(rng: np.random.Generator, profile: GenerationProfile) -> tuple[list[str], str, str]:
    """Voiced dose chunks, the annotated dosage string, and its canonical token."""
    value = _pick(rng, profile.dosage_values)
    spoken = value
    if rng.random() < profile.spelled_number_rate:
        spoken = render_number(
            int(value.split(".")[0]), value.split(".")[1] if "." in value else ""
        ).replace("-", " ")
    if rng.random() < profile.unit_omit_rate:
        return [spoken], value, _canonical_value(value)
    unit = _pick(rng, profile.dosage_units)
    return [spoken, unit], f"{value} {unit}", _canonical_value(value)


def _freq_phrase(rng: np.random.Generator, profile: GenerationProfile) -> tuple[str, str]:
    """(voiced surface, canonical annotation)."""
    canonical = _pick(rng, sorted(profile.frequencies))
    if rng.random() < profile.paraphrase_rate:
        return _pick(rng, profile.frequencies[canonical]), canonical
    return canonical, canonical


def _reading(rng: np.random.Generator, banned: set[str]) -> tuple[str, str]:
    """A vital name and reading whose numbers avoid the banned canonical tokens."""
    for _ in range(10):
        name, readings = _pick(rng, _VITAL_READINGS)
        reading = _pick(rng, readings)
        tokens = set(normalize_tokens(reading.split()))
        if not (tokens & banned):
            return name, reading
    return name, reading  # all draws collided; accept the last one


def _dose_then_freq(dose: list[str], freq: str) -> list[str]:
    """Dose chunks followed by a frequency surface, kept unambiguous.

    A bare-number dose tail running straight into a number-initial frequency
    ("take it at twenty two times a day") would normalize into one number and
    lose the planted value; a comma keeps the two values apart, the way the
    utterance would actually be punctuated.
    """
    tail = dose[-1].split()[-1] if dose and dose[-1].split() else ""
    head = freq.split()[0] if freq.split() else ""
    if tail and head and is_number_token(tail) and is_number_token(head):
        return [*dose, ",", freq]
    return [*dose, freq]


def _both_templates(med: str, dose: list[str], freq: str) -> list[list[str]]:
    dose_freq = _dose_then_freq(dose, freq)
    return [
        ["i", "want", "you", "to", "take", med, *dose_freq, "."],
        ["let's", "start", "you", "on", *dose, "of", med, freq, "."],
        ["so", "take", "the", med, "at", *dose_freq, ",", "okay", "?"],
        ["we", "can", "go", "up", "to", *dose, "of", "the", med, "and", "take", "it", freq, "."],
        ["stay", "on", "the", med, "at", *dose_freq, "for", "now", "."],
    ]


def _dose_templates(med: str, dose: list[str]) -> list[list[str]]:
    return [
        ["let's", "increase", "the", med, "to", *dose, "."],
        ["i", "am", "going", "to", "bump", "the", med, "up", "to", *dose, "."],
        ["we", "should", "drop", "the", med, "down", "to", *dose, "."],
    ]


def _freq_templates(med: str, freq: str) -> list[list[str]]:
    return [
        ["keep", "taking", "the", med, freq, "."],
        ["you", "should", "take", "the", med, freq, "."],
        ["just", "take", "your", med, freq, "."],
    ]


def _none_templates(med: str) -> list[list[str]]:
    return [
        ["are", "you", "still", "taking", "the", med, "?"],
        ["we", "may", "stop", "the", med, "at", "some", "point", "."],
        ["no", "changes", "to", "the", med, "today", "."],
    ]


def _make_transcript(idx: int, seed: int, profile: GenerationProfile) -> Transcript:
    rng = np.random.default_rng([seed, idx])
    b = _TranscriptBuilder(f"synth-{idx:05d}", rng)

    for _ in range(int(rng.integers(1, 3))):
        speaker, chunks = _pick(rng, _OPENINGS)
        b.emit(speaker, list(chunks))
    if rng.random() < profile.deidentify_rate:
        b.emit("dr", ["i", "saw", "the", "note", "from", "[de-identified]", "."])

    meds = list(profile.medications)
    order = rng.permutation(len(meds))
    med_queue = [meds[int(i)] for i in order]

    tags: list[MRTag] = []
    summaries: list[SummaryTag] = []
    n_tags = int(rng.integers(profile.min_tags, profile.max_tags + 1))

    for _ in range(n_tags):
        if not med_queue:
            break
        med = med_queue.pop()

        if rng.random() < profile.both_none_rate:
            dose_none, freq_none = True, True
        else:
            dose_none = rng.random() < profile.none_dosage_rate
            freq_none = rng.random() < profile.none_frequency_rate
            if dose_none and freq_none:
                freq_none = False

        dose_chunks: list[str] = []
        dose_label, dose_token = NONE_LABEL, ""
        if not dose_none:
            dose_chunks, dose_label, dose_token = _dose_phrase(rng, profile)
        freq_surface, freq_label = "", NONE_LABEL
        if not freq_none:
            freq_surface, freq_label = _freq_phrase(rng, profile)

        banned = {dose_token} if dose_token else set()
        segment: list[tuple[str, list[str]]] = []

        if not dose_none and rng.random() < profile.nbm_rate:
            vital, reading = _reading(rng, banned)
            verb = _pick(rng, [["so", "let's", "do"], ["so", "go", "with"]])
            tail = _dose_then_freq(dose_chunks, freq_surface) if freq_surface else dose_chunks
            closing = [*verb, *tail, "."]
            segment.append(("dr", ["now", ",", "about", "the", med, "."]))
            segment.append(("dr", ["your", vital, "was", reading, "."]))
            segment.append(("dr", closing))
        else:
            if dose_none and freq_none:
                template = _pick(rng, _none_templates(med))
            elif dose_none:
                template = _pick(rng, _freq_templates(med, freq_surface))
            elif freq_none:
                template = _pick(rng, _dose_templates(med, dose_chunks))
            else:
                template = _pick(rng, _both_templates(med, dose_chunks, freq_surface))
            segment.append(("dr", template))
            if not dose_none and rng.random() < profile.mn_rate:
                vital, reading = _reading(rng, banned)
                aside = _pick(rng, [
                    ["your", vital, "looked", "fine", "at", reading, "."],
                    ["the", vital, "came", "back", "at", reading, "."],
                ])
                segment.append(("dr", aside))

        second_tag = None
        if med_queue and rng.random() < profile.mm_rate:
            med2 = med_queue.pop()
            if rng.random() < 0.6:
                dose2_chunks, dose2_label, dose2_token = _dose_phrase(rng, profile)
                while dose2_token == dose_token:
                    dose2_chunks, dose2_label, dose2_token = _dose_phrase(rng, profile)
                freq2_surface, freq2_label = _freq_phrase(rng, profile)
                segment.append(
                    ("dr", ["and", "keep", "the", med2, "at",
                            *_dose_then_freq(dose2_chunks, freq2_surface), "."])
                )
                second_tag = (med2, dose2_label, freq2_label)
            else:
                segment.append(("dr", ["and", "stay", "on", "the", med2, "as", "before", "."]))

        seg_start = None
        for speaker, chunks in segment:
            chunks = _with_disfluency(rng, profile.disfluency_rate, chunks)
            start, end = b.emit(speaker, chunks)
            if seg_start is None:
                seg_start = start
            seg_end = end

        tags.append(MRTag(med, dose_label, freq_label, seg_start, seg_end))
        if second_tag is not None:
            med2, dose2_label, freq2_label = second_tag
            tags.append(MRTag(med2, dose2_label, freq2_label, seg_start, seg_end))

        if rng.random() < profile.summary_rate:
            if dose_label != NONE_LABEL and freq_label != NONE_LABEL:
                text = f"{_pick(rng, ['start', 'increase', 'continue'])} {med} {dose_label} {freq_label}"
            elif dose_label != NONE_LABEL:
                text = f"{_pick(rng, ['increase', 'decrease', 'adjust'])} {med} to {dose_label}"
            elif freq_label != NONE_LABEL:
                text = f"continue {med} {freq_label}"
            else:
                text = f"review {med} at next visit"
            summaries.append(SummaryTag(text=text, start_s=seg_start, end_s=seg_end))

        for _ in range(int(rng.integers(0, 3))):
            speaker, chunks = _pick(rng, _FILLERS)
            b.emit(speaker, list(chunks))

    speaker, chunks = _pick(rng, _CLOSINGS)
    b.emit(speaker, list(chunks))

    return Transcript(id=b.tid, sentences=b.sentences, mr_tags=tags, summaries=summaries)


def generate_synthetic_corpus(
    seed: int,
    n_transcripts: int,
    profile: GenerationProfile | None = None,
) -> Corpus:
    """Generate a corpus of ``n_transcripts`` synthetic visits."""
    if n_transcripts <= 0:
        raise ValueError(f"n_transcripts must be positive, got {n_transcripts}")
    if profile is None:
        profile = default_profile()
    return Corpus([_make_transcript(i, seed, profile) for i in range(n_transcripts)])
