"""Corpus data model, serialization, and splitting."""

from __future__ import annotations

import json

import pytest

from medregimen.corpus import (
    Corpus,
    CorpusFormatError,
    CorpusSplit,
    MRTag,
    Sentence,
    SummaryTag,
    Transcript,
    load_corpus,
    load_split,
    save_corpus,
    save_split,
    split_corpus,
)


def _sentence(text="take it daily", start=0.0, end=2.0, speaker="dr"):
    return Sentence(text=text, start_s=start, end_s=end, speaker=speaker)


def _transcript(tid="t-1"):
    return Transcript(
        id=tid,
        sentences=[
            _sentence("you should start coumadin", 0.0, 3.0),
            _sentence("take three point five milligrams", 3.0, 6.5, speaker="dr"),
            _sentence("okay", 6.5, 7.0, speaker="pt"),
        ],
        mr_tags=[
            MRTag("coumadin", "three-point-five", "none", 0.0, 6.5),
        ],
        summaries=[SummaryTag("start coumadin three point five", 0.0, 6.5)],
    )


def test_round_trip_identity(tmp_path):
    corpus = Corpus([_transcript("a"), _transcript("b")])
    path = tmp_path / "corpus.jsonl"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_serialization_is_deterministic(tmp_path):
    corpus = Corpus([_transcript("a"), _transcript("b")])
    p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
    save_corpus(corpus, p1)
    save_corpus(corpus, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_fixture_counts(tmp_path):
    transcripts = [_transcript("a"), _transcript("b"), _transcript("c")]
    transcripts[0].mr_tags.append(MRTag("lisinopril", "ten", "once a day", 0.0, 7.0))
    transcripts[1].mr_tags.append(MRTag("aspirin", "none", "daily", 0.0, 7.0))
    path = tmp_path / "corpus.jsonl"
    save_corpus(Corpus(transcripts), path)
    loaded = load_corpus(path)
    assert len(loaded) == 3
    assert sum(len(t.mr_tags) for t in loaded) == 5


def test_bad_interval_rejected_with_line_number(tmp_path):
    path = tmp_path / "corpus.jsonl"
    good = json.dumps(
        {"id": "ok", "sentences": [{"text": "hi", "start_s": 0.0, "end_s": 1.0}]}
    )
    bad = json.dumps(
        {"id": "bad", "sentences": [{"text": "hi", "start_s": 5.0, "end_s": 1.0}]}
    )
    path.write_text(good + "\n" + bad + "\n")
    with pytest.raises(CorpusFormatError, match=":2:"):
        load_corpus(path)


def test_malformed_json_rejected_with_line_number(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "ok", "sentences": []}\nnot json {\n')
    with pytest.raises(CorpusFormatError, match=":2:"):
        load_corpus(path)


def test_invariant_violations():
    with pytest.raises(CorpusFormatError):
        Sentence(text="   ", start_s=0.0, end_s=1.0)
    with pytest.raises(CorpusFormatError):
        Sentence(text="hi", start_s=2.0, end_s=1.0)
    with pytest.raises(CorpusFormatError):
        Sentence(text="hi", start_s=-1.0, end_s=1.0)
    with pytest.raises(CorpusFormatError):
        MRTag("", "none", "none", 0.0, 1.0)
    with pytest.raises(CorpusFormatError):
        MRTag("aspirin", "", "daily", 0.0, 1.0)
    with pytest.raises(CorpusFormatError):
        Transcript(
            id="t",
            sentences=[_sentence("b", 5.0, 6.0), _sentence("a", 0.0, 1.0)],
        )
    with pytest.raises(CorpusFormatError):
        Transcript(id="", sentences=[])
    with pytest.raises(CorpusFormatError):
        Corpus([_transcript("same"), _transcript("same")])


def test_empty_sentence_list_round_trips(tmp_path):
    empty = Transcript(id="silence", sentences=[])
    path = tmp_path / "corpus.jsonl"
    save_corpus(Corpus([empty]), path)
    loaded = load_corpus(path)
    assert loaded["silence"].sentences == []


def test_sentences_in_closed_overlap():
    t = _transcript()
    hits = t.sentences_in(3.0, 3.0)
    assert [s.text for s in hits] == [
        "you should start coumadin",
        "take three point five milligrams",
    ]
    assert t.sentences_in(100.0, 200.0) == []


def test_corpus_lookup_and_subset():
    corpus = Corpus([_transcript("a"), _transcript("b"), _transcript("c")])
    assert "b" in corpus
    assert corpus["b"].id == "b"
    sub = corpus.subset(["c", "a"])
    assert [t.id for t in sub] == ["c", "a"]
    with pytest.raises(KeyError):
        corpus.subset(["a", "zzz"])


def _id_corpus(n):
    return Corpus(
        [Transcript(id=f"t{i:05d}", sentences=[_sentence()]) for i in range(n)]
    )


def test_split_sizes_match_fractions():
    corpus = _id_corpus(6270)
    split = split_corpus(corpus, seed=0)
    assert (len(split.train), len(split.validation), len(split.test), len(split.holdout)) == (
        5016, 627, 627, 0,
    )
    everything = split.train + split.validation + split.test + split.holdout
    assert sorted(everything) == sorted(t.id for t in corpus)


def test_split_all_train():
    corpus = _id_corpus(17)
    split = split_corpus(corpus, seed=3, fractions=(1.0, 0.0, 0.0, 0.0))
    assert sorted(split.train) == sorted(t.id for t in corpus)
    assert split.validation == [] and split.test == [] and split.holdout == []


def test_split_deterministic_and_seed_sensitive():
    corpus = _id_corpus(100)
    a = split_corpus(corpus, seed=5)
    b = split_corpus(corpus, seed=5)
    c = split_corpus(corpus, seed=6)
    assert a == b
    assert a != c


def test_split_fraction_validation():
    corpus = _id_corpus(10)
    with pytest.raises(ValueError):
        split_corpus(corpus, seed=0, fractions=(0.5, 0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        split_corpus(corpus, seed=0, fractions=(1.5, -0.5, 0.0, 0.0))


def test_split_sizes_within_one_of_fraction():
    corpus = _id_corpus(101)
    split = split_corpus(corpus, seed=1, fractions=(0.7, 0.15, 0.1, 0.05))
    for part, frac in (
        (split.train, 0.7), (split.validation, 0.15),
        (split.test, 0.1), (split.holdout, 0.05),
    ):
        assert abs(len(part) - 101 * frac) <= 1.0


def test_split_file_round_trip(tmp_path):
    split = CorpusSplit(train=["a", "b"], validation=["c"], test=["d"], holdout=[])
    path = tmp_path / "split.json"
    save_split(split, path)
    assert load_split(path) == split


def test_split_part_accessor():
    split = CorpusSplit(train=["a"], validation=["b"], test=["c"], holdout=["d"])
    assert split.part("holdout") == ["d"]
    with pytest.raises(KeyError):
        split.part("everything")
    with pytest.raises(CorpusFormatError):
        CorpusSplit(train=["a"], validation=["a"], test=[], holdout=[])


def test_bad_split_file(tmp_path):
    path = tmp_path / "split.json"
    path.write_text('{"train": "not-a-list"}')
    with pytest.raises(CorpusFormatError):
        load_split(path)
    path.write_text("[1, 2, 3]")
    with pytest.raises(CorpusFormatError):
        load_split(path)
