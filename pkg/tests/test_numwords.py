"""Number canonicalization checked against an independent reference.

The reference below builds names with its own tables and composition rules,
sharing no code with the package, so agreement is evidence rather than
tautology.
"""

from __future__ import annotations

import numpy as np
import pytest

from medregimen.numwords import (
    NUMBER_WORDS,
    is_number_token,
    normalize_tokens,
    parse_number_token,
    render_number,
)

_UNDER_20 = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
).split()
_TENS_NAMES = (
    "twenty thirty forty fifty sixty seventy eighty ninety"
).split()


def reference_words(n: int) -> list[str]:
    """Independent 0..9999 cardinal, one word per list element."""
    assert 0 <= n <= 9999
    if n < 20:
        return [_UNDER_20[n]]
    if n < 100:
        tens, ones = divmod(n, 10)
        out = [_TENS_NAMES[tens - 2]]
        if ones:
            out.append(_UNDER_20[ones])
        return out
    if n < 1000:
        hundreds, rest = divmod(n, 100)
        out = [_UNDER_20[hundreds], "hundred"]
        if rest:
            out.extend(reference_words(rest))
        return out
    thousands, rest = divmod(n, 1000)
    out = reference_words(thousands) + ["thousand"]
    if rest:
        out.extend(reference_words(rest))
    return out


def reference_token(n: int, frac_digits: str = "") -> str:
    words = reference_words(n)
    if frac_digits:
        words.append("point")
        words.extend(_UNDER_20[int(d)] for d in frac_digits)
    return "-".join(words)


def test_exhaustive_0_to_9999_against_reference():
    for n in range(10000):
        assert normalize_tokens([str(n)]) == [reference_token(n)], n


def test_digit_and_spelled_forms_collide():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(0, 10000))
        frac = "".join(str(int(d)) for d in rng.integers(0, 10, size=int(rng.integers(0, 3))))
        expected = reference_token(n, frac)
        digit_form = f"{n}.{frac}" if frac else str(n)
        assert normalize_tokens([digit_form]) == [expected]
        spelled = reference_words(n)
        if frac:
            spelled = spelled + ["point"] + [_UNDER_20[int(d)] for d in frac]
        assert normalize_tokens(list(spelled)) == [expected]


def test_render_number_matches_reference():
    rng = np.random.default_rng(11)
    for _ in range(500):
        n = int(rng.integers(0, 10000))
        assert render_number(n) == reference_token(n)


def test_pinned_surface_forms():
    assert normalize_tokens(["110"]) == ["one-hundred-ten"]
    assert normalize_tokens(["zero"]) == ["zero"]
    assert normalize_tokens(["3.5"]) == ["three-point-five"]
    assert normalize_tokens(["three", "point", "five"]) == ["three-point-five"]
    assert normalize_tokens(["1,000"]) == ["one-thousand"]


def test_non_numbers_pass_through():
    tokens = ["take", "it", "with", "food", "every", "morning"]
    assert normalize_tokens(list(tokens)) == tokens


def test_counting_words_are_not_numbers():
    for word in ("once", "twice", "half", "first", "second"):
        assert not is_number_token(word)
    assert normalize_tokens(["twice", "a", "day"]) == ["twice", "a", "day"]


def test_idempotent_on_random_mixtures():
    rng = np.random.default_rng(3)
    fillers = ["take", "the", "dose", "at", "night", "mg", "and", "hello"]
    number_vocab = sorted(NUMBER_WORDS)
    for _ in range(500):
        tokens = []
        for _ in range(int(rng.integers(1, 12))):
            kind = rng.integers(0, 6)
            if kind == 0:
                tokens.append(str(int(rng.integers(0, 100000))))
            elif kind == 1:
                tokens.extend(reference_words(int(rng.integers(0, 10000))))
            elif kind == 2:
                tokens.append(f"{int(rng.integers(0, 1000))}.{int(rng.integers(0, 10))}")
            elif kind == 3:
                tokens.append(reference_token(int(rng.integers(0, 10000))))
            elif kind == 4:
                # Raw grammar words in orders the renderer never produces.
                tokens.extend(
                    number_vocab[int(i)]
                    for i in rng.integers(len(number_vocab), size=int(rng.integers(1, 4)))
                )
            else:
                tokens.append(fillers[int(rng.integers(len(fillers)))])
        once = normalize_tokens(list(tokens))
        assert normalize_tokens(list(once)) == once, tokens


def test_idempotent_on_regression_shapes():
    cases = [
        ["six", "thousand", "three", "hundred", "27.0"],
        ["twenty", "5"],
        ["twenty", "eighteen", "hundred"],
        ["five", "point"],
        ["3.5", "five"],
        ["one-hundred-ten", "twenty-seven-point-zero"],
        ["1000", "thousand"],
        ["zero", "zero", "point"],
    ]
    for tokens in cases:
        once = normalize_tokens(list(tokens))
        assert normalize_tokens(list(once)) == once, tokens


def test_canonical_tokens_never_merge():
    # Already-normalized neighbors stay separate values.
    pair = ["six-thousand-three-hundred", "twenty-seven-point-zero"]
    assert normalize_tokens(list(pair)) == pair


def test_is_number_token_accepts_canonical_forms():
    rng = np.random.default_rng(5)
    for _ in range(300):
        n = int(rng.integers(0, 10000))
        assert is_number_token(reference_token(n))
    assert is_number_token("three-point-five")
    assert not is_number_token("rx-coumadin")
    assert not is_number_token("point")


def test_parse_round_trip():
    rng = np.random.default_rng(13)
    for _ in range(300):
        n = int(rng.integers(0, 10000))
        frac = "".join(str(int(d)) for d in rng.integers(0, 10, size=int(rng.integers(0, 3))))
        token = reference_token(n, frac)
        assert parse_number_token(token) == (n, frac)
    assert parse_number_token("banana") is None


def test_number_words_set_covers_components():
    for word in ("zero", "nineteen", "ninety", "hundred", "thousand", "point"):
        assert word in NUMBER_WORDS


def test_large_scale_words_round_trip():
    for n in (10**6, 2 * 10**9, 123_456_789):
        token = render_number(n)
        assert is_number_token(token)
        assert parse_number_token(token) == (n, "")
        assert normalize_tokens([str(n)]) == [token]
