"""Canonical word forms for numbers.

Every numeral in a transcript, whether written with digits ("110", "3.5",
"1,000") or spelled out ("one hundred ten", "three point five"), is rendered
to a single hyphen-joined token: "one-hundred-ten", "three-point-five".
Collapsing each value to one token means a copy mechanism can lift a dosage
out of the input in a single decode step, and spelled and digit forms of the
same value collide to the same token.

The grammar covers non-negative cardinals ("zero" through the trillions) and
decimals whose fraction is read digit by digit ("three point five zero").
Ordinals, fractions ("half"), and counting words ("once", "twice") are not
numbers here; frequency phrases keep them as plain words.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_ONES = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen",
]
_TENS = {
    20: "twenty", 30: "thirty", 40: "forty", 50: "fifty",
    60: "sixty", 70: "seventy", 80: "eighty", 90: "ninety",
}
_SCALES = [
    (10**12, "trillion"),
    (10**9, "billion"),
    (10**6, "million"),
    (10**3, "thousand"),
]

_UNIT_VALUE = {w: v for v, w in enumerate(_ONES[1:10], start=1)}
_TEEN_VALUE = {w: v for v, w in enumerate(_ONES[10:20], start=10)}
_TENS_VALUE = {w: v for v, w in _TENS.items()}
_SCALE_VALUE = {w: v for v, w in _SCALES}
_DIGIT_VALUE = {w: v for v, w in enumerate(_ONES[:10])}

#: Every word the number grammar can consume, "point" included.
NUMBER_WORDS = frozenset(
    _UNIT_VALUE | _TEEN_VALUE | _TENS_VALUE | _SCALE_VALUE
) | {"zero", "hundred", "point"}

_INT_RE = re.compile(r"\d+(?:,\d{3})*")
_DECIMAL_RE = re.compile(r"(\d+)\.(\d+)")


def render_number(int_part: int, frac_digits: str = "") -> str:
    """Render a value as its canonical hyphen-joined token.

    ``frac_digits`` is the literal digit string after the decimal point, read
    digit by digit, so trailing zeros survive: (3, "50") -> "three-point-five-zero".
    """
    if int_part < 0:
        raise ValueError("number grammar covers non-negative values only")
    words = _int_words(int_part)
    if frac_digits:
        if not frac_digits.isdigit():
            raise ValueError(f"fraction digits must be 0-9, got {frac_digits!r}")
        words.append("point")
        words.extend(_ONES[int(d)] for d in frac_digits)
    return "-".join(words)


def _int_words(n: int) -> list[str]:
    if n == 0:
        return ["zero"]
    if n >= 10**15:
        # Beyond the scale table (id-like digit strings): read digit by digit.
        return [_ONES[int(d)] for d in str(n)]
    out: list[str] = []
    for scale, name in _SCALES:
        if n >= scale:
            out.extend(_int_words(n // scale))
            out.append(name)
            n %= scale
    if n >= 100:
        out.append(_ONES[n // 100])
        out.append("hundred")
        n %= 100
    if n >= 20:
        out.append(_TENS[n - n % 10])
        n %= 10
    if n > 0:
        out.append(_ONES[n])
    return out


# Parser states. A number is consumed token by token; a token either extends
# the number being built or ends it at the previous token boundary.
_START = "start"
_ZERO = "zero"
_UNIT = "unit"
_TEEN = "teen"
_TEN = "ten"
_TENUNIT = "tenunit"
_HUNDRED = "hundred"
_SCALE = "scale"
_BIGNUM = "bignum"
_POINT = "point"
_FRAC = "frac"
_CLOSED = "closed"

_SUB_STATES = (_UNIT, _TEEN, _TEN, _TENUNIT)
_POINTABLE = (_ZERO, _UNIT, _TEEN, _TEN, _TENUNIT, _HUNDRED, _SCALE, _BIGNUM)


@dataclass
class _NumberParse:
    total: int = 0
    group: int = 0
    sub: int = 0
    frac: str = ""
    state: str = _START
    has_hundred: bool = False
    last_scale: int = 10**18
    seen_point: bool = field(default=False)

    def copy(self) -> _NumberParse:
        return _NumberParse(
            self.total, self.group, self.sub, self.frac, self.state,
            self.has_hundred, self.last_scale, self.seen_point,
        )

    @property
    def finalizable(self) -> bool:
        if self.state in (_START, _POINT):
            return False
        return not (self.seen_point and not self.frac)

    @property
    def value(self) -> tuple[int, str]:
        return self.total + self.group + self.sub, self.frac

    def feed_word(self, word: str) -> bool:
        """Extend the parse with one grammar word; False means it cannot."""
        if self.state == _CLOSED:
            return False
        if self.state in (_POINT, _FRAC):
            if word in _DIGIT_VALUE:
                self.frac += str(_DIGIT_VALUE[word])
                self.state = _FRAC
                return True
            return False
        if word == "zero":
            if self.state == _START:
                self.state = _ZERO
                return True
            return False
        if word in _UNIT_VALUE:
            v = _UNIT_VALUE[word]
            if self.state in (_START, _SCALE, _HUNDRED):
                self.sub = v
                self.state = _UNIT
                return True
            if self.state == _TEN:
                self.sub += v
                self.state = _TENUNIT
                return True
            return False
        if word in _TEEN_VALUE:
            if self.state in (_START, _SCALE, _HUNDRED):
                self.sub = _TEEN_VALUE[word]
                self.state = _TEEN
                return True
            return False
        if word in _TENS_VALUE:
            if self.state in (_START, _SCALE, _HUNDRED):
                self.sub = _TENS_VALUE[word]
                self.state = _TEN
                return True
            return False
        if word == "hundred":
            if self.state in _SUB_STATES and not self.has_hundred and 0 < self.sub < 100:
                self.group = self.sub * 100
                self.sub = 0
                self.has_hundred = True
                self.state = _HUNDRED
                return True
            return False
        if word in _SCALE_VALUE:
            v = _SCALE_VALUE[word]
            pending = self.group + self.sub
            if (
                self.state in _SUB_STATES + (_HUNDRED, _BIGNUM)
                and pending > 0
                and v < self.last_scale
            ):
                self.total += pending * v
                self.group = 0
                self.sub = 0
                self.has_hundred = False
                self.last_scale = v
                self.state = _SCALE
                return True
            return False
        if word == "point":
            if self.state in _POINTABLE and not self.seen_point:
                self.seen_point = True
                self.state = _POINT
                return True
            return False
        return False

    def feed_sealed(self, int_part: int, frac_digits: str) -> bool:
        """Consume a pre-parsed whole value; starts a number and ends it."""
        if self.state != _START:
            return False
        self.group = int_part
        self.frac = frac_digits
        self.seen_point = bool(frac_digits)
        self.state = _CLOSED
        return True


def _token_atoms(token: str) -> list[object] | None:
    """Split a token into feedable atoms, or None if it has no number material.

    Integer digit forms feed the grammar as their spelled-out words, so "27"
    extends "three hundred" exactly as "twenty seven" would; boundary
    decisions then survive re-normalization. Decimal digit forms and
    hyphenated tokens that spell a complete number are sealed values: they
    normalize on their own but never join a neighbor, which keeps
    already-canonical output stable. "rx-aspirin" and "3-5" have no reading
    and stay untouched.
    """
    m = _DECIMAL_RE.fullmatch(token)
    if m:
        return _digit_atoms(int(m.group(1)), m.group(2))
    if _INT_RE.fullmatch(token):
        return _digit_atoms(int(token.replace(",", "")), "")
    if token in NUMBER_WORDS:
        return [token]
    if "-" in token:
        parts = token.split("-")
        if parts and all(p in NUMBER_WORDS for p in parts):
            parsed = _parse_words(parts)
            if parsed is not None:
                return [("sealed", parsed[0], parsed[1])]
    return None


def _digit_atoms(int_part: int, frac: str) -> list[object]:
    if frac or int_part >= 10**15:
        # A digit-written decimal is complete at its token boundary ("0.5
        # two" is a dose then a count, not 0.52), and values past the scale
        # table have no word reading: both stay whole.
        return [("sealed", int_part, frac)]
    return list(_int_words(int_part))


def _parse_words(words: list[str]) -> tuple[int, str] | None:
    parse = _NumberParse()
    if all(parse.feed_word(w) for w in words) and parse.finalizable:
        return parse.value
    return None


def _feed_atom(parse: _NumberParse, atom: object) -> bool:
    if isinstance(atom, tuple):
        _, int_part, frac = atom
        return parse.feed_sealed(int_part, frac)
    return parse.feed_word(atom)


def _scan_number(tokens: list[str], start: int) -> tuple[int, str, int] | None:
    """Greedily parse a number beginning at ``start``.

    Returns (int_part, frac_digits, end_index) for the longest token run that
    forms a valid complete number, or None. Tokens join or stay out whole: a
    token whose atoms fail partway ends the number at the previous boundary.
    """
    parse = _NumberParse()
    best: tuple[int, str, int] | None = None
    j = start
    while j < len(tokens):
        atoms = _token_atoms(tokens[j])
        if atoms is None:
            break
        saved = parse.copy()
        if not all(_feed_atom(parse, a) for a in atoms):
            parse = saved
            break
        j += 1
        if parse.finalizable:
            int_part, frac = parse.value
            best = (int_part, frac, j)
    return best


def normalize_tokens(tokens: list[str]) -> list[str]:
    """Rewrite every numeral run to its canonical hyphen-joined token.

    Non-number tokens pass through unchanged. Idempotent: canonical output
    tokens are sealed values that re-render to themselves and never merge
    with whatever lands next to them.
    """
    out: list[str] = []
    i = 0
    while i < len(tokens):
        scanned = _scan_number(tokens, i)
        if scanned is None:
            out.append(tokens[i])
            i += 1
        else:
            int_part, frac, end = scanned
            out.append(render_number(int_part, frac))
            i = end
    return out


def is_number_token(token: str) -> bool:
    """True when the single token is a complete number under the grammar."""
    atoms = _token_atoms(token)
    if atoms is None:
        return False
    parse = _NumberParse()
    return all(_feed_atom(parse, a) for a in atoms) and parse.finalizable


def parse_number_token(token: str) -> tuple[int, str] | None:
    """Parse one token to (int_part, frac_digits), or None if not a number."""
    atoms = _token_atoms(token)
    if atoms is None:
        return None
    parse = _NumberParse()
    if not all(_feed_atom(parse, a) for a in atoms) or not parse.finalizable:
        return None
    return parse.value
