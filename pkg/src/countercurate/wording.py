"""Count phrasing shared by the counting track and the count benchmarks.

Numbers 1-20 render as English words in word style; anything larger falls
back to digits. Digit style always uses digits. Pluralization handles the
regular s/es/ies endings plus a small irregulars table and applies to the
last word of multi-word categories.
"""

from __future__ import annotations

_NUMBER_WORDS = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
    "eighteen", "nineteen", "twenty",
]
_WORD_TO_NUMBER = {word: i + 1 for i, word in enumerate(_NUMBER_WORDS)}

_IRREGULAR_PLURALS = {
    "person": "people",
    "child": "children",
    "man": "men",
    "woman": "women",
    "foot": "feet",
    "tooth": "teeth",
    "mouse": "mice",
}

_SIBILANT_ENDINGS = ("s", "x", "z", "ch", "sh")
_VOWELS = "aeiou"


def number_phrase(n: int, style: str = "words") -> str:
    """Render a count: words for 1-20 (word style), digits otherwise."""
    if n <= 0:
        raise ValueError(f"counts must be positive, got {n}")
    if style == "digits":
        return str(n)
    if style != "words":
        raise ValueError(f"unknown count style {style!r}")
    return _NUMBER_WORDS[n - 1] if n <= 20 else str(n)


def parse_count_word(text: str) -> int:
    """Inverse of number_phrase: word (1-20) or digit string back to int."""
    text = text.strip().lower()
    if text in _WORD_TO_NUMBER:
        return _WORD_TO_NUMBER[text]
    if text.isdigit():
        return int(text)
    raise ValueError(f"not a count word: {text!r}")


def pluralize(noun: str) -> str:
    """English plural of a category noun (last word of multi-word categories)."""
    if not noun:
        raise ValueError("empty category")
    head, _, last = noun.rpartition(" ")
    prefix = head + " " if head else ""
    if last in _IRREGULAR_PLURALS:
        return prefix + _IRREGULAR_PLURALS[last]
    if last.endswith("y") and len(last) > 1 and last[-2].lower() not in _VOWELS:
        return prefix + last[:-1] + "ies"
    if last.endswith(_SIBILANT_ENDINGS):
        return prefix + last + "es"
    return prefix + last + "s"


def count_noun(noun: str, n: int) -> str:
    return noun if n == 1 else pluralize(noun)


def indefinite_article(phrase: str) -> str:
    """'an' before a vowel letter, else 'a' (first letter heuristic)."""
    if not phrase:
        raise ValueError("empty phrase")
    return "an" if phrase[0].lower() in _VOWELS else "a"


def with_article(phrase: str) -> str:
    return f"{indefinite_article(phrase)} {phrase}"
