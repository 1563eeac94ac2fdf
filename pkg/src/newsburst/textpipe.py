"""Sentence splitting, tokenisation, table lemmatisation and stop-word removal."""
from __future__ import annotations

import re
from collections.abc import Iterable, Mapping
from importlib import resources
from pathlib import Path

# Lower-cased, without the trailing period.
ABBREVIATIONS = frozenset(
    {
        "dr", "ing", "mgr", "bc", "prof", "doc", "phdr", "mudr", "judr", "rndr", "paeddr",
        "tzv", "např", "resp", "mj", "apod", "atp", "tj", "tzn", "popř", "cca", "max", "min",
        "st", "sv", "ul", "nám", "čp", "č", "str", "odst", "písm", "sb", "mld", "mil", "tis",
        "kč", "hod", "pan", "pí", "mr", "mrs", "ms", "jr", "sr", "vs", "etc", "e.g", "i.e",
    }
)

_BOUNDARY = re.compile(r"[.!?]+[\"'»“”)\]]*(?=\s+[\"'„«(\[]*[^\W_][^\s]*)")
_WORD_BEFORE = re.compile(r"([^\W\d_]+(?:\.[^\W\d_]+)*)\.$")
_ORDINAL = re.compile(r"(?:^|\s)\d{1,2}\.$")
_TOKEN = re.compile(r"[^\W_]+(?:-[^\W_]+)*")


class Lexicon(dict):
    """Surface form to lemma table; unknown forms map to themselves."""

    def __init__(self, pairs: Mapping[str, str] | Iterable[tuple[str, str]] = ()):
        items = pairs.items() if isinstance(pairs, Mapping) else pairs
        super().__init__((k.lower(), v) for k, v in items)

    def __missing__(self, key):
        return key

    @classmethod
    def from_file(cls, path) -> "Lexicon":
        pairs = []
        for lineno, line in enumerate(_read_lines(path), 1):
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'surface<TAB>lemma'")
            pairs.append((parts[0].strip(), parts[1].strip()))
        return cls(pairs)


class StopList(frozenset):
    def __new__(cls, words: Iterable[str] = ()):
        return super().__new__(cls, (w.lower() for w in words))

    @classmethod
    def from_file(cls, path) -> "StopList":
        return cls(line.strip() for line in _read_lines(path))


def _read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [ln.rstrip("\r\n") for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def demo_lexicon() -> Lexicon:
    """Small bundled Czech lexicon."""
    with resources.as_file(resources.files("newsburst") / "data" / "lexicon_cs.tsv") as p:
        return Lexicon.from_file(p)


def demo_stoplist() -> StopList:
    with resources.as_file(resources.files("newsburst") / "data" / "stopwords_cs.txt") as p:
        return StopList.from_file(p)


def _is_abbreviation(head: str) -> bool:
    m = _WORD_BEFORE.search(head)
    if not m:
        return False
    word = m.group(1)
    # single-letter initials ("J. Novák") and listed abbreviations
    return (len(word) == 1 and word.isupper()) or word.lower() in ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split after ``.``, ``!`` or ``?`` when followed by whitespace and an
    upper-case letter or digit, except after known abbreviations."""
    sentences = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        nxt = text[m.end():].lstrip()
        nxt = nxt.lstrip("\"'„«([")
        if not nxt or not (nxt[0].isupper() or nxt[0].isdigit()):
            continue
        if m.group(0).startswith(".") and len(m.group(0).rstrip("\"'»“”)]")) == 1:
            head = text[start:m.start() + 1]
            if _is_abbreviation(head):
                continue
            # ordinal numbers inside dates: "12. 3. 2024"
            if nxt[0].isdigit() and _ORDINAL.search(head):
                continue
        piece = text[start:m.end()].strip()
        if piece:
            sentences.append(piece)
        start = m.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def tokenize(sentence: str) -> list[str]:
    """Lower-cased word and number tokens; punctuation dropped, inner hyphens kept."""
    return [t.lower() for t in _TOKEN.findall(sentence)]


def lemmatize(token: str, lexicon: Mapping[str, str]) -> str:
    lemma = lexicon.get(token, token)
    return lemma if lemma else token


def preprocess(text: str, lexicon: Mapping[str, str], stops: frozenset[str]) -> list[str]:
    out = []
    for sentence in split_sentences(text):
        for token in tokenize(sentence):
            lemma = lemmatize(token, lexicon)
            if lemma not in stops:
                out.append(lemma)
    return out
