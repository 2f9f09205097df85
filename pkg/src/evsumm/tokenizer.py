"""Token normalization for Java code and comments."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal

Origin = Literal["code", "comment"]

_WHITESPACE = re.compile(r"[\n\r\t]")
_SPACES = re.compile(r" {2,}")
# all-caps run before a capitalized word | capitalized or lowercase word | caps run | digits
_SUBWORD = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")
_WORD_OR_PUNCT = re.compile(r"\w+|[^\w\s]")
_BLOCK_OPEN = re.compile(r"/\*+")
_BLOCK_CLOSE = re.compile(r"\*+/")
_LINE_COMMENT = re.compile(r"//+")
_LEADING_STAR = re.compile(r"^\s*\*+", re.MULTILINE)


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    origin: Origin = "code"

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def text(self) -> str:
        return " ".join(self.tokens)


def normalize_whitespace(text: str) -> str:
    text = _WHITESPACE.sub(" ", text)
    return _SPACES.sub(" ", text).strip(" ")


def split_identifier(word: str) -> list[str]:
    """Split a Java identifier into lowercase subwords.

    ``SQLDatabase -> [sql, database]``, ``sendMessage -> [send, message]``.
    Underscores separate parts and are dropped; digit runs become their own
    subtokens.  Identifiers containing non-ASCII characters are only split on
    underscores.
    """
    if not any(ch.isalpha() for ch in word):
        return [word]
    if not word.isascii():
        return [part.lower() for part in word.split("_") if part]
    return [piece.lower() for piece in _SUBWORD.findall(word)]


def strip_comment_markers(text: str) -> str:
    text = _BLOCK_OPEN.sub(" ", text)
    text = _BLOCK_CLOSE.sub(" ", text)
    text = _LINE_COMMENT.sub(" ", text)
    return _LEADING_STAR.sub(" ", text)


def tokenize(text: str, origin: Origin = "code") -> TokenSequence:
    if origin not in ("code", "comment"):
        raise ValueError(f"unknown origin {origin!r}")
    if origin == "comment":
        text = strip_comment_markers(text)
    text = normalize_whitespace(text)
    tokens: list[str] = []
    for match in _WORD_OR_PUNCT.finditer(text):
        piece = match.group()
        if piece[0].isalnum() or piece[0] == "_":
            tokens.extend(t for t in split_identifier(piece) if t and "_" not in t)
        else:
            tokens.append(piece)
    return TokenSequence(tuple(tokens), origin)
