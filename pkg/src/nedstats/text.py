"""Tokenization shared by the knowledge base, corpus and feature code."""
import re
from collections import Counter
from typing import Iterable

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

TokenBag = Counter


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


def bag(tokens: Iterable[str]) -> Counter:
    return Counter(t.lower() for t in tokens)


def normalize_surface(text: str) -> str:
    """Canonical form of a surface string: its tokens joined by single spaces."""
    return " ".join(tokenize(text))
