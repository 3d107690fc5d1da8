"""Documents, spots, dictionary spotting and the synthetic corpus generator."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from nedstats.kb import KnowledgeBase

DEFAULT_WINDOW = 25
MAX_SURFACE_TOKENS = 5


class CorpusError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[str, ...]
    sentence_bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "sentence_bounds", tuple(tuple(b) for b in self.sentence_bounds))
        pos = 0
        for start, end in self.sentence_bounds:
            if start != pos or end <= start:
                raise CorpusError(f"document {self.doc_id!r}: sentence bounds do not partition the tokens")
            pos = end
        if pos != len(self.tokens):
            raise CorpusError(f"document {self.doc_id!r}: sentence bounds do not cover all tokens")

    def sentence_of(self, span: tuple[int, int]) -> int:
        """Index of the sentence containing ``span``; raises if it crosses a bound."""
        start, end = span
        for i, (s0, s1) in enumerate(self.sentence_bounds):
            if s0 <= start < s1:
                if end > s1:
                    raise CorpusError(f"span {span} crosses a sentence bound in {self.doc_id!r}")
                return i
        raise CorpusError(f"span {span} out of range for {self.doc_id!r}")


@dataclass(frozen=True)
class Spot:
    doc_id: str
    span: tuple[int, int]
    surface: str
    candidates: tuple[int, ...]
    gold: int | None = None
    predicted: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "span", tuple(self.span))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise CorpusError(f"spot {self.surface!r} in {self.doc_id!r} has no candidates")
        if list(self.candidates) != sorted(set(self.candidates)):
            raise CorpusError(f"spot {self.surface!r}: candidates must be unique and sorted by id")
        for label in (self.gold, self.predicted):
            if label is not None and label not in self.candidates:
                raise CorpusError(f"spot {self.surface!r}: label {label} is not a candidate")

    def with_prediction(self, predicted: int | None) -> "Spot":
        return replace(self, predicted=predicted)

    @property
    def label(self) -> int | None:
        """Predicted label if present, else gold."""
        return self.predicted if self.predicted is not None else self.gold


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()
    spots: tuple[Spot, ...] = ()
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "spots", tuple(self.spots))
        docs = {}
        for doc in self.documents:
            if doc.doc_id in docs:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            docs[doc.doc_id] = doc
        grouped: dict[str, list[Spot]] = {d: [] for d in docs}
        for spot in self.spots:
            if spot.doc_id not in docs:
                raise CorpusError(f"spot references unknown document {spot.doc_id!r}")
            grouped[spot.doc_id].append(spot)
        for doc_id, spots in grouped.items():
            _check_spots(docs[doc_id], spots)
        # keep spots grouped in document order
        ordered = tuple(s for d in self.documents for s in grouped[d.doc_id])
        object.__setattr__(self, "spots", ordered)
        object.__setattr__(self, "_index", {d: tuple(v) for d, v in grouped.items()})

    def spots_for(self, doc_id: str) -> tuple[Spot, ...]:
        return self._index[doc_id]

    def items(self) -> Iterable[tuple[Document, tuple[Spot, ...]]]:
        for doc in self.documents:
            yield doc, self._index[doc.doc_id]

    def with_spots(self, spots: Iterable[Spot]) -> "Corpus":
        return Corpus(self.documents, tuple(spots))


def _check_spots(doc: Document, spots: Sequence[Spot]) -> None:
    prev_end = -1
    prev_start = -1
    for spot in spots:
        start, end = spot.span
        if not 0 <= start < end <= len(doc.tokens):
            raise CorpusError(f"span {spot.span} out of range for {doc.doc_id!r}")
        doc.sentence_of(spot.span)
        if start < prev_start:
            raise CorpusError(f"spots in {doc.doc_id!r} are not sorted by span start")
        if start < prev_end:
            raise CorpusError(f"overlapping spots in {doc.doc_id!r} at {spot.span}")
        prev_start, prev_end = start, end


def _spot_to_json(spot: Spot) -> dict:
    return {
        "span": list(spot.span),
        "surface": spot.surface,
        "candidates": list(spot.candidates),
        "gold": spot.gold,
        "predicted": spot.predicted,
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write one JSON document record per line, spots embedded."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc, spots in corpus.items():
            rec = {
                "doc_id": doc.doc_id,
                "tokens": list(doc.tokens),
                "sentence_bounds": [list(b) for b in doc.sentence_bounds],
                "spots": [_spot_to_json(s) for s in spots],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    documents: list[Document] = []
    spots: list[Spot] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(rec["doc_id"], rec["tokens"], rec["sentence_bounds"])
                doc_spots = [
                    Spot(
                        doc_id=doc.doc_id,
                        span=tuple(s["span"]),
                        surface=s["surface"],
                        candidates=tuple(s["candidates"]),
                        gold=s.get("gold"),
                        predicted=s.get("predicted"),
                    )
                    for s in rec.get("spots", [])
                ]
                _check_spots(doc, doc_spots)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
            except (KeyError, TypeError, ValueError) as exc:
                msg = exc.args[0] if isinstance(exc, CorpusError) else f"malformed record ({exc!r})"
                raise CorpusError(str(msg), lineno) from None
            documents.append(doc)
            spots.extend(doc_spots)
    try:
        return Corpus(tuple(documents), tuple(spots))
    except CorpusError as exc:
        raise CorpusError(str(exc)) from None


def spot_mentions(
    doc: Document, table: Mapping[str, Sequence], max_len: int = MAX_SURFACE_TOKENS
) -> list[Spot]:
    """Greedy leftmost-longest dictionary match of token n-grams within sentences.

    ``table`` maps normalized surfaces to ``(entity_id, prior_count)`` lists,
    i.e. ``kb.mentions``.
    """
    lowered = [t.lower() for t in doc.tokens]
    spots = []
    for s0, s1 in doc.sentence_bounds:
        i = s0
        while i < s1:
            for n in range(min(max_len, s1 - i), 0, -1):
                surface = " ".join(lowered[i : i + n])
                entry = table.get(surface)
                if entry:
                    cands = tuple(sorted(eid for eid, _ in entry))
                    spots.append(Spot(doc.doc_id, (i, i + n), surface, cands))
                    i += n
                    break
            else:
                i += 1
    return spots


def spot_corpus(corpus: Corpus, kb: KnowledgeBase) -> Corpus:
    """Replace all spots with dictionary matches against ``kb``."""
    spots = [s for doc in corpus.documents for s in spot_mentions(doc, kb.mentions)]
    return corpus.with_spots(spots)


def context_window(doc: Document, spot: Spot, k: int = DEFAULT_WINDOW) -> Counter:
    """Spot tokens plus up to ``k`` tokens each side, as a lowercase bag."""
    if k < 0:
        raise ValueError("window size must be nonnegative")
    start, end = spot.span
    if not 0 <= start < end <= len(doc.tokens):
        raise CorpusError(f"span {spot.span} out of range for {doc.doc_id!r}")
    lo, hi = max(0, start - k), min(len(doc.tokens), end + k)
    return Counter(t.lower() for t in doc.tokens[lo:hi])


def synth_corpus(
    kb: KnowledgeBase,
    theta: Mapping[int, float],
    n_spots: int,
    seed: int,
    context_tokens: int = 10,
) -> Corpus:
    """Generate ``n_spots`` one-sentence documents with gold labels drawn from ``theta``.

    Each class has its own random stream seeded from ``(seed, entity_id)``:
    the surface is drawn with probability proportional to the mention prior
    counts for that entity, and ``context_tokens`` tokens are drawn from the
    entity's first paragraph, split evenly around the spot. The i-th
    instance of a class is therefore the same whatever ``theta`` is, so the
    class-conditional distribution does not move when the mixture does.
    """
    classes = sorted(e for e, p in theta.items())
    probs = np.array([theta[e] for e in classes], dtype=float)
    if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-9):
        raise ValueError("theta must be nonnegative and sum to 1")
    probs = probs / probs.sum()

    pools = {}
    for e in classes:
        if theta[e] <= 0:
            continue
        kb.entity(e)
        surfaces = kb.surfaces_of(e)
        if not surfaces:
            raise ValueError(f"entity {e} has positive weight but no surface form")
        weights = np.array([c for _, c in surfaces], dtype=float)
        words = sorted(kb.entity(e).bags["first_paragraph"].elements())
        pools[e] = ([s for s, _ in surfaces], weights / weights.sum(), words)

    label_rng = np.random.default_rng([seed, 0])
    labels = label_rng.choice(len(classes), size=n_spots, p=probs)
    class_rngs = {e: np.random.default_rng([seed, 1, e]) for e in pools}

    left_n = context_tokens // 2
    documents, spots = [], []
    for i, ci in enumerate(labels):
        e = classes[ci]
        surfaces, sprobs, words = pools[e]
        rng = class_rngs[e]
        surface = surfaces[rng.choice(len(surfaces), p=sprobs)]
        if words:
            ctx = [words[j] for j in rng.integers(0, len(words), size=context_tokens)]
        else:
            ctx = []
        left, right = ctx[:left_n], ctx[left_n:]
        stoks = surface.split()
        tokens = tuple(left + stoks + right)
        doc_id = f"synth-{i:06d}"
        documents.append(Document(doc_id, tokens, ((0, len(tokens)),)))
        span = (len(left), len(left) + len(stoks))
        spots.append(Spot(doc_id, span, surface, kb.candidates(surface), gold=e))
    return Corpus(tuple(documents), tuple(spots))
