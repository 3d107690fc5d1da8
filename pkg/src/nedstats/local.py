"""Local compatibility features, margin training and per-spot disambiguation.

Every (spot, candidate) pair gets a 13-vector: the four candidate text
sources (first paragraph, full page, anchor text, anchor context) compared
with the spot's context window by count dot product, TF-IDF cosine and
Jaccard, followed by the mention prior. Scores are ``w @ f``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from nedstats.corpus import DEFAULT_WINDOW, Corpus, Document, Spot, context_window
from nedstats.kb import TEXT_FIELDS, KnowledgeBase

KINDS = ("count_dot", "tfidf_cosine", "jaccard")
FEATURE_NAMES = tuple(f"{src}:{kind}" for src in TEXT_FIELDS for kind in KINDS) + ("mention_prior",)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class IdfTable:
    """Smoothed inverse document frequency over the catalog's full texts."""

    weights: Mapping[str, float]
    n_docs: int

    @property
    def default(self) -> float:
        return math.log(1 + self.n_docs) + 1.0

    def __getitem__(self, term: str) -> float:
        return self.weights.get(term, self.default)


def idf_table(kb: KnowledgeBase) -> IdfTable:
    """``idf(t) = ln((1 + N) / (1 + df(t))) + 1`` with df over entity full texts."""
    n = len(kb.entities)
    df: Counter = Counter()
    for ent in kb.entities.values():
        df.update(ent.bags["full_text"].keys())
    return IdfTable({t: math.log((1 + n) / (1 + d)) + 1.0 for t, d in sorted(df.items())}, n)


def similarity(a: Mapping[str, int], b: Mapping[str, int], kind: str, idf: IdfTable | None = None) -> float:
    if kind == "count_dot":
        if len(a) > len(b):
            a, b = b, a
        return float(sum(c * b[t] for t, c in a.items() if t in b))
    if kind == "tfidf_cosine":
        if idf is None:
            raise ValueError("tfidf_cosine needs an idf table")
        va = {t: c * idf[t] for t, c in a.items() if c}
        vb = {t: c * idf[t] for t, c in b.items() if c}
        na = math.sqrt(sum(v * v for v in va.values()))
        nb = math.sqrt(sum(v * v for v in vb.values()))
        if na == 0.0 or nb == 0.0:
            return 0.0
        dot = sum(v * vb[t] for t, v in va.items() if t in vb)
        return min(1.0, max(0.0, dot / (na * nb)))
    if kind == "jaccard":
        sa = {t for t, c in a.items() if c}
        sb = {t for t, c in b.items() if c}
        union = sa | sb
        if not union:
            return 0.0
        return len(sa & sb) / len(union)
    raise ValueError(f"unknown similarity kind {kind!r}")


def _prior(kb: KnowledgeBase, surface: str, candidate: int) -> float:
    cands = kb.mentions.get(surface)
    if not cands:
        return 0.0
    total = sum(c for _, c in cands)
    return next((c for e, c in cands if e == candidate), 0) / total


def extract_features(
    kb: KnowledgeBase,
    doc: Document,
    spot: Spot,
    candidate: int,
    k: int = DEFAULT_WINDOW,
    idf: IdfTable | None = None,
) -> np.ndarray:
    if candidate not in spot.candidates:
        raise ValueError(f"entity {candidate} is not a candidate of spot {spot.surface!r}")
    if idf is None:
        idf = idf_table(kb)
    ctx = context_window(doc, spot, k)
    bags = kb.entity(candidate).bags
    f = np.empty(N_FEATURES)
    i = 0
    for src in TEXT_FIELDS:
        for kind in KINDS:
            f[i] = similarity(bags[src], ctx, kind, idf)
            i += 1
    f[12] = _prior(kb, spot.surface, candidate)
    return f


def spot_features(kb, doc, spot, k=DEFAULT_WINDOW, idf=None) -> np.ndarray:
    """Feature matrix with one row per candidate, in candidate order."""
    if idf is None:
        idf = idf_table(kb)
    return np.vstack([extract_features(kb, doc, spot, c, k, idf) for c in spot.candidates])


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.01
    margin: float = 1.0
    seed: int = 0
    shuffle: bool = True
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.margin > 0:
            raise ValueError("margin must be positive")


def pair_hinge(w: np.ndarray, f_gold: np.ndarray, f_other: np.ndarray, margin: float = 1.0) -> float:
    return max(0.0, margin - w @ f_gold + w @ f_other)


def train_weights(corpus: Corpus, kb: KnowledgeBase, config: TrainConfig | None = None) -> np.ndarray:
    """Online subgradient descent on the pairwise ranking hinge loss.

    For every gold spot and every wrong candidate ``c`` the loss is
    ``max(0, margin - w.f(gold) + w.f(c))``; violated pairs move ``w`` by
    ``learning_rate * (f(gold) - f(c))``.
    """
    config = config or TrainConfig()
    idf = idf_table(kb)
    examples = []
    for doc, spots in corpus.items():
        for spot in spots:
            if spot.gold is None:
                raise ValueError(f"training spot {spot.surface!r} in {doc.doc_id!r} has no gold label")
            if len(spot.candidates) < 2:
                continue
            feats = spot_features(kb, doc, spot, config.window, idf)
            g = spot.candidates.index(spot.gold)
            diffs = np.delete(feats[g] - feats, g, axis=0)
            examples.append(diffs)
    if not examples:
        raise ValueError("degenerate training set: no spot has two or more candidates")

    w = np.zeros(N_FEATURES)
    rng = np.random.default_rng(config.seed)
    order = np.arange(len(examples))
    for _ in range(config.epochs):
        if config.shuffle:
            rng.shuffle(order)
        for idx in order:
            for d in examples[idx]:
                if config.margin - w @ d > 0:
                    w = w + config.learning_rate * d
    return w


def _argmax_first(scores: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def disambiguate_local(
    kb: KnowledgeBase,
    weights: np.ndarray,
    doc: Document,
    spots: Sequence[Spot],
    k: int = DEFAULT_WINDOW,
    idf: IdfTable | None = None,
) -> list[Spot]:
    """Label each spot with its best-scoring candidate; ties go to the smallest id."""
    if idf is None:
        idf = idf_table(kb)
    out = []
    for spot in spots:
        if spot.doc_id != doc.doc_id:
            raise ValueError(f"spot belongs to {spot.doc_id!r}, not {doc.doc_id!r}")
        if len(spot.candidates) == 1:
            out.append(spot.with_prediction(spot.candidates[0]))
            continue
        scores = spot_features(kb, doc, spot, k, idf) @ weights
        out.append(spot.with_prediction(spot.candidates[_argmax_first(scores)]))
    return out


def save_weights(w: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in w:
            fh.write(f"{float(v)!r}\n")


def load_weights(path: str | Path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {line.strip()!r}") from None
    w = np.array(values)
    if w.shape != (N_FEATURES,) or not np.all(np.isfinite(w)):
        raise ValueError(f"{path}: expected {N_FEATURES} finite values, got {len(values)}")
    return w
