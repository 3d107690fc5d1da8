"""Occurrence statistics over a tagged corpus.

Sense priors per entity-name group, sentence-level entity bigrams, the
co-occurrence graph around an entity and a personalized PageRank ranking
of its neighbours.
"""
from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from nedstats.corpus import Corpus

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupPrior:
    counts: dict  # sense id -> count
    distribution: dict | None  # None when the group was never observed


@dataclass(frozen=True)
class SenseStats:
    groups: dict  # group name -> GroupPrior

    def prob(self, group: str, sense: int) -> float | None:
        dist = self.groups[group].distribution
        return None if dist is None else dist[sense]


def _label(spot, use: str):
    if use == "predicted":
        return spot.predicted
    if use == "gold":
        return spot.gold
    return spot.label


def sense_prior(corpus: Corpus, name_groups: Mapping[str, Sequence[int]], use: str = "label") -> SenseStats:
    """Count labels per sense and normalize within each name group.

    ``use`` picks the label source: "predicted", "gold", or "label"
    (predicted when present, else gold).
    """
    owner: dict[int, str] = {}
    for group, senses in name_groups.items():
        for s in senses:
            if s in owner and owner[s] != group:
                raise ValueError(f"sense {s} belongs to both {owner[s]!r} and {group!r}")
            owner[s] = group
    tally: Counter = Counter()
    for spot in corpus.spots:
        lab = _label(spot, use)
        if lab is not None and lab in owner:
            tally[lab] += 1
    groups = {}
    for group in sorted(name_groups):
        senses = sorted(set(name_groups[group]))
        counts = {s: tally[s] for s in senses}
        total = sum(counts.values())
        dist = {s: c / total for s, c in counts.items()} if total else None
        groups[group] = GroupPrior(counts, dist)
    return SenseStats(groups)


@dataclass(frozen=True)
class BigramTable:
    """Unordered sentence co-occurrence counts, each pair at most once per sentence."""

    pairs: dict = field(default_factory=dict)  # (a, b) with a < b -> count
    unigrams: dict = field(default_factory=dict)  # entity -> number of sentences containing it

    def count(self, a: int, b: int) -> int:
        if a == b:
            return 0
        return self.pairs.get((min(a, b), max(a, b)), 0)

    def conditional(self, e2: int, e1: int) -> float:
        """P(e2 | e1) = n(e1, e2) / n(e1)."""
        n1 = self.unigrams.get(e1, 0)
        if n1 == 0:
            raise KeyError(f"entity {e1} never observed")
        return self.count(e1, e2) / n1

    def neighbors(self, e: int) -> list[int]:
        out = set()
        for a, b in self.pairs:
            if a == e:
                out.add(b)
            elif b == e:
                out.add(a)
        return sorted(out)


def entity_bigrams(corpus: Corpus, use: str = "label") -> BigramTable:
    unigrams: Counter = Counter()
    pairs: Counter = Counter()
    for doc, spots in corpus.items():
        per_sentence: dict[int, set] = {}
        for spot in spots:
            lab = _label(spot, use)
            if lab is None:
                continue
            per_sentence.setdefault(doc.sentence_of(spot.span), set()).add(lab)
        for _, labels in sorted(per_sentence.items()):
            unigrams.update(labels)
            pairs.update(itertools.combinations(sorted(labels), 2))
    return BigramTable(dict(sorted(pairs.items())), dict(sorted(unigrams.items())))


@dataclass(frozen=True)
class CoocGraph:
    """Undirected weighted graph around ``center``; ``nodes[0]`` is the center."""

    center: int
    nodes: tuple
    weights: dict  # (a, b) with a < b -> positive weight

    def __post_init__(self):
        if not self.nodes or self.nodes[0] != self.center:
            raise ValueError("the first node must be the center")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate nodes")
        known = set(self.nodes)
        for (a, b), w in self.weights.items():
            if a >= b:
                raise ValueError("edge keys must be ordered pairs without self-edges")
            if a not in known or b not in known:
                raise ValueError(f"edge {(a, b)} touches an unknown node")
            if not w > 0:
                raise ValueError("edge weights must be positive")

    @property
    def neighbors(self) -> tuple:
        return self.nodes[1:]

    def weight(self, a: int, b: int) -> float:
        return self.weights.get((min(a, b), max(a, b)), 0.0)

    def adjacency(self) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.nodes)}
        W = np.zeros((len(self.nodes), len(self.nodes)))
        for (a, b), w in self.weights.items():
            W[index[a], index[b]] = W[index[b], index[a]] = w
        return W


def build_cooc_graph(table: BigramTable, x: int, eps: float = 0.01, induced: bool = False) -> CoocGraph:
    """Attach to ``x`` every entity E with P(E|x) > eps, weighted P(E|x) + P(x|E).

    With ``induced`` the graph also gets the same kind of edge between any
    two attached neighbours that co-occur.
    """
    if table.unigrams.get(x, 0) == 0:
        raise KeyError(f"entity {x} never observed")
    nbrs = [e for e in table.neighbors(x) if table.conditional(e, x) > eps]

    def w(a, b):
        return table.conditional(b, a) + table.conditional(a, b)

    weights = {(min(x, e), max(x, e)): w(x, e) for e in nbrs}
    if induced:
        for a, b in itertools.combinations(nbrs, 2):
            if table.count(a, b):
                weights[(a, b)] = w(a, b)
    return CoocGraph(x, (x, *nbrs), dict(sorted(weights.items())))


@dataclass(frozen=True)
class PPRScores:
    nodes: tuple
    scores: np.ndarray
    iterations: int = 0

    def __getitem__(self, node: int) -> float:
        return float(self.scores[self.nodes.index(node)])


class ConvergenceError(RuntimeError):
    pass


def personalized_pagerank(
    graph: CoocGraph,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    check: bool = False,
) -> PPRScores:
    """Random walk with restart to the center, by power iteration from ``e_center``.

    Transitions follow row-normalized edge weights; with probability
    ``1 - damping`` (and always from a node without edges) the walk jumps
    back to the center. Iterates until the largest per-node change is below
    ``tol``. With ``check`` every iterate is asserted to sum to 1.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    W = graph.adjacency()
    n = W.shape[0]
    deg = W.sum(axis=1)
    dangling = deg == 0
    P = np.divide(W, deg[:, None], out=np.zeros_like(W), where=~dangling[:, None])
    restart = np.zeros(n)
    restart[0] = 1.0
    p = restart.copy()
    for it in range(1, max_iter + 1):
        walked = damping * (P.T @ p)
        lost = 1.0 - walked.sum()
        nxt = walked + lost * restart
        if check and abs(nxt.sum() - 1.0) > 1e-9:
            raise AssertionError(f"iterate {it} sums to {nxt.sum()!r}")
        delta = np.abs(nxt - p).max()
        p = nxt
        if delta < tol:
            log.debug("ppr converged in %d iterations", it)
            return PPRScores(graph.nodes, p, it)
    raise ConvergenceError(f"personalized PageRank did not converge in {max_iter} iterations")


def top_related(graph: CoocGraph, scores: PPRScores, k: int) -> list[tuple[int, float]]:
    """Best ``k`` nodes other than the center by score, ties to the smallest id."""
    ranked = sorted(
        ((n, float(s)) for n, s in zip(scores.nodes, scores.scores) if n != graph.center),
        key=lambda t: (-t[1], t[0]),
    )
    return ranked[: max(k, 0)]


def _fmt(x: float) -> str:
    return f"{x:.12f}"


def write_sense_priors(stats: SenseStats, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for group, prior in stats.groups.items():
            for sense, count in sorted(prior.counts.items()):
                prob = "NA" if prior.distribution is None else _fmt(prior.distribution[sense])
                fh.write(f"{group}\t{sense}\t{count}\t{prob}\n")


def write_bigrams(table: BigramTable, path: str | Path) -> None:
    """Both orientations of every observed pair, with P(e2 | e1)."""
    rows = []
    for (a, b), n in table.pairs.items():
        rows.append((a, b, n, table.conditional(b, a)))
        rows.append((b, a, n, table.conditional(a, b)))
    with open(path, "w", encoding="utf-8") as fh:
        for e1, e2, n, p in sorted(rows):
            fh.write(f"{e1}\t{e2}\t{n}\t{_fmt(p)}\n")


def write_related(ranked: Sequence[tuple[int, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rank, (entity, score) in enumerate(ranked, 1):
            fh.write(f"{rank}\t{entity}\t{_fmt(score)}\n")
