"""Corpus-level tagging with an optional process pool.

Results are merged in document order, so the output never depends on the
number of workers.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from nedstats.collective import disambiguate_collective
from nedstats.corpus import DEFAULT_WINDOW, Corpus
from nedstats.kb import KnowledgeBase
from nedstats.local import disambiguate_local, idf_table

_STATE: dict = {}


def _init_worker(kb, weights, solver, k, restarts, seed):
    _STATE.update(kb=kb, weights=weights, solver=solver, k=k, restarts=restarts, seed=seed, idf=idf_table(kb))


def _tag_one(item):
    doc, spots = item
    st = _STATE
    if st["solver"] == "local":
        return disambiguate_local(st["kb"], st["weights"], doc, spots, st["k"], st["idf"])
    return disambiguate_collective(
        st["kb"], st["weights"], doc, spots, st["solver"], st["k"], st["idf"], st["restarts"], st["seed"]
    )


def tag_corpus(
    kb: KnowledgeBase,
    weights: np.ndarray,
    corpus: Corpus,
    solver: str = "local",
    k: int = DEFAULT_WINDOW,
    restarts: int = 0,
    seed: int = 0,
    workers: int = 1,
) -> Corpus:
    """Fill ``predicted`` on every spot using ``solver`` (local, hillclimb or lp)."""
    if solver not in ("local", "hillclimb", "lp", "exhaustive"):
        raise ValueError(f"unknown solver {solver!r}")
    args = (kb, np.asarray(weights, dtype=float), solver, k, restarts, seed)
    items = list(corpus.items())
    if workers <= 1 or len(items) < 2:
        _init_worker(*args)
        results = [_tag_one(it) for it in items]
    else:
        chunk = max(1, len(items) // (4 * workers))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=args) as pool:
            results = list(pool.map(_tag_one, items, chunksize=chunk))
    return corpus.with_spots(sp for spots in results for sp in spots)
