"""Class-ratio estimation by mean matching, and the label-and-collect baseline.

Each mention is embedded as its candidates' renormalized mention priors
(a sparse vector over entity ids). Given per-class means ``M`` from labeled
data and the mean ``u`` of unlabeled data, the class ratios are

    argmin_theta ||M.T @ theta - u||^2   over the probability simplex,

solved by projected gradient descent.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from nedstats.corpus import DEFAULT_WINDOW, Corpus, Spot
from nedstats.kb import KnowledgeBase

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class SimplexVector:
    classes: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.classes),):
            raise ValueError("one value per class required")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class labels")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("simplex entries must be finite and nonnegative")
        if abs(values.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex entries sum to {values.sum()!r}, not 1")

    def __getitem__(self, cls) -> float:
        return float(self.values[self.classes.index(cls)])

    def as_dict(self) -> dict:
        return {c: float(v) for c, v in zip(self.classes, self.values)}

    def __eq__(self, other):
        if not isinstance(other, SimplexVector):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.values, other.values)


def mention_feature(kb: KnowledgeBase, spot: Spot) -> dict[int, float]:
    """Candidate priors for the spot's surface, renormalized over its candidates.

    Falls back to uniform weights when every candidate has zero prior (or
    the surface is not in the mention table).
    """
    if not spot.candidates:
        raise ValueError("spot has no candidates")
    counts = dict(kb.mentions.get(spot.surface, ()))
    raw = [counts.get(c, 0) for c in spot.candidates]
    total = sum(raw)
    if total == 0:
        return {c: 1.0 / len(spot.candidates) for c in spot.candidates}
    return {c: r / total for c, r in zip(spot.candidates, raw)}


def _dense(feature: Mapping[int, float], dims: Mapping[int, int]) -> np.ndarray:
    v = np.zeros(len(dims))
    for e, x in feature.items():
        v[dims[e]] = x
    return v


def feature_dims(kb: KnowledgeBase) -> tuple[int, ...]:
    return tuple(sorted(kb.entities))


@dataclass(frozen=True)
class MeanEmbedding:
    classes: tuple
    dims: tuple
    means: np.ndarray  # (n_classes, n_dims)
    counts: tuple = field(default=())


def _feature_matrix(kb: KnowledgeBase, spots: Sequence[Spot], dims: tuple) -> np.ndarray:
    index = {e: i for i, e in enumerate(dims)}
    X = np.zeros((len(spots), len(dims)))
    for r, spot in enumerate(spots):
        X[r] = _dense(mention_feature(kb, spot), index)
    return X


def class_means(spots: Iterable[Spot], kb: KnowledgeBase, classes: Sequence[int] | None = None) -> MeanEmbedding:
    """Mean mention feature per gold class."""
    spots = list(spots)
    for sp in spots:
        if sp.gold is None:
            raise ValueError(f"labeled spot {sp.surface!r} in {sp.doc_id!r} has no gold label")
    if classes is None:
        classes = sorted({sp.gold for sp in spots})
    classes = tuple(classes)
    if not classes:
        raise ValueError("no classes to estimate")
    dims = feature_dims(kb)
    X = _feature_matrix(kb, spots, dims)
    gold = np.array([sp.gold for sp in spots])
    means, counts = [], []
    for y in classes:
        rows = X[gold == y] if len(spots) else X[:0]
        if rows.shape[0] == 0:
            raise ValueError(f"class {y} has no labeled spots")
        means.append(rows.mean(axis=0))
        counts.append(int(rows.shape[0]))
    return MeanEmbedding(classes, dims, np.vstack(means), tuple(counts))


def unlabeled_mean(spots: Iterable[Spot], kb: KnowledgeBase) -> np.ndarray:
    spots = list(spots)
    if not spots:
        raise ValueError("no unlabeled spots")
    return _feature_matrix(kb, spots, feature_dims(kb)).mean(axis=0)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}`` (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    x = np.maximum(v - tau, 0.0)
    return x / x.sum()


def largest_eigenvalue(G: np.ndarray, seed: int = 0, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = G.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.random(n) + 0.5
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = G @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / norm
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return max(lam, float(np.linalg.norm(G @ x)))


@dataclass
class EstimatorConfig:
    max_iterations: int = 20_000
    tolerance: float = 1e-14
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class MMDResult:
    theta: np.ndarray
    objective: float
    iterations: int
    history: list


def mmd_objective(M: np.ndarray, u: np.ndarray, theta: np.ndarray) -> float:
    r = theta @ M - u
    return float(r @ r)


def _support_polish(M: np.ndarray, u: np.ndarray, theta: np.ndarray) -> np.ndarray | None:
    """Equality-constrained least squares on the support of ``theta``, if it stays feasible."""
    support = np.nonzero(theta > 1e-10)[0]
    k = support.size
    if k == 0:
        return None
    A = M[support]
    G = A @ A.T
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = G
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([A @ u, [1.0]])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    cand = np.zeros_like(theta)
    cand[support] = sol[:k]
    if np.any(cand < 0) or not np.all(np.isfinite(cand)):
        return None
    return cand / cand.sum()


def solve_mmd(M: np.ndarray, u: np.ndarray, config: EstimatorConfig | None = None) -> MMDResult:
    """Projected gradient on the simplex for ``min ||M.T @ theta - u||^2``.

    Uses step ``1/L`` with ``L`` the largest eigenvalue of the Gram matrix
    ``M @ M.T`` (the gradient's Lipschitz constant for half the objective).
    The objective sequence is non-increasing.
    """
    config = config or EstimatorConfig()
    M = np.asarray(M, dtype=float)
    u = np.asarray(u, dtype=float)
    if M.ndim != 2 or u.shape != (M.shape[1],):
        raise ValueError(f"dimension mismatch: means {M.shape}, unlabeled mean {u.shape}")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite input")
    k = M.shape[0]
    if k == 0:
        raise ValueError("need at least one class")
    theta = np.full(k, 1.0 / k)
    f = mmd_objective(M, u, theta)
    history = [f]
    if k == 1:
        return MMDResult(np.ones(1), f, 0, history)

    G = M @ M.T
    b = M @ u
    lam = largest_eigenvalue(G, seed=config.seed)
    if lam <= 0.0:
        return MMDResult(theta, f, 0, history)
    step = 1.0 / (lam * (1.0 + 1e-9))
    it = 0
    for it in range(1, config.max_iterations + 1):
        grad = G @ theta - b
        nxt = project_simplex(theta - step * grad)
        f_next = mmd_objective(M, u, nxt)
        if f_next > f:
            # only possible through rounding; keep the better point and stop
            break
        decrease = f - f_next
        theta, f = nxt, f_next
        history.append(f)
        if decrease < config.tolerance:
            break

    polished = _support_polish(M, u, theta)
    if polished is not None:
        f_pol = mmd_objective(M, u, polished)
        if f_pol < f:
            theta, f = polished, f_pol
            history.append(f)
    log.debug("estimate_mmd iterations=%d objective=%.12g", it, f)
    return MMDResult(theta, f, it, history)


def estimate_mmd(means: MeanEmbedding, phi_u: np.ndarray, config: EstimatorConfig | None = None) -> SimplexVector:
    res = solve_mmd(means.means, phi_u, config)
    log.info("mmd estimate: iterations=%d objective=%.12g", res.iterations, res.objective)
    return SimplexVector(means.classes, res.theta)


def count_labels(labels: Iterable[int], classes: Sequence[int]) -> SimplexVector:
    labels = list(labels)
    if not labels:
        raise ValueError("no labels to count")
    counts = Counter(labels)
    unknown = set(counts) - set(classes)
    if unknown:
        raise ValueError(f"labels outside the class set: {sorted(unknown)}")
    values = np.array([counts.get(c, 0) for c in classes], dtype=float)
    return SimplexVector(tuple(classes), values / values.sum())


def label_and_collect(
    tagger: str,
    kb: KnowledgeBase,
    weights: np.ndarray,
    corpus: Corpus,
    classes: Sequence[int] | None = None,
    k: int = DEFAULT_WINDOW,
) -> SimplexVector:
    """Tag every spot with ``tagger`` ("local" or "hillclimb") and count the labels."""
    from nedstats.pipeline import tag_corpus

    if not corpus.spots:
        raise ValueError("empty corpus")
    solver = {"local": "local", "collective-hillclimb": "hillclimb", "hillclimb": "hillclimb"}.get(tagger)
    if solver is None:
        raise ValueError(f"unknown tagger {tagger!r}")
    tagged = tag_corpus(kb, weights, corpus, solver=solver, k=k)
    if classes is None:
        classes = feature_dims(kb)
    return count_labels((sp.predicted for sp in tagged.spots), classes)


def l1_error(theta: SimplexVector, truth: SimplexVector) -> float:
    if theta.classes != truth.classes:
        raise ValueError("class index sets differ")
    return float(np.abs(theta.values - truth.values).sum())


def align(theta: SimplexVector, classes: Sequence[int]) -> SimplexVector:
    """Re-index ``theta`` onto ``classes``; missing classes get 0."""
    extra = set(theta.classes) - set(classes)
    if extra and any(theta[c] > 0 for c in extra):
        raise ValueError(f"classes {sorted(extra)} carry mass but are not in the target set")
    return SimplexVector(tuple(classes), np.array([theta[c] if c in theta.classes else 0.0 for c in classes]))


def gold_ratio(corpus: Corpus, classes: Sequence[int] | None = None) -> SimplexVector:
    labels = [sp.gold for sp in corpus.spots]
    if any(g is None for g in labels):
        raise ValueError("corpus has spots without gold labels")
    if classes is None:
        classes = sorted(set(labels))
    return count_labels(labels, classes)


def write_theta(theta: SimplexVector, path: str | Path) -> None:
    """TSV of ``entity_id<TAB>probability`` sorted by id, 12 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        for c, v in sorted(zip(theta.classes, theta.values)):
            fh.write(f"{c}\t{v:.12g}\n")


def read_theta(path: str | Path) -> SimplexVector:
    classes, values = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                c, v = line.rstrip("\n").split("\t")
                classes.append(int(c))
                values.append(float(v))
    values = np.array(values)
    # 12-digit rounding can leave the sum slightly off 1
    return SimplexVector(tuple(classes), values / values.sum())
