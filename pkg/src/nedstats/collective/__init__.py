"""Collective disambiguation of all spots in a document.

The objective rewards both local compatibility and pairwise topical
coherence of the chosen entities::

    (1 / C(n, 2)) * sum_{s < t} coherence(a_s, a_t) + (1 / n) * sum_s w @ f_s(a_s)

with the coherence term taken as 0 for a single spot.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nedstats.collective.simplex import LPResult, SimplexError, linprog_max
from nedstats.corpus import DEFAULT_WINDOW, Document, Spot
from nedstats.kb import KnowledgeBase, coherence
from nedstats.local import IdfTable, idf_table, spot_features

log = logging.getLogger(__name__)

MAX_SPOTS = 12
MAX_CANDIDATES = 8
MAX_LP_VARIABLES = 600
MAX_ENUMERATION = 100_000

Assignment = tuple  # chosen entity id per spot


class ProblemSizeError(ValueError):
    pass


@dataclass(frozen=True)
class AssignmentProblem:
    """Node potentials per (spot, candidate) and coherence per cross-spot candidate pair.

    ``edges[(s, t)]`` for ``s < t`` is a ``len(cands[s]) x len(cands[t])``
    matrix; :meth:`edge` gives symmetric access.
    """

    spots: tuple
    cands: tuple
    node: tuple
    edges: dict

    def __post_init__(self):
        if not self.cands:
            raise ValueError("assignment problem needs at least one spot")
        for s, row in enumerate(self.cands):
            if not row:
                raise ValueError(f"spot {s} has no candidates")
            if not np.all(np.isfinite(self.node[s])):
                raise ValueError(f"spot {s} has non-finite node potentials")
        for (s, t), mat in self.edges.items():
            if not s < t:
                raise ValueError("edge keys must be ordered (s, t) with s < t")
            if mat.shape != (len(self.cands[s]), len(self.cands[t])):
                raise ValueError(f"edge block {(s, t)} has the wrong shape")
            if np.any(mat < 0) or np.any(mat > 1):
                raise ValueError("edge weights must lie in [0, 1]")

    @property
    def n_spots(self) -> int:
        return len(self.cands)

    def edge(self, s: int, i: int, t: int, j: int) -> float:
        if s < t:
            return float(self.edges[(s, t)][i, j])
        return float(self.edges[(t, s)][j, i])

    def index_of(self, a: Assignment) -> tuple[int, ...]:
        if len(a) != self.n_spots:
            raise ValueError(f"assignment has {len(a)} choices for {self.n_spots} spots")
        try:
            return tuple(self.cands[s].index(e) for s, e in enumerate(a))
        except ValueError:
            raise ValueError(f"assignment {a} chooses a non-candidate") from None

    def assignment(self, idx: Sequence[int]) -> Assignment:
        return tuple(self.cands[s][i] for s, i in enumerate(idx))


def make_problem(cands, node, edges=None, spots=None) -> AssignmentProblem:
    """Build a problem directly from arrays; ``edges`` maps ``(s, t)`` to matrices."""
    cands = tuple(tuple(c) for c in cands)
    node = tuple(np.asarray(v, dtype=float) for v in node)
    full = {}
    for s in range(len(cands)):
        for t in range(s + 1, len(cands)):
            full[(s, t)] = np.zeros((len(cands[s]), len(cands[t])))
    for (s, t), mat in (edges or {}).items():
        mat = np.asarray(mat, dtype=float)
        if s > t:
            s, t, mat = t, s, mat.T
        full[(s, t)] = mat
    return AssignmentProblem(tuple(spots) if spots else tuple(range(len(cands))), cands, node, full)


def build_problem(
    kb: KnowledgeBase,
    weights: np.ndarray,
    doc: Document,
    spots: Sequence[Spot],
    k: int = DEFAULT_WINDOW,
    idf: IdfTable | None = None,
) -> AssignmentProblem:
    if not spots:
        raise ValueError("no spots to disambiguate")
    if len(spots) > MAX_SPOTS:
        raise ProblemSizeError(f"{len(spots)} spots exceeds the limit of {MAX_SPOTS}")
    for spot in spots:
        if len(spot.candidates) > MAX_CANDIDATES:
            raise ProblemSizeError(
                f"spot {spot.surface!r} has {len(spot.candidates)} candidates, limit {MAX_CANDIDATES}"
            )
    if idf is None:
        idf = idf_table(kb)
    node = [spot_features(kb, doc, spot, k, idf) @ weights for spot in spots]
    edges = {}
    for s in range(len(spots)):
        for t in range(s + 1, len(spots)):
            edges[(s, t)] = np.array(
                [[coherence(kb, a, b) for b in spots[t].candidates] for a in spots[s].candidates]
            )
    return make_problem([sp.candidates for sp in spots], node, edges, spots)


def _objective_idx(p: AssignmentProblem, idx: Sequence[int]) -> float:
    n = p.n_spots
    local = sum(p.node[s][i] for s, i in enumerate(idx)) / n
    if n < 2:
        return float(local)
    coh = 0.0
    for (s, t), mat in p.edges.items():
        coh += mat[idx[s], idx[t]]
    return float(coh / math.comb(n, 2) + local)


def objective(p: AssignmentProblem, a: Assignment) -> float:
    return _objective_idx(p, p.index_of(a))


def _local_argmax(p: AssignmentProblem) -> list[int]:
    out = []
    for v in p.node:
        best = 0
        for i in range(1, len(v)):
            if v[i] > v[best]:
                best = i
        out.append(best)
    return out


def _move_gain(p: AssignmentProblem, idx: list[int], s: int, i: int) -> float:
    """Objective contribution of spot ``s`` taking candidate ``i``, others fixed."""
    n = p.n_spots
    val = p.node[s][i] / n
    if n > 1:
        pair = 1.0 / math.comb(n, 2)
        for t in range(n):
            if t != s:
                val += pair * p.edge(s, i, t, idx[t])
    return val


def _climb(p: AssignmentProblem, idx: list[int]) -> tuple[list[int], int]:
    sweeps = 0
    while True:
        sweeps += 1
        changed = False
        for s in range(p.n_spots):
            current = _move_gain(p, idx, s, idx[s])
            best_i, best_v = idx[s], current
            for i in range(len(p.cands[s])):
                v = _move_gain(p, idx, s, i)
                if v > best_v + 1e-12:
                    best_i, best_v = i, v
            if best_i != idx[s]:
                idx[s] = best_i
                changed = True
        if not changed:
            return idx, sweeps


def hill_climb(p: AssignmentProblem, restarts: int = 0, seed: int = 0) -> Assignment:
    """Coordinate ascent from the local-argmax start, plus seeded random restarts.

    Each sweep visits spots in order and moves a spot to the candidate that
    strictly improves the objective most; it stops after a sweep with no
    change. Returns the best assignment seen (earliest on ties).
    """
    idx, sweeps = _climb(p, _local_argmax(p))
    best, best_v = idx, _objective_idx(p, idx)
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        start = [int(rng.integers(len(c))) for c in p.cands]
        cand, n = _climb(p, start)
        sweeps += n
        v = _objective_idx(p, cand)
        if v > best_v + 1e-12:
            best, best_v = cand, v
    log.debug("hill_climb objective=%.12g sweeps=%d", best_v, sweeps)
    return p.assignment(best)


def exhaustive_opt(p: AssignmentProblem) -> Assignment:
    """Global optimum by enumeration; ties go to the lexicographically smallest choice."""
    space = math.prod(len(c) for c in p.cands)
    if space > MAX_ENUMERATION:
        raise ProblemSizeError(f"search space {space} exceeds {MAX_ENUMERATION}")
    best, best_v = None, -math.inf
    for idx in itertools.product(*(range(len(c)) for c in p.cands)):
        v = _objective_idx(p, idx)
        if v > best_v:
            best, best_v = idx, v
    return p.assignment(best)


@dataclass
class LPRelaxation:
    z: list  # per spot, array of candidate weights
    value: float
    iterations: int


def lp_relaxation(p: AssignmentProblem, max_iter: int = 50_000) -> LPRelaxation:
    """Solve the LP relaxation with pair variables ``u <= z_s``, ``u <= z_t``."""
    n = p.n_spots
    offsets, pos = [], 0
    for c in p.cands:
        offsets.append(pos)
        pos += len(c)
    n_z = pos
    pairs = []
    for (s, t) in sorted(p.edges):
        for i in range(len(p.cands[s])):
            for j in range(len(p.cands[t])):
                pairs.append((s, i, t, j))
    n_vars = n_z + len(pairs)
    if n_vars > MAX_LP_VARIABLES:
        raise ProblemSizeError(f"LP would have {n_vars} variables, limit {MAX_LP_VARIABLES}")

    c = np.zeros(n_vars)
    for s in range(n):
        c[offsets[s] : offsets[s] + len(p.cands[s])] = p.node[s] / n
    pair_w = 1.0 / math.comb(n, 2) if n > 1 else 0.0
    A_ub = np.zeros((2 * len(pairs), n_vars))
    for k, (s, i, t, j) in enumerate(pairs):
        col = n_z + k
        c[col] = pair_w * p.edges[(s, t)][i, j]
        A_ub[2 * k, col] = 1.0
        A_ub[2 * k, offsets[s] + i] = -1.0
        A_ub[2 * k + 1, col] = 1.0
        A_ub[2 * k + 1, offsets[t] + j] = -1.0
    A_eq = np.zeros((n, n_vars))
    for s in range(n):
        A_eq[s, offsets[s] : offsets[s] + len(p.cands[s])] = 1.0
    res: LPResult = linprog_max(c, A_ub, np.zeros(len(A_ub)), A_eq, np.ones(n), max_iter=max_iter)
    z = [res.x[offsets[s] : offsets[s] + len(p.cands[s])].copy() for s in range(n)]
    log.debug("lp_relaxation value=%.12g iterations=%d", res.value, res.iterations)
    return LPRelaxation(z=z, value=res.value, iterations=res.iterations)


def round_relaxation(p: AssignmentProblem, z: Sequence[np.ndarray], threshold: float = 0.5) -> Assignment:
    """Pick the candidate at or above ``threshold`` per spot, else the largest ``z``."""
    idx = []
    for zs in z:
        above = [i for i, v in enumerate(zs) if v >= threshold - 1e-9]
        if above:
            idx.append(max(above, key=lambda i: (zs[i], -i)) if len(above) > 1 else above[0])
        else:
            best = 0
            for i in range(1, len(zs)):
                if zs[i] > zs[best] + 1e-12:
                    best = i
            idx.append(best)
    return p.assignment(idx)


def lp_round(p: AssignmentProblem) -> Assignment:
    return round_relaxation(p, lp_relaxation(p).z)


SOLVERS = ("local", "hillclimb", "lp")


def disambiguate_collective(
    kb: KnowledgeBase,
    weights: np.ndarray,
    doc: Document,
    spots: Sequence[Spot],
    solver: str = "hillclimb",
    k: int = DEFAULT_WINDOW,
    idf: IdfTable | None = None,
    restarts: int = 0,
    seed: int = 0,
) -> list[Spot]:
    """Label all spots of ``doc`` jointly with the chosen solver."""
    if not spots:
        return []
    p = build_problem(kb, weights, doc, spots, k, idf)
    if solver == "hillclimb":
        a = hill_climb(p, restarts, seed)
    elif solver == "lp":
        a = lp_round(p)
    elif solver == "exhaustive":
        a = exhaustive_opt(p)
    else:
        raise ValueError(f"unknown collective solver {solver!r}")
    return [sp.with_prediction(e) for sp, e in zip(spots, a)]


__all__ = [
    "AssignmentProblem",
    "LPRelaxation",
    "ProblemSizeError",
    "SimplexError",
    "build_problem",
    "disambiguate_collective",
    "exhaustive_opt",
    "hill_climb",
    "lp_relaxation",
    "lp_round",
    "make_problem",
    "objective",
    "round_relaxation",
]
