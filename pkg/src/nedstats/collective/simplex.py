"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``max c @ x  s.t.  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  x >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9


class SimplexError(RuntimeError):
    pass


class InfeasibleError(SimplexError):
    pass


class UnboundedError(SimplexError):
    pass


class IterationLimitError(SimplexError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    iterations: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _run(T: np.ndarray, basis: list[int], n_cols: int, max_iter: int, start: int) -> int:
    """Iterate on tableau ``T`` (objective in the last row, minimization of reduced costs).

    The last row holds reduced costs ``-c``; a negative entry means the
    column can improve the objective. Only the first ``n_cols`` columns may
    enter. Returns the running iteration count.
    """
    it = start
    m = T.shape[0] - 1
    while True:
        obj = T[-1, :n_cols]
        entering = next((j for j in range(n_cols) if obj[j] < -TOL), None)
        if entering is None:
            return it
        if it >= max_iter:
            raise IterationLimitError(f"simplex exceeded {max_iter} iterations")
        col = T[:m, entering]
        best_row, best_ratio = None, np.inf
        for i in range(m):
            if col[i] > TOL:
                ratio = T[i, -1] / col[i]
                if ratio < best_ratio - TOL or (
                    ratio <= best_ratio + TOL and best_row is not None and basis[i] < basis[best_row]
                ):
                    best_row, best_ratio = i, ratio
        if best_row is None:
            raise UnboundedError("linear program is unbounded")
        _pivot(T, best_row, entering)
        basis[best_row] = entering
        it += 1


def linprog_max(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    max_iter: int = 50_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: x (n) | slacks (m_ub) | artificials (m) | rhs
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b = np.where(neg, -b, b)

    # a slack with +1 coefficient and nonnegative rhs starts basic; other rows get an artificial
    basis: list[int] = []
    art_rows = []
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis.append(n + i)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_struct = n + m_ub
    n_art = len(art_rows)
    T = np.zeros((m + 1, n_struct + n_art + 1))
    T[:m, :n_struct] = A
    T[:m, -1] = b
    for k, i in enumerate(art_rows):
        T[i, n_struct + k] = 1.0
        basis[i] = n_struct + k

    iterations = 0
    if n_art:
        # phase 1: minimize the sum of artificials == maximize -sum
        T[-1, :] = 0.0
        for i in art_rows:
            T[-1, :] -= T[i, :]
        T[-1, n_struct : n_struct + n_art] = 0.0
        iterations = _run(T, basis, n_struct + n_art, max_iter, iterations)
        if -T[-1, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
            raise InfeasibleError("linear program is infeasible")
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= n_struct:
                row = T[i, :n_struct]
                j = next((j for j in range(n_struct) if abs(row[j]) > TOL), None)
                if j is not None:
                    _pivot(T, i, j)
                    basis[i] = j
        keep = [i for i in range(m) if basis[i] < n_struct]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        T = np.hstack([T[:, :n_struct], T[:, -1:]])

    T[-1, :] = 0.0
    T[-1, :n] = -c
    for i, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1, :] -= T[-1, j] * T[i, :]
    iterations = _run(T, basis, n_struct, max_iter, iterations)

    x = np.zeros(n_struct)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    x = x[:n]
    return LPResult(x=x, value=float(c @ x), iterations=iterations)
