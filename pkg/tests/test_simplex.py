import numpy as np
import pytest
from scipy.optimize import linprog

from nedstats.collective.simplex import (
    InfeasibleError,
    IterationLimitError,
    UnboundedError,
    linprog_max,
)


def test_textbook_problem():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    res = linprog_max([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
    np.testing.assert_allclose(res.x, [2, 6], atol=1e-12)
    assert res.value == pytest.approx(36)


def test_equality_constraints():
    res = linprog_max([1, 2, 0], A_eq=[[1, 1, 1]], b_eq=[1])
    np.testing.assert_allclose(res.x, [0, 1, 0], atol=1e-12)


def test_negative_rhs():
    # max -x s.t. -x <= -2  (x >= 2)
    res = linprog_max([-1], [[-1]], [-2])
    assert res.x[0] == pytest.approx(2)


def test_infeasible():
    with pytest.raises(InfeasibleError):
        linprog_max([1, 1], A_eq=[[1, 1], [1, 1]], b_eq=[1, 2])


def test_unbounded():
    with pytest.raises(UnboundedError):
        linprog_max([1, 0], [[0, 1]], [1])


def test_iteration_cap():
    with pytest.raises(IterationLimitError):
        linprog_max([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18], max_iter=1)


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook largest-coefficient rule
    c = [0.75, -150, 0.02, -6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    b = [0, 0, 1]
    res = linprog_max(c, A, b)
    assert res.value == pytest.approx(0.05)


def test_random_against_highs():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n, m = rng.integers(2, 8), rng.integers(1, 8)
        A = rng.uniform(-1, 2, (m, n))
        b = rng.uniform(0, 3, m)
        c = rng.uniform(-1, 2, n)
        A = np.vstack([A, np.ones((1, n))])  # keep bounded
        b = np.append(b, 5.0)
        ref = linprog(-c, A_ub=A, b_ub=b, bounds=(0, None), method="highs")
        res = linprog_max(c, A, b)
        assert res.value == pytest.approx(-ref.fun, abs=1e-8)
        assert np.all(A @ res.x <= b + 1e-9)
        assert np.all(res.x >= -1e-12)
