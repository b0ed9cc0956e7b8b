from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from bilevelcert.lp import solve_feasibility


def test_small_exact_solution():
    res = solve_feasibility([[1, 2], [2, 1]], [1, 1], exact=True)
    assert res.feasible
    assert res.x == [Fraction(1, 3), Fraction(1, 3)]
    assert res.residual == 0


def test_infeasible_sign():
    # x >= 0 cannot give a negative sum
    res = solve_feasibility([[1, 1]], [-1])
    assert not res.feasible
    assert res.x is None


def test_empty_system():
    assert solve_feasibility([], []).feasible


def test_zero_column_count():
    assert solve_feasibility([[]], [0]).feasible
    assert not solve_feasibility([[]], [1]).feasible


def test_degenerate_terminates():
    # a classic cycling-prone tableau (Beale) written as a feasibility system
    A = [[0.25, -8, -1, 9, 1, 0, 0],
         [0.5, -12, -0.5, 3, 0, 1, 0],
         [0, 0, 1, 0, 0, 0, 1]]
    b = [0, 0, 1]
    for exact in (False, True):
        res = solve_feasibility(A, b, exact=exact)
        assert res.feasible
        assert res.pivots < 50


systems = st.integers(1, 4).flatmap(
    lambda m: st.integers(1, 5).flatmap(
        lambda n: st.tuples(
            st.lists(st.lists(st.integers(-3, 3), min_size=n, max_size=n), min_size=m, max_size=m),
            st.lists(st.integers(-3, 3), min_size=m, max_size=m))))


@settings(max_examples=150, deadline=None)
@given(systems)
def test_agrees_with_scipy(system):
    A, b = system
    ours = solve_feasibility(A, b, exact=True)
    ref = linprog(np.zeros(len(A[0])), A_eq=np.array(A, float), b_eq=np.array(b, float),
                  bounds=[(0, None)] * len(A[0]), method="highs")
    assert ours.feasible == (ref.status == 0)
    if ours.feasible:
        assert all(v >= 0 for v in ours.x)
        for row, bi in zip(A, b):
            assert sum(Fraction(a) * v for a, v in zip(row, ours.x)) == bi


@settings(max_examples=100, deadline=None)
@given(systems)
def test_float_matches_exact(system):
    A, b = system
    assert solve_feasibility(A, b).feasible == solve_feasibility(A, b, exact=True).feasible
