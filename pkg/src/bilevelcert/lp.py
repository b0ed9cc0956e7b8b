"""Dense two-phase simplex for feasibility systems ``A x = b, x >= 0``.

Works over floats (with a pivot tolerance) or over ``fractions.Fraction``
(exact).  Entering/leaving variables follow Bland's rule, so the method
terminates on degenerate problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

FLOAT_TOL = 1e-9


class LPError(RuntimeError):
    """Numerical breakdown of the float simplex."""


@dataclass
class LPResult:
    feasible: bool
    x: list | None
    residual: float | Fraction
    pivots: int


def to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(float(v))


def _matrix(A, exact: bool):
    rows = [list(r) for r in A]
    if exact:
        return [[to_fraction(v) for v in r] for r in rows]
    return [[float(v) for v in r] for r in rows]


def solve_feasibility(A: Sequence[Sequence], b: Sequence, exact: bool = False,
                      tol: float = FLOAT_TOL, max_pivots: int = 10_000) -> LPResult:
    """Find ``x >= 0`` with ``A x = b`` or report infeasibility.

    ``A`` is m-by-n (n may be zero).  Phase I minimises the sum of
    artificial variables; the problem is feasible iff that optimum is zero
    (exactly in rational mode, within ``tol`` in float mode).
    """
    m = len(b)
    A = _matrix(A, exact)
    n = len(A[0]) if m and A else 0
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    bb = [to_fraction(v) if exact else float(v) for v in b]
    eps = zero if exact else tol

    if m == 0:
        return LPResult(True, [zero] * n, zero, 0)

    # tableau rows: [A | I_art | rhs], rhs made nonnegative
    T = []
    for i in range(m):
        sgn = -one if bb[i] < 0 else one
        row = [sgn * a for a in A[i]] + [one if k == i else zero for k in range(m)] + [sgn * bb[i]]
        T.append(row)
    basis = [n + i for i in range(m)]
    width = n + m

    # phase-I reduced costs: c_art = 1, so reduced cost of column j is -sum_i T[i][j]
    cost = [zero] * (width + 1)
    for j in range(width + 1):
        if j < n or j == width:
            cost[j] = -sum((T[i][j] for i in range(m)), zero)
    pivots = 0
    while True:
        enter = -1
        for j in range(width):
            if cost[j] < -eps:
                enter = j
                break
        if enter < 0:
            break
        ratios = [(T[i][width] / T[i][enter], i) for i in range(m) if T[i][enter] > eps]
        if ratios:
            best = min(r for r, _ in ratios)
            slack = zero if exact else tol * 1e-3
            leave = min((i for r, i in ratios if r - best <= slack), key=lambda i: basis[i])
        else:
            leave = -1
        if leave < 0:
            # phase I objective is bounded below by zero; cannot happen
            raise LPError("unbounded phase-I direction")
        piv = T[leave][enter]
        prow = [v / piv for v in T[leave]]
        T[leave] = prow
        for i in range(m):
            if i != leave:
                f = T[i][enter]
                if f != 0:
                    T[i] = [v - f * p for v, p in zip(T[i], prow)]
        f = cost[enter]
        cost = [c - f * p for c, p in zip(cost, prow)]
        basis[leave] = enter
        pivots += 1
        if pivots > max_pivots:
            raise LPError("pivot limit exceeded")

    phase1 = -cost[width]
    x = [zero] * n
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = T[i][width]
    if not exact:
        x = [max(v, 0.0) for v in x]
    res = _residual(A, x, bb, exact)
    if exact:
        feasible = phase1 == 0 and res == 0
    else:
        feasible = phase1 <= tol * max(1.0, max((abs(v) for v in bb), default=0.0)) and res <= tol * 10
    return LPResult(feasible, x if feasible else None, res, pivots)


def _residual(A, x, b, exact):
    worst = Fraction(0) if exact else 0.0
    for row, bi in zip(A, b):
        r = abs(sum((a * xi for a, xi in zip(row, x)), Fraction(0) if exact else 0.0) - bi)
        if r > worst:
            worst = r
    return worst
