"""Single-level reformulation of the bilevel problem and brute-force grid oracles.

``psi(x, y, z) = min{f(x,y) - f(x,z), -Delta(phi(x,z))}`` with ``Delta`` the
signed distance to the nonpositive orthant, and ``Psi(x, y)`` its maximum
over the compact box Theta (a grid stands in for the exact maximum).  The
feasible set E collects ``H <= 0``, ``phi <= 0`` and ``Psi <= 0``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .expr import BilevelProblem, DomainError, Interval, NoRegionError, PiecewiseFn

FEAS_TOL = 1e-9
VALUE_TOL = 1e-6
DOMINANCE_TOL = 1e-7
MIN_POINTS_PER_AXIS = 21


@dataclass(frozen=True)
class Grid:
    """Tensor grid over closed intervals, iterated lexicographically."""

    intervals: tuple

    def __post_init__(self):
        for iv in self.intervals:
            if iv.step <= 0 or iv.hi < iv.lo + iv.step:
                raise ValueError("grid needs step > 0 and at least 2 points per coordinate")

    @classmethod
    def from_bounds(cls, bounds: Sequence[tuple], step) -> "Grid":
        return cls(tuple(Interval(Fraction(lo), Fraction(hi), Fraction(step)) for lo, hi in bounds))

    def with_step(self, step) -> "Grid":
        step = Fraction(step)
        return Grid(tuple(Interval(iv.lo, iv.hi, step) for iv in self.intervals))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def step(self) -> float:
        return float(max(iv.step for iv in self.intervals))

    def axis(self, i: int) -> np.ndarray:
        return _axis(self.intervals[i])

    def points(self) -> np.ndarray:
        return _mesh(self.intervals)

    def __len__(self):
        return int(np.prod([len(self.axis(i)) for i in range(self.dim)]))

    def coarse(self) -> bool:
        return any(len(self.axis(i)) < MIN_POINTS_PER_AXIS for i in range(self.dim))


@lru_cache(maxsize=256)
def _axis(iv: Interval) -> np.ndarray:
    n = int((iv.hi - iv.lo) / iv.step)
    # exact rationals first so that e.g. 0 and 1 land exactly on the grid
    return np.array([float(iv.lo + i * iv.step) for i in range(n + 1)])


@lru_cache(maxsize=64)
def _mesh(intervals: tuple) -> np.ndarray:
    axes = [_axis(iv) for iv in intervals]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts.setflags(write=False)
    return pts


def x_grid(prob: BilevelProblem, step=None) -> Grid:
    g = Grid(prob.x_box)
    return g.with_step(step) if step is not None else g


def y_grid(prob: BilevelProblem, step=None) -> Grid:
    g = Grid(prob.y_box)
    return g.with_step(step) if step is not None else g


def theta_grid(prob: BilevelProblem) -> Grid:
    return Grid(prob.theta_box)


# --------------------------------------------------------------------------
# signed distance and psi

def signed_distance_orthant(u) -> np.ndarray | float:
    """Signed distance to ``-R^q_+`` along the last axis.

    Inside the orthant this is ``max_i u_i`` (minus the distance to the
    complement); outside it is the norm of the positive part.
    """
    u = np.asarray(u, dtype=float)
    inside = np.all(u <= 0, axis=-1)
    out = np.where(inside, np.max(u, axis=-1), np.linalg.norm(np.maximum(u, 0.0), axis=-1))
    return float(out) if out.ndim == 0 else out


def _stack(x, y) -> np.ndarray:
    return np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)),
                           np.atleast_1d(np.asarray(y, dtype=float))])


def psi(prob: BilevelProblem, x, y, z) -> float:
    """Pointwise ``psi(x, y, z)``."""
    fxy = prob.f(_stack(x, y))
    pz = _stack(x, z)
    first = fxy - prob.f(pz)
    if not prob.phi:
        return first
    u = [g(pz) for g in prob.phi]
    return min(first, -signed_distance_orthant(u))


def psi_over_theta(prob: BilevelProblem, x, y, Z: np.ndarray | None = None) -> np.ndarray:
    """Vector of ``psi(x, y, z)`` over the Theta grid (or the rows of ``Z``)."""
    if Z is None:
        Z = theta_grid(prob).points()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    fxy = prob.f(_stack(x, y))
    P = np.hstack([np.broadcast_to(x, (len(Z), len(x))), Z])
    fz = prob.f.evaluate_many(P)
    vals = fxy - fz
    if prob.phi:
        U = np.stack([g.evaluate_many(P) for g in prob.phi], axis=1)
        vals = np.minimum(vals, -signed_distance_orthant(U))
    if np.isnan(vals).any():
        raise DomainError("psi undefined on part of Theta")
    return vals


def capital_psi(prob: BilevelProblem, x, y) -> float:
    """Grid maximum of ``psi`` over Theta."""
    return float(np.max(psi_over_theta(prob, x, y)))


def psi_function(prob: BilevelProblem) -> Callable:
    """Point oracle for Psi: the grid value, or the declared closed form
    where the grid value is undefined."""
    n1 = prob.n1

    def Psi(p):
        p = np.asarray(p, dtype=float)
        try:
            return capital_psi(prob, p[:n1], p[n1:])
        except (DomainError, NoRegionError):
            if prob.psi_closed is None:
                raise
            return prob.psi_closed(p)

    return Psi


# --------------------------------------------------------------------------
# lower level and feasible set

@dataclass
class LowerLevelResult:
    x: tuple
    solutions: np.ndarray
    min_value: float | None
    feasible_count: int
    step: float

    @property
    def empty(self) -> bool:
        return self.feasible_count == 0


def lower_level_solutions(prob: BilevelProblem, x, tol_value: float = VALUE_TOL,
                          feas_tol: float = FEAS_TOL, step=None) -> LowerLevelResult:
    """Grid argmin of ``f(x, .)`` over the lower-level feasible y."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grid = y_grid(prob, step)
    Y = grid.points()
    P = np.hstack([np.broadcast_to(x, (len(Y), len(x))), Y])
    fv = prob.f.evaluate_many(P)
    ok = ~np.isnan(fv)
    for g in prob.phi:
        gv = g.evaluate_many(P)
        ok &= ~np.isnan(gv) & (gv <= feas_tol)
    if not ok.any():
        return LowerLevelResult(tuple(x), np.zeros((0, prob.n2)), None, 0, grid.step)
    fmin = float(fv[ok].min())
    sel = ok & (fv <= fmin + tol_value)
    return LowerLevelResult(tuple(x), Y[sel], fmin, int(ok.sum()), grid.step)


def is_in_E(prob: BilevelProblem, x, y, feas_tol: float = FEAS_TOL) -> bool:
    """Membership in E; constraints are checked cheapest first.

    Points where a constraint is undefined are outside E.
    """
    p = _stack(x, y)
    try:
        for g in prob.H:
            if g(p) > feas_tol:
                return False
        for g in prob.phi:
            if g(p) > feas_tol:
                return False
        return capital_psi(prob, p[:prob.n1], p[prob.n1:]) <= feas_tol
    except (DomainError, NoRegionError):
        return False


def E_oracle(prob: BilevelProblem, feas_tol: float = FEAS_TOL) -> Callable:
    n1 = prob.n1
    return lambda p: is_in_E(prob, p[:n1], p[n1:], feas_tol)


def _feasible_chunk(prob: BilevelProblem, xs: np.ndarray, step, tol_value, feas_tol):
    out = []
    for x in xs:
        ll = lower_level_solutions(prob, x, tol_value, feas_tol, step)
        for y in ll.solutions:
            p = _stack(x, y)
            try:
                if all(g(p) <= feas_tol for g in prob.H):
                    out.append(p)
            except (DomainError, NoRegionError):
                pass
    return out


def feasible_grid(prob: BilevelProblem, step=None, tol_value: float = VALUE_TOL,
                  feas_tol: float = FEAS_TOL, jobs: int = 1) -> np.ndarray:
    """Grid points of ``M``: y in the grid argmin set of the lower level and ``H <= 0``."""
    X = x_grid(prob, step).points()
    if jobs > 1 and len(X) > 1:
        chunks = np.array_split(X, jobs)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_feasible_chunk, [prob] * len(chunks), chunks,
                             [step] * len(chunks), [tol_value] * len(chunks),
                             [feas_tol] * len(chunks))
            pts = [p for part in parts for p in part]
    else:
        pts = _feasible_chunk(prob, X, step, tol_value, feas_tol)
    return np.array(pts).reshape(-1, prob.dim)


# --------------------------------------------------------------------------
# scalarization

@dataclass(frozen=True)
class ScalarizedObjective:
    k: int
    ratio: Fraction | float
    fn: PiecewiseFn


def ratio_value(prob: BilevelProblem, k: int, point, exact: bool = True):
    """``F_k / G_k`` at a point (exact when the values are rational)."""
    fv = prob.F[k].evaluate(point, exact=exact)
    gv = prob.G[k].evaluate(point, exact=exact)
    if gv == 0:
        raise DomainError(f"G{k + 1} vanishes at {tuple(point)}")
    return fv / gv


def scalarize(prob: BilevelProblem, point, exact: bool = True) -> list[ScalarizedObjective]:
    """``F_k - Phi_k(point) G_k`` for every objective, as piecewise functions."""
    out = []
    for k in range(prob.n_obj):
        r = ratio_value(prob, k, point, exact)
        coef = r if isinstance(r, Fraction) else Fraction(r)
        fn = prob.F[k] - prob.G[k].scaled(coef)
        out.append(ScalarizedObjective(k + 1, r, PiecewiseFn(fn.branches, fn.dim, f"varphi{k + 1}")))
    return out


def ratios_many(prob: BilevelProblem, P: np.ndarray) -> np.ndarray:
    cols = []
    for Fk, Gk in zip(prob.F, prob.G):
        cols.append(Fk.evaluate_many(P) / Gk.evaluate_many(P))
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# weak Pareto oracle

@dataclass
class OracleResult:
    verdict: str | None  # WEAK-PARETO | NOT-WEAK-PARETO | None when listing
    step: float
    feasible_count: int
    witness: tuple | None = None
    pareto_set: np.ndarray | None = None
    check_feasible: bool | None = None
    warnings: list = field(default_factory=list)


def weak_pareto_oracle(prob: BilevelProblem, check_point=None, step=None,
                       dominance_tol: float = DOMINANCE_TOL, tol_value: float = VALUE_TOL,
                       feas_tol: float = FEAS_TOL, jobs: int = 1) -> OracleResult:
    """Brute-force weak-Pareto test (or enumeration) on the feasible grid."""
    M = feasible_grid(prob, step, tol_value, feas_tol, jobs)
    xs, ys = x_grid(prob, step), y_grid(prob, step)
    res_step = max(xs.step, ys.step)
    warnings = []
    if xs.coarse() or ys.coarse():
        warnings.append(f"coarse grid (step {res_step:g}): verdict limited by resolution")
    if len(M) == 0:
        raise ValueError("empty feasible grid")
    R = ratios_many(prob, M)
    G = np.stack([g.evaluate_many(M) for g in prob.G], axis=1)
    if not np.all(G > 0):
        warnings.append("some G_k <= 0 on the feasible grid")
    if check_point is not None:
        c = np.asarray(check_point, dtype=float)
        rc = np.array([float(ratio_value(prob, k, c, exact=False)) for k in range(prob.n_obj)])
        dom = np.all(R < rc - dominance_tol, axis=1)
        on_grid = bool(np.any(np.all(np.abs(M - c) <= 1e-12, axis=1)))
        if not on_grid:
            warnings.append("check point is not a feasible grid point")
        if dom.any():
            i = int(np.argmax(dom))
            return OracleResult("NOT-WEAK-PARETO", res_step, len(M), tuple(M[i].tolist()),
                                check_feasible=on_grid, warnings=warnings)
        return OracleResult("WEAK-PARETO", res_step, len(M), check_feasible=on_grid,
                            warnings=warnings)
    keep = []
    for i in range(len(M)):
        dominated = np.any(np.all(R < R[i] - dominance_tol, axis=1))
        if not dominated:
            keep.append(i)
    return OracleResult(None, res_step, len(M), pareto_set=M[keep], warnings=warnings)
