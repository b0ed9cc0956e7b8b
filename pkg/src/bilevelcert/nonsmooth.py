"""Dini derivatives, continuity directions and convexificator validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cones import Cone, cone_membership, default_directions, full_space, with_vrep

DINI_SCHEDULE = tuple(0.1 * 2.0 ** -k for k in range(25))
DINI_TAIL = 8
CONTINUITY_TOL = 1e-4
VALIDATION_TOL = 1e-6


@dataclass(frozen=True)
class Convexificator:
    """Finite carrier of a directional upper (or upper semi-regular) convexificator."""

    points: tuple
    kind: str  # "upper" | "semiregular"
    cone: Cone | None = None
    target: str = ""

    def __post_init__(self):
        if not self.points:
            raise ValueError("convexificator carrier must be nonempty")
        dims = {len(p) for p in self.points}
        if len(dims) != 1:
            raise ValueError("carrier points have inconsistent dimensions")
        if self.cone is not None and self.cone.dim not in dims:
            raise ValueError("carrier and continuity cone dimensions differ")
        if self.kind not in ("upper", "semiregular"):
            raise ValueError(f"unknown convexificator kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def array(self) -> np.ndarray:
        return np.array([[float(c) for c in p] for p in self.points])

    def support(self, d) -> float:
        return float(np.max(self.array() @ np.asarray(d, dtype=float)))


@dataclass(frozen=True)
class DiniEstimate:
    lower: float
    upper: float
    converged: bool
    oscillation: float


def _quotients(h: Callable, x: np.ndarray, d: np.ndarray, schedule, tail: int) -> np.ndarray:
    hx = h(x)
    steps = list(schedule)[-tail:]
    return np.array([(h(x + t * d) - hx) / t for t in steps])


def dini(h: Callable, x, d, schedule: Sequence[float] = DINI_SCHEDULE,
         tail: int = DINI_TAIL) -> DiniEstimate:
    """Lower/upper Dini derivative estimates from the tail of a step schedule."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    q = _quotients(h, x, d, schedule, tail)
    lo, hi = float(q.min()), float(q.max())
    osc = hi - lo
    return DiniEstimate(lo, hi, osc <= 1e-3 * (1 + abs(hi)), osc)


def is_continuity_direction(h: Callable, x, d, schedule: Sequence[float] = DINI_SCHEDULE,
                            tail: int = DINI_TAIL, tol: float = CONTINUITY_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    hx = h(x)
    jumps = [abs(h(x + t * d) - hx) for t in list(schedule)[-tail:]]
    return max(jumps) <= tol * (1 + abs(hx))


def continuity_directions_sample(h: Callable, x, dirs, schedule: Sequence[float] = DINI_SCHEDULE,
                                 tail: int = DINI_TAIL) -> list:
    """Subset of ``dirs`` along which ``h`` is (numerically) continuous at ``x``."""
    return [d for d in np.asarray(dirs, dtype=float)
            if is_continuity_direction(h, x, d, schedule, tail)]


@dataclass
class DirectionCheck:
    direction: tuple
    estimate: float
    support: float

    @property
    def margin(self) -> float:
        return self.estimate - self.support


@dataclass
class ValidationReport:
    target: str
    kind: str
    checks: list = field(default_factory=list)
    tol: float = VALIDATION_TOL

    @property
    def violations(self) -> list:
        return [c for c in self.checks if c.margin > self.tol]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def verdict(self) -> str:
        return "SUPPORTED" if self.passed else "VIOLATED"


def validation_directions(cone: Cone | None, dim: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """Default direction set: unit directions inside the cone plus its generators."""
    cone = cone or full_space(dim)
    dirs = [d for d in default_directions(dim, count, seed) if cone_membership(cone, d)]
    G = with_vrep(cone).generators
    for g in G:
        n = np.linalg.norm(g)
        if n > 0 and not any(np.allclose(g / n, e) for e in dirs):
            dirs.append(g / n)
    return np.array(dirs).reshape(-1, dim)


def validate_convexificator(c: Convexificator, h: Callable, x, dirs=None,
                            schedule: Sequence[float] = DINI_SCHEDULE, tail: int = DINI_TAIL,
                            tol: float = VALIDATION_TOL) -> ValidationReport:
    """Check the directional convexificator inequality on sampled directions.

    ``upper`` kinds bound the lower Dini derivative, ``semiregular`` kinds
    the upper one.  Violations are certain; passes are sampled evidence.
    """
    if dirs is None:
        dirs = validation_directions(c.cone, c.dim)
    report = ValidationReport(c.target, c.kind, tol=tol)
    for d in np.asarray(dirs, dtype=float):
        est = dini(h, x, d, schedule, tail)
        value = est.upper if c.kind == "semiregular" else est.lower
        report.checks.append(DirectionCheck(tuple(d.tolist()), value, c.support(d)))
    return report
