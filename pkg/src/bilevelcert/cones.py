"""Polyhedral cones: membership, polars, positive hulls, normal and tangent cones.

A :class:`Cone` carries a V-representation (generators, the cone is their
nonnegative span) and/or an H-representation (rows ``a`` with
``<a, u> <= 0``).  Conversion between the two uses the double description
method and is restricted to ``dim <= MAX_DD_DIM``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .expr import ConeSpec
from .lp import solve_feasibility

MAX_DD_DIM = 4
TOL = 1e-9

# sampling defaults for the contingent cone
TANGENT_SCHEDULE = tuple(0.1 * 2.0 ** -k for k in range(21))
TANGENT_TAIL = 6
TANGENT_RADIUS = 10.0


class ConeError(ValueError):
    pass


@dataclass(frozen=True)
class Cone:
    dim: int
    generators: np.ndarray | None = None
    inequalities: np.ndarray | None = None
    tag: str = "finitely-generated"

    def __post_init__(self):
        if self.generators is None and self.inequalities is None:
            raise ConeError("a cone needs at least one representation")

    def contains(self, u, tol: float = TOL) -> bool:
        return cone_membership(self, u, tol)

    def __repr__(self):
        g = None if self.generators is None else self.generators.tolist()
        h = None if self.inequalities is None else self.inequalities.tolist()
        return f"Cone(dim={self.dim}, tag={self.tag!r}, generators={g}, inequalities={h})"


def _rows(vectors, dim: int | None = None) -> np.ndarray:
    arr = np.asarray([np.asarray(v, dtype=float) for v in vectors], dtype=float)
    if arr.size == 0:
        return np.zeros((0, dim or 0))
    return arr.reshape(len(arr), -1)


def _unit_rows(A: np.ndarray) -> np.ndarray:
    """Drop zero rows and scale the rest to unit length."""
    if len(A) == 0:
        return A
    n = np.linalg.norm(A, axis=1)
    keep = n > TOL
    return A[keep] / n[keep, None]


def orthant(signs: Sequence[str]) -> Cone:
    """Product cone with per-coordinate sign ``+``, ``-``, ``*`` (free) or ``0``."""
    d = len(signs)
    gens, ineqs = [], []
    for i, s in enumerate(signs):
        e = np.zeros(d)
        e[i] = 1.0
        if s == "+":
            gens.append(e)
            ineqs.append(-e)
        elif s == "-":
            gens.append(-e)
            ineqs.append(e)
        elif s == "*":
            gens += [e, -e]
        elif s == "0":
            ineqs += [e, -e]
        else:
            raise ConeError(f"bad orthant sign {s!r}")
    return Cone(d, _rows(gens, d), _rows(ineqs, d), "orthant-product")


def full_space(dim: int) -> Cone:
    return orthant(["*"] * dim)


def zero_cone(dim: int) -> Cone:
    return orthant(["0"] * dim)


def finitely_generated(gens, dim: int | None = None) -> Cone:
    G = _rows(gens, dim)
    d = G.shape[1] if G.size else dim
    if d is None:
        raise ConeError("cannot infer dimension of an empty generator list")
    return Cone(d, G, None, "finitely-generated")


def cone_from_spec(spec: ConeSpec | None, dim: int) -> Cone:
    if spec is None:
        return full_space(dim)
    if spec.kind == "orthant":
        return orthant(spec.signs)
    return finitely_generated([[float(c) for c in g] for g in spec.generators], dim)


def in_pos(generators: np.ndarray, u, tol: float = TOL, exact: bool = False) -> tuple[bool, list | None]:
    """LP test ``u in pos(generators)``; returns the coefficients on success."""
    u = list(u)
    d = len(u)
    G = np.asarray(generators, dtype=object if exact else float)
    if len(G) == 0:
        if exact:
            ok = all(Fraction(v) == 0 for v in u)
        else:
            ok = max((abs(float(v)) for v in u), default=0.0) <= tol
        return ok, [] if ok else None
    A = [[G[j][i] for j in range(len(G))] for i in range(d)]
    res = solve_feasibility(A, u, exact=exact, tol=tol)
    return res.feasible, res.x


def cone_membership(c: Cone, u, tol: float = TOL) -> bool:
    """True iff ``u`` lies in ``c`` within ``tol``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (c.dim,):
        raise ConeError(f"dimension mismatch: {u.shape} vs cone dim {c.dim}")
    if c.inequalities is not None:
        A = _unit_rows(c.inequalities)
        return bool(len(A) == 0 or np.all(A @ u <= tol))
    return in_pos(c.generators, u, tol)[0]


# --------------------------------------------------------------------------
# double description

def _prune(R: np.ndarray) -> np.ndarray:
    """Normalise, deduplicate and drop rays that are nonnegative combos of the rest."""
    R = _unit_rows(R)
    uniq: list[np.ndarray] = []
    for r in R:
        if not any(np.allclose(r, q, atol=1e-9) for q in uniq):
            uniq.append(r)
    keep = list(uniq)
    i = 0
    while i < len(keep):
        others = keep[:i] + keep[i + 1:]
        if others and in_pos(np.array(others), keep[i])[0]:
            keep.pop(i)
        else:
            i += 1
    return np.array(keep) if keep else np.zeros((0, R.shape[1] if R.ndim == 2 else 0))


def double_description(A, dim: int) -> np.ndarray:
    """Generators of ``{u : A u <= 0}``.

    Starts from the full space, spanned by ``+-e_i``, and intersects one
    half-space at a time.  Every (positive, negative) pair is combined, then
    redundant rays are pruned with an LP, which keeps the generator list
    small at the dimensions supported here.
    """
    if dim > MAX_DD_DIM:
        raise ConeError(f"double description limited to dimension {MAX_DD_DIM}")
    A = _unit_rows(_rows(A, dim))
    eye = np.eye(dim)
    R = np.vstack([eye, -eye])
    for a in A:
        s = R @ a
        pos = s > TOL
        neg = s < -TOL
        new = [R[~pos]]
        for i in np.flatnonzero(pos):
            for j in np.flatnonzero(neg):
                new.append((s[i] * R[j] - s[j] * R[i])[None, :])
        R = _prune(np.vstack(new))
        if len(R) == 0:
            break
    return R


def with_vrep(c: Cone) -> Cone:
    if c.generators is not None:
        return c
    return Cone(c.dim, double_description(c.inequalities, c.dim), c.inequalities, c.tag)


def with_hrep(c: Cone) -> Cone:
    if c.inequalities is not None:
        return c
    # {u : A u <= 0}° = pos(A) and (c°)° = c for closed convex cones
    return Cone(c.dim, c.generators, double_description(c.generators, c.dim), c.tag)


# --------------------------------------------------------------------------
# polar, pos, normal cone

def _collect_rows(parts, dim: int | None) -> tuple[np.ndarray, int]:
    rows = []
    for part in parts:
        if isinstance(part, Cone):
            dim = part.dim if dim is None else dim
            if part.generators is not None:
                rows.append(part.generators)
            else:
                # polar of an H-cone is pos of its rows; collect V-rep instead
                rows.append(with_vrep(part).generators)
        else:
            arr = _rows(part, dim)
            if arr.size:
                dim = arr.shape[1] if dim is None else dim
                rows.append(arr)
    if dim is None:
        raise ConeError("cannot infer dimension")
    R = np.vstack(rows) if rows else np.zeros((0, dim))
    if R.shape[1] != dim:
        raise ConeError("dimension mismatch among polar inputs")
    return R, dim


def polar(*parts, dim: int | None = None, vrep: bool = True) -> Cone:
    """Negative polar of a union of vector sets and cones.

    The polar of a union is the intersection of the polars, so the H-rep
    rows are the input points together with the generators of any cone
    part.  A V-rep is attached when ``vrep`` and ``dim <= MAX_DD_DIM``.
    """
    R, d = _collect_rows(parts, dim)
    gens = None
    if vrep:
        gens = double_description(R, d)
    return Cone(d, gens, R, "polar-of")


def pos_hull(points, dim: int | None = None) -> Cone:
    """Convex cone (including the origin) generated by ``points``."""
    P = _rows(points, dim)
    d = P.shape[1] if P.size else dim
    keep = P[np.linalg.norm(P, axis=1) > TOL] if len(P) else P
    return Cone(d, keep.reshape(-1, d), None, "finitely-generated")


def normal_cone_of_D(D: Cone) -> Cone:
    """``N_D(0) = T(D, 0)°``; for a closed convex cone ``T(D, 0) = D``."""
    if D.tag not in ("orthant-product", "finitely-generated", "polar-of"):
        raise ConeError(f"unsupported cone representation {D.tag!r}")
    if D.tag == "orthant-product":
        signs = []
        G = D.generators
        for i in range(D.dim):
            has_p = any(g[i] > 0 for g in G)
            has_n = any(g[i] < 0 for g in G)
            signs.append({(True, True): "0", (True, False): "-", (False, True): "+",
                          (False, False): "*"}[(has_p, has_n)])
        return orthant(signs)
    return polar(D, dim=D.dim)


def normal_cone_sampled(member: Callable, dim: int, dirs: np.ndarray | None = None,
                        seed: int = 0) -> Cone:
    """Normal cone at 0 of a possibly nonconvex cone given by a membership oracle.

    The tangent cone is approximated by the accepted sample directions.
    """
    if dirs is None:
        dirs = default_directions(dim, seed=seed)
    verdicts = tangent_cone_sample(member, np.zeros(dim), dirs)
    accepted = [d for d, ok in zip(dirs, verdicts) if ok]
    return polar(np.array(accepted).reshape(-1, dim), dim=dim)


def default_directions(dim: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """Unit directions: equally spaced in the plane, seeded random otherwise."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, dim))
    eye = np.eye(dim)
    return np.vstack([eye, -eye, v / np.linalg.norm(v, axis=1, keepdims=True)])


def sample_members(c: Cone, count: int, seed: int = 0) -> np.ndarray:
    """Random unit members of a cone (nonnegative combinations of generators)."""
    c = with_vrep(c)
    G = c.generators
    if len(G) == 0:
        return np.zeros((0, c.dim))
    rng = np.random.default_rng(seed)
    W = rng.exponential(size=(count, len(G)))
    # sparse combinations reach the boundary faces too
    mask = rng.random((count, len(G))) < 0.5
    mask[np.arange(count), rng.integers(0, len(G), count)] = True
    V = (W * mask) @ G
    n = np.linalg.norm(V, axis=1)
    return V[n > TOL] / n[n > TOL, None]


# --------------------------------------------------------------------------
# sampled tangent cone and star-shapedness

def _perturbations(dim: int, seed: int, n_random: int = 16) -> np.ndarray:
    eye = np.eye(dim)
    dirs = [eye, -eye]
    for i in range(dim):
        for j in range(i + 1, dim):
            for si in (1, -1):
                for sj in (1, -1):
                    v = np.zeros(dim)
                    v[i], v[j] = si, sj
                    dirs.append(v[None, :] / np.sqrt(2))
    rng = np.random.default_rng(seed)
    r = rng.normal(size=(n_random, dim))
    dirs.append(r / np.linalg.norm(r, axis=1, keepdims=True))
    return np.vstack(dirs)


def tangent_cone_sample(member: Callable, base, dirs, schedule: Sequence[float] = TANGENT_SCHEDULE,
                        tail: int = TANGENT_TAIL, radius: float = TANGENT_RADIUS,
                        seed: int = 0) -> list[bool]:
    """Sampled contingent-cone test for each direction in ``dirs``.

    A direction d is IN when, for every step t among the last ``tail``
    entries of ``schedule``, some d' with ``|d' - d| <= radius * t`` has
    ``base + t d'`` accepted by ``member``.
    """
    base = np.asarray(base, dtype=float)
    steps = list(schedule)[-tail:]
    if any(b >= a for a, b in zip(schedule, list(schedule)[1:])):
        raise ConeError("schedule must be strictly decreasing")
    P = _perturbations(len(base), seed)
    scales = 2.0 ** -np.arange(0, 12)
    out = []
    for d in np.asarray(dirs, dtype=float):
        ok = True
        for t in steps:
            r = radius * t
            found = member(base + t * d)
            if not found:
                for s in scales:
                    for e in P:
                        if member(base + t * (d + r * s * e)):
                            found = True
                            break
                    if found:
                        break
            if not found:
                ok = False
                break
        out.append(ok)
    return out


def weak_feasible_sample(member: Callable, base, dirs, schedule: Sequence[float] = TANGENT_SCHEDULE,
                         tail: int = TANGENT_TAIL) -> list[bool]:
    """Fixed-direction version of :func:`tangent_cone_sample` (weak feasible directions)."""
    base = np.asarray(base, dtype=float)
    steps = list(schedule)[-tail:]
    return [all(member(base + t * d) for t in steps) for d in np.asarray(dirs, dtype=float)]


@dataclass
class StarShapedVerdict:
    verdict: str  # SUPPORTED | VIOLATED
    checked: int
    witness: tuple | None = None  # (x, lambda)


def star_shaped_sample(member: Callable, base, candidates: Iterable, samples: int = 50,
                       seed: int = 0) -> StarShapedVerdict:
    """Check initial chord segments from ``base`` to accepted candidate points.

    ``candidates`` is a finite pool of points (e.g. a grid); accepted ones
    are drawn at random.  Segment points use ``lambda in {0.1..0.9} * a``
    with ``a = 0.5``.
    """
    base = np.asarray(base, dtype=float)
    if not member(base):
        raise ConeError("base point rejected by the oracle")
    pool = [np.asarray(c, dtype=float) for c in candidates]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    accepted = []
    for i in order:
        if member(pool[i]):
            accepted.append(pool[i])
            if len(accepted) >= samples:
                break
    if len(accepted) < samples:
        raise ConeError(f"only {len(accepted)} feasible points found, {samples} requested")
    a = min(1.0, 0.5)
    lams = [k / 10 * a for k in range(1, 10)]
    for x in accepted:
        for lam in lams:
            if not member(base + lam * (x - base)):
                return StarShapedVerdict("VIOLATED", len(accepted), (tuple(x.tolist()), lam))
    return StarShapedVerdict("SUPPORTED", len(accepted))
