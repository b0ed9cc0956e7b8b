"""Stationarity certificates: search, exact verification, ACQ and sufficiency checks.

A certificate is a set of multipliers ``(xi, tau, rho, eta)``, one convex
weight vector per carrier and a normal-cone element ``z`` such that

    sum_k xi_k conv C_k + sum_j tau_j conv C_Hj + sum_s rho_s conv C_phis
        + eta conv C_Psi + z = 0,   z in N_D(0).

Writing ``y_{k,m} = xi_k * lambda_{k,m}`` makes the search a plain LP.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .cones import (Cone, cone_from_spec, cone_membership, full_space, in_pos, normal_cone_of_D,
                    polar, sample_members, tangent_cone_sample, with_vrep)
from .expr import BilevelProblem, DomainError, NoRegionError, ProblemError
from .lp import solve_feasibility, to_fraction
from .single_level import E_oracle, psi_function, ratio_value

ACTIVE_TOL = 1e-9
FLOAT_TOL = 1e-9

ASSUMPTIONS = (
    "usc of convexificator maps near the point (not checked)",
    "closedness of pos Xi (user assertion)",
    "local star-shapedness of E (sampled)",
)


class MissingDeclarationError(ProblemError):
    """A carrier, cone or anchor needed by a check was not declared."""


# --------------------------------------------------------------------------
# active sets and stationary data

@dataclass(frozen=True)
class ActiveSets:
    J0: tuple
    S0: tuple
    J_ne: tuple
    S_ne: tuple


def active_sets(prob: BilevelProblem, point, tol: float = ACTIVE_TOL) -> ActiveSets:
    """Partition constraint indices (1-based) by ``|value| <= tol``."""
    hv = [abs(_value(g, point)) for g in prob.H]
    pv = [abs(_value(g, point)) for g in prob.phi]
    J0 = tuple(j + 1 for j, v in enumerate(hv) if v <= tol)
    S0 = tuple(s + 1 for s, v in enumerate(pv) if v <= tol)
    return ActiveSets(J0, S0,
                      tuple(j for j in range(1, prob.p + 1) if j not in J0),
                      tuple(s for s in range(1, prob.q + 1) if s not in S0))


def _value(fn, point):
    try:
        return fn.evaluate(point, exact=True)
    except (ValueError, TypeError):
        return fn.evaluate(point)


def rational_ray(g) -> tuple:
    """Rational representative of the ray through ``g``."""
    g = np.asarray(g, dtype=float)
    m = np.max(np.abs(g))
    if m == 0:
        return tuple(Fraction(0) for _ in g)
    return tuple(Fraction(v / m).limit_denominator(10**6) for v in g)


def _exact_vec(v) -> tuple:
    return tuple(to_fraction(c) for c in v)


@dataclass(frozen=True)
class StationaryData:
    """Carriers entering the stationarity inclusion at one point."""

    point: tuple
    n_obj: int
    p: int
    q: int
    objectives: dict  # "varphi<k>" -> tuple of points
    constraints: dict  # "H<j>", "phi<s>", "Psi" -> tuple of points
    D: Cone
    values: dict = field(default_factory=dict)  # constraint label -> value at point

    def __post_init__(self):
        d = self.dim
        for lab, pts in {**self.objectives, **self.constraints}.items():
            if not pts:
                raise ValueError(f"carrier {lab} is empty")
            if any(len(x) != d for x in pts):
                raise ValueError(f"carrier {lab} has wrong dimension")

    @property
    def dim(self) -> int:
        return len(self.point)

    @property
    def normal(self) -> Cone:
        return with_vrep(normal_cone_of_D(self.D))

    def normal_generators(self) -> list[tuple]:
        return [rational_ray(g) for g in self.normal.generators]

    def carriers(self) -> dict:
        return {**self.objectives, **self.constraints}

    def with_D(self, D: Cone) -> "StationaryData":
        return replace(self, D=D)

    def with_carrier(self, label: str, points) -> "StationaryData":
        pts = tuple(_exact_vec(x) for x in points)
        if label.startswith("varphi"):
            return replace(self, objectives={**self.objectives, label: pts})
        return replace(self, constraints={**self.constraints, label: pts})

    def without(self, *labels) -> "StationaryData":
        return replace(self,
                       objectives={k: v for k, v in self.objectives.items() if k not in labels},
                       constraints={k: v for k, v in self.constraints.items() if k not in labels})

    def scaled(self, c) -> "StationaryData":
        c = to_fraction(c)
        sc = lambda dd: {k: tuple(tuple(c * a for a in x) for x in v) for k, v in dd.items()}
        return replace(self, objectives=sc(self.objectives), constraints=sc(self.constraints))


def _is_active(label: str, act: ActiveSets) -> bool:
    k = int(re.sub(r"\D", "", label))
    return k in (act.J0 if label.startswith("H") else act.S0)


def _minkowski(A, B, coef) -> tuple:
    return tuple(tuple(a + coef * b for a, b in zip(x, y)) for x in A for y in B)


def resolve_anchor(prob: BilevelProblem, point=None) -> str | None:
    """Anchor name (None for the reference point) whose point equals ``point``."""
    if point is None:
        if prob.refpoint is None:
            raise MissingDeclarationError("no point given and no refpoint declared")
        return None
    pt = _exact_vec(point)
    if prob.refpoint is not None and _exact_vec(prob.refpoint) == pt:
        return None
    for name, v in prob.anchors.items():
        if _exact_vec(v) == pt:
            return name
    raise MissingDeclarationError(f"no declarations anchored at {tuple(float(c) for c in pt)}")


def objective_carrier(prob: BilevelProblem, k: int, anchor: str | None) -> tuple:
    """Carrier of the scalarized objective ``varphi_k`` at an anchor.

    A direct ``varphi<k>`` declaration wins; otherwise the sum
    ``C(F_k) + Phi_k * C(-G_k)`` is assembled.
    """
    decl = prob.convexificator(f"varphi{k}", anchor)
    if decl is not None:
        return decl.points
    cf = prob.convexificator(f"F{k}", anchor)
    cg = prob.convexificator(f"negG{k}", anchor)
    if cf is None or cg is None:
        where = "refpoint" if anchor is None else anchor
        raise MissingDeclarationError(f"need varphi{k} or F{k} and negG{k} convexificators at {where}")
    pt = prob.point_of(anchor)
    return _minkowski(cf.points, cg.points, ratio_value(prob, k - 1, pt, exact=True))


def stationary_data(prob: BilevelProblem, anchor: str | None = None, active_only: bool = True,
                    tol: float = ACTIVE_TOL, strict: bool = True) -> StationaryData:
    """Collect declared carriers at an anchor (None = reference point).

    With ``active_only`` only constraints active at the point get carriers.
    Non-strict mode skips undeclared inactive-constraint carriers.
    """
    pt = prob.point_of(anchor)
    act = active_sets(prob, pt, tol)
    objectives = {f"varphi{k}": objective_carrier(prob, k, anchor) for k in range(1, prob.n_obj + 1)}
    labels = [f"H{j}" for j in (act.J0 if active_only else range(1, prob.p + 1))]
    labels += [f"phi{s}" for s in (act.S0 if active_only else range(1, prob.q + 1))]
    labels.append("Psi")
    constraints = {}
    for lab in labels:
        decl = prob.convexificator(lab, anchor)
        if decl is None and not strict and lab != "Psi" and not _is_active(lab, act):
            continue
        if decl is None:
            where = "refpoint" if anchor is None else anchor
            raise MissingDeclarationError(f"missing convexificator for {lab} at {where}")
        constraints[lab] = decl.points
    values = {f"H{j + 1}": _value(g, pt) for j, g in enumerate(prob.H)}
    values.update({f"phi{s + 1}": _value(g, pt) for s, g in enumerate(prob.phi)})
    values["Psi"] = psi_function(prob)(np.array([float(c) for c in pt]))
    D = cone_from_spec(prob.cone(anchor), prob.dim)
    return StationaryData(tuple(pt), prob.n_obj, prob.p, prob.q, objectives, constraints, D, values)


# --------------------------------------------------------------------------
# certificates

@dataclass
class Certificate:
    point: tuple
    xi: tuple
    tau: tuple
    rho: tuple
    eta: object
    z: tuple
    weights: dict = field(default_factory=dict)
    kind: str = "certificate"  # or "dualpoint"
    name: str = ""

    def multiplier(self, label: str):
        m = re.fullmatch(r"(varphi|H|phi)(\d+)|Psi", label)
        if label == "Psi":
            return self.eta
        seq = {"varphi": self.xi, "H": self.tau, "phi": self.rho}[m.group(1)]
        i = int(m.group(2)) - 1
        return seq[i] if i < len(seq) else 0

    def upsilon(self) -> tuple:
        return tuple(self.xi) + tuple(self.tau) + tuple(self.rho) + (self.eta,)

    def exact(self) -> "Certificate":
        ex = lambda v: tuple(to_fraction(c) for c in v)
        return replace(self, point=ex(self.point), xi=ex(self.xi), tau=ex(self.tau),
                       rho=ex(self.rho), eta=to_fraction(self.eta), z=ex(self.z),
                       weights={k: ex(w) for k, w in self.weights.items()})


def membership_zero(parts: Sequence, cone_gens, mode: str = "float", tol: float = FLOAT_TOL):
    """Decide ``0 in sum_i conv(parts[i]) + pos(cone_gens)``.

    Returns ``(ok, witness)`` with witness ``(convex weights per part,
    cone coefficients)``.
    """
    exact = mode == "rational"
    parts = [list(p) for p in parts]
    if not parts or any(not p for p in parts):
        raise ValueError("membership_zero needs nonempty parts")
    dim = len(parts[0][0])
    gens = list(cone_gens)
    cols, owner = [], []
    for i, p in enumerate(parts):
        for x in p:
            cols.append(list(x))
            owner.append(i)
    n_conv = len(cols)
    cols += [list(g) for g in gens]
    A = [[c[r] for c in cols] for r in range(dim)]
    b = [0] * dim
    for i in range(len(parts)):
        A.append([1 if (j < n_conv and owner[j] == i) else 0 for j in range(len(cols))])
        b.append(1)
    res = solve_feasibility(A, b, exact=exact, tol=tol)
    if not res.feasible:
        return False, None
    x = res.x
    weights = [[x[j] for j in range(n_conv) if owner[j] == i] for i in range(len(parts))]
    return True, (weights, list(x[n_conv:]))


def find_certificate(data: StationaryData, mode: str = "float",
                     tol: float = FLOAT_TOL) -> Certificate | None:
    """LP search for a certificate normalised by ``sum xi = 1``; None if infeasible."""
    exact = mode == "rational"
    dim = data.dim
    cols, owner = [], []
    for lab, pts in list(data.objectives.items()) + list(data.constraints.items()):
        for x in pts:
            cols.append([to_fraction(c) if exact else float(c) for c in x])
            owner.append(lab)
    n_car = len(cols)
    gens = data.normal_generators()
    for g in gens:
        cols.append([c if exact else float(c) for c in g])
    A = [[c[r] for c in cols] for r in range(dim)]
    b = [0] * dim
    A.append([1 if j < n_car and owner[j].startswith("varphi") else 0 for j in range(len(cols))])
    b.append(1)
    res = solve_feasibility(A, b, exact=exact, tol=tol)
    if not res.feasible:
        return None
    x = res.x
    zero = Fraction(0) if exact else 0.0
    mult, weights = {}, {}
    for lab in list(data.objectives) + list(data.constraints):
        ys = [x[j] for j in range(n_car) if owner[j] == lab]
        tot = sum(ys, zero)
        mult[lab] = tot
        if tot > 0:
            weights[lab] = tuple(v / tot for v in ys)
        else:
            weights[lab] = tuple([1 if exact else 1.0] + [zero] * (len(ys) - 1))
    lam = x[n_car:]
    z = tuple(sum((l * (g[i] if exact else float(g[i])) for l, g in zip(lam, gens)), zero)
              for i in range(dim))
    xi = tuple(mult.get(f"varphi{k}", zero) for k in range(1, data.n_obj + 1))
    tau = tuple(mult.get(f"H{j}", zero) for j in range(1, data.p + 1))
    rho = tuple(mult.get(f"phi{s}", zero) for s in range(1, data.q + 1))
    return Certificate(tuple(data.point), xi, tau, rho, mult.get("Psi", zero), z, weights)


@dataclass
class VerifyReport:
    mode: str
    residual: tuple
    complementarity: dict
    sign_violations: list
    problems: list
    tol: float = FLOAT_TOL

    @property
    def passed(self) -> bool:
        if self.sign_violations or self.problems:
            return False
        vals = list(self.residual) + list(self.complementarity.values())
        if self.mode == "rational":
            return all(v == 0 for v in vals)
        return all(abs(float(v)) <= self.tol for v in vals)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def reasons(self) -> list[str]:
        out = list(self.problems) + list(self.sign_violations)
        if any(abs(float(v)) > (0 if self.mode == "rational" else self.tol) for v in self.residual):
            out.append(f"nonzero residual {tuple(_fmt(v) for v in self.residual)}")
        bad = {k: v for k, v in self.complementarity.items()
               if abs(float(v)) > (0 if self.mode == "rational" else self.tol)}
        if bad:
            out.append("complementarity violated for " + ", ".join(sorted(bad)))
        return out


def _in_normal(data: StationaryData, z, exact: bool, tol: float) -> bool:
    N = data.normal
    if not exact:
        return cone_membership(N, [float(c) for c in z], tol)
    if N.tag == "orthant-product" and N.inequalities is not None:
        rows = [_exact_vec(r) for r in N.inequalities]
        return all(sum((a * c for a, c in zip(r, z)), Fraction(0)) <= 0 for r in rows)
    ok, _ = in_pos([list(g) for g in data.normal_generators()], list(z), exact=True)
    return ok


def verify_certificate(data: StationaryData, cert: Certificate, mode: str = "rational",
                       tol: float = FLOAT_TOL, complementarity: bool = True) -> VerifyReport:
    """Recompute the stationarity sum and the side conditions of a certificate."""
    exact = mode == "rational"
    conv = to_fraction if exact else float
    zero = conv(0)
    problems, signs = [], []
    if len(cert.xi) != data.n_obj or len(cert.tau) != data.p or len(cert.rho) != data.q:
        problems.append("multiplier lengths do not match the problem")
    if len(cert.z) != data.dim or len(cert.point) != data.dim:
        problems.append("point or z has the wrong dimension")
    if problems:
        return VerifyReport(mode, (), {}, signs, problems, tol)
    mults = {f"varphi{k + 1}": v for k, v in enumerate(cert.xi)}
    mults.update({f"H{j + 1}": v for j, v in enumerate(cert.tau)})
    mults.update({f"phi{s + 1}": v for s, v in enumerate(cert.rho)})
    mults["Psi"] = cert.eta
    for lab, v in mults.items():
        if conv(v) < 0:
            signs.append(f"{lab} multiplier is negative")
    if all(conv(v) == 0 for v in cert.xi):
        problems.append("xi vanishes (normalisation violated)")
    carriers = data.carriers()
    total = [zero] * data.dim
    for lab, v in mults.items():
        v = conv(v)
        if v == 0:
            continue
        if lab not in carriers:
            problems.append(f"no carrier for {lab} at this point")
            continue
        pts = carriers[lab]
        w = cert.weights.get(lab)
        if w is None:
            if len(pts) != 1:
                problems.append(f"weights missing for {lab}")
                continue
            w = (1,)
        w = [conv(c) for c in w]
        if len(w) != len(pts):
            problems.append(f"weights for {lab} do not match its carrier")
            continue
        if any(c < 0 for c in w) or (sum(w, zero) != 1 if exact else abs(sum(w) - 1) > tol):
            problems.append(f"weights for {lab} are not convex")
            continue
        for wm, x in zip(w, pts):
            for i in range(data.dim):
                total[i] += v * wm * conv(x[i])
    z = [conv(c) for c in cert.z]
    if not _in_normal(data, z, exact, tol):
        problems.append("z is not in N_D(0)")
    residual = tuple(t + c for t, c in zip(total, z))
    comp = {}
    if complementarity:
        for lab, v in mults.items():
            if lab.startswith(("H", "phi")) and lab in data.values:
                comp[lab] = conv(v) * conv(data.values[lab])
    if cert.point and _exact_vec(cert.point) != _exact_vec(data.point):
        problems.append("certificate point differs from the data point")
    return VerifyReport(mode, residual, comp, signs, problems, tol)


# --------------------------------------------------------------------------
# ACQ

@dataclass
class ACQReport:
    verdict: str
    polar: Cone
    checked: list  # (direction, in_D, in_T)
    witness: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "SUPPORTED"


def xi_points(data: StationaryData) -> list:
    return [x for pts in data.constraints.values() for x in pts]


def check_ACQ(prob: BilevelProblem, data: StationaryData, samples: int = 20, seed: int = 0,
              member: Callable | None = None) -> ACQReport:
    """Sampled test of ``Xi° ⊆ T(E, point) ∩ D``.

    ``Xi`` is the union of the constraint carriers in ``data`` and ``N_D(0)``.
    """
    pts = np.array([[float(c) for c in x] for x in xi_points(data)]).reshape(-1, data.dim)
    P = polar(pts, data.normal, dim=data.dim)
    G = P.generators
    if len(G) == 0:
        return ACQReport("SUPPORTED", P, [])
    dirs = [g / np.linalg.norm(g) for g in G]
    dirs += list(sample_members(P, samples, seed))
    member = member or E_oracle(prob)
    base = np.array([float(c) for c in data.point])
    in_T = tangent_cone_sample(member, base, dirs, seed=seed)
    checked = []
    for d, t in zip(dirs, in_T):
        in_D = cone_membership(data.D, d)
        checked.append((tuple(np.round(d, 12).tolist()), in_D, t))
        if not (in_D and t):
            return ACQReport("VIOLATED", P, checked, tuple(d.tolist()))
    return ACQReport("SUPPORTED", P, checked)


# --------------------------------------------------------------------------
# generalized convexity

@dataclass
class ConvexityReport:
    label: str
    kind: str
    verdict: str
    checked: int
    skipped: int = 0
    witness: tuple | None = None  # (sample point, carrier element)

    @property
    def passed(self) -> bool:
        return self.verdict == "SUPPORTED"


def _sample_in_D(D: Cone, ref: np.ndarray, count: int, seed: int, radius: float) -> np.ndarray:
    rng = np.random.default_rng(seed + 1)
    dirs = sample_members(D, count, seed)
    r = radius * rng.random(len(dirs))
    r[r == 0] = radius
    return ref + r[:, None] * dirs


def check_generalized_convexity(h: Callable, carrier, ref, kind: str, D: Cone | None = None,
                                samples: int = 500, seed: int = 0, radius: float = 1.0,
                                label: str = "", tol: float = 1e-12) -> ConvexityReport:
    """Sampled convex/quasi/pseudo test at ``ref`` along points of ``ref + D``."""
    if kind not in ("convex", "quasi", "pseudo"):
        raise ValueError(f"unknown convexity kind {kind!r}")
    ref = np.asarray([float(c) for c in ref])
    D = D or full_space(len(ref))
    C = np.array([[float(c) for c in x] for x in carrier])
    h0 = h(ref)
    pts = _sample_in_D(D, ref, samples, seed, radius)
    checked = skipped = 0
    for p in pts:
        try:
            hp = h(p)
        except (DomainError, NoRegionError, ValueError):
            skipped += 1
            continue
        if not np.isfinite(hp):
            skipped += 1
            continue
        checked += 1
        inner = C @ (p - ref)
        for x, s in zip(C, inner):
            if kind == "convex":
                bad = hp - h0 < s - tol
            elif kind == "quasi":
                bad = hp <= h0 + tol and s > tol
            else:
                bad = hp < h0 - tol and s >= -tol
            if bad:
                return ConvexityReport(label, kind, "VIOLATED", checked, skipped,
                                       (tuple(p.tolist()), tuple(x.tolist())))
    if checked == 0:
        raise ValueError("no evaluable samples in D")
    return ConvexityReport(label, kind, "SUPPORTED", checked, skipped)


def convexity_suite(prob: BilevelProblem, data: StationaryData, samples: int = 500,
                    seed: int = 0, radius: float = 1.0) -> dict:
    """Pseudo tests for every scalarized objective, quasi tests for active constraints and Psi."""
    from .single_level import scalarize

    pt = data.point
    reports = {}
    scal = scalarize(prob, pt, exact=True)
    for s in scal:
        lab = f"varphi{s.k}"
        reports[lab] = check_generalized_convexity(s.fn, data.objectives[lab], pt, "pseudo", data.D,
                                                   samples, seed, radius, lab)
    Psi = psi_function(prob)
    for lab, pts in data.constraints.items():
        fn = Psi if lab == "Psi" else prob.function(lab)
        reports[lab] = check_generalized_convexity(fn, pts, pt, "quasi", data.D, samples, seed,
                                                   radius, lab)
    return reports


def feasible_in_D(prob: BilevelProblem, point, D: Cone, feasible_points: np.ndarray,
                  tol: float = 1e-9) -> tuple[bool, tuple | None]:
    """Sampled check that feasible points lie in ``point + D``."""
    ref = np.asarray([float(c) for c in point])
    for p in feasible_points:
        if not cone_membership(D, p - ref, tol):
            return False, tuple(p.tolist())
    return True, None


# --------------------------------------------------------------------------
# sufficiency

@dataclass
class SufficiencyClaim:
    claim: str  # WEAK-PARETO-CERTIFIED | NOT-CERTIFIED
    missing: list
    violated: list
    oracle: str  # WEAK-PARETO | NOT-WEAK-PARETO | SKIPPED
    anomaly: bool = False
    assumptions: tuple = ASSUMPTIONS

    @property
    def certified(self) -> bool:
        return self.claim == "WEAK-PARETO-CERTIFIED"


def sufficiency_verdict(data: StationaryData, verify: VerifyReport, convexity: Mapping,
                        oracle_verdict: str | None = None, extra: Mapping | None = None) -> SufficiencyClaim:
    """Combine the hypothesis reports into a weak-Pareto claim."""
    missing, violated = [], []
    if not verify.passed:
        violated.append("certificate: " + "; ".join(verify.reasons()))
    for lab in data.objectives:
        r = convexity.get(lab)
        if r is None:
            missing.append(f"pseudoconvexity of {lab}")
        elif r.kind != "pseudo" or not r.passed:
            violated.append(f"pseudoconvexity of {lab}")
    for lab in data.constraints:
        r = convexity.get(lab)
        if r is None:
            missing.append(f"quasiconvexity of {lab}")
        elif r.kind not in ("quasi", "convex") or not r.passed:
            violated.append(f"quasiconvexity of {lab}")
    for name, ok in (extra or {}).items():
        if not ok:
            violated.append(name)
    ok = not missing and not violated
    oracle = oracle_verdict or "SKIPPED"
    anomaly = ok and oracle == "NOT-WEAK-PARETO"
    claim = "WEAK-PARETO-CERTIFIED" if ok and not anomaly else "NOT-CERTIFIED"
    return SufficiencyClaim(claim, missing, violated, oracle, anomaly)


# --------------------------------------------------------------------------
# text exchange format

def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _vec(v, brackets="[]") -> str:
    return brackets[0] + ", ".join(_fmt(c) for c in v) + brackets[1]


def format_certificate(cert: Certificate) -> str:
    head = cert.kind + (f' "{cert.name}"' if cert.name else "")
    lines = [head, f"point = {_vec(cert.point, '()')}", f"xi = {_vec(cert.xi)}",
             f"tau = {_vec(cert.tau)}", f"rho = {_vec(cert.rho)}", f"eta = {_fmt(cert.eta)}"]
    for lab in sorted(cert.weights):
        w = cert.weights[lab]
        if len(w) > 1:
            lines.append(f"weights {lab} = {_vec(w)}")
    lines += [f"z = {_vec(cert.z, '()')}", "end"]
    return "\n".join(lines) + "\n"


class CertificateFormatError(ValueError):
    pass


def _parse_num(s: str) -> Fraction:
    try:
        return Fraction(s.strip())
    except (ValueError, ZeroDivisionError):
        raise CertificateFormatError(f"bad number {s!r}") from None


def _parse_list(s: str, open_: str, close: str) -> tuple:
    s = s.strip()
    if not (s.startswith(open_) and s.endswith(close)):
        raise CertificateFormatError(f"expected {open_}...{close}, got {s!r}")
    body = s[1:-1].strip()
    return tuple(_parse_num(c) for c in body.split(",")) if body else ()


def parse_certificates(text: str) -> list[Certificate]:
    """Parse every ``certificate``/``dualpoint`` block in ``text``."""
    out, cur = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r'(certificate|dualpoint)(?:\s+"([^"]*)")?', line)
        if m:
            if cur is not None:
                raise CertificateFormatError(f"line {lineno}: block not closed")
            cur = {"kind": m.group(1), "name": m.group(2) or "", "weights": {}}
            continue
        if cur is None:
            raise CertificateFormatError(f"line {lineno}: content outside a block")
        if line == "end":
            try:
                out.append(Certificate(cur["point"], cur["xi"], cur.get("tau", ()),
                                       cur.get("rho", ()), cur.get("eta", Fraction(0)), cur["z"],
                                       cur["weights"], cur["kind"], cur["name"]))
            except KeyError as exc:
                raise CertificateFormatError(f"line {lineno}: missing {exc.args[0]}") from None
            cur = None
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise CertificateFormatError(f"line {lineno}: expected key = value")
        key = key.strip()
        try:
            if key in ("point", "z"):
                cur[key] = _parse_list(val, "(", ")")
            elif key in ("xi", "tau", "rho"):
                cur[key] = _parse_list(val, "[", "]")
            elif key == "eta":
                cur[key] = _parse_num(val)
            elif key.startswith("weights "):
                cur["weights"][key.split()[1]] = _parse_list(val, "[", "]")
            else:
                raise CertificateFormatError(f"unknown key {key!r}")
        except CertificateFormatError as exc:
            raise CertificateFormatError(f"line {lineno}: {exc}") from None
    if cur is not None:
        raise CertificateFormatError("unterminated block")
    return out
