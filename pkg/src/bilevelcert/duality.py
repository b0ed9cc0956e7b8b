"""Mond-Weir dual: feasibility of dual points, weak-duality scans, strong-duality construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .certify import (ACQReport, Certificate, MissingDeclarationError, VerifyReport,
                      find_certificate, resolve_anchor, stationary_data, verify_certificate)
from .expr import BilevelProblem
from .lp import to_fraction
from .single_level import DOMINANCE_TOL, feasible_grid, ratio_value, ratios_many

FEAS_TOL = 1e-9


class HypothesisError(RuntimeError):
    """A precondition of the strong-duality construction does not hold."""


class AnomalyError(RuntimeError):
    """No certificate exists although the hypotheses say one should."""


@dataclass
class DualPoint:
    cert: Certificate
    label: str = ""

    @property
    def point(self) -> tuple:
        return self.cert.point

    def objective(self, prob: BilevelProblem, exact: bool = True) -> tuple:
        return tuple(ratio_value(prob, k, self.point, exact) for k in range(prob.n_obj))


@dataclass
class DualReport:
    feasible: bool
    verify: VerifyReport | None
    signs: dict = field(default_factory=dict)  # e.g. "tau1*H1" -> value
    problems: list = field(default_factory=list)

    def reasons(self) -> list[str]:
        out = list(self.problems)
        if self.verify is not None:
            out += self.verify.reasons()
        out += [f"{k} = {float(v):g} < 0" for k, v in self.signs.items() if float(v) < -FEAS_TOL]
        return out


def dual_feasible(prob: BilevelProblem, dp: DualPoint, mode: str = "rational",
                  tol: float = FEAS_TOL) -> DualReport:
    """Stationarity at (v, w), the sign conditions and ``Upsilon >= 0``, ``xi != 0``."""
    anchor = resolve_anchor(prob, dp.point)
    data = stationary_data(prob, anchor, active_only=False, strict=False)
    cert = dp.cert.exact() if mode == "rational" else dp.cert
    rep = verify_certificate(data, cert, mode, tol, complementarity=False)
    conv = to_fraction if mode == "rational" else float
    signs = {}
    for j, t in enumerate(cert.tau):
        signs[f"tau{j + 1}*H{j + 1}"] = conv(t) * conv(data.values[f"H{j + 1}"])
    for s, r in enumerate(cert.rho):
        signs[f"rho{s + 1}*phi{s + 1}"] = conv(r) * conv(data.values[f"phi{s + 1}"])
    # Psi comes from a grid (or a declared closed form), so it is compared with tol
    signs["eta*Psi"] = float(cert.eta) * float(data.values["Psi"])
    bad_sign = any(float(v) < -tol for v in signs.values())
    return DualReport(rep.passed and not bad_sign, rep, signs)


@dataclass
class ScanResult:
    violations: list  # (primal point, dual point)
    n_primal: int
    n_dual: int
    step: float

    @property
    def passed(self) -> bool:
        return not self.violations


def weak_duality_scan(prob: BilevelProblem, dual_points: list, primal_samples: int = 200,
                      step=Fraction(1, 100), seed: int = 0, dominance_tol: float = DOMINANCE_TOL,
                      check_feasible: bool = True, primal: np.ndarray | None = None,
                      jobs: int = 1) -> ScanResult:
    """Look for primal feasible points strictly dominating a dual objective vector."""
    if check_feasible:
        for dp in dual_points:
            rep = dual_feasible(prob, dp)
            if not rep.feasible:
                raise HypothesisError(f"dual point {dp.point} is infeasible: {rep.reasons()}")
    if primal is None:
        M = feasible_grid(prob, step, jobs=jobs)
        if len(M) == 0:
            raise ValueError("no feasible primal samples")
        rng = np.random.default_rng(seed)
        if len(M) > primal_samples:
            M = M[np.sort(rng.choice(len(M), primal_samples, replace=False))]
    else:
        M = np.asarray(primal, dtype=float)
    R = ratios_many(prob, M)
    violations = []
    for dp in dual_points:
        target = np.array([float(v) for v in dp.objective(prob, exact=False)])
        dom = np.all(R < target - dominance_tol, axis=1)
        violations += [(tuple(M[i].tolist()), tuple(float(c) for c in dp.point))
                       for i in np.flatnonzero(dom)]
    return ScanResult(violations, len(M), len(dual_points), float(step))


def strong_duality_construct(prob: BilevelProblem, point, acq: ACQReport,
                             oracle_verdict: str | None = None, convexity: dict | None = None,
                             mode: str = "rational") -> DualPoint:
    """Package a primal certificate at ``point`` as a dual feasible point."""
    if not acq.passed:
        raise HypothesisError("ACQ is not supported at the point")
    if oracle_verdict is not None and oracle_verdict != "WEAK-PARETO":
        raise HypothesisError(f"point is not weak Pareto on the grid ({oracle_verdict})")
    anchor = resolve_anchor(prob, point)
    data = stationary_data(prob, anchor)
    cert = find_certificate(data, mode)
    if cert is None:
        raise AnomalyError("certificate search infeasible under the stated hypotheses")
    cert.kind = "dualpoint"
    cert.name = prob.name
    dp = DualPoint(cert)
    rep = dual_feasible(prob, dp, mode)
    if not rep.feasible:
        raise AnomalyError(f"constructed dual point fails dual feasibility: {rep.reasons()}")
    if convexity and all(r.passed for r in convexity.values()):
        dp.label = "WEAK-PARETO-OF-DUAL"
    return dp


__all__ = ["DualPoint", "DualReport", "ScanResult", "HypothesisError", "AnomalyError",
           "MissingDeclarationError", "dual_feasible", "weak_duality_scan",
           "strong_duality_construct"]
