"""Command-line front end.

Every command prints a human-readable report followed by a flat
``key = value`` summary (also written to ``--report PATH``).  The summary
leaves out timings so that identical runs give identical bytes.

Exit codes: 0 success, 1 verdict failure, 2 parse or I/O error,
3 missing declarations.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .certify import (ASSUMPTIONS, CertificateFormatError, MissingDeclarationError, check_ACQ,
                      convexity_suite, feasible_in_D, find_certificate, format_certificate,
                      parse_certificates, resolve_anchor, stationary_data, sufficiency_verdict,
                      verify_certificate)
from .cones import ConeError, cone_from_spec, star_shaped_sample
from .duality import (AnomalyError, DualPoint, HypothesisError, dual_feasible,
                      strong_duality_construct, weak_duality_scan)
from .expr import BilevelProblem, ProblemError, load_problem
from .nonsmooth import Convexificator, validate_convexificator
from .single_level import (E_oracle, feasible_grid, lower_level_solutions, psi_function, scalarize,
                           weak_pareto_oracle, x_grid, y_grid)

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_MISSING = 0, 1, 2, 3
VERDICTS = ("PASS", "FAIL", "SUPPORTED", "VIOLATED", "SKIPPED")


@dataclass
class RunReport:
    problem: str
    command: str
    seed: int
    point: tuple | None = None
    verdicts: list = field(default_factory=list)  # (check, verdict, reason)
    assumptions: list = field(default_factory=list)
    resolutions: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)
    facts: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add(self, check: str, verdict: str, reason: str = ""):
        if verdict not in VERDICTS:
            raise ValueError(f"bad verdict {verdict!r}")
        self.verdicts.append((check, verdict, reason))

    @property
    def ok(self) -> bool:
        return all(v in ("PASS", "SUPPORTED", "SKIPPED") for _, v, _ in self.verdicts)

    def human(self) -> str:
        lines = [f"== {self.command}: {self.problem} =="]
        if self.point is not None:
            lines.append(f"point: ({', '.join(_num(c) for c in self.point)})")
        for check, v, reason in self.verdicts:
            lines.append(f"  [{v:9s}] {check}" + (f"  -- {reason}" if reason else ""))
        for k, v in self.facts.items():
            lines.append(f"  {k}: {v}")
        lines += [f"  note: {n}" for n in self.notes]
        if self.resolutions:
            lines.append("grid resolution: " + ", ".join(f"{k}={v:g}" for k, v in self.resolutions.items()))
        if self.assumptions:
            lines.append("unchecked assumptions:")
            lines += [f"  - {a}" for a in self.assumptions]
        for block in self.certificates:
            lines.append(block.rstrip())
        if self.timing:
            lines.append("timing: " + ", ".join(f"{k}={v:.3f}s" for k, v in self.timing.items()))
        return "\n".join(lines) + "\n"

    def machine(self, exit_code: int) -> str:
        kv = [("problem", self.problem), ("command", self.command), ("seed", str(self.seed))]
        if self.point is not None:
            kv.append(("point", "(" + ", ".join(_num(c) for c in self.point) + ")"))
        for check, v, reason in self.verdicts:
            kv.append((f"verdict.{check}", v))
            if reason:
                kv.append((f"reason.{check}", reason))
        kv += [(f"fact.{k}", str(v)) for k, v in self.facts.items()]
        kv += [(f"resolution.{k}", f"{v:g}") for k, v in self.resolutions.items()]
        kv += [(f"assumption.{i + 1}", a) for i, a in enumerate(self.assumptions)]
        for i, block in enumerate(self.certificates):
            for line in block.strip().splitlines()[1:-1]:
                key, _, val = line.partition("=")
                kv.append((f"certificate.{i + 1}.{key.strip().replace(' ', '.')}", val.strip()))
        kv += [("result", "PASS" if exit_code == 0 else "FAIL"), ("exit_code", str(exit_code))]
        return "".join(f"{k} = {v}\n" for k, v in kv)


def _num(c) -> str:
    c = Fraction(c).limit_denominator(10**9) if not isinstance(c, Fraction) else c
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def parse_point(text: str) -> tuple:
    try:
        return tuple(Fraction(t.strip()) for t in text.strip("()").split(","))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad point {text!r}; use e.g. 0,0 or --point=-1,0") from None


def corpus_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("bilevelcert") / "corpus" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(name)


def _point_and_anchor(prob: BilevelProblem, point):
    anchor = resolve_anchor(prob, point)
    return prob.point_of(anchor), anchor


def _fpoint(pt) -> np.ndarray:
    return np.array([float(c) for c in pt])


# --------------------------------------------------------------------------
# commands

def _validate(prob, anchor, rep: RunReport):
    pt = prob.point_of(anchor)
    D = cone_from_spec(prob.cone(anchor), prob.dim)
    scal = {f"varphi{s.k}": s.fn for s in scalarize(prob, pt)}
    Psi = psi_function(prob)
    decls = [d for (t, a), d in sorted(prob.convexificators.items(), key=lambda kv: kv[0][0])
             if a == anchor]
    if not decls:
        raise MissingDeclarationError("no convexificators declared at this point")
    for d in decls:
        h = scal.get(d.target) or (Psi if d.target == "Psi" else prob.function(d.target))
        c = Convexificator(d.points, d.kind, D, d.target)
        r = validate_convexificator(c, h, _fpoint(pt))
        worst = max((ch.margin for ch in r.checks), default=0.0)
        reason = f"{len(r.checks)} directions, worst margin {worst:.2e}"
        rep.add(f"convexificator.{d.target}", r.verdict, reason)


def cmd_validate(prob, args, rep: RunReport):
    _, anchor = _point_and_anchor(prob, args.point)
    _validate(prob, anchor, rep)


def cmd_check_necessary(prob, args, rep: RunReport):
    pt, anchor = _point_and_anchor(prob, args.point)
    t0 = time.perf_counter()
    data = stationary_data(prob, anchor)
    _validate(prob, anchor, rep)
    acq = check_ACQ(prob, data, samples=args.samples, seed=args.seed)
    polar_gens = "; ".join(_vec(g) for g in acq.polar.generators) or "{0}"
    rep.add("acq", acq.verdict, f"polar generators {polar_gens}" +
            (f"; witness {_vec(acq.witness)}" if acq.witness else ""))
    M = feasible_grid(prob, args.step, jobs=args.jobs)
    rep.resolutions["primal_grid"] = max(x_grid(prob, args.step).step, y_grid(prob, args.step).step)
    try:
        star = star_shaped_sample(E_oracle(prob), _fpoint(pt), M, min(args.samples, len(M)), args.seed)
        rep.add("star_shaped", star.verdict,
                f"{star.checked} chords" + (f"; witness {star.witness}" if star.witness else ""))
    except ConeError as exc:
        rep.add("star_shaped", "SKIPPED", str(exc))
    cert = find_certificate(data, args.mode)
    if cert is None:
        rep.add("certificate_search", "FAIL", "INFEASIBLE")
    else:
        cert.name = prob.name
        rep.add("certificate_search", "PASS", f"found ({args.mode})")
        v = verify_certificate(data, cert, args.mode)
        rep.add("verify", v.verdict, "residual " + _vec(v.residual) if v.passed else "; ".join(v.reasons()))
        rep.certificates.append(format_certificate(cert))
    rep.assumptions += _assumptions(prob)
    rep.timing["necessary"] = time.perf_counter() - t0


def _assumptions(prob) -> list:
    out = [ASSUMPTIONS[0]]
    for key, text in (("pos_xi_closed", ASSUMPTIONS[1]), ("star_shaped", ASSUMPTIONS[2])):
        flag = prob.assertions.get(key)
        out.append(f"{text}: asserted {'true' if flag else 'false' if flag is not None else 'no'}")
    return out


def _vec(v) -> str:
    return "(" + ", ".join(_num(c) if isinstance(c, Fraction) else f"{float(c):.6g}" for c in v) + ")"


def _load_cert(path, point):
    blocks = parse_certificates(corpus_path(path).read_text())
    for b in blocks:
        if point is None or tuple(Fraction(c) for c in b.point) == tuple(Fraction(c) for c in point):
            return b
    raise MissingDeclarationError(f"no certificate block for point {_vec(point)}")


def cmd_check_sufficient(prob, args, rep: RunReport):
    pt, anchor = _point_and_anchor(prob, args.point)
    data = stationary_data(prob, anchor)
    if args.cert:
        cert = _load_cert(args.cert, pt)
        rep.facts["certificate_source"] = Path(args.cert).name
    else:
        cert = find_certificate(data, args.mode)
        rep.facts["certificate_source"] = "search"
        if cert is not None:
            cert.name = prob.name
    if cert is None:
        rep.add("verify", "FAIL", "no certificate (INFEASIBLE)")
        return
    mode = "rational" if args.cert else args.mode
    v = verify_certificate(data, cert.exact() if mode == "rational" else cert, mode)
    rep.add("verify", v.verdict, "; ".join(v.reasons()))
    rep.certificates.append(format_certificate(cert))
    conv = convexity_suite(prob, data, samples=args.samples, seed=args.seed)
    for lab, r in conv.items():
        reason = f"{r.checked} samples" + (f"; witness {r.witness}" if r.witness else "")
        rep.add(f"{r.kind}.{lab}", r.verdict, reason)
    M = feasible_grid(prob, args.step, jobs=args.jobs)
    rep.resolutions["primal_grid"] = max(x_grid(prob, args.step).step, y_grid(prob, args.step).step)
    inD, wit = feasible_in_D(prob, pt, data.D, M)
    rep.add("feasible_in_D", "SUPPORTED" if inD else "VIOLATED",
            f"{len(M)} grid points" + (f"; witness {wit}" if wit else ""))
    oracle = None
    if args.skip_oracle:
        rep.add("oracle", "SKIPPED", "--skip-oracle")
    else:
        o = weak_pareto_oracle(prob, _fpoint(pt), step=args.step, jobs=args.jobs)
        oracle = o.verdict
        rep.add("oracle", "PASS" if o.verdict == "WEAK-PARETO" else "FAIL", o.verdict)
        rep.notes += o.warnings
    claim = sufficiency_verdict(data, v, conv, oracle, {"feasible set inside point + D": inD})
    rep.facts["claim"] = claim.claim
    if claim.anomaly:
        rep.notes.append("certified point rejected by the grid oracle: manual review needed")
    rep.add("sufficiency", "PASS" if claim.certified else "FAIL",
            "; ".join(claim.missing + claim.violated))
    rep.assumptions += _assumptions(prob)


def cmd_duality(prob, args, rep: RunReport):
    duals = []
    if args.dual:
        for c in parse_certificates(corpus_path(args.dual).read_text()):
            duals.append(DualPoint(c))
    if args.from_primal is not None:
        pt, anchor = _point_and_anchor(prob, args.from_primal)
        rep.point = pt
        data = stationary_data(prob, anchor)
        acq = check_ACQ(prob, data, seed=args.seed)
        rep.add("acq", acq.verdict)
        oracle = None
        if not args.skip_oracle:
            oracle = weak_pareto_oracle(prob, _fpoint(pt), step=args.step, jobs=args.jobs).verdict
            rep.add("oracle", "PASS" if oracle == "WEAK-PARETO" else "FAIL", oracle)
        conv = convexity_suite(prob, data, seed=args.seed)
        try:
            dp = strong_duality_construct(prob, pt, acq, oracle, conv, args.mode)
        except HypothesisError as exc:
            rep.add("strong_duality", "FAIL", str(exc))
            return
        except AnomalyError as exc:
            rep.add("strong_duality", "FAIL", f"anomaly: {exc}")
            return
        rep.add("strong_duality", "PASS", dp.label or "dual feasible")
        duals.append(dp)
    if not duals:
        raise MissingDeclarationError("duality needs --dual FILE or --from-primal POINT")
    feasible = []
    for i, dp in enumerate(duals, 1):
        r = dual_feasible(prob, dp, args.mode)
        rep.add(f"dual_feasible.{i}", "PASS" if r.feasible else "FAIL", "; ".join(r.reasons()))
        rep.facts[f"dual.{i}.objective"] = _vec(dp.objective(prob))
        rep.certificates.append(format_certificate(dp.cert))
        if r.feasible:
            feasible.append(dp)
    if feasible:
        scan = weak_duality_scan(prob, feasible, args.samples, seed=args.seed,
                                 check_feasible=False, jobs=args.jobs)
        rep.resolutions["primal_grid"] = scan.step
        rep.add("weak_duality", "PASS" if scan.passed else "FAIL",
                f"{scan.n_primal} primal samples x {scan.n_dual} dual points, "
                f"{len(scan.violations)} violations")
        for pv, dv in scan.violations[:10]:
            rep.notes.append(f"primal {_vec(pv)} dominates dual {_vec(dv)}")


def cmd_oracle(prob, args, rep: RunReport):
    pt = args.point
    o = weak_pareto_oracle(prob, None if pt is None else _fpoint(pt), step=args.step, jobs=args.jobs)
    rep.resolutions["primal_grid"] = o.step
    rep.notes += o.warnings
    x = _fpoint(pt[:prob.n1]) if pt is not None else x_grid(prob, args.step).points()[0]
    ll = lower_level_solutions(prob, x, step=args.step)
    sols = "{" + ", ".join(_vec(y) for y in ll.solutions) + "}" if not ll.empty else "empty"
    rep.facts["lower_level_x"] = _vec(x)
    rep.facts["lower_level_solutions"] = sols
    rep.facts["feasible_grid_points"] = o.feasible_count
    if pt is None:
        rep.facts["pareto_points"] = len(o.pareto_set)
        rep.add("oracle", "PASS", f"{len(o.pareto_set)} weak Pareto grid points")
        if args.dump:
            np.savetxt(args.dump, o.pareto_set, fmt="%.10g", delimiter="\t",
                       header="\t".join(prob.var_names), comments="")
    else:
        reason = o.verdict + (f"; witness {_vec(o.witness)}" if o.witness else "")
        rep.add("oracle", "PASS" if o.verdict == "WEAK-PARETO" else "FAIL", reason)


COMMANDS = {
    "check-necessary": cmd_check_necessary,
    "check-sufficient": cmd_check_sufficient,
    "duality": cmd_duality,
    "oracle": cmd_oracle,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", help="problem file (bundled corpus names also work)")
    common.add_argument("--point", type=parse_point, default=None,
                        help="point as comma list; use --point=-1,0 for negative leading values")
    common.add_argument("--mode", choices=("float", "rational"), default="float")
    common.add_argument("--step", type=Fraction, default=None, help="override grid step")
    common.add_argument("--samples", type=int, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--skip-oracle", action="store_true")
    common.add_argument("--report", type=Path, default=None, help="write the key = value summary here")

    ap = argparse.ArgumentParser(prog="bilevelcert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("check-necessary", parents=[common], help="validate, ACQ, certificate search")
    p = sub.add_parser("check-sufficient", parents=[common], help="convexity tests and sufficiency")
    p.add_argument("--cert", default=None, help="certificate file to verify instead of searching")
    p = sub.add_parser("duality", parents=[common], help="dual feasibility and duality scans")
    p.add_argument("--dual", default=None, help="file with dualpoint blocks")
    p.add_argument("--from-primal", type=parse_point, default=None, metavar="POINT")
    p = sub.add_parser("oracle", parents=[common], help="grid weak-Pareto oracle")
    p.add_argument("--dump", type=Path, default=None, help="write the Pareto grid points as TSV")
    sub.add_parser("validate", parents=[common], help="convexificator checks only")
    return ap


_DEFAULT_SAMPLES = {"check-necessary": 20, "check-sufficient": 500, "duality": 200}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.samples is None:
        args.samples = _DEFAULT_SAMPLES.get(args.command, 20)
    try:
        prob = load_problem(corpus_path(args.problem))
    except (OSError, FileNotFoundError) as exc:
        print(f"error: cannot read {args.problem}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    rep = RunReport(prob.name, args.command, args.seed, args.point)
    t0 = time.perf_counter()
    try:
        if rep.point is None and args.command not in ("duality", "oracle"):
            rep.point = prob.refpoint
        COMMANDS[args.command](prob, args, rep)
    except MissingDeclarationError as exc:
        print(f"error: missing declaration: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (CertificateFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    rep.timing["total"] = time.perf_counter() - t0
    code = EXIT_OK if rep.ok and rep.verdicts else EXIT_FAIL
    summary = rep.machine(code)
    sys.stdout.write(rep.human())
    sys.stdout.write("--- summary ---\n" + summary)
    if args.report is not None:
        args.report.write_text(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
