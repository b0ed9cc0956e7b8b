"""Write the grid weak-Pareto points of a problem with their objective ratios.

    python3 scripts/dump_pareto.py q1_sec4.blp --step 0.02 --out front.tsv

Columns: the variables, then Phi_1..Phi_n.  Plot with any external tool.
"""

import argparse
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from bilevelcert.cli import corpus_path
from bilevelcert.expr import load_problem
from bilevelcert.single_level import ratios_many, weak_pareto_oracle


@dataclass
class Config:
    problem: str
    step: Fraction | None = None
    out: Path | None = None
    jobs: int = 1


def dump(cfg: Config) -> np.ndarray:
    prob = load_problem(corpus_path(cfg.problem))
    res = weak_pareto_oracle(prob, step=cfg.step, jobs=cfg.jobs)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    table = np.hstack([res.pareto_set, ratios_many(prob, res.pareto_set)])
    header = prob.var_names + [f"Phi{k + 1}" for k in range(prob.n_obj)]
    target = cfg.out if cfg.out is not None else sys.stdout
    np.savetxt(target, table, fmt="%.10g", delimiter="\t", header="\t".join(header), comments="")
    print(f"{len(table)} of {res.feasible_count} feasible grid points (step {res.step:g})",
          file=sys.stderr)
    return table


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem")
    ap.add_argument("--step", type=Fraction, default=None)
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    dump(Config(**vars(ap.parse_args())))
