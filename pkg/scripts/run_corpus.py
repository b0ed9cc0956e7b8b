"""Run every CLI command on the bundled corpus and tabulate the exit codes.

    python3 scripts/run_corpus.py --out runs/
"""

import argparse
import contextlib
import io
from dataclasses import dataclass
from pathlib import Path

from bilevelcert.cli import main


@dataclass
class Config:
    out: Path = Path("runs")
    seed: int = 0
    samples: int = 200
    jobs: int = 1


def command_table(cfg: Config) -> tuple[list, list[str]]:
    """(name, argv) pairs plus the flags shared by every run."""
    common = ["--seed", str(cfg.seed), "--jobs", str(cfg.jobs)]
    return [
        ("q1_sec3-necessary", ["check-necessary", "q1_sec3.blp", "--mode", "rational"]),
        ("q1_sec4-necessary", ["check-necessary", "q1_sec4.blp", "--mode", "rational"]),
        ("mq_sec5-validate", ["validate", "mq_sec5.blp", "--point=-1,0"]),
        ("q1_sec3-sufficient", ["check-sufficient", "q1_sec3.blp", "--cert", "q1_sec3.cert",
                                "--samples", str(cfg.samples)]),
        ("q1_sec4-sufficient", ["check-sufficient", "q1_sec4.blp", "--cert", "q1_sec4.cert",
                                "--samples", str(cfg.samples)]),
        ("mq_sec5-duality", ["duality", "mq_sec5.blp", "--dual", "mq_dual.cert",
                             "--samples", str(cfg.samples)]),
        ("q1_sec4-strong", ["duality", "q1_sec4.blp", "--from-primal", "0,0",
                            "--samples", str(cfg.samples)]),
        ("q1_sec4-oracle", ["oracle", "q1_sec4.blp", "--point", "0,0"]),
    ], common


def run(cfg: Config) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    table, common = command_table(cfg)
    worst = 0
    for name, argv in table:
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = main(argv + common + ["--report", str(cfg.out / f"{name}.summary")])
        (cfg.out / f"{name}.txt").write_text(buf.getvalue())
        print(f"{name:22s} exit {code}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Config.out)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ap.add_argument("--samples", type=int, default=Config.samples)
    ap.add_argument("--jobs", type=int, default=Config.jobs)
    raise SystemExit(run(Config(**vars(ap.parse_args()))))
