"""Run experiment presets through the CLI and time them.

    python scripts/run_presets.py                 # every preset
    python scripts/run_presets.py table1 fig2-benefit --seed 3 --outdir results

Each preset writes <outdir>/<preset>.csv (migration presets also write
<preset>-deltas.csv). Elapsed time is checked against the laptop budget:
5 min for placement presets, 2 min for migration presets.
"""

import argparse
import sys
import time
from pathlib import Path

from tcnet.cli import run
from tcnet.experiments import PRESETS, MigrationPreset

BUDGET_S = {"placement": 300, "migration": 120}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*", default=sorted(PRESETS), help="preset names; default all")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--no-timings", action="store_true", help="blank runtime columns for byte-stable output")
    args = ap.parse_args(argv)

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for name in args.presets:
        kind = "migration" if isinstance(PRESETS.get(name), MigrationPreset) else "placement"
        cmd = ["sweep", "--preset", name, "--seed", str(args.seed), "--out", str(out / f"{name}.csv")]
        if kind == "migration":
            cmd += ["--deltas", str(out / f"{name}-deltas.csv")]
        if args.no_timings:
            cmd.append("--no-timings")
        start = time.perf_counter()
        code = run(cmd)
        elapsed = time.perf_counter() - start
        over = elapsed > BUDGET_S[kind]
        print(f"{name:16s} exit={code} {elapsed:7.1f}s{'  over budget' if over else ''}")
        status = status or code or int(over)
    return status


if __name__ == "__main__":
    sys.exit(main())
