"""Print the orderings each preset is meant to show, from run_presets.py output.

    python scripts/summarize.py results
"""

import csv
import statistics
import sys
from collections import defaultdict
from pathlib import Path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean_by(data, key, value, where=lambda r: True):
    groups = defaultdict(list)
    for r in data:
        if where(r) and r[value] != "":
            groups[key(r)].append(float(r[value]))
    return {k: statistics.fmean(v) for k, v in sorted(groups.items())}


def solver_table(path, value="load"):
    data = rows(path)
    table = mean_by(data, lambda r: (int(r["nodes"]), r["solver"], r["lambda"], r["client_fraction"]), value)
    print(f"{path.name}: mean {value} by nodes / solver / lambda / client fraction")
    for (nodes, solver, lam, cf), v in table.items():
        print(f"  {nodes:4d}  {solver:12s} {lam or '-':>6s} {cf or '-':>6s}  {v:12.4g}")


def main(outdir="results") -> None:
    out = Path(outdir)
    for name in ("smoke", "oracle-small", "fig3-small", "fig5-separation", "fig6-clients", "ga-nostop"):
        p = out / f"{name}.csv"
        if p.exists():
            solver_table(p, "admitted" if name == "fig3-small" else "load")
            if name == "fig5-separation":
                solver_table(p, "runtime_s")
    p = out / "fig2-benefit.csv"
    if p.exists():
        ratio = mean_by(rows(p), lambda r: int(r["nodes"]), "ratio")
        print("fig2-benefit: mean transcoded/direct load ratio by nodes")
        for nodes, v in ratio.items():
            print(f"  {nodes:4d}  {v:.3f}")
    for name in ("table1", "migrate-smoke"):
        p = out / f"{name}.csv"
        if p.exists():
            print(f"{name}: switchover gap (s)")
            for r in rows(p):
                print(f"  {r['type']:24s} mean {float(r['mean']):8.3f}  ci95 {float(r['ci95']):7.3f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
