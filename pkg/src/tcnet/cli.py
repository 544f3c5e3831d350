"""Command-line entry point: ``tcnet place|compare|migrate|benefit|sweep``.

Exit codes: 0 success, 2 parse error, 3 infeasible scenario, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import contextlib
import shlex
import sys
from dataclasses import replace

from .experiments import (
    BENEFIT_FIELDS,
    DELTA_FIELDS,
    SOLVER_FIELDS,
    MigrationPreset,
    PlacementPreset,
    get_preset,
    preset_scenarios,
    run_benefit,
    run_compare,
    run_migrate,
    run_place,
    write_rows,
)
from .model import ModelError
from .placement import SOLVERS, BudgetExceededError
from .scenario import InfeasibleScenarioError, ScenarioError, load_scenario
from .sim import MIGRATION_TYPES, SimConfig, write_sweep_csv

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--scenario", metavar="FILE", help="scenario JSON file")
    src.add_argument("--preset", metavar="NAME", help="named experiment preset")
    common.add_argument("--seed", type=int, default=0, help="base seed for generators and solvers")
    common.add_argument("--out", metavar="CSV", help="write CSV here instead of stdout")
    common.add_argument("--no-timings", action="store_true", help="leave runtime columns empty so output is byte-stable")
    common.add_argument("--allow-large", action="store_true", help="permit generated graphs above the desk-scale cap")

    placement = argparse.ArgumentParser(add_help=False)
    placement.add_argument("--n", type=int, help="transcoder count")
    placement.add_argument("--lambda", dest="lam", type=float, help="separation constant in (0, 0.1]")
    placement.add_argument("--mode", choices=("non-blocking", "blocking"), help="override the scenario mode")

    p = argparse.ArgumentParser(prog="tcnet", description="Transcoder placement and migration experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("place", parents=[common, placement], help="run one solver")
    sp.add_argument("--solver", choices=SOLVERS, default="heuristic")

    sp = sub.add_parser("compare", parents=[common, placement], help="heuristic, GA and random baseline")
    sp.add_argument("--reps", type=int, default=1, help="GA runs per scenario")

    sub.add_parser("benefit", parents=[common, placement], help="direct against transcoded load")

    sp = sub.add_parser("migrate", parents=[common], help="migration gap sweep: mean, ci95, min and max per type")
    sp.add_argument("--type", dest="types", action="append", choices=MIGRATION_TYPES, help="repeatable; default all")
    sp.add_argument("--rtt", type=float, action="append", help="link RTT in ms; repeatable")
    sp.add_argument("--reps", type=int, help="runs per (type, RTT) cell")
    sp.add_argument("--deltas", metavar="CSV", help="write the client packet-delta series of each cell's first run")

    sp = sub.add_parser("sweep", parents=[common, placement], help="run a whole preset with its default command")
    sp.add_argument("--reps", type=int, help="GA runs per scenario, or migration runs per cell")
    sp.add_argument("--deltas", metavar="CSV", help="migration presets: packet-delta output")
    return p


def _scenarios(args, need_preset: bool = False):
    if args.scenario:
        if need_preset:
            raise ScenarioError("--preset", "sweep needs a preset")
        sc = load_scenario(args.scenario)
        if getattr(args, "mode", None):
            sc = replace(sc, mode=args.mode)
        return None, [sc]
    preset = get_preset(args.preset or "tiny")
    if isinstance(preset, MigrationPreset):
        return preset, None
    if getattr(args, "mode", None):
        preset = replace(preset, mode=args.mode)
    return preset, list(preset_scenarios(preset, seed=args.seed, allow_large=args.allow_large))


def _migrate(args, preset: MigrationPreset | None, base: SimConfig, out) -> None:
    types = args.types if getattr(args, "types", None) else (preset.types if preset else MIGRATION_TYPES)
    rtts = args.rtt if getattr(args, "rtt", None) else (preset.rtts if preset else (base.link_rtt,))
    reps = args.reps if args.reps is not None else (preset.reps if preset else 50)
    if reps < 1:
        raise ScenarioError("--reps", "must be >= 1")
    deltas = []
    rows = run_migrate(base, types, rtts, reps, seed=args.seed, on_deltas=deltas.append if args.deltas else None)
    write_sweep_csv(rows, out)
    if args.deltas:
        deltas.sort(key=lambda r: (r["type"], float(r["rtt_ms"]), float(r["t_s"])))
        with open(args.deltas, "w", newline="") as fh:
            write_rows(deltas, DELTA_FIELDS, fh)


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    cmd = args.command
    timings = not args.no_timings
    print(f"# seed={args.seed} reproduce: tcnet {shlex.join(argv if argv is not None else sys.argv[1:])}", file=sys.stderr)
    try:
        with contextlib.ExitStack() as stack:
            out = stack.enter_context(open(args.out, "w", newline="")) if args.out else stdout
            if cmd == "migrate":
                base = SimConfig()
                preset = None
                if args.scenario:
                    base = load_scenario(args.scenario).sim
                elif args.preset:
                    preset = get_preset(args.preset)
                    if not isinstance(preset, MigrationPreset):
                        raise ScenarioError("--preset", f"{args.preset!r} is not a migration preset")
                    base = preset.base
                _migrate(args, preset, base, out)
                return EXIT_OK

            preset, scenarios = _scenarios(args, need_preset=(cmd == "sweep"))
            if isinstance(preset, MigrationPreset):
                if cmd != "sweep":
                    raise ScenarioError("--preset", f"{args.preset!r} is a migration preset; use migrate or sweep")
                _migrate(args, preset, preset.base, out)
                return EXIT_OK
            if cmd == "sweep":
                cmd = preset.command
            n = args.n or (preset.transcoder_count if isinstance(preset, PlacementPreset) else None)
            if cmd == "place":
                rows = run_place(scenarios, args.solver, n=n, lam=args.lam, seed=args.seed, timings=timings)
                write_rows(rows, SOLVER_FIELDS, out)
            elif cmd == "compare":
                reps = args.reps if args.reps is not None else 1
                if reps < 1:
                    raise ScenarioError("--reps", "must be >= 1")
                rows = run_compare(scenarios, preset, n=args.n, lam=args.lam, seed=args.seed, reps=reps, timings=timings)
                write_rows(rows, SOLVER_FIELDS, out)
            else:
                lam = args.lam if args.lam is not None else (preset.separations[0] if preset else None)
                write_rows(run_benefit(scenarios, n=n, lam=lam), BENEFIT_FIELDS, out)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelError as exc:
        # bad n, lambda or unreachable demands: the scenario cannot be solved as asked
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
