"""Command line entry point: run, validate and list scenarios.

    locindex run <scenario> [<scenario> ...] [--truncation N] [--depth K]
                 [--out report.json] [--csv tables/] [--jobs J] [--timings]
    locindex validate <scenario>
    locindex list

A scenario is a builtin name or a path to a JSON file.  Reports go to
``--out``, else to $LOCINDEX_OUTPUT_DIR/<name>.json when that variable is
set, else to stdout.  Exit status: 0 when every check passes, 1 when a check
fails, 2 for schema or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ScenarioSchemaError
from .scenario import Report, Scenario, list_builtins, load, output_dir, run, validate

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA = 0, 1, 2


def _run_one(args: tuple) -> Report:
    data, truncation, depth = args
    return run(Scenario.from_dict(data), truncation, depth)


def _load_checked(target: str) -> dict:
    data = load(target)
    diags = validate(data)
    if diags:
        raise ScenarioSchemaError(*diags[0])
    return data


def cmd_run(ns) -> int:
    try:
        scenarios = [_load_checked(t) for t in ns.scenarios]
    except (ScenarioSchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    if ns.out and len(scenarios) > 1:
        print("error: --out needs a single scenario", file=sys.stderr)
        return EXIT_SCHEMA
    jobs = [(d, ns.truncation, ns.depth) for d in scenarios]
    try:
        if ns.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(ns.jobs) as pool:
                reports = list(pool.map(_run_one, jobs))
        else:
            reports = [_run_one(j) for j in jobs]
    except ScenarioSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    outdir = output_dir()
    status = EXIT_OK
    for rep in reports:
        text = rep.to_json(timings=ns.timings)
        if ns.out:
            Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
            Path(ns.out).write_text(text)
        elif outdir is not None:
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / f"{rep.scenario.name}.json").write_text(text)
        else:
            sys.stdout.write(text)
        if ns.csv:
            rep.write_csv(ns.csv)
        for c in rep.checks:
            if not c.passed:
                print(f"FAIL {rep.scenario.name}: {c.name} {c.message}".rstrip(), file=sys.stderr)
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.scenario.name} ({len(rep.checks)} checks)", file=sys.stderr)
        if not rep.passed:
            status = EXIT_FAIL
    return status


def cmd_validate(ns) -> int:
    try:
        data = load(ns.scenario)
    except (ScenarioSchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    diags = validate(data)
    for pointer, message in diags:
        print(f"{pointer or '/'}: {message}")
    if not diags:
        print("ok")
    return EXIT_SCHEMA if diags else EXIT_OK


def cmd_list(ns) -> int:
    entries = list_builtins()
    if ns.json:
        print(json.dumps(entries, indent=2, sort_keys=True))
    else:
        width = max(len(e["name"]) for e in entries)
        for e in entries:
            print(f"{e['name']:<{width}}  {e['kind']:<20} {e['description']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locindex", description="Localized index computations on truncated Fourier models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run scenarios and write reports")
    p.add_argument("scenarios", nargs="+", help="builtin names or scenario JSON files")
    p.add_argument("--truncation", type=int, help="override the Fourier truncation N")
    p.add_argument("--depth", type=int, help="override the symbol depth K")
    p.add_argument("--out", help="report path (single scenario)")
    p.add_argument("--csv", help="directory for CSV tables")
    p.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel processes")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="schema-check a scenario without running it")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list", help="list builtin scenarios")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
