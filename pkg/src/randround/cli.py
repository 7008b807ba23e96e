"""Command-line interface.

Subcommands: round, scan, enumerate, simulate, rates, utility, validate.
JSON results go to stdout (or --out), human-readable summaries and logs to
stderr. Exit codes: 0 success, 2 input error, 3 internal verification
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._backend import BACKENDS
from .enumerator import (
    CapExceeded,
    credible_interval,
    enumerate_solutions,
    instance_from_json,
    render_histograms,
    space_to_json,
    top_k,
)
from .mechanisms import (
    DiscreteLaplaceParams,
    MechanismSpec,
    apply_mechanism,
    make_rng,
)
from .model import (
    SchemaError,
    TableError,
    parse_hierarchy,
    parse_table,
    serialize_tables,
    validate_true_table,
)
from .scanners import FindingKind, VerificationError, findings_to_json, scan_tables
from .simulator import TrialConfig, rates_table, run_trials
from .utility import compare, render_signed_pmfs

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VERIFY = 3


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(doc, out: str | None):
    _emit(json.dumps(doc, indent=2) + "\n", out)


def cmd_round(args) -> int:
    schema = parse_hierarchy(_read(args.schema))
    tables = parse_table(_read(args.data), schema, strict=False)
    failures = []
    for table in tables:
        for violation in validate_true_table(table, schema):
            failures.append(f"region {table.region_id}: {violation}")
    if failures:
        for line in failures:
            print(line, file=sys.stderr)
        return EXIT_INPUT
    spec = MechanismSpec(
        mechanism=args.mechanism,
        t=args.t,
        clamp_at_zero=args.clamp,
        seed=args.seed,
    )
    rng = make_rng(args.seed)
    published = [apply_mechanism(t, schema, spec, rng=rng) for t in tables]
    _emit(serialize_tables(published), args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    schema = parse_hierarchy(_read(args.schema))
    tables = parse_table(_read(args.data), schema, strict=True)
    kinds = None
    if args.kinds:
        by_name = {k.value: k for k in FindingKind}
        kinds = []
        for name in args.kinds.split(","):
            name = name.strip()
            if name not in by_name:
                raise TableError(
                    f"unknown kind {name!r}; choose from {', '.join(by_name)}"
                )
            kinds.append(by_name[name])
    report = scan_tables(tables, schema, kinds=kinds, verify=args.verify)
    for skip in report.skips:
        kind = skip.kind.value if skip.kind else "*"
        print(
            f"skip region={skip.region_id} group={skip.parent} kind={kind}: "
            f"{skip.reason}",
            file=sys.stderr,
        )
    _emit_json(findings_to_json(report.findings), args.out)
    print(f"{len(report.findings)} finding(s)", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    schema = parse_hierarchy(_read(args.schema))
    tables = parse_table(_read(args.data), schema, strict=False)
    results = [
        {"region_id": t.region_id, "violations": validate_true_table(t, schema)}
        for t in tables
    ]
    _emit_json(results, args.out)
    bad = sum(1 for r in results if r["violations"])
    print(f"{bad} region(s) with violations", file=sys.stderr)
    return EXIT_INPUT if bad else EXIT_OK


def cmd_enumerate(args) -> int:
    instance = instance_from_json(json.loads(_read(args.data)))
    space = enumerate_solutions(instance, exact=args.exact, cap=args.cap)
    doc = space_to_json(space)
    if args.k:
        doc["top_k"] = [
            {"assignment": assignment, "prob": float(p)}
            for assignment, p in top_k(space, args.k)
        ]
    if args.mass is not None:
        doc["credible_intervals"] = {}
        for attr_id, marginal in space.marginals.items():
            values, achieved = credible_interval(marginal, args.mass)
            doc["credible_intervals"][attr_id] = {
                "mass": args.mass,
                "values": values,
                "achieved": float(achieved),
            }
    if args.histogram:
        print(render_histograms(space), file=sys.stderr)
    _emit_json(doc, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    kind = {k.value: k for k in FindingKind}[args.kind]
    config = TrialConfig(
        kind=kind,
        n=args.n,
        trials=args.trials,
        truth_low=args.truth_low,
        truth_high=args.truth_high,
        seed=args.seed,
    )
    report = run_trials(config, backend=args.backend)
    _emit_json(report.to_json(), args.out)
    print(
        f"{kind.value} n={report.n}: {report.fires} fires in {report.trials} "
        f"trials (rate {report.empirical_rate:.3e}, analytic "
        f"{report.analytic_rate:.3e}, z={report.z_score:+.2f}, "
        f"{report.soundness_violations} soundness violations, "
        f"backend={report.backend}, {report.elapsed_s:.2f}s)",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_rates(args) -> int:
    table = rates_table()
    _emit_json(table, args.out)
    for row in table["rows"]:
        expected = ", ".join(
            f"{entry['expected']:.4g} of {entry['population']}"
            for entry in row["expected_counts"].values()
        )
        print(
            f"{row['label']}: rate {row['rate']:.4g} ({row['rate_exact']}, "
            f"1-in-{row['one_in']}), expected {expected}, "
            f"observed {row['observed_2021']}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_utility(args) -> int:
    params = DiscreteLaplaceParams(t=args.t, clamp_at_zero=args.clamp)
    report = compare(params)
    _emit_json(report.to_json(), args.out)
    if args.histogram:
        print(render_signed_pmfs(params), file=sys.stderr)
    print(
        f"rround E|err| = {report.rround.expected_abs_distance}, "
        f"dlap(t={args.t}) E|err| = {report.dlap.expected_abs_distance:.4f} "
        f"(closed form {report.dlap.closed_form:.4f}), "
        f"dlap mass within 4 = {report.dlap.mass_within[4]:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randround",
        description="Random-rounding mechanisms, inference scanners and rate "
        "analysis for hierarchical count tables.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", help="write the JSON/CSV result here instead of stdout")

    p = sub.add_parser("round", help="publish a true table through a mechanism")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True, help="true-table CSV")
    p.add_argument("--mechanism", choices=["rround", "dlap"], default="rround")
    p.add_argument("--t", type=float, default=1.45, help="discrete Laplace scale")
    p.add_argument("--clamp", action="store_true", help="clamp dlap output at 0")
    p.add_argument("--seed", type=int, default=0)
    add_common(p)
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("scan", help="scan a published table for vulnerabilities")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True, help="published-table CSV")
    p.add_argument("--kinds", help="comma-separated FindingKind names")
    p.add_argument(
        "--verify",
        action="store_true",
        help="re-check every finding against the enumerator (exit 3 on mismatch)",
    )
    add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("validate", help="check partition sums of a true table")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("enumerate", help="enumerate the solution space of a group")
    p.add_argument("--data", required=True, help="group instance JSON")
    p.add_argument("--k", type=int, help="include the k most likely assignments")
    p.add_argument("--mass", type=float, help="include credible sets at this mass")
    p.add_argument("--exact", action="store_true", help="exact rational weights")
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument(
        "--histogram", action="store_true", help="render marginals to stderr"
    )
    add_common(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("simulate", help="Monte Carlo validation of one condition")
    p.add_argument(
        "--kind", required=True, choices=[k.value for k in FindingKind]
    )
    p.add_argument("--n", type=int, help="rounded sub-attributes (invariant kinds)")
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth-low", type=int, default=11)
    p.add_argument("--truth-high", type=int, default=510)
    p.add_argument("--backend", choices=list(BACKENDS))
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="print the analytic rate table")
    add_common(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("utility", help="compare rounding and discrete Laplace utility")
    p.add_argument("--t", type=float, default=1.45)
    p.add_argument("--clamp", action="store_true")
    p.add_argument(
        "--histogram", action="store_true", help="render signed-error PMFs to stderr"
    )
    add_common(p)
    p.set_defaults(func=cmd_utility)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as e:
        print(f"verification failure: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except CapExceeded as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SchemaError, TableError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
