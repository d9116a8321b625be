"""Command-line front end.

    inblock run <scenario> [--out DIR]
    inblock query {allocations,allocation,roas,utilization,routes} --snapshot PATH
    inblock chain {verify,status} PATH
    inblock analyze {fig2,economics}
    inblock snapshot <path> [--scenario S]   |   inblock restore <path>

Exit codes: 0 success, 1 expectation/verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import config as settings
from .fees import format_fiat
from .ledger import (DEFAULT_BLOCK_INTERVAL, DEFAULT_CONFIRMATION_DEPTH,
                     DEFAULT_INCLUSION_DELAY, end_to_end_allocation_latency, load_chain,
                     verify_chain)
from .prefix import PrefixError, format_prefix, parse_prefix
from .registry import RegistryState
from .rirstats import (PUBLISHED_FIG2, PUBLISHED_LARGER_THAN_29, UnreadableInput,
                       economics_report, fig2_fixture_path, parse_delegated_extended,
                       size_distribution)
from .scenario import ScenarioError, run_scenario
from .snapshot import SnapshotError, restore, snapshot, snapshot_bytes

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _emit(args, data, table_rows=None, headers=None) -> None:
    if args.json or table_rows is None:
        print(json.dumps(data, indent=2, sort_keys=True))
        return
    widths = [max(len(str(x)) for x in col) for col in zip(headers, *table_rows)] \
        if table_rows else [len(h) for h in headers]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in table_rows:
        print("  ".join(str(x).ljust(w) for x, w in zip(row, widths)))


def _overrides(args) -> list[dict]:
    layers = []
    if getattr(args, "config", None):
        layers.append(settings.file_layer(args.config))
    layers.append(settings.env_layer())
    layers.append(settings.flag_layer(getattr(args, "set", None)))
    return layers


# -- run ----------------------------------------------------------------------

def cmd_run(args) -> int:
    run = run_scenario(args.scenario, _overrides(args))
    if args.out:
        paths = run.write_outputs(args.out)
        print(f"wrote {', '.join(str(p) for p in paths.values())}", file=sys.stderr)
    report = run.report()
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(f"scenario {report['scenario']}: height {report['height']}, "
              f"{sum(len(v) for v in report['routes'].values())} routes, "
              f"paused={report['paused']}")
        for label, seconds in report["latencies"].items():
            print(f"  latency {label}: {seconds} s")
        for holder, routes in report["routes"].items():
            print(f"  {holder}: {' '.join(routes)}")
        for failure in report["failures"]:
            print(f"  FAILED {failure}")
    return EXIT_FAILED if run.failures else EXIT_OK


# -- query --------------------------------------------------------------------

def _load_state(args) -> RegistryState:
    return restore(args.snapshot)


def cmd_query(args) -> int:
    state = _load_state(args)
    if args.what == "allocations":
        rows = [(r.id, format_prefix(r.prefix), r.holder, r.expiration,
                 r.metadata_pointer or "", len(r.roas)) for r in state.allocations.values()]
        data = [dict(zip(("id", "prefix", "holder", "expiration", "metadata", "roas"), row))
                for row in rows]
        _emit(args, data, rows, ["id", "prefix", "holder", "expiration", "metadata", "roas"])
        return EXIT_OK
    if args.what in ("allocation", "roas"):
        if args.id is None:
            raise InputError(f"query {args.what} needs an allocation id")
        record = state.allocations.get(args.id)
        if record is None:
            print(f"UnknownAllocation: #{args.id}", file=sys.stderr)
            return EXIT_INPUT
        roas = [{"prefix": format_prefix(r.prefix), "origin_asn": r.origin_asn,
                 "max_length": r.max_length} for r in sorted(record.roas)]
        if args.what == "roas":
            _emit(args, roas, [tuple(r.values()) for r in roas],
                  ["prefix", "origin_asn", "max_length"])
            return EXIT_OK
        data = {"id": record.id, "prefix": format_prefix(record.prefix),
                "holder": record.holder, "created": record.created,
                "expiration": record.expiration, "metadata_pointer": record.metadata_pointer,
                "aggregatable_with": (format_prefix(record.aggregatable_with)
                                      if record.aggregatable_with else None),
                "roas": roas}
        _emit(args, data)
        return EXIT_OK
    if args.what == "utilization":
        counts, free = state.pool.utilization()
        data = {"pool": format_prefix(state.pool.root),
                "allocated": {str(k): v for k, v in counts.items()},
                "free_fraction": str(free), "free_percent": f"{float(free) * 100:.4f}"}
        _emit(args, data, [(f"/{k}", v) for k, v in counts.items()], ["length", "allocated"])
        if not args.json:
            print(f"free fraction {free} ({float(free) * 100:.4f}%)")
        return EXIT_OK
    routes = {h: [format_prefix(p) for p in ps] for h, ps in state.route_report().items()}
    _emit(args, routes, [(h, " ".join(ps)) for h, ps in routes.items()], ["holder", "routes"])
    return EXIT_OK


# -- chain --------------------------------------------------------------------

def cmd_chain(args) -> int:
    try:
        blocks = load_chain(Path(args.path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read chain export: {exc}") from None
    if args.what == "verify":
        bad = verify_chain(blocks)
        data = {"blocks": len(blocks), "ok": bad is None, "first_bad_height": bad}
        if args.json:
            print(json.dumps(data, sort_keys=True))
        elif bad is None:
            print(f"ok: {len(blocks)} blocks verified")
        else:
            print(f"FirstBadHeight({bad})")
        return EXIT_OK if bad is None else EXIT_FAILED
    if not args.tx:
        raise InputError("chain status needs --tx HASH")
    tip = blocks[-1].height if blocks else 0
    height = next((b.height for b in blocks for tx in b.transactions if tx.hash == args.tx), None)
    if height is None:
        status = "pending"
    else:
        status = "confirmed" if tip - height >= args.depth else "included"
    print(json.dumps({"tx": args.tx, "status": status, "height": height}, sort_keys=True))
    return EXIT_OK


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    if args.what == "fig2":
        path = args.file or fig2_fixture_path()
        parsed = parse_delegated_extended(path)
        dist = size_distribution(parsed.records, args.threshold)
        if args.csv:
            writer = csv.writer(sys.stdout)
            writer.writerow(["prefix_length", "count"])
            for length, n in dist.histogram.items():
                writer.writerow([length, n])
            writer.writerow([f"<{dist.threshold}", dist.larger_than])
            return EXIT_OK
        data = {"file": str(path), "histogram": {str(k): v for k, v in dist.histogram.items()},
                f"larger_than_{dist.threshold}": dist.larger_than, "total": dist.total,
                "diagnostics": parsed.diagnostics[:20],
                "diagnostic_count": len(parsed.diagnostics)}
        rows = [(f"/{k}", v) for k, v in dist.histogram.items()]
        rows.append((f"shorter than /{dist.threshold}", dist.larger_than))
        _emit(args, data, rows, ["size", "count"])
        if not args.json and args.threshold == 29:
            match = all(dist.histogram.get(k) == v for k, v in PUBLISHED_FIG2.items()) \
                and dist.larger_than == PUBLISHED_LARGER_THAN_29
            print(f"matches May-2018 published counts: {match}")
        return EXIT_OK
    report = economics_report(pool_length=args.pool_length)
    report["latency"] = {
        "inclusion_delay": DEFAULT_INCLUSION_DELAY, "block_interval": DEFAULT_BLOCK_INTERVAL,
        "depth": DEFAULT_CONFIRMATION_DEPTH,
        "seconds": end_to_end_allocation_latency()}
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return EXIT_OK
    for size, f in report["fees"].items():
        print(f"/{size}: fee ${f['fee']}  RIR range ${f['rir_range'][0]}-${f['rir_range'][1]}"
              f"  -> {f['position']}")
    pc = report["pool_cost"]
    print(f"holding a /{pc['pool_length']} ({pc['blocks_of_32']} x /32): "
          f"${pc['yearly_cost']} per year")
    ws = report["whole_space"]
    print(f"whole IPv6 space as /32s: ${ws['computed']} ({ws['computed_sci']}); "
          f"published figure ${ws['published']} ({ws['published_sci']}), "
          f"ratio {ws['ratio_computed_to_published']}")
    print(f"  note: {ws['note']}; world GDP ${ws['world_gdp']}")
    tp = report["throughput"]
    print(f"throughput: {tp['yearly_tx']} tx/year = {tp['tx_per_second']} tx/s")
    print(f"latency: {report['latency']['seconds']} s to {DEFAULT_CONFIRMATION_DEPTH} "
          f"confirmations")
    return EXIT_OK


# -- snapshot / restore ---------------------------------------------------------

def cmd_snapshot(args) -> int:
    if args.scenario:
        state = run_scenario(args.scenario, _overrides(args)).registry
    else:
        reg_cfg, _ = settings.resolve(*_overrides(args))
        state = RegistryState(parse_prefix(args.pool), reg_cfg)
    data = snapshot(state, args.path)
    print(f"wrote {args.path} ({len(data)} bytes, {len(state.allocations)} allocations)")
    return EXIT_OK


def cmd_restore(args) -> int:
    state = restore(args.path)
    original = Path(args.path).read_bytes()
    identical = snapshot_bytes(state) == original
    if args.out:
        Path(args.out).write_bytes(snapshot_bytes(state))
    counts, free = state.pool.utilization()
    print(json.dumps({"pool": format_prefix(state.pool.root),
                      "allocations": len(state.allocations), "paused": state.paused,
                      "free_fraction": str(free), "byte_identical": identical,
                      "fees_fiat": format_fiat(state.accounting["fees_fiat"])},
                     sort_keys=True))
    return EXIT_OK if identical else EXIT_FAILED


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inblock", description=__doc__.split("\n")[0])
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_flags(p):
        p.add_argument("--config", help="YAML settings file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a setting (repeatable)")

    p = sub.add_parser("run", help="execute a scenario file or bundled scenario name")
    p.add_argument("scenario")
    p.add_argument("--out", help="directory for events, chain, snapshot and report")
    config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("query", help="read a registry snapshot")
    p.add_argument("what", choices=["allocations", "allocation", "roas", "utilization", "routes"])
    p.add_argument("id", nargs="?", type=int)
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("chain", help="inspect a chain export")
    p.add_argument("what", choices=["verify", "status"])
    p.add_argument("path")
    p.add_argument("--tx")
    p.add_argument("--depth", type=int, default=DEFAULT_CONFIRMATION_DEPTH)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("analyze", help="RIR statistics and economics")
    p.add_argument("what", choices=["fig2", "economics"])
    p.add_argument("file", nargs="?", help="delegated-extended file (default: vendored fixture)")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--threshold", type=int, default=29)
    p.add_argument("--pool-length", type=int, default=20)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("snapshot", help="write a registry snapshot")
    p.add_argument("path")
    p.add_argument("--scenario", help="snapshot the final state of this scenario")
    p.add_argument("--pool", default="2001:1000::/20", help="pool for an empty registry")
    config_flags(p)
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("restore", help="validate and load a registry snapshot")
    p.add_argument("path")
    p.add_argument("--out", help="re-serialize the restored state here")
    p.set_defaults(func=cmd_restore)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    # allow --json after the subcommand too
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    argv = [a for a in argv if a != "--json"]
    args = parser.parse_args(argv)
    args.json = as_json
    try:
        return args.func(args)
    except (InputError, ScenarioError, SnapshotError, settings.ConfigError, UnreadableInput,
            PrefixError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
