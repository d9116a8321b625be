"""Run every bundled scenario and print the headline numbers.

Writes events, chain export, snapshot and report for each scenario under
OUT/<scenario>/ (default ./runs), then prints the economics summary.

    python scripts/reproduce.py [OUT]
"""

import argparse
import sys
import time
from pathlib import Path

from inblock.cli import main as cli
from inblock.scenario import bundled_scenarios, run_scenario


def main(out="runs") -> int:
    failures = 0
    for name in sorted(bundled_scenarios()):
        start = time.perf_counter()
        run = run_scenario(name)
        run.write_outputs(Path(out) / name)
        status = "ok" if not run.failures else f"{len(run.failures)} FAILED"
        extra = "".join(f", latency {k}={v}s" for k, v in run.latencies.items())
        print(f"{name:18s} {status:10s} height {run.ledger.height:6d}{extra} "
              f"({time.perf_counter() - start:.2f}s)")
        for f in run.failures:
            print(f"    {f}")
        failures += bool(run.failures)
    print()
    cli(["analyze", "economics"])
    print()
    cli(["analyze", "fig2"])
    return 1 if failures else 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", nargs="?", default="runs", help="output directory")
    sys.exit(main(parser.parse_args().out))
