"""Download live RIR delegated-extended files for exploratory analysis.

Live numbers drift daily and are not what the acceptance checks use; those
run on the vendored fixture.  Files land in ./delegated/ by default:

    python scripts/fetch_delegated.py [--out DIR] [--rir apnic ...]
    inblock analyze fig2 delegated/delegated-apnic-extended-latest
"""

import argparse
import sys
import urllib.request
from pathlib import Path

SOURCES = {
    "afrinic": "https://ftp.afrinic.net/pub/stats/afrinic/delegated-afrinic-extended-latest",
    "apnic": "https://ftp.apnic.net/stats/apnic/delegated-apnic-extended-latest",
    "arin": "https://ftp.arin.net/pub/stats/arin/delegated-arin-extended-latest",
    "lacnic": "https://ftp.lacnic.net/pub/stats/lacnic/delegated-lacnic-extended-latest",
    "ripencc": "https://ftp.ripe.net/pub/stats/ripencc/delegated-ripencc-extended-latest",
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", default="delegated")
    parser.add_argument("--rir", nargs="*", choices=sorted(SOURCES), default=sorted(SOURCES))
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for rir in args.rir:
        url = SOURCES[rir]
        target = out / url.rsplit("/", 1)[1]
        try:
            with urllib.request.urlopen(url, timeout=60) as resp:
                target.write_bytes(resp.read())
        except OSError as exc:
            print(f"{rir}: {exc}", file=sys.stderr)
            failed += 1
            continue
        print(f"{rir}: {target} ({target.stat().st_size} bytes)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
