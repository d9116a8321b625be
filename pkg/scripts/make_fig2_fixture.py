"""Regenerate the vendored delegated-extended fixture for the allocation-size histogram.

The file is synthetic: addresses, dates, countries and ids are made up, but
the per-length counts of allocated/assigned ipv6 rows equal the published
May-2018 figures (17,795 /32, 6,283 /48, 7,903 /29, 191 shorter than /29).
Filler rows (ipv4, asn, available, reserved) exercise the parser's filters.

    python scripts/make_fig2_fixture.py [output]
"""

import datetime as dt
import gzip
import ipaddress
import sys
from pathlib import Path

REGISTRIES = ["afrinic", "apnic", "arin", "lacnic", "ripencc"]
COUNTRIES = ["ZA", "JP", "US", "BR", "DE", "KE", "CN", "CA", "AR", "FR", "NG", "IN"]
# /19../28 split of the 191 allocations shorter than /29
LARGER = {19: 3, 20: 9, 22: 14, 23: 6, 24: 28, 25: 11, 26: 42, 27: 30, 28: 48}
assert sum(LARGER.values()) == 191

OUT = Path(__file__).resolve().parents[1] / "src/inblock/data/delegated-fig2-fixture.txt.gz"


def blocks(base: str, length: int, count: int):
    net = ipaddress.IPv6Network(base)
    step = 1 << (128 - length)
    for i in range(count):
        yield ipaddress.IPv6Address(int(net.network_address) + i * step).compressed


def rows():
    epoch = dt.date(1999, 7, 1)
    n = 0

    def row(start, length, status="allocated"):
        nonlocal n
        reg = REGISTRIES[n % 5]
        cc = COUNTRIES[n % len(COUNTRIES)]
        date = (epoch + dt.timedelta(days=(n * 7) % 6870)).strftime("%Y%m%d")
        status = status if status != "allocated" else ("assigned" if length == 48 else "allocated")
        n += 1
        return reg, f"{reg}|{cc}|ipv6|{start}|{length}|{date}|{status}|synthetic-{n:05d}"

    for start in blocks("2400::/17", 32, 17795):
        yield row(start, 32)
    for start in blocks("2a00::/16", 29, 7903):
        yield row(start, 29)
    for start in blocks("2620::/32", 48, 6283):
        yield row(start, 48)
    base = int(ipaddress.IPv6Address("2c00::"))
    for length, count in sorted(LARGER.items()):
        for _ in range(count):
            yield row(ipaddress.IPv6Address(base).compressed, length)
            base += 1 << (128 - length)
    # filtered out by the parser
    for i, status in enumerate(["available", "reserved"] * 20):
        yield row(f"2d00:{i:x}::", 32, status)


def main(out=OUT):
    by_reg = {r: [] for r in REGISTRIES}
    for reg, line in rows():
        by_reg[reg].append(line)
    text = ["# synthetic delegated-extended fixture; counts match the May-2018 histogram"]
    for reg, lines in by_reg.items():
        text.append(f"2|{reg}|20180501|{len(lines) + 2}|19990701|20180501|+0000")
        text.append(f"{reg}|*|ipv4|*|1|summary")
        text.append(f"{reg}|*|ipv6|*|{len(lines)}|summary")
        text.append(f"{reg}|ZZ|ipv4|10.{REGISTRIES.index(reg)}.0.0|65536|20100101|allocated|synthetic-ipv4")
        text.append(f"{reg}|ZZ|asn|{64512 + REGISTRIES.index(reg)}|1|20100101|allocated|synthetic-asn")
        text.extend(lines)
    data = ("\n".join(text) + "\n").encode()
    Path(out).write_bytes(gzip.compress(data, mtime=0))
    print(f"wrote {out} ({len(data)} bytes uncompressed)")


if __name__ == "__main__":
    main(*sys.argv[1:])
