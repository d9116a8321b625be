"""RIR delegated-extended statistics and the economics around the fee model.

The delegated-extended format is pipe separated::

    registry|cc|type|start|value|date|status[|opaque-id[|extensions...]]

For ``ipv6`` rows ``value`` is the prefix length, not an address count.
Version lines (``2|apnic|...``), summary lines (``apnic|*|ipv6|*|N|summary``)
and ``#`` comments are skipped.
"""

from __future__ import annotations

import datetime as dt
import gzip
import ipaddress
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .fees import format_fiat, to_fraction

YEAR_SECONDS = 365 * 24 * 3600
KEPT_STATUSES = ("allocated", "assigned")

# Annual RIR fee ranges in US$ per allocation size.
RIR_FEE_RANGES = {32: (Fraction(1000), Fraction(2500)), 48: (Fraction(100), Fraction(800))}

PUBLISHED_FIG2 = {32: 17795, 48: 6283, 29: 7903}
PUBLISHED_LARGER_THAN_29 = 191
PUBLISHED_WHOLE_SPACE_COST = Fraction(126, 10) * 10**12
PUBLISHED_WORLD_GDP = Fraction(76) * 10**12
PUBLISHED_YEARLY_TX = 58_700

FIG2_FIXTURE = "delegated-fig2-fixture.txt.gz"


class UnreadableInput(OSError):
    pass


class UnknownSize(KeyError):
    pass


@dataclass(frozen=True)
class DelegationStat:
    registry: str
    country: str
    af: str
    start: str
    prefix_length: int
    date: dt.date | None
    status: str
    opaque_id: str = ""
    extensions: tuple[str, ...] = field(default=(), compare=False)

    def to_line(self) -> str:
        date = self.date.strftime("%Y%m%d") if self.date else ""
        fields = [self.registry, self.country, self.af, self.start,
                  str(self.prefix_length), date, self.status]
        if self.opaque_id or self.extensions:
            fields.append(self.opaque_id)
        fields.extend(self.extensions)
        return "|".join(fields)


class ParseResult(NamedTuple):
    records: list[DelegationStat]
    diagnostics: list[str]


def _lines(source):
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise UnreadableInput(str(exc)) from exc
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        return io.StringIO(raw.decode("utf-8"))
    return source


def parse_delegated_extended(source) -> ParseResult:
    """Parse a file path or an iterable of lines.

    Keeps ipv6 rows whose status is allocated or assigned.  Anything that
    cannot be read as a row is reported in ``diagnostics`` with its line
    number; only I/O failure raises.
    """
    records, diagnostics = [], []
    for lineno, line in enumerate(_lines(source), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if parts[0][:1].isdigit():
            continue  # version header
        if len(parts) >= 6 and parts[1] == "*" and parts[-1] == "summary":
            continue
        if len(parts) < 7:
            diagnostics.append(f"line {lineno}: expected at least 7 fields: {line!r}")
            continue
        registry, cc, af, start, value, date, status = parts[:7]
        if af != "ipv6" or status not in KEPT_STATUSES:
            continue
        try:
            ipaddress.IPv6Address(start)
            length = int(value)
            if not 1 <= length <= 128:
                raise ValueError(f"prefix length {length} out of range")
            when = dt.datetime.strptime(date, "%Y%m%d").date() if date else None
        except ValueError as exc:
            diagnostics.append(f"line {lineno}: {exc}")
            continue
        records.append(DelegationStat(registry, cc, af, start, length, when, status,
                                      parts[7] if len(parts) > 7 else "",
                                      tuple(parts[8:])))
    return ParseResult(records, diagnostics)


class SizeDistribution(NamedTuple):
    histogram: dict[int, int]
    larger_than: int      # allocations with a shorter prefix than ``threshold``
    threshold: int
    total: int


def size_distribution(stats, threshold: int = 29) -> SizeDistribution:
    histogram = Counter(s.prefix_length for s in stats)
    larger = sum(n for length, n in histogram.items() if length < threshold)
    return SizeDistribution(dict(sorted(histogram.items())), larger, threshold,
                            sum(histogram.values()))


def fig2_fixture_path() -> Path:
    return Path(str(resources.files("inblock") / "data" / FIG2_FIXTURE))


def throughput_requirement(yearly_tx: int) -> Fraction:
    """Transactions per second for a yearly volume (365-day year)."""
    if yearly_tx < 0:
        raise ValueError("yearly_tx must be non-negative")
    return Fraction(yearly_tx, YEAR_SECONDS)


def round_significant(x: Fraction, digits: int = 2) -> Decimal:
    """Round half-up to ``digits`` significant figures, exactly."""
    x = Fraction(x)
    if x == 0:
        return Decimal(0)
    exponent = math.floor(math.log10(abs(x)))
    # guard against log10 float error at powers of ten
    if abs(x) >= Fraction(10) ** (exponent + 1):
        exponent += 1
    elif abs(x) < Fraction(10) ** exponent:
        exponent -= 1
    scale = Fraction(10) ** (digits - 1 - exponent)
    scaled = math.floor(abs(x) * scale + Fraction(1, 2))
    value = Decimal(scaled).scaleb(exponent - digits + 1)
    return -value if x < 0 else value


def whole_space_cost(fee_per_32, space_length: int) -> Fraction:
    """Yearly cost of holding a /space_length entirely as /32s."""
    if not 0 <= space_length <= 32:
        raise ValueError("space_length must be within [0, 32]")
    return to_fraction(fee_per_32) * 2 ** (32 - space_length)


class FeePosition(NamedTuple):
    size: int
    fee: Fraction
    rir_min: Fraction
    rir_max: Fraction
    position: str          # "below" | "within" | "above"

    @property
    def above_rir_max(self) -> bool:
        return self.position == "above"


def fee_position(fee_fiat, size: int, table=None) -> FeePosition:
    table = RIR_FEE_RANGES if table is None else table
    if size not in table:
        raise UnknownSize(size)
    low, high = table[size]
    fee = to_fraction(fee_fiat)
    position = "below" if fee < low else "above" if fee > high else "within"
    return FeePosition(size, fee, low, high, position)


def economics_report(fee_32=Fraction(3000), fee_48=Fraction(300), pool_length: int = 20,
                     yearly_tx: int = PUBLISHED_YEARLY_TX) -> dict:
    """Fee comparison, stockpiling cost and throughput figures as plain data."""
    whole = whole_space_cost(fee_32, 0)
    tps = throughput_requirement(yearly_tx)
    return {
        "fees": {
            str(size): {"fee": format_fiat(p.fee), "rir_range": [format_fiat(p.rir_min),
                                                               format_fiat(p.rir_max)],
                        "position": p.position}
            for size, p in ((32, fee_position(fee_32, 32)), (48, fee_position(fee_48, 48)))
        },
        "pool_cost": {"pool_length": pool_length,
                      "blocks_of_32": 2 ** (32 - pool_length),
                      "yearly_cost": format_fiat(whole_space_cost(fee_32, pool_length))},
        "whole_space": {"computed": format_fiat(whole),
                        "computed_sci": f"{float(whole):.4e}",
                        "published": format_fiat(PUBLISHED_WHOLE_SPACE_COST),
                        "published_sci": f"{float(PUBLISHED_WHOLE_SPACE_COST):.4e}",
                        "ratio_computed_to_published": f"{float(whole / PUBLISHED_WHOLE_SPACE_COST):.4f}",
                        "note": "computed = fee_per_32 * 2**32; the published figure "
                                "corresponds to taking 2**32 as 4.2e9",
                        "world_gdp": format_fiat(PUBLISHED_WORLD_GDP)},
        "throughput": {"yearly_tx": yearly_tx, "tx_per_second": str(round_significant(tps, 2)),
                       "exact": str(tps)},
    }
