"""External data feeding the registry: exchange rate, GDP index, tx fee.

Providers answer "latest sample not after ``now``".  Samples reach the
registry only as signed ledger transactions (``apply_oracle_update``) so a
replay of the chain sees exactly the same values.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .fees import to_fraction

EXCHANGE_RATE = "exchange_rate"
GDP_INDEX = "gdp_index"
TX_FEE_ESTIMATE = "tx_fee_estimate"
KINDS = (EXCHANGE_RATE, GDP_INDEX, TX_FEE_ESTIMATE)


class OracleError(Exception):
    pass


class NoSample(OracleError):
    pass


class StaleSample(OracleError):
    pass


class NotOracleAccount(OracleError):
    pass


class StaleUpdate(OracleError):
    pass


@dataclass(frozen=True)
class OracleSample:
    kind: str
    value: Fraction
    as_of: int
    source_id: str = "static"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        object.__setattr__(self, "value", to_fraction(self.value))
        if self.value <= 0:
            raise ValueError(f"oracle value must be positive, got {self.value}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "value": decimal_string(self.value),
                "as_of": self.as_of, "source_id": self.source_id}

    @classmethod
    def from_json(cls, obj: dict) -> OracleSample:
        if isinstance(obj["value"], float):
            raise ValueError("oracle values must be decimal strings, not floats")
        return cls(obj["kind"], Fraction(str(obj["value"])), int(obj["as_of"]),
                   obj.get("source_id", "fixture"))


def decimal_string(value: Fraction) -> str:
    """Exact decimal text when one exists, else ``n/d``."""
    value = Fraction(value)
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return str(value)
    places = max(twos, fives)
    scaled = value * 10**places
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    if not places:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


class StaticProvider:
    """Constant values, valid at any time."""

    def __init__(self, **values):
        self.values = {k: to_fraction(v) for k, v in values.items()}
        for kind in self.values:
            if kind not in KINDS:
                raise ValueError(f"unknown oracle kind {kind!r}")

    def get_sample(self, kind: str, now: int, max_age: int | None = None) -> OracleSample:
        if kind not in self.values:
            raise NoSample(f"no {kind} configured")
        return OracleSample(kind, self.values[kind], now, "static")


class FixtureProvider:
    """Timestamped series, e.g. loaded from a JSON-lines fixture file."""

    def __init__(self, samples):
        self.series: dict[str, list[OracleSample]] = {}
        for s in samples:
            series = self.series.setdefault(s.kind, [])
            if series and s.as_of <= series[-1].as_of:
                raise ValueError(f"{s.kind} samples must have increasing as_of")
            series.append(s)

    @classmethod
    def from_jsonl(cls, path) -> FixtureProvider:
        samples = []
        for line in Path(path).read_text().splitlines():
            if line.strip():
                samples.append(OracleSample.from_json(json.loads(line)))
        return cls(samples)

    def get_sample(self, kind: str, now: int, max_age: int | None = None) -> OracleSample:
        series = self.series.get(kind, [])
        i = bisect.bisect_right([s.as_of for s in series], now)
        if i == 0:
            raise NoSample(f"no {kind} sample at or before t={now}")
        sample = series[i - 1]
        if max_age is not None and now - sample.as_of > max_age:
            raise StaleSample(f"{kind} sample from t={sample.as_of} is stale at t={now}")
        return sample


def get_sample(provider, kind: str, now: int, max_age: int | None = None) -> OracleSample:
    return provider.get_sample(kind, now, max_age)


def apply_oracle_update(state, sample: OracleSample, signer: str) -> None:
    """Install ``sample`` in a registry state, in place.

    ``signer`` must be one of the configured oracle accounts and the sample
    must be strictly newer than the stored one of the same kind.
    """
    if signer not in state.config.oracle_accounts:
        raise NotOracleAccount(f"{signer} is not an oracle account")
    current = state.oracle_samples.get(sample.kind)
    if current is not None and sample.as_of <= current.as_of:
        raise StaleUpdate(
            f"{sample.kind} as_of {sample.as_of} not newer than {current.as_of}")
    state.oracle_samples[sample.kind] = sample
    if sample.kind == GDP_INDEX:
        state.fee_schedule = state.fee_schedule.with_gdp_index(sample.value)
