"""Fiat fee schedule indexed by world GDP, and fiat-to-coin conversion.

All amounts are ``Fraction``; rounding happens only in ``format_fiat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction


class FeeError(Exception):
    pass


class UnsupportedLength(FeeError):
    pass


class InvalidRate(FeeError):
    pass


DEFAULT_BASE_FEES = {32: Fraction(3000), 48: Fraction(300)}


def to_fraction(value) -> Fraction:
    """Exact conversion; floats go through their shortest repr."""
    if isinstance(value, float):
        value = repr(value)
    return Fraction(value)


@dataclass(frozen=True)
class FeeSchedule:
    base_fee_fiat: dict[int, Fraction] = field(
        default_factory=lambda: dict(DEFAULT_BASE_FEES))
    base_gdp_index: Fraction = Fraction(1)
    current_gdp_index: Fraction = Fraction(1)

    def __post_init__(self):
        if self.base_gdp_index <= 0 or self.current_gdp_index <= 0:
            raise ValueError("GDP index must be positive")
        if any(fee <= 0 for fee in self.base_fee_fiat.values()):
            raise ValueError("base fees must be positive")

    def with_gdp_index(self, index) -> FeeSchedule:
        return replace(self, current_gdp_index=to_fraction(index))


def effective_fee(schedule: FeeSchedule, length: int) -> Fraction:
    """Base fee for ``length`` scaled by GDP growth since deployment."""
    try:
        base = schedule.base_fee_fiat[length]
    except KeyError:
        raise UnsupportedLength(f"/{length} is not an allocation size") from None
    return base * schedule.current_gdp_index / schedule.base_gdp_index


def required_crypto_amount(fee_fiat, rate, *, now: int | None = None,
                           as_of: int | None = None,
                           max_age: int | None = None) -> Fraction:
    """Coins owed for ``fee_fiat`` at ``rate`` fiat per coin.

    When ``now``, ``as_of`` and ``max_age`` are all given, a rate older than
    ``max_age`` seconds is refused.
    """
    rate = to_fraction(rate)
    if rate <= 0:
        raise InvalidRate(f"exchange rate must be positive, got {rate}")
    if None not in (now, as_of, max_age) and now - as_of > max_age:
        raise InvalidRate(f"exchange rate from t={as_of} is stale at t={now}")
    return to_fraction(fee_fiat) / rate


def format_fiat(amount: Fraction) -> str:
    """Cents, rounded half-up."""
    amount = to_fraction(amount)
    cents = math.floor(abs(amount) * 100 + Fraction(1, 2))
    sign = "-" if amount < 0 and cents else ""
    return f"{sign}{cents // 100}.{cents % 100:02d}"
