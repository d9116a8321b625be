"""The registry bylaws as a deterministic single-writer state machine.

Every public operation either completes and mutates the state, or raises a
``Rejection`` (or a fee/pool/oracle error) without mutating anything, with
one deliberate exception: a request that trips the rate limit pauses the
registry and is then rejected.

Nothing here can take an allocation away from its holder before it expires.
"""

from __future__ import annotations

import bisect
import copy
from dataclasses import dataclass, field
from fractions import Fraction

from . import oracles
from .fees import (DEFAULT_BASE_FEES, FeeSchedule, InvalidRate, UnsupportedLength,
                   effective_fee, required_crypto_amount, to_fraction)
from .oracles import EXCHANGE_RATE, OracleSample
from .pool import PoolExhausted, PoolState
from .prefix import Prefix, aggregate, buddy, contains, parent, split

YEAR_SECONDS = 365 * 24 * 3600
DAY_SECONDS = 24 * 3600


class Rejection(Exception):
    """A transaction the bylaws refuse.  ``code`` names the reason."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InsufficientFee(Rejection):
    pass


class RegistryPaused(Rejection):
    pass


class InvalidGrowthProof(Rejection):
    pass


class ExperimentEnded(Rejection):
    pass


class NotHolder(Rejection):
    pass


class AlreadyExpired(Rejection):
    pass


class UnknownAllocation(Rejection):
    pass


class RoaOutsideAllocation(Rejection):
    pass


class AsnCapExceeded(Rejection):
    pass


class UnknownRoa(Rejection):
    pass


class NotPaused(Rejection):
    pass


class NotSupervisor(Rejection):
    pass


@dataclass(frozen=True)
class RegistryConfig:
    allocation_lengths: tuple[int, ...] = (32, 48)
    base_fees: dict[int, Fraction] = field(default_factory=lambda: dict(DEFAULT_BASE_FEES))
    lifetime_seconds: int = YEAR_SECONDS
    rate_limit: int = 100
    rate_window_seconds: int = DAY_SECONDS
    asn_cap: int = 100
    asn_cap_lengths: tuple[int, ...] = (32,)
    experiment_end: int | None = None
    holddown_seconds: int = 0
    max_rate_age: int | None = None
    supervisors: frozenset[str] = frozenset()
    oracle_accounts: frozenset[str] = frozenset()

    def __post_init__(self):
        if set(self.base_fees) != set(self.allocation_lengths):
            raise ValueError("base_fees must price exactly the allocation lengths")
        if self.lifetime_seconds <= 0 or self.rate_window_seconds <= 0:
            raise ValueError("lifetime and rate window must be positive")
        if self.rate_limit < 1 or self.asn_cap < 1 or self.holddown_seconds < 0:
            raise ValueError("rate_limit and asn_cap must be >= 1, holddown >= 0")


@dataclass(frozen=True, order=True)
class RoaRecord:
    prefix: Prefix
    origin_asn: int
    max_length: int

    def __post_init__(self):
        if not 0 <= self.origin_asn < 2**32:
            raise ValueError(f"AS number {self.origin_asn} is not 32-bit")
        if not self.prefix.length <= self.max_length <= self.prefix.width:
            raise ValueError(f"max_length {self.max_length} outside "
                             f"[{self.prefix.length}, {self.prefix.width}]")


@dataclass
class AllocationRecord:
    id: int
    prefix: Prefix
    holder: str
    created: int
    expiration: int
    metadata_pointer: str | None = None
    roas: set[RoaRecord] = field(default_factory=set)
    aggregatable_with: Prefix | None = None

    def distinct_asns(self) -> set[int]:
        return {r.origin_asn for r in self.roas}


@dataclass
class Grant:
    """Result of an accepted allocation request."""
    records: list[AllocationRecord]
    aggregatable: bool | None
    required: Fraction
    surplus: Fraction

    @property
    def prefix(self) -> Prefix:
        return self.records[0].prefix


class RegistryState:
    def __init__(self, pool_root: Prefix, config: RegistryConfig | None = None,
                 fee_schedule: FeeSchedule | None = None):
        self.config = config or RegistryConfig()
        self.pool = PoolState(pool_root)
        self.allocations: dict[int, AllocationRecord] = {}
        self.by_prefix: dict[Prefix, int] = {}
        self.fee_schedule = fee_schedule or FeeSchedule(dict(self.config.base_fees))
        self.rate_window: list[int] = []  # sorted timestamps of recent allocations
        self.paused = False
        self.next_id = 1
        self.oracle_samples: dict[str, OracleSample] = {}
        self.quarantine: list[tuple[int, Prefix]] = []
        self.accounting = {
            "fees_fiat": Fraction(0),        # fiat value of accepted allocations/renewals
            "collected_crypto": Fraction(0),  # coins paid with accepted requests
            "surplus_crypto": Fraction(0),    # overpayment part of the above
            "rejected_crypto": Fraction(0),   # coins kept from rejected requests
        }

    # -- helpers -----------------------------------------------------------

    def _record(self, allocation_id: int) -> AllocationRecord:
        try:
            return self.allocations[allocation_id]
        except KeyError:
            raise UnknownAllocation(f"no allocation #{allocation_id}") from None

    def _held_record(self, requester: str, allocation_id: int) -> AllocationRecord:
        record = self._record(allocation_id)
        if record.holder != requester:
            raise NotHolder(f"{requester} does not hold allocation #{allocation_id}")
        return record

    def _rate_value(self, rate, now: int) -> Fraction:
        if rate is None:
            rate = self.oracle_samples.get(EXCHANGE_RATE)
            if rate is None:
                raise InvalidRate("no exchange rate available")
        if isinstance(rate, OracleSample):
            max_age = self.config.max_rate_age
            if max_age is not None and now - rate.as_of > max_age:
                raise InvalidRate(f"exchange rate from t={rate.as_of} is stale at t={now}")
            rate = rate.value
        rate = to_fraction(rate)
        if rate <= 0:
            raise InvalidRate(f"exchange rate must be positive, got {rate}")
        return rate

    def required_payment(self, length: int, now: int, rate=None, blocks: int = 1) -> Fraction:
        fee = effective_fee(self.fee_schedule, length)
        return blocks * required_crypto_amount(fee, self._rate_value(rate, now))

    def _fully_held(self, p: Prefix, holder: str, length: int) -> bool:
        if p.length == length:
            aid = self.by_prefix.get(p)
            return aid is not None and self.allocations[aid].holder == holder
        if p.length > length:
            return False
        lower, upper = split(p)
        return self._fully_held(lower, holder, length) and self._fully_held(upper, holder, length)

    def holder_aggregate(self, record: AllocationRecord) -> Prefix:
        """Largest prefix around ``record`` made only of its holder's blocks."""
        current = record.prefix
        while current != self.pool.root and self._fully_held(
                buddy(current), record.holder, record.prefix.length):
            current = parent(current)
        return current

    def _window_count(self, now: int) -> int:
        horizon = now - self.config.rate_window_seconds
        return len(self.rate_window) - bisect.bisect_right(self.rate_window, horizon)

    def _prune_window(self, now: int) -> None:
        horizon = now - self.config.rate_window_seconds
        del self.rate_window[:bisect.bisect_right(self.rate_window, horizon)]

    def _growth_plan(self, requester: str, length: int,
                     growth_proof: int | None) -> tuple[Prefix | None, bool | None]:
        if growth_proof is None:
            return None, None
        proof = self.allocations.get(growth_proof)
        if proof is None or proof.holder != requester or proof.prefix.length != length:
            raise InvalidGrowthProof(
                f"allocation #{growth_proof} is not a /{length} held by {requester}")
        held = self.holder_aggregate(proof)
        if held != self.pool.root:
            candidate = buddy(held)
            if self.pool.is_free(candidate):
                return candidate, True
        return None, False

    def quote(self, requester: str, length: int, now: int, rate=None,
              growth_proof: int | None = None) -> Fraction:
        """Coins an allocation request would need right now; no side effects."""
        if length not in self.config.allocation_lengths:
            raise UnsupportedLength(f"/{length} is not an allocation size")
        target, _ = self._growth_plan(requester, length, growth_proof)
        blocks = 1 << (length - target.length) if target is not None else 1
        return self.required_payment(length, now, rate, blocks)

    # -- allocation lifecycle ----------------------------------------------

    def process_allocation_request(self, requester: str, length: int, paid, now: int,
                                   rate=None, growth_proof: int | None = None) -> Grant:
        """Allocate fresh space, or grow an existing holding contiguously.

        With ``growth_proof`` naming an allocation the requester holds, the
        request targets the buddy of the requester's current aggregate around
        that allocation.  If it is free the whole buddy is granted (one record
        per block, each paid for) and the holding doubles into one prefix;
        otherwise a single block is placed sparsely and flagged as not
        aggregatable.
        """
        paid = to_fraction(paid)
        cfg = self.config
        if cfg.experiment_end is not None and now >= cfg.experiment_end:
            raise ExperimentEnded(f"experiment ended at t={cfg.experiment_end}")
        if self.paused:
            raise RegistryPaused("registry is paused pending supervisor review")
        if length not in cfg.allocation_lengths:
            raise UnsupportedLength(f"/{length} is not an allocation size")

        target, aggregatable = self._growth_plan(requester, length, growth_proof)
        blocks = 1 << (length - target.length) if target is not None else 1

        required = self.required_payment(length, now, rate, blocks)
        if paid < required:
            raise InsufficientFee(f"paid {paid}, required {required}")

        if self._window_count(now) + blocks > cfg.rate_limit:
            self.paused = True
            raise RegistryPaused(
                f"rate limit of {cfg.rate_limit} per {cfg.rate_window_seconds}s exceeded")

        if target is not None:
            prefixes = [Prefix(target.address + i * (1 << (target.width - length)),
                               length, target.width) for i in range(blocks)]
            for p in prefixes:
                self.pool.allocate_at(p)
        else:
            prefixes = [self.pool.allocate_sparse(length)]

        self._prune_window(now)
        combined = parent(target) if target is not None else None
        records = []
        for p in prefixes:
            record = AllocationRecord(self.next_id, p, requester, now,
                                      now + cfg.lifetime_seconds,
                                      aggregatable_with=combined)
            self.next_id += 1
            self.allocations[record.id] = record
            self.by_prefix[p] = record.id
            self.rate_window.append(now)
            records.append(record)
        if combined is not None:
            for record in self.allocations.values():
                if record.holder == requester and contains(combined, record.prefix):
                    record.aggregatable_with = combined

        fee = effective_fee(self.fee_schedule, length)
        self.accounting["fees_fiat"] += blocks * fee
        self.accounting["collected_crypto"] += paid
        self.accounting["surplus_crypto"] += paid - required
        return Grant(records, aggregatable, required, paid - required)

    def process_renewal(self, requester: str, allocation_id: int, paid, now: int,
                        rate=None) -> AllocationRecord:
        paid = to_fraction(paid)
        record = self._held_record(requester, allocation_id)
        if now > record.expiration:
            raise AlreadyExpired(
                f"allocation #{allocation_id} expired at t={record.expiration}")
        required = self.required_payment(record.prefix.length, now, rate)
        if paid < required:
            raise InsufficientFee(f"paid {paid}, required {required}")
        record.expiration += self.config.lifetime_seconds
        self.accounting["fees_fiat"] += effective_fee(self.fee_schedule, record.prefix.length)
        self.accounting["collected_crypto"] += paid
        self.accounting["surplus_crypto"] += paid - required
        return record

    def expire_sweep(self, now: int) -> list[Prefix]:
        """Drop allocations whose expiration has passed; return their prefixes."""
        expired = sorted((r for r in self.allocations.values() if r.expiration < now),
                         key=lambda r: (r.expiration, r.id))
        for record in expired:
            del self.allocations[record.id]
            del self.by_prefix[record.prefix]
            self.quarantine.append((now + self.config.holddown_seconds, record.prefix))
        still_held = []
        for release_at, p in self.quarantine:
            if release_at <= now:
                self.pool.release(p)
            else:
                still_held.append((release_at, p))
        self.quarantine = still_held
        return [r.prefix for r in expired]

    def record_rejected_payment(self, paid) -> None:
        self.accounting["rejected_crypto"] += to_fraction(paid)

    # -- metadata and ROAs -------------------------------------------------

    def update_metadata(self, requester: str, allocation_id: int, pointer: str | None) -> None:
        record = self._held_record(requester, allocation_id)
        record.metadata_pointer = pointer or None

    def register_roa(self, requester: str, allocation_id: int, roa: RoaRecord) -> None:
        record = self._held_record(requester, allocation_id)
        if not contains(record.prefix, roa.prefix):
            raise RoaOutsideAllocation(f"{roa.prefix} is outside {record.prefix}")
        if record.prefix.length in self.config.asn_cap_lengths:
            asns = record.distinct_asns() | {roa.origin_asn}
            if len(asns) > self.config.asn_cap:
                raise AsnCapExceeded(
                    f"{record.prefix} would have {len(asns)} distinct origin ASNs "
                    f"(cap {self.config.asn_cap})")
        record.roas.add(roa)

    def revoke_roa(self, requester: str, allocation_id: int, roa: RoaRecord) -> None:
        record = self._held_record(requester, allocation_id)
        if roa not in record.roas:
            raise UnknownRoa(f"{roa} not registered on #{allocation_id}")
        record.roas.remove(roa)

    # -- governance and oracles --------------------------------------------

    def governance_resume(self, supervisor: str) -> None:
        if supervisor not in self.config.supervisors:
            raise NotSupervisor(f"{supervisor} is not a supervisor")
        if not self.paused:
            raise NotPaused("registry is not paused")
        self.paused = False
        self.rate_window.clear()

    def apply_oracle_update(self, sample: OracleSample, signer: str) -> None:
        oracles.apply_oracle_update(self, sample, signer)

    # -- read side ---------------------------------------------------------

    def active_prefixes(self) -> list[Prefix]:
        return sorted(self.by_prefix)

    def holdings(self, holder: str) -> list[AllocationRecord]:
        return [r for r in self.allocations.values() if r.holder == holder]

    def route_report(self) -> dict[str, list[Prefix]]:
        """Per holder, the minimal set of routes covering their allocations."""
        by_holder: dict[str, list[Prefix]] = {}
        for record in self.allocations.values():
            by_holder.setdefault(record.holder, []).append(record.prefix)
        return {h: aggregate(ps) for h, ps in sorted(by_holder.items())}

    def copy(self) -> RegistryState:
        clone = copy.copy(self)
        clone.pool = self.pool.copy()
        clone.allocations = copy.deepcopy(self.allocations)
        clone.by_prefix = dict(self.by_prefix)
        clone.rate_window = list(self.rate_window)
        clone.oracle_samples = dict(self.oracle_samples)
        clone.quarantine = list(self.quarantine)
        clone.accounting = dict(self.accounting)
        return clone


__all__ = [
    "AllocationRecord", "AlreadyExpired", "AsnCapExceeded", "ExperimentEnded", "Grant",
    "InsufficientFee", "InvalidGrowthProof", "InvalidRate", "NotHolder", "NotPaused",
    "NotSupervisor", "PoolExhausted", "RegistryConfig", "RegistryPaused", "RegistryState",
    "Rejection", "RoaOutsideAllocation", "RoaRecord", "UnknownAllocation", "UnknownRoa",
    "UnsupportedLength",
]
