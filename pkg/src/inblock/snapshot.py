"""Byte-exact registry snapshots.

A snapshot file is one canonical JSON object::

    {"digest": <sha256 hex>, "format_version": 1, "state": {...}}

The digest covers the canonical encoding of ``{"format_version", "state"}``,
so any altered byte is caught before the version is trusted.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path

from .fees import FeeSchedule
from .oracles import OracleSample
from .pool import PoolState
from .prefix import IPV6_WIDTH, Prefix, format_prefix, parse_prefix
from .registry import AllocationRecord, RegistryConfig, RegistryState, RoaRecord

FORMAT_VERSION = 1


class SnapshotError(Exception):
    pass


class CorruptSnapshot(SnapshotError):
    pass


class VersionMismatch(SnapshotError):
    pass


def canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def prefix_to_json(p: Prefix) -> str:
    return format_prefix(p)


def prefix_from_json(text: str, width: int = IPV6_WIDTH) -> Prefix:
    if width == IPV6_WIDTH:
        return parse_prefix(text)
    addr, _, length = text.partition("/")
    return Prefix(int(addr, 16), int(length), width)


def config_to_json(cfg: RegistryConfig) -> dict:
    return {
        "allocation_lengths": list(cfg.allocation_lengths),
        "base_fees": {str(k): str(v) for k, v in sorted(cfg.base_fees.items())},
        "lifetime_seconds": cfg.lifetime_seconds,
        "rate_limit": cfg.rate_limit,
        "rate_window_seconds": cfg.rate_window_seconds,
        "asn_cap": cfg.asn_cap,
        "asn_cap_lengths": list(cfg.asn_cap_lengths),
        "experiment_end": cfg.experiment_end,
        "holddown_seconds": cfg.holddown_seconds,
        "max_rate_age": cfg.max_rate_age,
        "supervisors": sorted(cfg.supervisors),
        "oracle_accounts": sorted(cfg.oracle_accounts),
    }


def config_from_json(obj: dict) -> RegistryConfig:
    return RegistryConfig(
        allocation_lengths=tuple(obj["allocation_lengths"]),
        base_fees={int(k): Fraction(v) for k, v in obj["base_fees"].items()},
        lifetime_seconds=obj["lifetime_seconds"],
        rate_limit=obj["rate_limit"],
        rate_window_seconds=obj["rate_window_seconds"],
        asn_cap=obj["asn_cap"],
        asn_cap_lengths=tuple(obj["asn_cap_lengths"]),
        experiment_end=obj["experiment_end"],
        holddown_seconds=obj["holddown_seconds"],
        max_rate_age=obj["max_rate_age"],
        supervisors=frozenset(obj["supervisors"]),
        oracle_accounts=frozenset(obj["oracle_accounts"]),
    )


def record_to_json(r: AllocationRecord) -> dict:
    return {
        "id": r.id, "prefix": prefix_to_json(r.prefix), "holder": r.holder,
        "created": r.created, "expiration": r.expiration,
        "metadata_pointer": r.metadata_pointer,
        "roas": [[prefix_to_json(roa.prefix), roa.origin_asn, roa.max_length]
                 for roa in sorted(r.roas)],
        "aggregatable_with": (prefix_to_json(r.aggregatable_with)
                              if r.aggregatable_with else None),
    }


def registry_to_json(state: RegistryState) -> dict:
    fs = state.fee_schedule
    return {
        "config": config_to_json(state.config),
        "pool": {"root": prefix_to_json(state.pool.root), "width": state.pool.root.width,
                 "allocated": [prefix_to_json(p) for p in state.pool.allocated()]},
        "allocations": [record_to_json(r) for r in sorted(state.allocations.values(),
                                                          key=lambda r: r.id)],
        "fee_schedule": {"base_fee_fiat": {str(k): str(v)
                                           for k, v in sorted(fs.base_fee_fiat.items())},
                         "base_gdp_index": str(fs.base_gdp_index),
                         "current_gdp_index": str(fs.current_gdp_index)},
        "rate_window": list(state.rate_window),
        "paused": state.paused,
        "next_id": state.next_id,
        "oracle_samples": {k: s.to_json() for k, s in sorted(state.oracle_samples.items())},
        "quarantine": [[t, prefix_to_json(p)] for t, p in state.quarantine],
        "accounting": {k: str(v) for k, v in sorted(state.accounting.items())},
    }


def registry_from_json(obj: dict) -> RegistryState:
    width = obj["pool"]["width"]

    def pfx(text):
        return prefix_from_json(text, width)

    fs = obj["fee_schedule"]
    state = RegistryState(
        pfx(obj["pool"]["root"]), config_from_json(obj["config"]),
        FeeSchedule({int(k): Fraction(v) for k, v in fs["base_fee_fiat"].items()},
                    Fraction(fs["base_gdp_index"]), Fraction(fs["current_gdp_index"])))
    state.pool = PoolState.from_allocated(state.pool.root,
                                          [pfx(t) for t in obj["pool"]["allocated"]])
    for r in obj["allocations"]:
        record = AllocationRecord(
            r["id"], pfx(r["prefix"]), r["holder"], r["created"], r["expiration"],
            r["metadata_pointer"],
            {RoaRecord(pfx(p), asn, ml) for p, asn, ml in r["roas"]},
            pfx(r["aggregatable_with"]) if r["aggregatable_with"] else None)
        state.allocations[record.id] = record
        state.by_prefix[record.prefix] = record.id
    state.rate_window = list(obj["rate_window"])
    state.paused = obj["paused"]
    state.next_id = obj["next_id"]
    state.oracle_samples = {k: OracleSample.from_json(s)
                            for k, s in obj["oracle_samples"].items()}
    state.quarantine = [(t, pfx(p)) for t, p in obj["quarantine"]]
    state.accounting = {k: Fraction(v) for k, v in obj["accounting"].items()}
    return state


def snapshot_bytes(state: RegistryState) -> bytes:
    body = {"format_version": FORMAT_VERSION, "state": registry_to_json(state)}
    digest = hashlib.sha256(canonical(body)).hexdigest()
    return canonical({"digest": digest, **body}) + b"\n"


def restore_bytes(data: bytes) -> RegistryState:
    try:
        obj = json.loads(data)
        body = {"format_version": obj["format_version"], "state": obj["state"]}
        digest = obj["digest"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptSnapshot(f"unreadable snapshot: {exc}") from None
    if hashlib.sha256(canonical(body)).hexdigest() != digest:
        raise CorruptSnapshot("digest mismatch")
    if body["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(
            f"snapshot format {body['format_version']}, expected {FORMAT_VERSION}")
    try:
        return registry_from_json(body["state"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptSnapshot(f"invalid snapshot contents: {exc}") from None


def snapshot(state: RegistryState, path) -> bytes:
    data = snapshot_bytes(state)
    Path(path).write_bytes(data)
    return data


def restore(path) -> RegistryState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptSnapshot(str(exc)) from exc
    return restore_bytes(data)
