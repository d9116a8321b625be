"""Registry operations carried in transaction payloads.

A payload is a small JSON object with an ``op`` field.  Builders here keep
the wire format in one place; ``execute`` dispatches a payload to the
registry and returns JSON-ready details for the event log.
"""

from __future__ import annotations

from fractions import Fraction

from .oracles import OracleSample, decimal_string
from .prefix import format_prefix, parse_prefix


class PayloadError(ValueError):
    pass


def allocate(length: int, growth_proof: int | None = None) -> dict:
    payload = {"op": "allocate", "length": length}
    if growth_proof is not None:
        payload["growth_proof"] = growth_proof
    return payload


def renew(allocation_id: int) -> dict:
    return {"op": "renew", "allocation_id": allocation_id}


def metadata(allocation_id: int, pointer: str | None) -> dict:
    return {"op": "metadata", "allocation_id": allocation_id, "pointer": pointer or ""}


def roa(op: str, allocation_id: int, prefix, origin_asn: int, max_length: int | None = None) -> dict:
    if op not in ("roa_register", "roa_revoke"):
        raise PayloadError(f"not a ROA op: {op}")
    text = prefix if isinstance(prefix, str) else format_prefix(prefix)
    return {"op": op, "allocation_id": allocation_id, "prefix": text,
            "origin_asn": origin_asn,
            "max_length": max_length if max_length is not None else parse_prefix(text).length}


def resume() -> dict:
    return {"op": "resume"}


def oracle_update(sample: OracleSample) -> dict:
    return {"op": "oracle_update", **sample.to_json()}


def _roa_record(payload: dict):
    from .registry import RoaRecord
    try:
        return RoaRecord(parse_prefix(payload["prefix"]), int(payload["origin_asn"]),
                         int(payload["max_length"]))
    except KeyError as exc:
        raise PayloadError(f"missing field {exc}") from None


def execute(registry, sender: str, payload: dict, paid: Fraction, now: int) -> dict:
    """Apply ``payload`` from ``sender`` at block time ``now``."""
    op = payload.get("op")
    try:
        if op == "allocate":
            grant = registry.process_allocation_request(
                sender, int(payload["length"]), paid, now,
                growth_proof=payload.get("growth_proof"))
            return {"allocation_ids": [r.id for r in grant.records],
                    "prefixes": [format_prefix(r.prefix) for r in grant.records],
                    "expiration": grant.records[0].expiration,
                    "aggregatable": grant.aggregatable,
                    "required": str(grant.required), "surplus": str(grant.surplus)}
        if op == "renew":
            record = registry.process_renewal(sender, int(payload["allocation_id"]), paid, now)
            return {"allocation_id": record.id, "expiration": record.expiration}
        if op == "metadata":
            registry.update_metadata(sender, int(payload["allocation_id"]), payload.get("pointer"))
            return {"allocation_id": int(payload["allocation_id"])}
        if op == "roa_register":
            registry.register_roa(sender, int(payload["allocation_id"]), _roa_record(payload))
            return {"allocation_id": int(payload["allocation_id"])}
        if op == "roa_revoke":
            registry.revoke_roa(sender, int(payload["allocation_id"]), _roa_record(payload))
            return {"allocation_id": int(payload["allocation_id"])}
        if op == "resume":
            registry.governance_resume(sender)
            return {}
        if op == "oracle_update":
            sample = OracleSample.from_json(payload)
            registry.apply_oracle_update(sample, sender)
            return {"kind": sample.kind, "value": decimal_string(sample.value)}
    except (KeyError, TypeError) as exc:
        raise PayloadError(f"malformed {op} payload: {exc}") from None
    raise PayloadError(f"unknown op {op!r}")
