"""Layered settings: defaults < scenario/config file < INBLOCK_* env < flags.

Keys mirror ``RegistryConfig`` fields plus the ledger parameters below.
Every layer is a flat mapping; values may be strings and are coerced.
"""

from __future__ import annotations

import dataclasses
import os
from fractions import Fraction

import yaml

from .registry import RegistryConfig

ENV_PREFIX = "INBLOCK_"

LEDGER_DEFAULTS = {
    "genesis_time": 1_600_000_000,
    "block_interval": 17,
    "inclusion_delay": 120,
    "max_txs_per_block": 500,
    "confirmation_depth": 12,
}
REGISTRY_KEYS = {f.name for f in dataclasses.fields(RegistryConfig)}


class ConfigError(ValueError):
    pass


def _int_list(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    return tuple(int(v) for v in value)


def _str_set(value) -> frozenset[str]:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    return frozenset(str(v) for v in value)


def _fees(value) -> dict[int, Fraction]:
    if isinstance(value, str):
        pairs = (item.split(":") for item in value.replace(" ", "").split(",") if item)
        return {int(k): Fraction(v) for k, v in pairs}
    return {int(k): Fraction(str(v)) for k, v in value.items()}


def _optional_int(value):
    if value is None or (isinstance(value, str) and value.lower() in ("", "none", "null")):
        return None
    return int(value)


COERCE = {
    "allocation_lengths": _int_list,
    "asn_cap_lengths": _int_list,
    "base_fees": _fees,
    "supervisors": _str_set,
    "oracle_accounts": _str_set,
    "experiment_end": _optional_int,
    "max_rate_age": _optional_int,
}


def coerce(key: str, value):
    if key not in REGISTRY_KEYS and key not in LEDGER_DEFAULTS:
        raise ConfigError(f"unknown setting {key!r}")
    try:
        return COERCE.get(key, int)(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


def env_layer(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    layer = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            if key in REGISTRY_KEYS or key in LEDGER_DEFAULTS:
                layer[key] = value
    return layer


def file_layer(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return data


def flag_layer(assignments) -> dict:
    layer = {}
    for item in assignments or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}")
        layer[key.strip()] = value.strip()
    return layer


def resolve(*layers) -> tuple[RegistryConfig, dict]:
    """Merge layers left to right; return (registry config, ledger settings)."""
    merged: dict = {}
    for layer in layers:
        for key, value in (layer or {}).items():
            merged[key] = coerce(key, value)
    reg = {k: v for k, v in merged.items() if k in REGISTRY_KEYS}
    if "allocation_lengths" in reg and "base_fees" not in reg:
        defaults = RegistryConfig().base_fees
        reg["base_fees"] = {k: defaults[k] for k in reg["allocation_lengths"] if k in defaults}
    ledger = {**LEDGER_DEFAULTS, **{k: v for k, v in merged.items() if k in LEDGER_DEFAULTS}}
    try:
        return RegistryConfig(**reg), ledger
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
