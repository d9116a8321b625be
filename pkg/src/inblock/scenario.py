"""Declarative scenarios driving the ledger and registry on simulated time.

A scenario is a YAML mapping::

    name: basic_allocation
    seed: 0
    genesis:
      pool: 2001:1000::/20
      config: {rate_limit: 100}          # RegistryConfig / ledger settings
      accounts: {alice: "100"}           # name -> coins
      supervisors: [sup]
      oracle_accounts: [feed]
      oracles: [{kind: exchange_rate, value: "200"}]
      oracle_fixture: rates.jsonl        # optional, relative to the file
    steps:
      - at: 16                           # seconds after genesis
      - submit: {from: alice, op: allocate, length: 32, label: a1}
      - confirm: a1
      - expect: {label: a1, outcome: accepted, prefix: 2001:1000::/32, latency: 341}

Step actions: ``at`` / ``advance`` (move the clock, producing due blocks),
``submit``, ``produce`` (n blocks), ``confirm`` (until the label's tx is
``confirmation_depth`` deep), ``expect`` and ``expect_state``.  Keys are
derived from ``seed`` and the account name, so runs are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import yaml

from . import config as settings
from . import payloads
from .ledger import (PRODUCER_ADDRESS, REGISTRY_ADDRESS, SCHEMES, Ledger, LedgerError,
                     Signer)
from .oracles import FixtureProvider, OracleSample, OracleError
from .prefix import PrefixError, format_prefix, parse_prefix
from .registry import RegistryState
from .snapshot import snapshot_bytes

ACTIONS = ("submit", "produce", "confirm", "expect", "expect_state", "advance")
OPS = ("allocate", "renew", "metadata", "roa_register", "roa_revoke", "resume",
       "oracle_update", "transfer")


class ScenarioError(Exception):
    """The scenario file is invalid or cannot be executed."""


class ExpectationFailed(AssertionError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class Scenario:
    name: str
    genesis: dict
    steps: list[dict]
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> Scenario:
        if not isinstance(data, dict) or "genesis" not in data or "steps" not in data:
            raise ScenarioError("scenario needs 'genesis' and 'steps'")
        scenario = cls(str(data.get("name", "scenario")), data["genesis"],
                       list(data["steps"] or []), int(data.get("seed", 0)),
                       Path(base_dir) if base_dir else Path.cwd())
        scenario.validate()
        return scenario

    def validate(self) -> None:
        g = self.genesis
        if "pool" not in g:
            raise ScenarioError("genesis.pool is required")
        try:
            parse_prefix(str(g["pool"]))
        except PrefixError as exc:
            raise ScenarioError(f"genesis.pool: {exc}") from None
        names = set((g.get("accounts") or {}))
        names |= set(g.get("supervisors") or ()) | set(g.get("oracle_accounts") or ())
        labels: set[str] = set()
        last_at = 0
        for i, step in enumerate(self.steps, 1):
            if not isinstance(step, dict):
                raise ScenarioError(f"step {i}: expected a mapping")
            actions = [k for k in step if k in ACTIONS]
            unknown = set(step) - set(ACTIONS) - {"at"}
            if unknown or len(actions) > 1 or (not actions and "at" not in step):
                raise ScenarioError(f"step {i}: expected 'at' and/or one of {ACTIONS}")
            if "at" in step:
                if int(step["at"]) < last_at:
                    raise ScenarioError(f"step {i}: time goes backwards")
                last_at = int(step["at"])
            if "submit" in step:
                sub = step["submit"]
                if sub.get("op") not in OPS:
                    raise ScenarioError(f"step {i}: unknown op {sub.get('op')!r}")
                for key in ("from", "to"):
                    if key in sub and sub[key] not in names:
                        raise ScenarioError(f"step {i}: unknown account {sub[key]!r}")
                if "from" not in sub:
                    raise ScenarioError(f"step {i}: submit needs 'from'")
                for key in ("growth", "allocation"):
                    ref = sub.get(key)
                    if isinstance(ref, str) and ref not in labels:
                        raise ScenarioError(f"step {i}: label {ref!r} not defined earlier")
                if "label" in sub:
                    labels.add(sub["label"])
            for key in ("confirm", "expect"):
                if key in step:
                    ref = step[key] if key == "confirm" else step[key].get("label")
                    if ref is not None and ref not in labels:
                        raise ScenarioError(f"step {i}: label {ref!r} not defined earlier")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return Scenario.from_dict(data, path.parent)


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("inblock") / "scenarios"
    return {Path(str(p)).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def resolve_scenario_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if str(name_or_path) in bundled:
        return bundled[str(name_or_path)]
    raise ScenarioError(f"no scenario file or bundled scenario named {name_or_path!r}")


class ScenarioRun:
    """Executes one scenario; inspect ``ledger``/``registry`` afterwards."""

    def __init__(self, scenario: Scenario, overrides=()):
        self.scenario = scenario
        g = scenario.genesis
        self.scheme = SCHEMES[g.get("scheme", "ed25519")]()
        names = list(g.get("accounts") or {})
        names += [n for n in (g.get("supervisors") or []) + (g.get("oracle_accounts") or [])
                  if n not in names]
        self.signers: dict[str, Signer] = {
            n: self.scheme.keypair(f"{scenario.seed}:{n}".encode()) for n in names}
        self.names = {s.account: n for n, s in self.signers.items()}
        self.names[REGISTRY_ADDRESS] = "registry"
        self.names[PRODUCER_ADDRESS] = "producer"

        file_cfg = dict(g.get("config") or {})
        file_cfg["supervisors"] = [self.signers[n].account for n in g.get("supervisors") or []]
        file_cfg["oracle_accounts"] = [self.signers[n].account
                                       for n in g.get("oracle_accounts") or []]
        if "timestamp" in g:
            file_cfg["genesis_time"] = g["timestamp"]
        try:
            reg_cfg, ledger_cfg = settings.resolve(file_cfg, *overrides)
            self.registry = RegistryState(parse_prefix(str(g["pool"])), reg_cfg)
            self.genesis_time = ledger_cfg["genesis_time"]
            self.depth = ledger_cfg["confirmation_depth"]
            self.ledger = Ledger(self.registry, self.scheme, genesis_time=self.genesis_time,
                                 block_interval=ledger_cfg["block_interval"],
                                 inclusion_delay=ledger_cfg["inclusion_delay"],
                                 max_txs_per_block=ledger_cfg["max_txs_per_block"])
            for name, amount in (g.get("accounts") or {}).items():
                self.ledger.fund(self.signers[name].account, Fraction(str(amount)))
            for s in g.get("oracles") or []:
                sample = OracleSample.from_json({"as_of": self.genesis_time,
                                                 "source_id": "genesis", **s})
                self.registry.oracle_samples[sample.kind] = sample
                if sample.kind == "gdp_index":
                    self.registry.fee_schedule = self.registry.fee_schedule.with_gdp_index(
                        sample.value)
            fixture = g.get("oracle_fixture")
            self.oracle_feed = (FixtureProvider.from_jsonl(scenario.base_dir / fixture)
                                if fixture else None)
        except (ValueError, KeyError, OSError) as exc:
            raise ScenarioError(f"genesis: {exc}") from None
        self.labels: dict[str, list[str]] = {}
        self.latencies: dict[str, int] = {}
        self.failures: list[ExpectationFailed] = []

    # -- helpers -----------------------------------------------------------

    def _allocation_id(self, ref, step: int) -> int:
        if isinstance(ref, int):
            return ref
        for tx_hash in self.labels.get(ref, []):
            details = self.ledger.outcomes.get(tx_hash, {}).get("details", {})
            if "allocation_ids" in details:
                return details["allocation_ids"][0]
        raise ScenarioError(f"step {step}: label {ref!r} has no allocation yet")

    def _payload(self, sub: dict, step: int) -> dict:
        op = sub["op"]
        if op == "allocate":
            growth = sub.get("growth")
            return payloads.allocate(int(sub.get("length", 32)),
                                     None if growth is None else self._allocation_id(growth, step))
        if op in ("renew", "metadata", "roa_register", "roa_revoke"):
            aid = self._allocation_id(sub["allocation"], step)
            if op == "renew":
                return payloads.renew(aid)
            if op == "metadata":
                return payloads.metadata(aid, sub.get("pointer"))
            return payloads.roa(op, aid, str(sub["prefix"]), int(sub["origin_asn"]),
                                sub.get("max_length"))
        if op == "resume":
            return payloads.resume()
        if op == "oracle_update":
            if sub.get("fixture"):
                if self.oracle_feed is None:
                    raise ScenarioError(f"step {step}: no oracle_fixture in genesis")
                sample = self.oracle_feed.get_sample(sub["kind"], self.ledger.clock)
            else:
                sample = OracleSample.from_json({"as_of": self.ledger.clock,
                                                 "source_id": "scenario", **{
                                                     k: sub[k] for k in ("kind", "value")}})
            return payloads.oracle_update(sample)
        return {}

    def _value(self, sub: dict, payload: dict, signer: Signer) -> Fraction:
        pay = sub.get("pay", "auto")
        if pay != "auto":
            return Fraction(str(pay))
        now = self.ledger.clock
        if payload.get("op") == "allocate":
            return self.registry.quote(signer.account, payload["length"], now,
                                       growth_proof=payload.get("growth_proof"))
        if payload.get("op") == "renew":
            record = self.registry.allocations.get(payload["allocation_id"])
            if record is not None:
                return self.registry.required_payment(record.prefix.length, now)
        return Fraction(0)

    def _submit(self, sub: dict, step: int) -> None:
        signer = self.signers[sub["from"]]
        repeat = int(sub.get("repeat", 1))
        every = int(sub.get("every", 0))
        hashes = self.labels.setdefault(sub["label"], []) if "label" in sub else []
        for i in range(repeat):
            if i and every:
                self.ledger.advance_to(self.ledger.clock + every)
            if sub["op"] == "transfer":
                to, payload = self.signers[sub["to"]].account, {}
                value = Fraction(str(sub.get("amount", 0)))
            else:
                to = REGISTRY_ADDRESS
                payload = self._payload(sub, step)
                value = self._value(sub, payload, signer)
            tx = self.ledger.make_transaction(signer, payload, value=value,
                                              tip=Fraction(str(sub.get("tip", 0))), to=to)
            hashes.append(self.ledger.submit_transaction(tx))

    def _fail(self, step: int, message: str) -> None:
        self.failures.append(ExpectationFailed(step, message))

    def _expect(self, exp: dict, step: int) -> None:
        label = exp.get("label")
        hashes = self.labels.get(label, [])
        outcomes = [self.ledger.outcomes.get(h) for h in hashes]
        first = outcomes[0] if outcomes else None
        if "status" in exp:
            status = self.ledger.confirmation_status(hashes[-1], self.depth).status
            if status != exp["status"]:
                self._fail(step, f"{label}: status {status}, expected {exp['status']}")
        if "outcome" in exp and (first is None or first["outcome"] != exp["outcome"]):
            got = first["outcome"] if first else "pending"
            self._fail(step, f"{label}: outcome {got}, expected {exp['outcome']}")
        if "error" in exp:
            got = first["details"].get("error") if first else None
            if got != exp["error"]:
                self._fail(step, f"{label}: error {got}, expected {exp['error']}")
        if "prefix" in exp or "prefixes" in exp:
            got = first["details"].get("prefixes") if first else None
            want = exp.get("prefixes") or [exp["prefix"]]
            want = [format_prefix(parse_prefix(str(p))) for p in want]
            if got != want:
                self._fail(step, f"{label}: prefixes {got}, expected {want}")
        if "aggregatable" in exp:
            got = first["details"].get("aggregatable") if first else None
            if got != exp["aggregatable"]:
                self._fail(step, f"{label}: aggregatable {got}, expected {exp['aggregatable']}")
        if "latency" in exp and self.latencies.get(label) != exp["latency"]:
            self._fail(step, f"{label}: latency {self.latencies.get(label)}, "
                             f"expected {exp['latency']}")
        for key in ("accepted", "rejected"):
            if key in exp:
                got = sum(1 for o in outcomes if o and o["outcome"] == key)
                if got != exp[key]:
                    self._fail(step, f"{label}: {got} {key}, expected {exp[key]}")
        if "first_rejected" in exp:
            got = next((i for i, o in enumerate(outcomes, 1)
                        if o and o["outcome"] == "rejected"), None)
            if got != exp["first_rejected"]:
                self._fail(step, f"{label}: first rejection at {got}, "
                                 f"expected {exp['first_rejected']}")

    def _expect_state(self, exp: dict, step: int) -> None:
        reg = self.registry
        if "paused" in exp and reg.paused != exp["paused"]:
            self._fail(step, f"paused is {reg.paused}, expected {exp['paused']}")
        if "allocations" in exp and len(reg.allocations) != exp["allocations"]:
            self._fail(step, f"{len(reg.allocations)} allocations, "
                             f"expected {exp['allocations']}")
        if "routes" in exp:
            got = self.route_report()
            for name, want in exp["routes"].items():
                want = [format_prefix(parse_prefix(str(p))) for p in want]
                if got.get(name, []) != want:
                    self._fail(step, f"routes of {name}: {got.get(name)}, expected {want}")
        if "fees_fiat" in exp and reg.accounting["fees_fiat"] != Fraction(str(exp["fees_fiat"])):
            self._fail(step, f"fees_fiat {reg.accounting['fees_fiat']}, "
                             f"expected {exp['fees_fiat']}")
        for name, amount in (exp.get("balances") or {}).items():
            got = self.ledger.balance(self.signers[name].account)
            if got != Fraction(str(amount)):
                self._fail(step, f"balance of {name}: {got}, expected {amount}")
        for prefix, holder in (exp.get("holders") or {}).items():
            aid = reg.by_prefix.get(parse_prefix(str(prefix)))
            got = self.names.get(reg.allocations[aid].holder) if aid else None
            if got != holder:
                self._fail(step, f"holder of {prefix}: {got}, expected {holder}")

    # -- driver ------------------------------------------------------------

    def run(self) -> ScenarioRun:
        for i, step in enumerate(self.scenario.steps, 1):
            try:
                if "at" in step:
                    self.ledger.advance_to(self.genesis_time + int(step["at"]))
                if "advance" in step:
                    self.ledger.advance_to(self.ledger.clock + int(step["advance"]))
                elif "submit" in step:
                    self._submit(step["submit"], i)
                elif "produce" in step:
                    self.ledger.produce_blocks(int(step["produce"]))
                elif "confirm" in step:
                    label = step["confirm"]
                    self.latencies[label] = self.ledger.run_until_confirmed(
                        self.labels[label][-1], self.depth)
                elif "expect" in step:
                    self._expect(step["expect"], i)
                elif "expect_state" in step:
                    self._expect_state(step["expect_state"], i)
            except (LedgerError, OracleError, PrefixError, ValueError, KeyError) as exc:
                raise ScenarioError(f"step {i}: {type(exc).__name__}: {exc}") from None
        return self

    # -- outputs -----------------------------------------------------------

    def route_report(self) -> dict[str, list[str]]:
        return {self.names.get(h, h): [format_prefix(p) for p in routes]
                for h, routes in self.registry.route_report().items()}

    def report(self) -> dict:
        counts, free = self.registry.pool.utilization()
        return {
            "scenario": self.scenario.name,
            "height": self.ledger.height,
            "clock": self.ledger.clock,
            "latencies": self.latencies,
            "routes": self.route_report(),
            "paused": self.registry.paused,
            "utilization": {"allocated": {str(k): v for k, v in counts.items()},
                            "free_fraction": str(free)},
            "accounting": {k: str(v) for k, v in self.registry.accounting.items()},
            "accounts": {n: self.signers[n].account for n in sorted(self.signers)},
            "failures": [str(f) for f in self.failures],
        }

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.ledger.events)

    def write_outputs(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"events": out / "events.jsonl", "chain": out / "chain.jsonl",
                 "snapshot": out / "snapshot.json", "report": out / "report.json"}
        paths["events"].write_text(self.events_jsonl())
        paths["chain"].write_text(self.ledger.export())
        paths["snapshot"].write_bytes(snapshot_bytes(self.registry))
        paths["report"].write_text(json.dumps(self.report(), indent=2, sort_keys=True) + "\n")
        return paths


def run_scenario(scenario, overrides=()) -> ScenarioRun:
    """Load (if needed) and execute a scenario; expectation failures are collected."""
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(resolve_scenario_path(scenario))
    return ScenarioRun(scenario, overrides).run()
