"""The twelve acceptance criteria, one test each.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists one
PASS/FAIL line per criterion.
"""

import dataclasses
import json
import random
import time
from fractions import Fraction

import pytest

from inblock.cli import main as cli_main
from inblock.fees import FeeSchedule, effective_fee
from inblock.ledger import end_to_end_allocation_latency, load_chain, verify_chain
from inblock.pool import PoolExhausted, PoolState
from inblock.prefix import Prefix, parse_prefix
from inblock.registry import (AlreadyExpired, AsnCapExceeded, InvalidGrowthProof, NotHolder,
                              NotSupervisor, RegistryConfig, RegistryPaused, RegistryState,
                              RoaRecord)
from inblock.rirstats import (economics_report, fee_position, round_significant,
                              throughput_requirement, whole_space_cost)
from inblock.scenario import Scenario, bundled_scenarios, run_scenario
from inblock.snapshot import snapshot_bytes

from oracles import (POOL_20, SMALL_ROOT, brute_force_placement, enumerated_placement,
                     overlapping_pairs, small_registry)

YEAR = 365 * 86400


def criterion(n, title):
    return pytest.mark.criterion(n, title)


# -- 1 ----------------------------------------------------------------------------

def _random_sequence(rng, reg, lengths, steps):
    """Allocate, grow, renew and let lapse; check uniqueness after every step."""
    now = 0
    for _ in range(steps):
        roll = rng.random()
        ids = list(reg.allocations)
        holder = rng.choice("abc")
        try:
            if roll < 0.45 or not ids:
                length = rng.choice(lengths)
                reg.process_allocation_request(holder, length, 10**9, now, rate=1)
            elif roll < 0.65:
                proof = reg.allocations[rng.choice(ids)]
                reg.process_allocation_request(proof.holder, proof.prefix.length, 10**9, now,
                                               rate=1, growth_proof=proof.id)
            elif roll < 0.8:
                record = reg.allocations[rng.choice(ids)]
                reg.process_renewal(record.holder, record.id, 10**9, now, rate=1)
            else:
                # time passes; lapsed allocations are swept and their space released
                now += rng.randrange(1, 2 * reg.config.lifetime_seconds)
                reg.expire_sweep(now)
        except (PoolExhausted, InvalidGrowthProof, NotHolder, AlreadyExpired):
            pass
        active = reg.active_prefixes()
        if overlapping_pairs(active) or active != reg.pool.allocated():
            return False
    return True


@criterion(1, "uniqueness: 10,000 random sequences, 8-bit and /20 pools, < 60 s")
def test_c1_uniqueness_property_suite():
    rng = random.Random(20180501)
    start = time.perf_counter()
    clean = 0
    for i in range(10_000):
        if i % 2:
            reg = small_registry(lifetime_seconds=1000, rate_limit=10**9)
            ok = _random_sequence(rng, reg, (4, 6), 12)
        else:
            reg = RegistryState(POOL_20, RegistryConfig(lifetime_seconds=1000,
                                                        rate_limit=10**9))
            ok = _random_sequence(rng, reg, (32, 48), 12)
        clean += ok
    elapsed = time.perf_counter() - start
    print(f"criterion 1: {clean}/10000 sequences without overlap in {elapsed:.1f} s")
    assert clean == 10_000
    assert elapsed < 60


# -- 2 ----------------------------------------------------------------------------

def _placement_trace(rng, root, lengths, oracle, states):
    pool = PoolState(root)
    mismatches = 0
    for _ in range(states):
        for length in lengths:
            expected = oracle(root, pool.allocated(), length)
            try:
                got = pool.copy().allocate_sparse(length)
            except PoolExhausted:
                got = None
            mismatches += got != expected
        held = pool.allocated()
        if held and rng.random() < 0.3:
            pool.release(rng.choice(held))
        else:
            try:
                pool.allocate_sparse(rng.choice(lengths))
            except PoolExhausted:
                pool.release(rng.choice(held))
    return mismatches


@criterion(2, "sparse placement equals brute-force search on 1,000 states, < 30 s")
def test_c2_sparse_oracle_equivalence():
    rng = random.Random(7)
    start = time.perf_counter()
    real = _placement_trace(rng, POOL_20, (32, 48), brute_force_placement, 1000)
    small = _placement_trace(rng, SMALL_ROOT, (4, 6), enumerated_placement, 1000)
    elapsed = time.perf_counter() - start
    print(f"criterion 2: {real} + {small} mismatches over 2 x 1000 states "
          f"in {elapsed:.1f} s")
    assert real == 0 and small == 0
    assert elapsed < 30


# -- 3 ----------------------------------------------------------------------------

@criterion(3, "aggregation: /32 grown twice announces as one /30")
def test_c3_aggregation_scenario():
    run = run_scenario("aggregation")
    assert run.failures == []
    routes = run.route_report()
    assert routes["alice"] == ["2001:1000::/30"]
    alice = run.signers["alice"].account
    flags = [e["details"]["aggregatable"] for e in run.ledger.events
             if e["kind"] == "allocate" and e["details"].get("allocation_ids")
             and run.registry.allocations[e["details"]["allocation_ids"][0]].holder == alice]
    assert flags == [None, True, True]  # the first grant has nothing to aggregate with
    assert {str(r.aggregatable_with) for r in run.registry.holdings(alice)} == \
        {"2001:1000::/30"}


# -- 4 ----------------------------------------------------------------------------

@criterion(4, "fees: $3000 (/32) above and $300 (/48) within RIR ranges, exact")
def test_c4_fee_figures():
    schedule = FeeSchedule(current_gdp_index=Fraction(1))
    fee32, fee48 = effective_fee(schedule, 32), effective_fee(schedule, 48)
    assert (fee32, fee48) == (Fraction(3000), Fraction(300))
    p32, p48 = fee_position(fee32, 32), fee_position(fee48, 48)
    assert (p32.rir_min, p32.rir_max) == (1000, 2500) and p32.position == "above"
    assert (p48.rir_min, p48.rir_max) == (100, 800) and p48.position == "within"


# -- 5 ----------------------------------------------------------------------------

@criterion(5, "latency: 341 s measured equals closed form")
def test_c5_latency():
    run = run_scenario("basic_allocation")
    assert run.failures == []
    measured = run.latencies["first"]
    assert measured == end_to_end_allocation_latency(120, 17, 12) == 341


# -- 6 ----------------------------------------------------------------------------

def _bulk_scenario(accounts, per_account):
    names = [f"user{i}" for i in range(accounts)]
    steps = [{"submit": {"from": n, "op": "allocate", "length": 48,
                         "repeat": per_account, "label": n}} for n in names]
    steps.append({"produce": per_account * accounts // 500 + 12})
    steps += [{"expect": {"label": n, "accepted": per_account}} for n in names]
    return Scenario.from_dict({
        "name": "bulk", "seed": 0,
        "genesis": {"pool": "2001:1000::/20",
                    "config": {"rate_limit": 10**9, "max_txs_per_block": 500},
                    "accounts": {n: str(per_account * 2) for n in names},
                    "oracles": [{"kind": "exchange_rate", "value": "200"}]},
        "steps": steps})


@criterion(6, "throughput: 0.0019 tx/s needed; 10,000-tx scenario in < 100 s")
def test_c6_throughput():
    assert str(round_significant(throughput_requirement(58_700), 2)) == "0.0019"
    scenario = _bulk_scenario(10, 1000)
    start = time.perf_counter()
    run = run_scenario(scenario)
    elapsed = time.perf_counter() - start
    txs = sum(len(b.transactions) for b in run.ledger.blocks)
    print(f"criterion 6: {txs} tx in {elapsed:.1f} s = {txs / elapsed:.0f} tx/s")
    assert run.failures == []
    assert txs == 10_000 and len(run.registry.allocations) == 10_000
    assert elapsed < 100


# -- 7 ----------------------------------------------------------------------------

@criterion(7, "allocation-size histogram from the vendored fixture, exact")
def test_c7_fig2(capsys):
    assert cli_main(["analyze", "fig2", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    hist = data["histogram"]
    assert (hist["32"], hist["48"], hist["29"]) == (17_795, 6_283, 7_903)
    assert data["larger_than_29"] == 191


# -- 8 ----------------------------------------------------------------------------

@criterion(8, "expiry reclaims the identical prefix; renewed allocation lives 10 years")
def test_c8_expiration_and_renewal():
    for name in ("expiration", "renewal_decade"):
        assert run_scenario(name).failures == []
    reg = RegistryState(POOL_20)
    lapsed = reg.process_allocation_request("a", 32, 3000, 0, rate=1).records[0]
    assert reg.expire_sweep(lapsed.expiration) == []
    assert reg.expire_sweep(lapsed.expiration + 1) == [lapsed.prefix]
    again = reg.process_allocation_request("c", 32, 3000, lapsed.expiration + 1, rate=1)
    assert again.prefix == lapsed.prefix

    reg = RegistryState(POOL_20)
    kept = reg.process_allocation_request("b", 32, 3000, 0, rate=1).records[0]
    for year in range(1, 11):
        reg.process_renewal("b", kept.id, 3000, year * YEAR, rate=1)
        assert reg.expire_sweep(year * YEAR + 1) == []
    assert reg.allocations[kept.id].expiration == 11 * YEAR


# -- 9 ----------------------------------------------------------------------------

@criterion(9, "ASN cap: never more than 100 distinct ASNs; 100 accepted, 101 rejected")
def test_c9_asn_cap():
    rng = random.Random(9)
    reg = RegistryState(POOL_20)
    records = [reg.process_allocation_request(h, 32, 3000, 0, rate=1).records[0]
               for h in ("a", "b")]
    for _ in range(20_000):
        record = rng.choice(records)
        sub = Prefix(record.prefix.address + (rng.randrange(16) << 80), 48)
        roa = RoaRecord(sub, rng.randrange(160), 48)
        try:
            if rng.random() < 0.8:
                reg.register_roa(record.holder, record.id, roa)
            elif roa in record.roas:
                reg.revoke_roa(record.holder, record.id, roa)
        except AsnCapExceeded:
            pass
        assert len(record.distinct_asns()) <= 100
    assert max(len(r.distinct_asns()) for r in records) == 100  # the cap was reached

    run = run_scenario("roa_cap")
    assert run.failures == []
    outcomes = [run.ledger.outcomes[run.labels[f"roa{i}"][0]]["outcome"]
                for i in range(1, 102)]
    assert outcomes[:100] == ["accepted"] * 100 and outcomes[100] == "rejected"


# -- 10 ---------------------------------------------------------------------------

def _tamper(rng, block):
    kinds = ["timestamp", "parent", "hash", "height"]
    if block.transactions:
        kinds += ["value", "payload", "signature", "drop"]
    kind = rng.choice(kinds)
    if kind == "timestamp":
        return dataclasses.replace(block, timestamp=block.timestamp + rng.randrange(1, 99))
    if kind in ("parent", "hash"):
        raw = bytearray(getattr(block, f"{kind}_hash" if kind == "parent" else "hash"))
        raw[rng.randrange(32)] ^= 1 << rng.randrange(8)
        field = "parent_hash" if kind == "parent" else "hash"
        return dataclasses.replace(block, **{field: bytes(raw)})
    if kind == "height":
        return dataclasses.replace(block, height=block.height + 1)
    txs = list(block.transactions)
    i = rng.randrange(len(txs))
    if kind == "drop":
        del txs[i]
    elif kind == "value":
        txs[i] = dataclasses.replace(txs[i], value=txs[i].value + 1)
    elif kind == "payload":
        txs[i] = dataclasses.replace(txs[i], payload={**txs[i].payload, "x": 1})
    else:
        sig = bytearray(txs[i].signature)
        sig[0] ^= 0x80
        txs[i] = dataclasses.replace(txs[i], signature=bytes(sig))
    return dataclasses.replace(block, transactions=tuple(txs))


@criterion(10, "ledger: 100/100 tampers pinpointed; replay is byte-identical")
def test_c10_ledger_integrity():
    names = sorted(bundled_scenarios())
    chains = {n: load_chain(run_scenario(n).ledger.export()) for n in names}
    rng = random.Random(10)
    hits = 0
    for _ in range(100):
        name = rng.choice(names)
        blocks = list(chains[name])
        position = rng.randrange(len(blocks))
        blocks[position] = _tamper(rng, blocks[position])
        hits += verify_chain(blocks) == position
    print(f"criterion 10: {hits}/100 tampers located at the altered height")
    assert hits == 100
    for name in names:
        a, b = run_scenario(name), run_scenario(name)
        assert a.ledger.export() == b.ledger.export()
        assert snapshot_bytes(a.registry) == snapshot_bytes(b.registry)
        assert a.events_jsonl() == b.events_jsonl()


# -- 11 ---------------------------------------------------------------------------

@criterion(11, "rate limit: pause at the threshold, supervisor resume, others refused")
def test_c11_rate_limit():
    run = run_scenario("stockpile_storm")
    assert run.failures == []
    for threshold in (1, 37, 100):
        reg = RegistryState(POOL_20, RegistryConfig(rate_limit=threshold,
                                                    supervisors=frozenset({"sup"})))
        for i in range(threshold):
            reg.process_allocation_request("m", 48, 300, i, rate=1)
        assert not reg.paused
        with pytest.raises(RegistryPaused):
            reg.process_allocation_request("m", 48, 300, threshold, rate=1)
        assert reg.paused and len(reg.allocations) == threshold
        with pytest.raises(NotSupervisor):
            reg.governance_resume("m")
        assert reg.paused
        reg.governance_resume("sup")
        reg.process_allocation_request("n", 48, 300, threshold + 1, rate=1)


# -- 12 ---------------------------------------------------------------------------

@criterion(12, "economics: /20 costs $12,288,000; /0 shown with the published figure")
def test_c12_economics(capsys):
    assert whole_space_cost(3000, 20) == 12_288_000
    report = economics_report()
    ws = report["whole_space"]
    assert ws["computed"] == "12884901888000.00" and ws["published"] == "12600000000000.00"
    assert cli_main(["analyze", "economics"]) == 0
    out = capsys.readouterr().out
    assert "12884901888000.00" in out and "12600000000000.00" in out
    # a full-pool stockpile is charged exactly 4096 x $3000
    reg = RegistryState(POOL_20, RegistryConfig(rate_limit=10**9))
    for _ in range(4096):
        reg.process_allocation_request("hoarder", 32, 3000, 0, rate=1)
    with pytest.raises(PoolExhausted):
        reg.process_allocation_request("hoarder", 32, 3000, 0, rate=1)
    assert reg.accounting["fees_fiat"] == 12_288_000
    assert reg.pool.utilization() == ({32: 4096}, 0)
    assert parse_prefix("2001:1000::/20") == reg.pool.root
