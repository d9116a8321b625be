import csv
import io
import json

import pytest

from inblock.cli import main
from inblock.ledger import load_chain


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def outputs(tmp_path, capsys):
    code, _, _ = run(capsys, "run", "aggregation", "--out", str(tmp_path))
    assert code == 0
    return tmp_path


def test_run_reports(capsys):
    code, out, _ = run(capsys, "run", "basic_allocation")
    assert code == 0
    assert "latency first: 341 s" in out


def test_run_json(capsys):
    code, out, _ = run(capsys, "run", "aggregation", "--json")
    assert json.loads(out)["routes"]["alice"] == ["2001:1000::/30"]


def test_failed_expectation_exits_1(capsys):
    code, out, _ = run(capsys, "run", "stockpile_storm", "--set", "rate_limit=50")
    assert code == 1
    assert "FAILED" in out


def test_env_and_flags_layer(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("INBLOCK_RATE_LIMIT", "50")
    assert run(capsys, "run", "stockpile_storm")[0] == 1
    assert run(capsys, "run", "stockpile_storm", "--set", "rate_limit=100")[0] == 0
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("rate_limit: 100\n")
    assert run(capsys, "run", "stockpile_storm", "--config", str(cfg))[0] == 1  # env wins


@pytest.mark.parametrize("argv", [
    ["run", "nope"],
    ["run", "basic_allocation", "--set", "rate_limit=lots"],
    ["run", "basic_allocation", "--set", "bogus=1"],
    ["query", "allocations", "--snapshot", "/nonexistent"],
    ["chain", "verify", "/nonexistent"],
    ["analyze", "fig2", "/nonexistent"],
])
def test_input_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("error:")


def test_query_commands(capsys, outputs):
    snap = str(outputs / "snapshot.json")
    code, out, _ = run(capsys, "query", "allocations", "--snapshot", snap, "--json")
    rows = json.loads(out)
    assert [r["prefix"] for r in rows][:2] == ["2001:1000::/32", "2001:1800::/32"]
    code, out, _ = run(capsys, "query", "allocation", "1", "--snapshot", snap, "--json")
    assert json.loads(out)["aggregatable_with"] == "2001:1000::/30"
    code, out, _ = run(capsys, "query", "roas", "1", "--snapshot", snap, "--json")
    assert json.loads(out) == []
    code, out, _ = run(capsys, "query", "utilization", "--snapshot", snap)
    assert "/32" in out and "free fraction" in out
    code, out, _ = run(capsys, "query", "routes", "--snapshot", snap)
    assert "2001:1000::/30" in out
    assert run(capsys, "query", "allocation", "99", "--snapshot", snap)[0] == 2
    assert run(capsys, "query", "allocation", "--snapshot", snap)[0] == 2


def test_chain_verify(capsys, outputs):
    path = outputs / "chain.jsonl"
    code, out, _ = run(capsys, "chain", "verify", str(path))
    assert code == 0 and out.startswith("ok:")
    lines = path.read_text().splitlines()
    block = json.loads(lines[3])
    block["timestamp"] += 1
    lines[3] = json.dumps(block)
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "chain", "verify", str(path), "--json")
    assert code == 1
    assert json.loads(out)["first_bad_height"] == 3


def test_chain_status(capsys, outputs):
    blocks = load_chain((outputs / "chain.jsonl").read_text())
    tx = next(t.hash for b in blocks for t in b.transactions)
    code, out, _ = run(capsys, "chain", "status", str(outputs / "chain.jsonl"), "--tx", tx)
    assert json.loads(out)["status"] == "confirmed"
    code, out, _ = run(capsys, "chain", "status", str(outputs / "chain.jsonl"), "--tx", "ab")
    assert json.loads(out)["status"] == "pending"


def test_analyze_fig2_formats(capsys):
    code, out, _ = run(capsys, "analyze", "fig2", "--json")
    data = json.loads(out)
    assert {k: data["histogram"][k] for k in ("32", "48", "29")} == \
        {"32": 17795, "48": 6283, "29": 7903}
    assert data["larger_than_29"] == 191
    code, out, _ = run(capsys, "analyze", "fig2", "--csv")
    rows = dict(csv.reader(io.StringIO(out)))
    assert rows["32"] == "17795" and rows["<29"] == "191"
    code, out, _ = run(capsys, "analyze", "fig2")
    assert "matches May-2018 published counts: True" in out


def test_analyze_economics(capsys):
    code, out, _ = run(capsys, "analyze", "economics")
    assert "$12288000.00 per year" in out
    assert "12884901888000.00" in out and "12600000000000.00" in out
    assert "0.0019 tx/s" in out and "341 s" in out
    code, out, _ = run(capsys, "analyze", "economics", "--json")
    assert json.loads(out)["latency"]["seconds"] == 341


def test_snapshot_and_restore(capsys, tmp_path):
    path = tmp_path / "s.json"
    assert run(capsys, "snapshot", str(path), "--scenario", "aggregation")[0] == 0
    code, out, _ = run(capsys, "restore", str(path), "--out", str(tmp_path / "t.json"))
    assert code == 0
    assert json.loads(out)["byte_identical"] is True
    assert (tmp_path / "t.json").read_bytes() == path.read_bytes()
    path.write_text(path.read_text().replace("2001:1000::/32", "2001:1004::/32", 1))
    assert run(capsys, "restore", str(path))[0] == 2
