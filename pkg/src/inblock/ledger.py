"""A deterministic simulated blockchain hosting the registry.

One block producer on a simulated clock stands in for mining: block ``h``
has timestamp ``genesis + h * block_interval``.  A transaction submitted at
time ``s`` becomes eligible ``inclusion_delay`` seconds later and is picked
up by the first block whose mining round (the parent's timestamp) starts
after that.  So a submission aligned with a round boundary is confirmed
exactly ``inclusion_delay + block_interval + depth * block_interval`` after
it was sent.

Block serialization (hashed with SHA-256)::

    0x01 | height u64 | parent_hash[32] | timestamp u64 | count u32 |
    (len u32 | transaction bytes)*

Transaction bytes are the declared fields in order, variable-length fields
prefixed with a u32 length, integers as fixed-width big-endian.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (Ed25519PrivateKey,
                                                               Ed25519PublicKey)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import payloads
from .fees import FeeError, to_fraction
from .oracles import OracleError
from .pool import PoolError
from .registry import Rejection

BLOCK_VERSION = 1
ZERO_HASH = bytes(32)
DEFAULT_GENESIS_TIME = 1_600_000_000
DEFAULT_BLOCK_INTERVAL = 17
DEFAULT_INCLUSION_DELAY = 120
DEFAULT_CONFIRMATION_DEPTH = 12
EVENT_SCHEMA = 1

REGISTRY_ADDRESS = hashlib.sha256(b"inblock/registry").hexdigest()[:40]
PRODUCER_ADDRESS = hashlib.sha256(b"inblock/producer").hexdigest()[:40]

# everything a registry payload may raise instead of succeeding
# (ValueError covers malformed payloads and bad prefixes)
PAYLOAD_ERRORS = (Rejection, FeeError, PoolError, OracleError, ValueError)


class LedgerError(Exception):
    pass


class BadSignature(LedgerError):
    pass


class BadNonce(LedgerError):
    pass


class InsufficientBalance(LedgerError):
    pass


class BlockNotDue(LedgerError):
    pass


def account_id(public_key: bytes) -> str:
    return hashlib.sha256(public_key).hexdigest()[:40]


# -- signature schemes --------------------------------------------------------

class Ed25519Scheme:
    name = "ed25519"

    def keypair(self, seed: bytes) -> Signer:
        secret = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())
        public = secret.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return Signer(public, secret.sign)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class StubScheme:
    """Test-only: the "public key" is the secret itself.  Not secure."""

    name = "stub"

    def keypair(self, seed: bytes) -> Signer:
        key = hashlib.sha256(seed).digest()
        return Signer(key, lambda message: hashlib.sha256(key + message).digest())

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        return hashlib.sha256(public_key + message).digest() == signature


SCHEMES = {"ed25519": Ed25519Scheme, "stub": StubScheme}


@dataclass(frozen=True)
class Signer:
    public_key: bytes
    sign: object

    @property
    def account(self) -> str:
        return account_id(self.public_key)


# -- transactions and blocks ---------------------------------------------------

def _field(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class Transaction:
    sender: str
    public_key: bytes
    to: str
    value: Fraction
    tip: Fraction
    nonce: int
    payload: dict
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return b"".join([
            _field(self.sender.encode()), _field(self.public_key), _field(self.to.encode()),
            _field(str(self.value).encode()), _field(str(self.tip).encode()),
            struct.pack(">Q", self.nonce), _field(canonical_json(self.payload)),
        ])

    @cached_property
    def encoded(self) -> bytes:
        return self.signing_bytes() + _field(self.signature)

    @cached_property
    def hash(self) -> str:
        return hashlib.sha256(self.encoded).hexdigest()

    def to_json(self) -> dict:
        return {"sender": self.sender, "public_key": self.public_key.hex(), "to": self.to,
                "value": str(self.value), "tip": str(self.tip), "nonce": self.nonce,
                "payload": self.payload, "signature": self.signature.hex()}

    @classmethod
    def from_json(cls, obj: dict) -> Transaction:
        return cls(obj["sender"], bytes.fromhex(obj["public_key"]), obj["to"],
                   Fraction(obj["value"]), Fraction(obj["tip"]), int(obj["nonce"]),
                   obj["payload"], bytes.fromhex(obj["signature"]))


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: bytes
    timestamp: int
    transactions: tuple[Transaction, ...]
    hash: bytes = b""

    def serialize(self) -> bytes:
        parts = [bytes([BLOCK_VERSION]), struct.pack(">Q", self.height), self.parent_hash,
                 struct.pack(">Q", self.timestamp), struct.pack(">I", len(self.transactions))]
        parts.extend(_field(tx.encoded) for tx in self.transactions)
        return b"".join(parts)

    def compute_hash(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()

    def sealed(self) -> Block:
        return Block(self.height, self.parent_hash, self.timestamp, self.transactions,
                     self.compute_hash())

    def to_json(self) -> dict:
        return {"height": self.height, "parent_hash": self.parent_hash.hex(),
                "timestamp": self.timestamp, "hash": self.hash.hex(),
                "transactions": [tx.to_json() for tx in self.transactions]}

    @classmethod
    def from_json(cls, obj: dict) -> Block:
        return cls(int(obj["height"]), bytes.fromhex(obj["parent_hash"]),
                   int(obj["timestamp"]),
                   tuple(Transaction.from_json(t) for t in obj["transactions"]),
                   bytes.fromhex(obj["hash"]))


def export_chain(blocks) -> str:
    return "".join(json.dumps(b.to_json(), sort_keys=True) + "\n" for b in blocks)


def load_chain(text: str) -> list[Block]:
    return [Block.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def verify_chain(blocks) -> int | None:
    """Return None for an intact chain, else the first height that fails.

    Checks heights, stored hashes against recomputed ones, parent links and
    increasing timestamps.
    """
    prev = None
    for i, block in enumerate(blocks):
        ok = (block.height == i and block.compute_hash() == block.hash
              and block.parent_hash == (prev.hash if prev else ZERO_HASH)
              and (prev is None or block.timestamp > prev.timestamp))
        if not ok:
            return i
        prev = block
    return None


def reseal(blocks, start: int) -> list[Block]:
    """Recompute hashes and parent links from ``start`` on (a rewrite)."""
    out = list(blocks[:start])
    for block in blocks[start:]:
        parent_hash = out[-1].hash if out else ZERO_HASH
        out.append(Block(block.height, parent_hash, block.timestamp,
                         block.transactions).sealed())
    return out


def end_to_end_allocation_latency(inclusion_delay: int = DEFAULT_INCLUSION_DELAY,
                                  block_interval: int = DEFAULT_BLOCK_INTERVAL,
                                  depth: int = DEFAULT_CONFIRMATION_DEPTH) -> int:
    """Wait for inclusion, one block to mine it, ``depth`` blocks on top."""
    if min(inclusion_delay, block_interval, depth) < 0 or block_interval == 0:
        raise ValueError("latency parameters must be non-negative, interval positive")
    return inclusion_delay + block_interval + depth * block_interval


class Confirmation(NamedTuple):
    status: str          # "pending" | "included" | "confirmed"
    height: int | None = None


# -- mempool -------------------------------------------------------------------

@dataclass
class Account:
    balance: Fraction = Fraction(0)
    nonce: int = 0


@dataclass
class _Pending:
    tx: Transaction
    seq: int
    eligible_at: int


@dataclass
class Mempool:
    entries: list[_Pending] = field(default_factory=list)
    seq: int = 0

    def pending_from(self, sender: str) -> list[_Pending]:
        return [e for e in self.entries if e.tx.sender == sender]

    def __len__(self) -> int:
        return len(self.entries)


class Ledger:
    """Accounts, mempool, and the block chain, executing registry payloads."""

    def __init__(self, registry, scheme=None, *, genesis_time: int = DEFAULT_GENESIS_TIME,
                 block_interval: int = DEFAULT_BLOCK_INTERVAL,
                 inclusion_delay: int = DEFAULT_INCLUSION_DELAY,
                 max_txs_per_block: int = 500, fee_sink: str | None = None):
        if block_interval <= 0 or inclusion_delay < 0 or max_txs_per_block < 1:
            raise ValueError("bad ledger parameters")
        self.registry = registry
        self.scheme = scheme or Ed25519Scheme()
        self.block_interval = block_interval
        self.inclusion_delay = inclusion_delay
        self.max_txs_per_block = max_txs_per_block
        self.fee_sink = fee_sink or REGISTRY_ADDRESS
        self.accounts: dict[str, Account] = {}
        self.mempool = Mempool()
        self.blocks = [Block(0, ZERO_HASH, genesis_time, ()).sealed()]
        self.clock = genesis_time
        self.tx_height: dict[str, int] = {}
        self.submitted_at: dict[str, int] = {}
        self.outcomes: dict[str, dict] = {}
        self.events: list[dict] = []
        # pending outflows per sender, so queued txs cannot overdraw
        self._reserved: dict[str, Fraction] = {}
        self._queued: dict[str, int] = {}

    # -- accounts ----------------------------------------------------------

    def account(self, account: str) -> Account:
        return self.accounts.setdefault(account, Account())

    def fund(self, account: str, amount) -> None:
        """Genesis allocation of coins; only valid before the first block."""
        if len(self.blocks) > 1:
            raise LedgerError("funding is a genesis-only operation")
        self.account(account).balance += to_fraction(amount)

    def balance(self, account: str) -> Fraction:
        return self.accounts.get(account, Account()).balance

    def total_supply(self) -> Fraction:
        return sum((a.balance for a in self.accounts.values()), Fraction(0))

    # -- submission --------------------------------------------------------

    def make_transaction(self, signer: Signer, payload: dict | None = None, *, value=0,
                         tip=0, to: str = REGISTRY_ADDRESS) -> Transaction:
        """Build and sign the sender's next transaction."""
        sender = signer.account
        nonce = self.account(sender).nonce + self._queued.get(sender, 0) + 1
        tx = Transaction(sender, signer.public_key, to, to_fraction(value), to_fraction(tip),
                         nonce, payload or {})
        return _with_signature(tx, signer.sign(tx.signing_bytes()))

    def submit_transaction(self, tx: Transaction) -> str:
        if account_id(tx.public_key) != tx.sender or not self.scheme.verify(
                tx.public_key, tx.signing_bytes(), tx.signature):
            raise BadSignature(f"signature does not verify for {tx.sender}")
        sender = self.account(tx.sender)
        expected = sender.nonce + self._queued.get(tx.sender, 0) + 1
        if tx.nonce != expected:
            raise BadNonce(f"nonce {tx.nonce}, expected {expected}")
        if tx.value < 0 or tx.tip < 0:
            raise InsufficientBalance("negative value or tip")
        outflow = tx.value + tx.tip
        if self._reserved.get(tx.sender, 0) + outflow > sender.balance:
            raise InsufficientBalance(f"{tx.sender} cannot cover {outflow}")
        self._reserved[tx.sender] = self._reserved.get(tx.sender, 0) + outflow
        self._queued[tx.sender] = self._queued.get(tx.sender, 0) + 1
        self.mempool.entries.append(
            _Pending(tx, self.mempool.seq, self.clock + self.inclusion_delay))
        self.mempool.seq += 1
        self.submitted_at[tx.hash] = self.clock
        return tx.hash

    # -- block production --------------------------------------------------

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    def next_block_time(self) -> int:
        return self.tip.timestamp + self.block_interval

    def _select(self, round_start: int) -> list[_Pending]:
        """Priority order: tip descending then arrival, nonces kept in order."""
        eligible = [e for e in self.mempool.entries if e.eligible_at <= round_start]
        by_sender: dict[str, list[_Pending]] = {}
        for e in sorted(eligible, key=lambda e: (e.tx.nonce, e.seq), reverse=True):
            by_sender.setdefault(e.tx.sender, []).append(e)
        heap = []

        def push_head(sender: str, want: int) -> None:
            queue = by_sender[sender]
            if queue and queue[-1].tx.nonce == want:
                e = queue.pop()
                heapq.heappush(heap, (-e.tx.tip, e.seq, e))

        for sender in by_sender:
            push_head(sender, self.accounts[sender].nonce + 1)
        chosen = []
        while heap and len(chosen) < self.max_txs_per_block:
            _, _, best = heapq.heappop(heap)
            chosen.append(best)
            push_head(best.tx.sender, best.tx.nonce + 1)
        return chosen

    def produce_block(self) -> Block:
        timestamp = self.next_block_time()
        if self.clock < timestamp:
            raise BlockNotDue(f"clock {self.clock} before next block time {timestamp}")
        height = self.height + 1
        for p in self.registry.expire_sweep(timestamp):
            self._event(height, None, "expire", "reclaimed", {"prefix": str(p)})

        chosen = self._select(self.tip.timestamp)
        taken = {id(e) for e in chosen}
        self.mempool.entries = [e for e in self.mempool.entries if id(e) not in taken]
        for entry in chosen:
            self._apply(entry.tx, height, timestamp)

        block = Block(height, self.tip.hash, timestamp,
                      tuple(e.tx for e in chosen)).sealed()
        self.blocks.append(block)
        for e in chosen:
            self.tx_height[e.tx.hash] = height
        return block

    def _apply(self, tx: Transaction, height: int, now: int) -> None:
        sender = self.accounts[tx.sender]
        sender.nonce = tx.nonce
        sender.balance -= tx.value + tx.tip
        self._reserved[tx.sender] -= tx.value + tx.tip
        self._queued[tx.sender] -= 1
        self.account(PRODUCER_ADDRESS).balance += tx.tip
        to = self.fee_sink if tx.to == REGISTRY_ADDRESS else tx.to
        self.account(to).balance += tx.value

        if tx.to != REGISTRY_ADDRESS:
            outcome = {"kind": "transfer", "outcome": "accepted", "details": {}}
        else:
            kind = tx.payload.get("op", "none")
            try:
                details = payloads.execute(self.registry, tx.sender, tx.payload,
                                           tx.value, now)
                outcome = {"kind": kind, "outcome": "accepted", "details": details}
            except PAYLOAD_ERRORS as exc:
                self.registry.record_rejected_payment(tx.value)
                outcome = {"kind": kind, "outcome": "rejected",
                           "details": {"error": type(exc).__name__, "message": str(exc)}}
        self.outcomes[tx.hash] = outcome
        self._event(height, tx.hash, outcome["kind"], outcome["outcome"], outcome["details"])

    def _event(self, height, tx_hash, kind, outcome, details) -> None:
        self.events.append({"v": EVENT_SCHEMA, "block_height": height, "tx_hash": tx_hash,
                            "kind": kind, "outcome": outcome, "details": details})

    def advance_to(self, t: int) -> list[Block]:
        """Move the clock to ``t``, producing every block that falls due."""
        if t < self.clock:
            raise ValueError(f"clock cannot go back from {self.clock} to {t}")
        produced = []
        while self.next_block_time() <= t:
            self.clock = self.next_block_time()
            produced.append(self.produce_block())
        self.clock = t
        return produced

    def produce_blocks(self, n: int) -> list[Block]:
        return self.advance_to(self.tip.timestamp + n * self.block_interval)

    # -- confirmation ------------------------------------------------------

    def confirmation_status(self, tx_hash: str,
                            depth: int = DEFAULT_CONFIRMATION_DEPTH) -> Confirmation:
        height = self.tx_height.get(tx_hash)
        if height is None:
            return Confirmation("pending")
        if self.height - height >= depth:
            return Confirmation("confirmed", height)
        return Confirmation("included", height)

    def run_until_confirmed(self, tx_hash: str, depth: int = DEFAULT_CONFIRMATION_DEPTH,
                            max_blocks: int = 100_000) -> int:
        """Produce blocks until ``tx_hash`` is confirmed; return the latency."""
        if tx_hash not in self.submitted_at:
            raise LedgerError(f"unknown transaction {tx_hash}")
        for _ in range(max_blocks):
            if self.confirmation_status(tx_hash, depth).status == "confirmed":
                return self.clock - self.submitted_at[tx_hash]
            self.produce_blocks(1)
        raise LedgerError(f"{tx_hash} not confirmed within {max_blocks} blocks")

    def export(self) -> str:
        return export_chain(self.blocks)


def _with_signature(tx: Transaction, signature: bytes) -> Transaction:
    return Transaction(tx.sender, tx.public_key, tx.to, tx.value, tx.tip, tx.nonce,
                       tx.payload, signature)


def confirmation_status(chain: Ledger, tx_hash: str,
                        depth: int = DEFAULT_CONFIRMATION_DEPTH) -> Confirmation:
    return chain.confirmation_status(tx_hash, depth)
