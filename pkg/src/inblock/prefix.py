"""Exact IPv6 prefix arithmetic.

Bit 0 is the most significant bit of the address.  A prefix of length ``n``
fixes bits ``0..n-1``; every lower bit must be zero (canonical form).

Prefixes carry a ``width`` so the same arithmetic can run on small synthetic
address spaces (e.g. 8 bits) where exhaustive checks are cheap.  Anything that
talks IPv6 text uses width 128.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

IPV6_WIDTH = 128


class PrefixError(ValueError):
    pass


class MalformedAddress(PrefixError):
    pass


class LengthOutOfRange(PrefixError):
    pass


class NonCanonicalPrefix(PrefixError):
    pass


def _host_mask(length: int, width: int) -> int:
    return (1 << (width - length)) - 1


@dataclass(frozen=True, order=True)
class Prefix:
    address: int
    length: int
    width: int = IPV6_WIDTH

    def __post_init__(self):
        if not 0 <= self.length <= self.width:
            raise LengthOutOfRange(f"length {self.length} outside [0, {self.width}]")
        if not 0 <= self.address < (1 << self.width):
            raise MalformedAddress(f"address {self.address:#x} does not fit in {self.width} bits")
        if self.address & _host_mask(self.length, self.width):
            raise NonCanonicalPrefix(
                f"host bits set below /{self.length} in {self.address:#x}")

    @property
    def size(self) -> int:
        """Number of addresses covered."""
        return 1 << (self.width - self.length)

    @property
    def last(self) -> int:
        return self.address + self.size - 1

    def __str__(self) -> str:
        return format_prefix(self)


def parse_prefix(text: str) -> Prefix:
    """Parse ``<ipv6-address>/<length>``; host bits must be zero."""
    addr_text, sep, len_text = text.strip().partition("/")
    if not sep:
        raise MalformedAddress(f"missing '/length' in {text!r}")
    try:
        address = int(ipaddress.IPv6Address(addr_text))
    except ipaddress.AddressValueError as exc:
        raise MalformedAddress(str(exc)) from None
    if not len_text.isdigit():
        raise LengthOutOfRange(f"bad prefix length {len_text!r}")
    return Prefix(address, int(len_text))


def format_prefix(p: Prefix) -> str:
    if p.width == IPV6_WIDTH:
        # ipaddress follows RFC 5952: lower case, longest zero run, leftmost on tie
        return f"{ipaddress.IPv6Address(p.address).compressed}/{p.length}"
    digits = (p.width + 3) // 4
    return f"0x{p.address:0{digits}x}/{p.length}"


def mask(address: int, length: int, width: int = IPV6_WIDTH) -> int:
    """Keep the top ``length`` bits of ``address``."""
    return address & ~_host_mask(length, width) & ((1 << width) - 1)


def contains(outer: Prefix, inner: Prefix) -> bool:
    return (outer.width == inner.width
            and outer.length <= inner.length
            and mask(inner.address, outer.length, outer.width) == outer.address)


def overlaps(a: Prefix, b: Prefix) -> bool:
    return contains(a, b) or contains(b, a)


def buddy(p: Prefix) -> Prefix:
    """The equal-length sibling: flip bit ``length - 1``."""
    if p.length == 0:
        raise LengthOutOfRange("a /0 has no buddy")
    return Prefix(p.address ^ (1 << (p.width - p.length)), p.length, p.width)


def parent(p: Prefix) -> Prefix:
    if p.length == 0:
        raise LengthOutOfRange("a /0 has no parent")
    return Prefix(mask(p.address, p.length - 1, p.width), p.length - 1, p.width)


def split(p: Prefix) -> tuple[Prefix, Prefix]:
    """Return the (lower, upper) halves of ``p``."""
    if p.length == p.width:
        raise LengthOutOfRange(f"cannot split a /{p.width}")
    lower = Prefix(p.address, p.length + 1, p.width)
    return lower, buddy(lower)


def aggregate(prefixes) -> list[Prefix]:
    """Merge buddies repeatedly; returns the minimal sorted covering set.

    Input prefixes must be pairwise disjoint.
    """
    pending = set(prefixes)
    changed = True
    while changed:
        changed = False
        for p in sorted(pending, key=lambda q: (-q.length, q.address)):
            if p not in pending or p.length == 0:
                continue
            b = buddy(p)
            if b in pending:
                pending -= {p, b}
                pending.add(parent(p))
                changed = True
    return sorted(pending)
