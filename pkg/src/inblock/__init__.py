"""A simulated autonomous IPv6 address registry on a hash-chained ledger."""

from .prefix import Prefix, buddy, contains, format_prefix, parse_prefix, split
from .pool import PoolState
from .fees import FeeSchedule, effective_fee, required_crypto_amount
from .registry import AllocationRecord, RegistryConfig, RegistryState, RoaRecord

__version__ = "0.1.0"
