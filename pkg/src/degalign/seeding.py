"""Deterministic seed derivation.

All randomness in the toolkit flows from one root seed through named labels,
so any sub-experiment is reproducible in isolation.
"""

import hashlib

MASK64 = (1 << 64) - 1
PAIR_SEED_XOR = 0x9E3779B97F4A7C15  # golden-ratio constant for paired recipes


def derive_seed(root: int, label: str) -> int:
    """Mix a root seed with a purpose label into a new 64-bit seed."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (int(root) ^ int.from_bytes(digest[:8], "little")) & MASK64
