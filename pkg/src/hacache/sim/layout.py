"""RAID5 left-symmetric read mapping.

Logical data chunks of ``stripe_unit`` bytes are laid out stripe by stripe;
stripe ``s`` keeps its parity on drive ``N - 1 - (s mod N)`` and its data
chunks on the drives that follow the parity drive, wrapping around. Reads
never touch parity, so every drive carries exactly ``1/N`` of the chunks of
any ``N`` consecutive stripes.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, DomainError
from ..model import ArrayTopology


def _geometry(n_drives: int, block_size: int, stripe_unit: int) -> int:
    if n_drives < 2:
        raise ConfigurationError("striping needs at least two drives")
    if block_size <= 0 or stripe_unit % block_size:
        raise ConfigurationError(
            f"block size {block_size} must divide the stripe unit {stripe_unit}"
        )
    return stripe_unit // block_size


def parity_drive(stripe: int, n_drives: int) -> int:
    return n_drives - 1 - stripe % n_drives


def map_block_to_drive(
    block_index: int,
    topology: ArrayTopology,
    block_size: int,
    n_blocks: int | None = None,
) -> int:
    """Backend drive holding logical block ``block_index`` (blocks are ``block_size`` bytes)."""
    if block_index < 0 or (n_blocks is not None and block_index >= n_blocks):
        raise DomainError(f"block {block_index} is outside the I/O range")
    n = topology.n_drives
    per_chunk = _geometry(n, block_size, topology.stripe_unit)
    chunk = block_index // per_chunk
    stripe, k = divmod(chunk, n - 1)
    return (parity_drive(stripe, n) + 1 + k) % n


def map_blocks(blocks: np.ndarray, n_drives: int, block_size: int, stripe_unit: int) -> np.ndarray:
    """Vectorised :func:`map_block_to_drive` for an integer array of block indices."""
    per_chunk = _geometry(n_drives, block_size, stripe_unit)
    chunk = np.asarray(blocks, dtype=np.int64) // per_chunk
    stripe, k = np.divmod(chunk, n_drives - 1)
    parity = n_drives - 1 - stripe % n_drives
    return (parity + 1 + k) % n_drives
