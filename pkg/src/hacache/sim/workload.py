"""Closed-loop read workloads: which block each new request reads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .layout import map_blocks

PATTERNS = ("uniform", "randmap", "hotspot", "sequential")


@dataclass(frozen=True)
class WorkloadSpec:
    block_size: int
    io_range: int
    pattern: str = "uniform"
    hot_space_frac: float = 0.05
    hot_access_frac: float = 0.95
    threads: int = 16
    queue_depth: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"unknown pattern {self.pattern!r}; valid: {', '.join(PATTERNS)}")
        if self.block_size <= 0 or self.io_range <= 0 or self.io_range % self.block_size:
            raise ConfigurationError(
                f"block size {self.block_size} must be positive and divide io_range {self.io_range}"
            )
        if self.pattern == "hotspot":
            for name in ("hot_space_frac", "hot_access_frac"):
                v = getattr(self, name)
                if not 0.0 < v < 1.0:
                    raise ConfigurationError(f"{name} must lie in (0, 1), got {v}")
        if self.threads < 0 or self.queue_depth < 0:
            raise ConfigurationError("threads and queue_depth must be non-negative")

    @property
    def n_blocks(self) -> int:
        return self.io_range // self.block_size

    @property
    def outstanding(self) -> int:
        return self.threads * self.queue_depth


class BlockStream:
    """Seeded generator of block indices, produced in numpy batches.

    ``uniform`` draws blocks independently. ``randmap`` reads every block
    once per pass in a fresh random order (fio's default random map), so
    per-drive arrival counts carry no sampling noise beyond one pass.

    For the hotspot pattern the hot set is a prefix of a seeded permutation
    that interleaves the drives round-robin, so any hot-set size spreads
    over the drives to within one block.
    """

    def __init__(
        self,
        spec: WorkloadSpec,
        rng: np.random.Generator,
        batch: int = 1 << 15,
        *,
        n_drives: int = 1,
        stripe_unit: int | None = None,
    ):
        self.spec = spec
        self.rng = rng
        self.batch = batch
        self._next_seq = 0
        if spec.pattern == "hotspot":
            order = self._interleaved_permutation(n_drives, stripe_unit or spec.block_size)
            hot = max(1, int(round(spec.hot_space_frac * spec.n_blocks)))
            self._hot = order[:hot]
            self._cold = order[hot:] if hot < len(order) else order[:hot]

    def _interleaved_permutation(self, n_drives: int, stripe_unit: int) -> np.ndarray:
        n = self.spec.n_blocks
        if n_drives < 2:
            return self.rng.permutation(n)
        drives = map_blocks(np.arange(n), n_drives, self.spec.block_size, stripe_unit)
        per_drive = [self.rng.permutation(np.flatnonzero(drives == d)) for d in range(n_drives)]
        m = min(len(b) for b in per_drive)
        head = np.stack([b[:m] for b in per_drive], axis=1).ravel()
        tail = self.rng.permutation(np.concatenate([b[m:] for b in per_drive]))
        return np.concatenate([head, tail]).astype(np.int64)

    def next_batch(self) -> np.ndarray:
        spec, rng, m = self.spec, self.rng, self.batch
        if spec.pattern == "uniform":
            return rng.integers(0, spec.n_blocks, size=m)
        if spec.pattern == "randmap":
            parts, need = [], m
            while need > 0:
                if self._next_seq == 0:
                    self._pass = rng.permutation(spec.n_blocks)
                chunk = self._pass[self._next_seq : self._next_seq + need]
                parts.append(chunk)
                need -= len(chunk)
                self._next_seq = (self._next_seq + len(chunk)) % spec.n_blocks
            return np.concatenate(parts)
        if spec.pattern == "sequential":
            out = (self._next_seq + np.arange(m)) % spec.n_blocks
            self._next_seq = int((self._next_seq + m) % spec.n_blocks)
            return out
        is_hot = rng.random(m) < spec.hot_access_frac
        hot = self._hot[rng.integers(0, len(self._hot), size=m)]
        cold = self._cold[rng.integers(0, len(self._cold), size=m)]
        return np.where(is_hot, hot, cold)
