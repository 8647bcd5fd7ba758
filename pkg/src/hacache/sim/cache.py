"""Shard-partitioned FIFO read cache and per-request routing."""

from __future__ import annotations

from collections import deque
from enum import Enum
from typing import Mapping, Sequence

from ..env import even_shard_owners
from ..errors import ConfigurationError

GOLDEN = 0.6180339887498949


class Route(Enum):
    CACHE_HIT_SERVED = "cache_hit_served"
    CACHE_HIT_FORWARDED = "cache_hit_forwarded"
    MISS = "miss"


class ShardCache:
    """Cache space split into ``shard_count`` shards, each owned by one backend drive.

    A drive's blocks live only in its own shards and are evicted FIFO across
    that shard set. Shard capacities differ by at most one block when the
    total does not divide evenly.
    """

    def __init__(self, capacity_blocks: int, n_drives: int, shard_count: int = 256):
        if capacity_blocks < 0 or shard_count < 1 or n_drives < 1:
            raise ConfigurationError("cache capacity, shard count and drive count must be non-negative/positive")
        self.capacity_blocks = capacity_blocks
        self.n_drives = n_drives
        base, extra = divmod(capacity_blocks, shard_count)
        self.cap = [base + (1 if k < extra else 0) for k in range(shard_count)]
        self.owner = even_shard_owners(n_drives, shard_count)
        self.occ = [0] * shard_count
        self.hits = [0] * shard_count
        self.index: dict[int, int] = {}
        self.fifo = [deque() for _ in range(n_drives)]
        self.free = [[] for _ in range(n_drives)]
        for k in reversed(range(shard_count)):
            if self.cap[k]:
                self.free[self.owner[k]].append(k)

    @property
    def shard_count(self) -> int:
        return len(self.cap)

    def quota(self) -> list[int]:
        q = [0] * self.n_drives
        for o in self.owner:
            q[o] += 1
        return q

    def lookup(self, block: int) -> int | None:
        """Shard holding ``block``, counting the hit, or None on a miss."""
        s = self.index.get(block)
        if s is not None:
            self.hits[s] += 1
        return s

    def admit(self, block: int, drive: int) -> bool:
        """Insert ``block`` into ``drive``'s shards, evicting that drive's oldest block when full."""
        free = self.free[drive]
        if free:
            s = free[-1]
            self.occ[s] += 1
            if self.occ[s] >= self.cap[s]:
                free.pop()
        elif self.fifo[drive]:
            s = self.index.pop(self.fifo[drive].popleft())
        else:
            return False
        self.index[block] = s
        self.fifo[drive].append(block)
        return True

    def reassign(self, moves: Mapping[int, int]) -> None:
        """Give shard ``k`` to drive ``moves[k]``; whatever it cached is dropped."""
        if not moves:
            return
        moved = set(moves)
        for k, new in moves.items():
            if not 0 <= new < self.n_drives:
                raise ConfigurationError(f"shard {k} moved to unknown drive {new}")
        losers = {self.owner[k] for k in moved}
        dropped = {b for b, s in self.index.items() if s in moved}
        for b in dropped:
            del self.index[b]
        for d in losers:
            self.fifo[d] = deque(b for b in self.fifo[d] if b not in dropped)
            self.free[d] = [k for k in self.free[d] if k not in moved]
        for k in sorted(moved, reverse=True):
            self.owner[k] = moves[k]
            self.occ[k] = 0
            if self.cap[k]:
                self.free[moves[k]].append(k)

    def reset_hits(self) -> None:
        self.hits = [0] * len(self.cap)

    def check(self) -> None:
        """Assert the structural invariants (tests and debugging)."""
        assert sum(self.quota()) == self.shard_count
        for b, s in self.index.items():
            assert 0 <= s < self.shard_count
        counts = [0] * self.shard_count
        for s in self.index.values():
            counts[s] += 1
        assert counts == self.occ
        assert all(c <= cap for c, cap in zip(counts, self.cap))
        for d, q in enumerate(self.fifo):
            for b in q:
                assert self.owner[self.index[b]] == d
        assert len(self.index) == sum(len(q) for q in self.fifo)


class ValveSampler:
    """Per-drive uniform draws on a randomly rotated golden-ratio sequence.

    Each draw is uniform on ``[0, 1)``; successive draws for one drive are
    spread evenly, so the served fraction tracks the valve far more tightly
    than independent coin flips would.
    """

    def __init__(self, offsets: Sequence[float]):
        self.u = [float(x) % 1.0 for x in offsets]

    def draw(self, drive: int) -> float:
        u = self.u[drive] + GOLDEN
        if u >= 1.0:
            u -= 1.0
        self.u[drive] = u
        return u


def dispatch(block: int, drive: int, cache: ShardCache, valves: Sequence[float], sampler: ValveSampler) -> Route:
    """Route one read of ``block`` (mapped to ``drive``); misses are admitted to the cache."""
    if cache.lookup(block) is not None:
        if sampler.draw(drive) < valves[drive]:
            return Route.CACHE_HIT_SERVED
        return Route.CACHE_HIT_FORWARDED
    cache.admit(block, drive)
    return Route.MISS
