"""Request-level discrete-event simulator of a striped array behind a shard cache.

The front end keeps ``threads * queue_depth`` reads outstanding; every
completion immediately issues the next read. Each device serves its FIFO
queue one request at a time at its profiled rate, so a slow drive's backlog
holds most of the outstanding window and starves the fast drives, which is
the blocking the controller exists to undo.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..env import MeasurementEnv, Telemetry
from ..errors import ConfigurationError
from ..model import MB, ArrayTopology, ValveConfig, aggregate_bound
from .cache import GOLDEN, ShardCache, ValveSampler
from .layout import map_blocks
from .workload import BlockStream, WorkloadSpec


@dataclass(frozen=True)
class TelemetrySample:
    """Counters of one measurement window; bytes, not rates."""

    window: float
    backend_bytes: tuple[int, ...]
    cache_bytes: tuple[int, ...]
    hits: tuple[int, ...]
    lookups: tuple[int, ...]
    shard_hits: tuple[int, ...]
    shard_owner: tuple[int, ...]
    queue_share: tuple[float, ...]
    arrival_share: tuple[float, ...]

    @property
    def total_bytes(self) -> int:
        return sum(self.backend_bytes) + sum(self.cache_bytes)

    def rates(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Per-drive backend and cache-served bandwidth in MB/s."""
        if self.window <= 0:
            n = len(self.backend_bytes)
            return (0.0,) * n, (0.0,) * n
        scale = 1.0 / (self.window * MB)
        return (
            tuple(x * scale for x in self.backend_bytes),
            tuple(x * scale for x in self.cache_bytes),
        )

    def to_telemetry(self) -> Telemetry:
        b, c = self.rates()
        logical = tuple(x + y for x, y in zip(b, c))
        h = tuple(hh / n if n else 0.0 for hh, n in zip(self.hits, self.lookups))
        return Telemetry(
            b=b,
            logical=logical,
            S=sum(logical),
            h=h,
            shard_hits=tuple(float(x) for x in self.shard_hits),
            shard_owner=self.shard_owner,
            lookups=self.lookups,
        )


class Simulator:
    """Deterministic, single-threaded simulation; same inputs and seed give identical traces."""

    def __init__(
        self,
        topology: ArrayTopology,
        workload: WorkloadSpec,
        *,
        cache_frac: float = 0.1,
        shard_count: int = 256,
        valves: Sequence[float] | None = None,
    ):
        if not 0.0 <= cache_frac <= 1.0:
            raise ConfigurationError(f"cache_frac must lie in [0, 1], got {cache_frac}")
        if topology.stripe_unit % workload.block_size:
            raise ConfigurationError("block size must divide the stripe unit")
        self.topology = topology
        self.workload = workload
        n = topology.n_drives
        self.n_drives = n
        bs = workload.block_size
        self.b_max = topology.b_max(bs)
        self.c_max = topology.c_max(bs)
        # devices 0..n-1 are backends, n is the cache device
        self.service = [bs / (bw * MB) for bw in self.b_max] + [bs / (self.c_max * MB)]
        self.rng = np.random.default_rng(workload.seed)
        self.stream = BlockStream(workload, self.rng, n_drives=n, stripe_unit=topology.stripe_unit)
        self.cache = ShardCache(int(round(cache_frac * workload.n_blocks)), n, shard_count)
        self.sampler = ValveSampler(self.rng.random(n))
        self.valves = list(valves) if valves is not None else [0.0] * n
        if len(self.valves) != n:
            raise ConfigurationError(f"{len(self.valves)} valves for {n} drives")

        self.now = 0.0
        self.issued = 0
        self.completed = 0
        self._heap: list[tuple[float, int]] = []
        self._out = [0] * (n + 1)
        self._cache_owners: list[int] = []
        self._cache_head = 0
        self._blocks: list[int] = []
        self._drives: list[int] = []
        self._pos = 0
        self._reset_counters()
        for _ in range(workload.outstanding):
            self._issue(0.0)

    # -- bookkeeping ---------------------------------------------------------

    def _reset_counters(self) -> None:
        n = self.n_drives
        self._backend_done = [0] * n
        self._cache_done = [0] * n
        self._hits = [0] * n
        self._lookups = [0] * n
        self._area = [0.0] * (n + 1)
        self._last = [self.now] * (n + 1)
        self._window_start = self.now
        self.cache.reset_hits()

    def _refill(self) -> None:
        blocks = self.stream.next_batch()
        wl = self.workload
        drives = map_blocks(blocks, self.n_drives, wl.block_size, self.topology.stripe_unit)
        self._blocks = blocks.tolist()
        self._drives = drives.tolist()
        self._pos = 0

    def _issue(self, t: float) -> None:
        # slow path used only to seed the initial window; advance() inlines the same routing
        if self._pos >= len(self._blocks):
            self._refill()
        blk = self._blocks[self._pos]
        drv = self._drives[self._pos]
        self._pos += 1
        self.issued += 1
        self._lookups[drv] += 1
        cache = self.cache
        if cache.lookup(blk) is not None:
            self._hits[drv] += 1
            target = self.n_drives if self.sampler.draw(drv) < self.valves[drv] else drv
        else:
            cache.admit(blk, drv)
            target = drv
        if target == self.n_drives:
            self._cache_owners.append(drv)
        self._area[target] += self._out[target] * (t - self._last[target])
        self._last[target] = t
        self._out[target] += 1
        if self._out[target] == 1:
            heapq.heappush(self._heap, (t + self.service[target], target))

    def set_valves(self, valves: Sequence[float]) -> None:
        if len(valves) != self.n_drives:
            raise ConfigurationError(f"{len(valves)} valves for {self.n_drives} drives")
        self.valves = [float(v) for v in valves]

    @property
    def outstanding(self) -> int:
        return sum(self._out)

    # -- event loop ----------------------------------------------------------

    def advance(self, until: float) -> int:
        """Process every completion up to simulated time ``until``; returns the event count."""
        heap = self._heap
        heappop, heappush = heapq.heappop, heapq.heappush
        service = self.service
        out = self._out
        area, last = self._area, self._last
        backend_done, cache_done = self._backend_done, self._cache_done
        hits, lookups = self._hits, self._lookups
        owners = self._cache_owners
        head = self._cache_head
        cache = self.cache
        index, shard_hits = cache.index, cache.hits
        free, fifo, occ, cap = cache.free, cache.fifo, cache.occ, cache.cap
        valves = self.valves
        u = self.sampler.u
        cdev = self.n_drives
        blocks, drives, pos = self._blocks, self._drives, self._pos
        processed = 0

        while heap and heap[0][0] <= until:
            t, d = heappop(heap)
            processed += 1
            if d == cdev:
                cache_done[owners[head]] += 1
                head += 1
            else:
                backend_done[d] += 1
            area[d] += out[d] * (t - last[d])
            last[d] = t
            out[d] -= 1
            if out[d]:
                heappush(heap, (t + service[d], d))

            if pos >= len(blocks):
                self._refill()
                blocks, drives, pos = self._blocks, self._drives, 0
            blk = blocks[pos]
            drv = drives[pos]
            pos += 1
            lookups[drv] += 1
            s = index.get(blk)
            if s is not None:
                shard_hits[s] += 1
                hits[drv] += 1
                x = u[drv] + GOLDEN
                if x >= 1.0:
                    x -= 1.0
                u[drv] = x
                if x < valves[drv]:
                    owners.append(drv)
                    target = cdev
                else:
                    target = drv
            else:
                target = drv
                fl = free[drv]
                if fl:
                    s = fl[-1]
                    occ[s] += 1
                    if occ[s] >= cap[s]:
                        fl.pop()
                    index[blk] = s
                    fifo[drv].append(blk)
                elif fifo[drv]:
                    q = fifo[drv]
                    index[blk] = index.pop(q.popleft())
                    q.append(blk)
            area[target] += out[target] * (t - last[target])
            last[target] = t
            out[target] += 1
            if out[target] == 1:
                heappush(heap, (t + service[target], target))

        if head > 4096:
            del owners[:head]
            head = 0
        self._cache_head = head
        self._pos = pos
        self.issued += processed
        self.completed += processed
        self.now = max(self.now, until)
        return processed

    # -- measurement ---------------------------------------------------------

    def measure_cycle(self, window: float) -> TelemetrySample:
        """Run one window of ``window`` simulated seconds and return its counters."""
        if not window > 0:
            raise ConfigurationError(f"window must be positive, got {window}")
        self._reset_counters()
        end = self.now + window
        self.advance(end)
        n = self.n_drives
        for d in range(n + 1):
            self._area[d] += self._out[d] * (end - self._last[d])
            self._last[d] = end
        bs = self.workload.block_size
        queued = self._area[:n]
        total_q = sum(queued)
        total_a = sum(self._lookups)
        return TelemetrySample(
            window=window,
            backend_bytes=tuple(x * bs for x in self._backend_done),
            cache_bytes=tuple(x * bs for x in self._cache_done),
            hits=tuple(self._hits),
            lookups=tuple(self._lookups),
            shard_hits=tuple(self.cache.hits),
            shard_owner=tuple(self.cache.owner),
            queue_share=tuple(q / total_q if total_q else 0.0 for q in queued),
            arrival_share=tuple(a / total_a if total_a else 0.0 for a in self._lookups),
        )

    def default_window(self, requests: int = 4000) -> float:
        """Window long enough for about ``requests`` completions at the aggregate bound."""
        bound = aggregate_bound(self.b_max, self.c_max) * MB
        return requests * self.workload.block_size / bound


class SimEnv(MeasurementEnv):
    """:class:`MeasurementEnv` over a :class:`Simulator`.

    Changing the valves first runs ``settle`` seconds unobserved so queues
    can drain into their new balance before the next window is counted.
    """

    def __init__(self, sim: Simulator, window: float | None = None, settle: float | None = None, noise: float = 0.01):
        self.sim = sim
        self.window = window if window is not None else sim.default_window()
        self.settle = settle if settle is not None else 0.5 * self.window
        self.noise = noise
        self.last_sample: TelemetrySample | None = None

    @property
    def n_drives(self) -> int:
        return self.sim.n_drives

    def apply(self, valves: ValveConfig) -> None:
        new = list(valves.p)
        if new != self.sim.valves:
            self.sim.set_valves(new)
            if self.settle > 0:
                self.sim.advance(self.sim.now + self.settle)

    def measure(self) -> Telemetry:
        self.last_sample = self.sim.measure_cycle(self.window)
        return self.last_sample.to_telemetry()

    def shard_owner(self) -> tuple[int, ...]:
        return tuple(self.sim.cache.owner)

    def reassign(self, moves) -> None:
        self.sim.cache.reassign(moves)
