"""Measurement environments the controller talks to.

A controller never sees device limits directly. It applies a valve
configuration, waits one telemetry cycle and reads back what the array
delivered. :class:`AnalyticEnv` answers from the closed-form steady-state
model; the event simulator provides the same interface in
:mod:`hacache.sim.engine`.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ConfigurationError, DomainError
from .model import HitProfile, ValveConfig, effective_diversion, steady_state_solve


@dataclass(frozen=True)
class Telemetry:
    """One cycle of observations, all bandwidths in MB/s.

    ``logical[i]`` is what drive ``i`` delivered including the cache share
    (``b[i] + c[i]``). ``lookups[i]`` counts cache look-ups for drive ``i``;
    an empty tuple means hit rates are exact (analytic env).
    """

    b: tuple[float, ...]
    logical: tuple[float, ...]
    S: float
    h: tuple[float, ...]
    shard_hits: tuple[float, ...] = ()
    shard_owner: tuple[int, ...] = ()
    lookups: tuple[int, ...] = ()

    @property
    def n_drives(self) -> int:
        return len(self.b)

    @property
    def level(self) -> float:
        """Common per-drive logical bandwidth ``T``."""
        return self.S / len(self.b) if self.b else 0.0

    @property
    def c(self) -> tuple[float, ...]:
        return tuple(t - b for t, b in zip(self.logical, self.b))

    def hits_defined(self) -> bool:
        return not self.lookups or all(n > 0 for n in self.lookups)


class MeasurementEnv(ABC):
    """Apply a valve configuration, then observe one telemetry cycle per :meth:`measure`."""

    #: relative run-to-run noise of S under a fixed configuration
    noise: float = 0.0

    @property
    @abstractmethod
    def n_drives(self) -> int: ...

    @abstractmethod
    def apply(self, valves: ValveConfig) -> None: ...

    @abstractmethod
    def measure(self) -> Telemetry: ...

    def shard_owner(self) -> tuple[int, ...]:
        """Owner drive of every cache shard; empty when the env has no shard cache."""
        return ()

    def reassign(self, moves: Mapping[int, int]) -> None:
        """Hand shard ``k`` to drive ``moves[k]``, dropping its cached contents."""
        raise NotImplementedError(f"{type(self).__name__} has no shard cache")

    def quotas(self) -> tuple[int, ...]:
        owners = self.shard_owner()
        counts = Counter(owners)
        return tuple(counts.get(i, 0) for i in range(self.n_drives))


def even_shard_owners(n_drives: int, shard_count: int) -> list[int]:
    """Initial shard ownership: contiguous equal blocks, remainder to the lowest drives."""
    base, extra = divmod(shard_count, n_drives)
    owners = []
    for i in range(n_drives):
        owners.extend([i] * (base + (1 if i < extra else 0)))
    return owners


class AnalyticEnv(MeasurementEnv):
    """Steady-state model answering every cycle exactly.

    Hit rates are either fixed (``h``) or derived from shard quotas under a
    uniform random workload (``cache_frac``): a drive owning ``q`` of
    ``shard_count`` shards keeps ``cache_frac * N * q / shard_count`` of its
    own data cached, capped at 1.
    """

    def __init__(
        self,
        b_max: Sequence[float],
        c_max: float,
        h: float | Sequence[float] = 1.0,
        *,
        cache_frac: float | None = None,
        shard_count: int = 256,
    ):
        self.b_max = tuple(float(b) for b in b_max)
        self.c_max = float(c_max)
        n = len(self.b_max)
        if n < 1:
            raise ConfigurationError("AnalyticEnv needs at least one drive")
        if cache_frac is not None:
            if not 0.0 <= cache_frac <= 1.0:
                raise DomainError(f"cache_frac must lie in [0, 1], got {cache_frac}")
            self.cache_frac = float(cache_frac)
            self._owners = even_shard_owners(n, shard_count)
            self._fixed_h = None
        else:
            self.cache_frac = None
            self._owners = []
            hv = (h,) * n if isinstance(h, (int, float)) else tuple(h)
            if len(hv) != n:
                raise ConfigurationError(f"hit profile has {len(hv)} entries for {n} drives")
            self._fixed_h = HitProfile(hv)
        self.valves = ValveConfig.uniform(n, 0.0)
        self.cycles = 0

    @property
    def n_drives(self) -> int:
        return len(self.b_max)

    def hit_rates(self) -> tuple[float, ...]:
        if self._fixed_h is not None:
            return self._fixed_h.h
        n, total = self.n_drives, len(self._owners)
        q = self.quotas()
        return tuple(min(1.0, self.cache_frac * n * qi / total) if total else 0.0 for qi in q)

    def apply(self, valves: ValveConfig) -> None:
        if len(valves) != self.n_drives:
            raise ConfigurationError(f"{len(valves)} valves for {self.n_drives} drives")
        self.valves = valves

    def measure(self) -> Telemetry:
        self.cycles += 1
        h = self.hit_rates()
        ss = steady_state_solve(effective_diversion(self.valves, h), self.b_max, self.c_max)
        shard_hits: tuple[float, ...] = ()
        if self._owners:
            q = self.quotas()
            # a drive's hits spread evenly over its shards
            per_shard = [h[i] * ss.T / q[i] if q[i] else 0.0 for i in range(self.n_drives)]
            shard_hits = tuple(per_shard[o] for o in self._owners)
        return Telemetry(
            b=ss.b,
            logical=tuple(b + c for b, c in zip(ss.b, ss.c)),
            S=ss.S,
            h=h,
            shard_hits=shard_hits,
            shard_owner=tuple(self._owners),
        )

    def shard_owner(self) -> tuple[int, ...]:
        return tuple(self._owners)

    def reassign(self, moves: Mapping[int, int]) -> None:
        if not self._owners:
            raise NotImplementedError("AnalyticEnv without cache_frac has no shards")
        for shard, owner in moves.items():
            if not 0 <= owner < self.n_drives:
                raise ConfigurationError(f"shard {shard} moved to unknown drive {owner}")
            self._owners[shard] = owner

    def optimum(self) -> float:
        """Aggregate bandwidth of the planner's optimum, for reference (ignores hit caps)."""
        from .planner import plan_optimal

        return plan_optimal(self.b_max, self.c_max).aggregate

