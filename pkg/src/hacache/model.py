"""Domain types and the analytic steady-state bandwidth model.

All bandwidths are MB/s (10**6 bytes per second). The model assumes a
saturated front end and striping that hands every member drive the same
logical bandwidth ``T``; a drive with diversion ratio ``rho_i`` then pushes
``(1 - rho_i) * T`` to its backend and ``rho_i * T`` to the shared cache
device.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

MB = 1_000_000
KiB = 1024


@dataclass(frozen=True)
class DeviceProfile:
    """Peak read bandwidth of one physical drive, keyed by block size in bytes."""

    id: str
    bandwidth_table: Mapping[int, float]

    def __post_init__(self):
        if not self.bandwidth_table:
            raise ConfigurationError(f"device {self.id!r} has an empty bandwidth table")
        table = {}
        for size, bw in self.bandwidth_table.items():
            if int(size) <= 0:
                raise ConfigurationError(f"device {self.id!r}: block size must be positive, got {size}")
            if not bw > 0:
                raise ConfigurationError(f"device {self.id!r}: bandwidth must be > 0, got {bw}")
            table[int(size)] = float(bw)
        object.__setattr__(self, "bandwidth_table", MappingProxyType(table))

    def bandwidth(self, block_size: int) -> float:
        """Peak bandwidth at ``block_size``; unlisted sizes are an error, never interpolated."""
        try:
            return self.bandwidth_table[int(block_size)]
        except KeyError:
            listed = ", ".join(str(s) for s in sorted(self.bandwidth_table))
            raise DomainError(
                f"device {self.id!r} has no profile for block size {block_size} (profiled: {listed})"
            ) from None

    def __hash__(self):
        return hash((self.id, tuple(sorted(self.bandwidth_table.items()))))

    def __eq__(self, other):
        if not isinstance(other, DeviceProfile):
            return NotImplemented
        return self.id == other.id and dict(self.bandwidth_table) == dict(other.bandwidth_table)


@dataclass(frozen=True)
class ArrayTopology:
    backends: tuple[DeviceProfile, ...]
    cache: DeviceProfile
    stripe_unit: int = 128 * KiB

    def __post_init__(self):
        object.__setattr__(self, "backends", tuple(self.backends))
        if len(self.backends) < 2:
            raise ConfigurationError(f"an array needs at least 2 backend drives, got {len(self.backends)}")
        su = int(self.stripe_unit)
        if su < 4096 or su & (su - 1):
            raise ConfigurationError(f"stripe_unit must be a power of two >= 4096, got {self.stripe_unit}")

    @property
    def n_drives(self) -> int:
        return len(self.backends)

    def b_max(self, block_size: int) -> tuple[float, ...]:
        return tuple(d.bandwidth(block_size) for d in self.backends)

    def c_max(self, block_size: int) -> float:
        return self.cache.bandwidth(block_size)


def _unit_vector(values: Iterable[float], name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for i, v in enumerate(out):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name}[{i}] = {v} is outside [0, 1]")
    return out


@dataclass(frozen=True)
class ValveConfig:
    """Per-drive valve values: the probability that a cache hit is served by the cache."""

    p: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", _unit_vector(self.p, "p"))

    @classmethod
    def uniform(cls, n: int, value: float) -> "ValveConfig":
        return cls((value,) * n)

    def __len__(self):
        return len(self.p)

    def __iter__(self):
        return iter(self.p)

    def __getitem__(self, i):
        return self.p[i]

    def with_valve(self, i: int, value: float) -> "ValveConfig":
        p = list(self.p)
        p[i] = value
        return replace(self, p=tuple(p))

    def distance(self, other: "ValveConfig") -> float:
        """Largest per-drive valve difference (inf when lengths differ)."""
        if len(other) != len(self):
            return math.inf
        return max((abs(a - b) for a, b in zip(self.p, other.p)), default=0.0)


@dataclass(frozen=True)
class HitProfile:
    h: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "h", _unit_vector(self.h, "h"))

    def __len__(self):
        return len(self.h)

    def __iter__(self):
        return iter(self.h)

    def __getitem__(self, i):
        return self.h[i]


@dataclass(frozen=True)
class SteadyState:
    """Per-drive backend bandwidth ``b``, cache-served bandwidth ``c``, level ``T`` and aggregate ``S``."""

    b: tuple[float, ...]
    c: tuple[float, ...]
    T: float
    S: float
    rho: tuple[float, ...] = field(default=(), compare=False)

    @property
    def n_drives(self) -> int:
        return len(self.b)

    @property
    def cache_total(self) -> float:
        return math.fsum(self.c)


def effective_diversion(p: ValveConfig | Sequence[float], h: HitProfile | Sequence[float]) -> tuple[float, ...]:
    """Diversion ratio actually realised per drive: hit rate times valve."""
    p = p if isinstance(p, ValveConfig) else ValveConfig(tuple(p))
    h = h if isinstance(h, HitProfile) else HitProfile(tuple(h))
    if len(p) != len(h):
        raise ConfigurationError(f"valve vector has {len(p)} entries but hit profile has {len(h)}")
    return tuple(hi * pi for pi, hi in zip(p, h))


def _check_solve_inputs(rho, b_max, c_max):
    if len(rho) != len(b_max):
        raise ConfigurationError(f"rho has {len(rho)} entries but b_max has {len(b_max)}")
    if not len(rho):
        raise ConfigurationError("at least one drive is required")
    for i, r in enumerate(rho):
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"rho[{i}] = {r} is outside [0, 1]")
    for i, b in enumerate(b_max):
        if not b > 0:
            raise DomainError(f"b_max[{i}] = {b} must be positive")
    if not c_max >= 0:
        raise DomainError(f"c_max = {c_max} must be non-negative")


def steady_state_solve(rho: Sequence[float], b_max: Sequence[float], c_max: float) -> SteadyState:
    """Largest common level ``T`` the drives and the cache can sustain for fixed ratios.

    Every drive must serve ``(1 - rho_i) * T <= b_max_i`` and the cache must
    absorb ``sum(rho) * T <= c_max``; the answer is the tightest of those
    bounds. A drive with ``rho_i == 1`` puts no bound on ``T`` from its backend.
    """
    rho = tuple(float(r) for r in rho)
    b_max = tuple(float(b) for b in b_max)
    c_max = float(c_max)
    _check_solve_inputs(rho, b_max, c_max)

    level = math.inf
    for r, b in zip(rho, b_max):
        if r < 1.0:
            level = min(level, b / (1.0 - r))
    total_rho = math.fsum(rho)
    if total_rho > 0.0:
        level = min(level, c_max / total_rho)

    b = tuple(min((1.0 - r) * level, bm) for r, bm in zip(rho, b_max))
    c = tuple(r * level for r in rho)
    return SteadyState(b=b, c=c, T=level, S=len(rho) * level, rho=rho)


def solve_levels(rho: np.ndarray, b_max: Sequence[float], c_max: float) -> np.ndarray:
    """Vectorised ``steady_state_solve(...).T`` over the rows of ``rho`` (shape ``(m, n)``)."""
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    b = np.asarray(b_max, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        backend = np.where(rho < 1.0, b / (1.0 - rho), np.inf).min(axis=1)
        total = rho.sum(axis=1)
        cache = np.where(total > 0.0, c_max / total, np.inf)
    return np.minimum(backend, cache)


def aggregate_bound(b_max: Sequence[float], c_max: float) -> float:
    """Sum of every backend peak plus the cache peak: the utilisation denominator."""
    return math.fsum(b_max) + float(c_max)
