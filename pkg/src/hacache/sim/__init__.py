"""Deterministic request-level simulator of a striped array with a shard cache."""

from .cache import Route, ShardCache, ValveSampler, dispatch
from .engine import SimEnv, Simulator, TelemetrySample
from .layout import map_block_to_drive, map_blocks, parity_drive
from .workload import PATTERNS, BlockStream, WorkloadSpec

__all__ = [
    "PATTERNS",
    "BlockStream",
    "Route",
    "ShardCache",
    "SimEnv",
    "Simulator",
    "TelemetrySample",
    "ValveSampler",
    "WorkloadSpec",
    "dispatch",
    "map_block_to_drive",
    "map_blocks",
    "parity_drive",
]
