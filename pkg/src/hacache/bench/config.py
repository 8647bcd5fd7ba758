"""Scenario configuration: a flat ``key = value`` document.

Blank lines and ``#`` comments are ignored. ``topology`` is a named preset
(``3A-1B``) or a comma-separated list of device models (``A,A,B,B``).
Extra device models can be declared as ``device.NAME = 4096:1800, 131072:3500``
(block size in bytes, bandwidth in MB/s) and then used in the list or as
``cache_device``. ``format_config`` writes every key, so parsing its output
gives back an equal config.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from typing import Callable, Mapping

from ..controller import ControllerParams
from ..errors import ConfigurationError, DomainError
from ..model import ArrayTopology, DeviceProfile
from ..presets import ARRAYS, BS_128K, DEVICES
from ..sim.workload import PATTERNS, WorkloadSpec

CONTROLLERS = ("hacache", "nhc")
DEFAULT_CAPACITIES = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0)

DeviceTable = tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class ScenarioConfig:
    topology: str = "3A-1B"
    cache_device: str = "C"
    devices: tuple[tuple[str, DeviceTable], ...] = ()
    block_size: int = BS_128K
    stripe_unit: int = BS_128K
    # workload
    pattern: str = "hotspot"
    hot_space_frac: float = 0.05
    hot_access_frac: float = 0.95
    io_blocks: int = 32768
    threads: int = 16
    qd: int = 64
    # cache size as a fraction of the I/O range, or absolute bytes when set
    cache_frac: float = 0.1
    cache_bytes: int | None = None
    seed: int = 0
    max_cycles: int = 2000
    window_ms: float = 100.0
    settle_ms: float | None = None
    # controller
    controller: str = "hacache"
    regulation: bool = True
    delta_b: float = 1000.0
    delta_c: float | None = None
    p_thres: float = 0.9
    shard_count: int = 256
    delta_q: int = 8
    noise_bound: float = 0.01
    decision_tol: float = 0.003
    valve_eps: float = 0.01
    nhc_step: float = 0.05
    # analytic sweeps
    hit_rate: float = 1.0
    samples: int = 10_000
    sample_cap: int = 100_000
    capacities: tuple[float, ...] = DEFAULT_CAPACITIES

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"unknown pattern {self.pattern!r}; valid: {', '.join(PATTERNS)}")
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"unknown controller {self.controller!r}; valid: {', '.join(CONTROLLERS)}")
        for name in ("cache_frac", "hit_rate", "decision_tol", "valve_eps", "noise_bound"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        for name in ("io_blocks", "threads", "qd", "max_cycles", "samples", "sample_cap"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not self.window_ms > 0:
            raise ConfigurationError(f"window_ms must be positive, got {self.window_ms}")
        if self.settle_ms is not None and self.settle_ms < 0:
            raise ConfigurationError(f"settle_ms must be non-negative, got {self.settle_ms}")
        if self.cache_bytes is not None and not 0 <= self.cache_bytes <= self.io_range:
            raise ConfigurationError(f"cache_bytes must lie in [0, io_range={self.io_range}], got {self.cache_bytes}")
        if self.samples > self.sample_cap:
            raise ConfigurationError(f"samples={self.samples} exceeds sample_cap={self.sample_cap}")
        if not self.capacities or not all(0.0 < c <= 1.0 for c in self.capacities):
            raise ConfigurationError("capacities must be a non-empty list of fractions in (0, 1]")
        topo = self.array()
        try:
            topo.b_max(self.block_size)
            topo.c_max(self.block_size)
        except DomainError as e:
            raise ConfigurationError(str(e)) from None
        self.controller_params()
        self.workload()

    # -- derived objects ------------------------------------------------------

    @property
    def io_range(self) -> int:
        return self.io_blocks * self.block_size

    @property
    def cache_fraction(self) -> float:
        if self.cache_bytes is not None:
            return self.cache_bytes / self.io_range
        return self.cache_frac

    def device_models(self) -> dict[str, DeviceProfile]:
        models = dict(DEVICES)
        for name, table in self.devices:
            models[name] = DeviceProfile(name, dict(table))
        return models

    def array(self, topology: str | None = None) -> ArrayTopology:
        """Resolve ``topology`` (default: this config's) against presets and declared devices."""
        name = (topology or self.topology).strip()
        models = self.device_models()

        def model(key: str) -> DeviceProfile:
            try:
                return models[key.strip()]
            except KeyError:
                raise ConfigurationError(
                    f"unknown device model {key.strip()!r}; valid models: {', '.join(sorted(models))}"
                ) from None

        if name in ARRAYS:
            backends = tuple(model(m) for m in ARRAYS[name])
        elif "," in name:
            backends = tuple(model(m) for m in name.split(","))
        else:
            raise ConfigurationError(
                f"unknown topology {name!r}; valid presets: {', '.join(ARRAYS)} "
                "(or a comma-separated device list such as A,A,B,B)"
            )
        return ArrayTopology(backends, model(self.cache_device), self.stripe_unit)

    def controller_params(self) -> ControllerParams:
        return ControllerParams(
            delta_b=self.delta_b,
            delta_c=self.delta_c,
            p_thres=self.p_thres,
            shard_count=self.shard_count,
            delta_q=self.delta_q,
            noise_bound=self.noise_bound,
            decision_tol=self.decision_tol,
            valve_eps=self.valve_eps,
            nhc_step=self.nhc_step,
            regulation=self.regulation,
        )

    def workload(self, pattern: str | None = None) -> WorkloadSpec:
        return WorkloadSpec(
            block_size=self.block_size,
            io_range=self.io_range,
            pattern=pattern or self.pattern,
            hot_space_frac=self.hot_space_frac,
            hot_access_frac=self.hot_access_frac,
            threads=self.threads,
            queue_depth=self.qd,
            seed=self.seed,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# -- value codecs ---------------------------------------------------------------

_SIZE = re.compile(r"^\s*(\d+)\s*([kmg]?)(i?b)?\s*$", re.IGNORECASE)
_UNITS = {"": 1, "k": 1024, "m": 1024**2, "g": 1024**3}


def parse_size(text: str) -> int:
    """Bytes from ``4096``, ``4K``, ``128KiB`` or ``1M`` (binary units)."""
    m = _SIZE.match(text)
    if not m:
        raise ConfigurationError(f"not a size: {text!r}")
    return int(m.group(1)) * _UNITS[m.group(2).lower()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _optional(parse: Callable[[str], object]) -> Callable[[str], object]:
    def inner(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else parse(text)

    return inner


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _device_table(text: str) -> DeviceTable:
    pairs = []
    for item in text.split(","):
        if not item.strip():
            continue
        size, _, bw = item.partition(":")
        if not bw:
            raise ConfigurationError(f"device entry {item.strip()!r} is not SIZE:MBPS")
        pairs.append((parse_size(size), float(bw)))
    if not pairs:
        raise ConfigurationError("device table is empty")
    return tuple(sorted(pairs))


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


_PARSERS: dict[str, Callable[[str], object]] = {
    "topology": str.strip,
    "cache_device": str.strip,
    "block_size": parse_size,
    "stripe_unit": parse_size,
    "pattern": str.strip,
    "hot_space_frac": float,
    "hot_access_frac": float,
    "io_blocks": int,
    "threads": int,
    "qd": int,
    "cache_frac": float,
    "cache_bytes": _optional(parse_size),
    "seed": int,
    "max_cycles": int,
    "window_ms": float,
    "settle_ms": _optional(float),
    "controller": lambda s: s.strip().lower(),
    "regulation": _bool,
    "delta_b": float,
    "delta_c": _optional(float),
    "p_thres": float,
    "shard_count": int,
    "delta_q": int,
    "noise_bound": float,
    "decision_tol": float,
    "valve_eps": float,
    "nhc_step": float,
    "hit_rate": float,
    "samples": int,
    "sample_cap": int,
    "capacities": _floats,
}
CONFIG_KEYS = tuple(_PARSERS)


def _coerce(key: str, text: str):
    try:
        return _PARSERS[key](text)
    except ConfigurationError:
        raise
    except ValueError as e:
        raise ConfigurationError(f"bad value for {key}: {text!r} ({e})") from None


def apply_overrides(base: ScenarioConfig, overrides: Mapping[str, str]) -> ScenarioConfig:
    """Return ``base`` with string-valued settings applied (file lines or CLI flags)."""
    changes: dict[str, object] = {}
    devices = dict(base.devices)
    for key, text in overrides.items():
        if key.startswith("device."):
            name = key[len("device."):].strip()
            if not name or "," in name:
                raise ConfigurationError(f"bad device name in {key!r}")
            devices[name] = _device_table(text)
        elif key in _PARSERS:
            changes[key] = _coerce(key, text)
        else:
            raise ConfigurationError(f"unknown config key {key!r}; valid keys: {', '.join(CONFIG_KEYS)}")
    changes["devices"] = tuple(sorted(devices.items()))
    return dataclasses.replace(base, **changes)


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in entries:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return apply_overrides(base or ScenarioConfig(), entries)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def format_config(cfg: ScenarioConfig) -> str:
    lines = [f"{key} = {_fmt(getattr(cfg, key))}" for key in CONFIG_KEYS]
    for name, table in cfg.devices:
        lines.append(f"device.{name} = " + ", ".join(f"{s}:{bw!r}" for s, bw in table))
    return "\n".join(lines) + "\n"
