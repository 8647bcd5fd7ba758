"""Device profiles of the three SSD models and the named four-drive arrays.

Bandwidths are peak random-read MB/s per block size.
"""

from __future__ import annotations

from .errors import ConfigurationError
from .model import ArrayTopology, DeviceProfile, KiB

BS_4K = 4 * KiB
BS_128K = 128 * KiB

SSD_A = DeviceProfile("A", {BS_4K: 1800.0, BS_128K: 3500.0})
SSD_B = DeviceProfile("B", {BS_4K: 6350.0, BS_128K: 7100.0})
SSD_C = DeviceProfile("C", {BS_4K: 7000.0, BS_128K: 7100.0})

DEVICES = {"A": SSD_A, "B": SSD_B, "C": SSD_C}

# name -> backend models, slow drives first
ARRAYS = {
    "4A": "AAAA",
    "3A-1B": "AAAB",
    "2A-2B": "AABB",
    "1A-3B": "ABBB",
    "4B": "BBBB",
}
HETEROGENEOUS = ("3A-1B", "2A-2B", "1A-3B")
HOMOGENEOUS = ("4A", "4B")


def device(name: str) -> DeviceProfile:
    try:
        return DEVICES[name.strip().upper()]
    except KeyError:
        raise ConfigurationError(
            f"unknown device model {name!r}; valid models: {', '.join(sorted(DEVICES))}"
        ) from None


def topology(name: str, cache: str = "C", stripe_unit: int = BS_128K) -> ArrayTopology:
    """Resolve a named array such as ``"3A-1B"`` to backend and cache profiles."""
    try:
        models = ARRAYS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown topology preset {name!r}; valid presets: {', '.join(ARRAYS)}"
        ) from None
    return ArrayTopology(tuple(DEVICES[m] for m in models), device(cache), stripe_unit)
