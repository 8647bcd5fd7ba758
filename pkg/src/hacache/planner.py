"""Optimal per-drive diversion ratios by water filling, plus a brute-force oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, SearchSpaceTooLarge
from .model import solve_levels


@dataclass(frozen=True)
class DiversionPlan:
    """Diversion ratios in original drive order and the water level ``t_star`` they realise."""

    rho: tuple[float, ...]
    t_star: float
    k_covered: int

    @property
    def n_drives(self) -> int:
        return len(self.rho)

    @property
    def aggregate(self) -> float:
        return self.n_drives * self.t_star

    @property
    def cache_used(self) -> float:
        return math.fsum(r * self.t_star for r in self.rho)


def _validate(b_max, c_max):
    b = tuple(float(x) for x in b_max)
    if not b:
        raise DomainError("b_max must contain at least one drive")
    for i, x in enumerate(b):
        if not x > 0:
            raise DomainError(f"b_max[{i}] = {x} must be positive")
    if not float(c_max) >= 0:
        raise DomainError(f"c_max = {c_max} must be non-negative")
    return b, float(c_max)


def plan_optimal(b_max: Sequence[float], c_max: float) -> DiversionPlan:
    """Fill cache bandwidth into the slowest drives first until the level clears the next drive.

    Drives are visited in ascending ``b_max`` (stable, so ties keep their
    original order). With ``k`` drives covered the common level is
    ``(c_max + sum of the k slowest) / k``; the first ``k`` whose level does
    not exceed the next drive's peak fixes ``t_star``.
    """
    b, c = _validate(b_max, c_max)
    n = len(b)
    order = sorted(range(n), key=lambda i: (b[i], i))
    ranked = [b[i] for i in order]

    running = 0.0
    t_star = ranked[0]
    for k in range(1, n + 1):
        running += ranked[k - 1]
        level = (c + running) / k
        if k == n or level <= ranked[k]:
            t_star = level
            break

    rho = tuple(max(0.0, 1.0 - bi / t_star) for bi in b)
    return DiversionPlan(rho=rho, t_star=t_star, k_covered=sum(1 for r in rho if r > 0))


def _best(candidates: np.ndarray, levels: np.ndarray):
    """Index of the largest level; near-ties go to the least total diversion."""
    top = levels.max()
    near = np.flatnonzero(levels >= top * (1.0 - 1e-12))
    return near[np.argmin(candidates[near].sum(axis=1))]


def brute_force_plan(
    b_max: Sequence[float],
    c_max: float,
    grid_step: float = 0.01,
    *,
    full_grid: bool = False,
    max_points: int = 2_000_000,
) -> DiversionPlan:
    """Exhaustive search for the ratio vector with the largest aggregate bandwidth.

    The default search walks the level ``T`` from the slowest drive's peak
    upwards in steps of ``grid_step * min(b_max)`` and scores the ratios each
    level implies. ``full_grid=True`` instead enumerates every ratio vector on
    a ``grid_step`` lattice in ``[0, 1)^N`` (only sensible for ``N <= 3``).
    Both score candidates with the steady-state solver.
    """
    b, c = _validate(b_max, c_max)
    if not 0 < grid_step <= 0.1:
        raise DomainError(f"grid_step must lie in (0, 0.1], got {grid_step}")
    n = len(b)
    b_arr = np.asarray(b)

    if full_grid:
        per_axis = int(math.floor(1.0 / grid_step + 1e-9))
        total = per_axis**n
        if total > max_points:
            raise SearchSpaceTooLarge(f"{total} lattice points exceed the cap of {max_points}")
        powers = per_axis ** np.arange(n)
        best_rho, best_level = None, -math.inf
        for start in range(0, total, 500_000):
            idx = np.arange(start, min(total, start + 500_000))
            cand = ((idx[:, None] // powers) % per_axis) * grid_step
            levels = solve_levels(cand, b, c)
            j = _best(cand, levels)
            if best_rho is None or levels[j] > best_level * (1.0 + 1e-12) or (
                levels[j] >= best_level * (1.0 - 1e-12) and cand[j].sum() < best_rho.sum()
            ):
                best_rho, best_level = cand[j].copy(), float(levels[j])
        rho, level = best_rho, best_level
    else:
        lo = float(b_arr.min())
        step = grid_step * lo
        count = int(math.floor(c / step + 1e-9)) + 1
        if count > max_points:
            raise SearchSpaceTooLarge(f"{count} level points exceed the cap of {max_points}")
        levels_grid = lo + step * np.arange(count)
        cand = np.clip(1.0 - b_arr[None, :] / levels_grid[:, None], 0.0, None)
        levels = solve_levels(cand, b, c)
        j = _best(cand, levels)
        rho, level = cand[j], float(levels[j])

    rho_t = tuple(float(r) for r in rho)
    return DiversionPlan(rho=rho_t, t_star=level, k_covered=sum(1 for r in rho_t if r > 0))

