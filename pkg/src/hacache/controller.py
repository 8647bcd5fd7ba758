"""Runtime valve control: estimation, two-phase adjustment, capacity regulation, NHC baseline.

Everything here drives a :class:`~hacache.env.MeasurementEnv`; one call to
``env.measure()`` is one telemetry cycle and the unit in which convergence
is counted.
"""

from __future__ import annotations

import csv
import math
from itertools import repeat
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Sequence

from .env import MeasurementEnv, Telemetry
from .errors import ConfigurationError, DomainError, EnvironmentFailure
from .model import ValveConfig


class Phase(str, Enum):
    WARMUP = "WarmUp"
    PHASE1 = "Phase1"
    PHASE2 = "Phase2"
    CAPACITY = "CapacityEval"
    STABLE = "Stable"


@dataclass(frozen=True)
class ControllerParams:
    """Step sizes and thresholds.

    ``delta_b`` and ``delta_c`` are MB/s; ``delta_c=None`` means 100 MB/s per
    drive. ``decision_tol`` is the relative margin a bandwidth change must
    exceed before the controller believes it (0 for noise-free envs);
    ``valve_eps`` is the largest per-drive change in effective diversion
    ``h * p`` that still counts as no change.
    """

    delta_b: float = 1000.0
    delta_c: float | None = None
    p_thres: float = 0.9
    shard_count: int = 256
    delta_q: int = 8
    noise_bound: float = 0.01
    hit_stable_cycles: int = 3
    hit_abs_tol: float = 0.01
    decision_tol: float = 0.0
    valve_eps: float = 1e-9
    nhc_step: float = 0.05
    regulation: bool = True

    def __post_init__(self):
        if not 0.0 < self.p_thres < 1.0:
            raise ConfigurationError(f"p_thres must lie in (0, 1), got {self.p_thres}")
        if not self.delta_b > 0:
            raise ConfigurationError(f"delta_b must be positive, got {self.delta_b}")
        if self.delta_c is not None and not self.delta_c > 0:
            raise ConfigurationError(f"delta_c must be positive, got {self.delta_c}")
        if self.shard_count < 1 or not 1 <= self.delta_q <= self.shard_count:
            raise ConfigurationError(
                f"need 1 <= delta_q <= shard_count, got delta_q={self.delta_q}, shard_count={self.shard_count}"
            )
        if self.hit_stable_cycles < 1:
            raise ConfigurationError("hit_stable_cycles must be at least 1")
        if not 0.0 < self.nhc_step <= 0.5:
            raise ConfigurationError(f"nhc_step must lie in (0, 0.5], got {self.nhc_step}")

    def cache_step(self, n_drives: int) -> float:
        return self.delta_c if self.delta_c is not None else 100.0 * n_drives


@dataclass
class ControllerState:
    P: ValveConfig
    phase: Phase = Phase.WARMUP
    received_capacity: list[bool] = field(default_factory=list)
    cycle: int = 0
    last_S: float = 0.0
    telemetry: Telemetry | None = None
    # hit-rate estimate and per-shard hits accumulated since the last warm-up
    hit_rates: tuple[float, ...] = ()
    hit_sum: list[float] = field(default_factory=list)
    hit_samples: int = 0
    shard_hits: list[float] = field(default_factory=list)
    cycle_limit: int | None = None
    trace: list[tuple] = field(default_factory=list)
    commits: list[tuple[Phase, float]] = field(default_factory=list)

    @classmethod
    def fresh(cls, n_drives: int, initial: float | Sequence[float] = 1.0) -> "ControllerState":
        p = (initial,) * n_drives if isinstance(initial, (int, float)) else tuple(initial)
        return cls(P=ValveConfig(p), received_capacity=[False] * n_drives)

    @property
    def n_drives(self) -> int:
        return len(self.P)


class _BudgetExhausted(Exception):
    pass


def estimate_valve(T: float, b: float, h: float) -> float:
    """Valve that lets a drive serve ``b`` of a logical level ``T`` given hit rate ``h``.

    ``rho = 1 - b / T`` is the share the cache must take; dividing by ``h``
    converts it to a valve, clamped into ``[0, 1]``. With ``h == 0`` the
    valve has no effect and the clamp's limit is returned.
    """
    if not T > 0:
        raise DomainError(f"logical bandwidth T must be positive, got {T}")
    if not 0.0 <= h <= 1.0:
        raise DomainError(f"hit rate must lie in [0, 1], got {h}")
    if not b >= 0:
        raise DomainError(f"backend bandwidth must be non-negative, got {b}")
    rho = 1.0 - b / T
    if h == 0.0:
        return 0.0 if rho <= 0.0 else 1.0
    return min(1.0, max(0.0, rho / h))


# -- measurement plumbing -----------------------------------------------------


def _measure(env: MeasurementEnv, state: ControllerState, P: ValveConfig) -> Telemetry:
    if state.cycle_limit is not None and state.cycle >= state.cycle_limit:
        raise _BudgetExhausted
    env.apply(P)
    tel = env.measure()
    state.cycle += 1
    quotas = env.quotas() if tel.shard_owner or env.shard_owner() else ()
    state.trace.append((state.cycle, state.phase.value, P.p, tel.b, tel.S, quotas))
    if tel.hits_defined() and state.phase is not Phase.WARMUP:
        if len(state.hit_sum) != len(tel.h):
            state.hit_sum = [0.0] * len(tel.h)
            state.hit_samples = 0
        state.hit_sum = [a + h for a, h in zip(state.hit_sum, tel.h)]
        state.hit_samples += 1
        state.hit_rates = tuple(a / state.hit_samples for a in state.hit_sum)
    if tel.shard_hits:
        if len(state.shard_hits) != len(tel.shard_hits):
            state.shard_hits = [0.0] * len(tel.shard_hits)
        state.shard_hits = [a + x for a, x in zip(state.shard_hits, tel.shard_hits)]
    return tel


def _hits(state: ControllerState) -> tuple[float, ...]:
    if state.hit_rates:
        return state.hit_rates
    return state.telemetry.h


def _same(state: ControllerState, a: ValveConfig, b: ValveConfig, params: ControllerParams) -> bool:
    """Equal when no drive's effective diversion ``h_i * p_i`` differs by more than ``valve_eps``."""
    h = _hits(state) if state.hit_rates or state.telemetry is not None else (1.0,) * len(a)
    return max(hi * abs(x - y) for hi, x, y in zip(h, a.p, b.p)) <= params.valve_eps


def _commit(state: ControllerState, P: ValveConfig, tel: Telemetry) -> None:
    state.P = P
    state.telemetry = tel
    state.last_S = tel.S
    state.commits.append((state.phase, tel.S))


def _ensure_measured(env, state, params) -> Telemetry:
    if state.telemetry is None or len(state.telemetry.b) != state.n_drives:
        _commit(state, state.P, _measure(env, state, state.P))
    return state.telemetry


# -- two-phase valve adjustment ----------------------------------------------


def phase1_sweep(env: MeasurementEnv, state: ControllerState, params: ControllerParams) -> ControllerState:
    """Shift load from the cache onto backends that still have headroom.

    Per drive, ask for ``delta_b`` more backend bandwidth at the current
    level and keep the new valve while the level holds. When the level drops
    (the drive is saturated) or the valve cannot move, re-estimate the valve
    from the bandwidth the drive actually delivered during the probe.
    A stalled array (level 0, e.g. a fully open valve with no cache
    bandwidth) probes with the estimate's limit as ``T -> 0``: a closed valve.
    """
    state.phase = Phase.PHASE1
    tol = params.decision_tol
    for i in range(state.n_drives):
        while True:
            cur = _ensure_measured(env, state, params)
            T = cur.level
            if T <= 0:
                if state.P[i] == 0.0:
                    break
                closed = state.P.with_valve(i, 0.0)
                _commit(state, closed, _measure(env, state, closed))
                continue
            h = _hits(state)[i]
            probe = state.P.with_valve(i, estimate_valve(T, cur.b[i] + params.delta_b, h))
            # fully closing a valve always counts: near-zero cache makes tiny valves decisive
            closes = probe[i] == 0.0 < state.P[i]
            if not closes and _same(state, probe, state.P, params):
                settled = state.P.with_valve(i, estimate_valve(T, cur.b[i], h))
                if not _same(state, settled, state.P, params):
                    _commit(state, settled, _measure(env, state, settled))
                break
            tel = _measure(env, state, probe)
            if tel.level < T * (1.0 - tol):
                settled = state.P.with_valve(i, estimate_valve(T, tel.b[i], h))
                if _same(state, settled, state.P, params):
                    env.apply(state.P)
                else:
                    _commit(state, settled, _measure(env, state, settled))
                break
            _commit(state, probe, tel)
    return state


def phase2_sweep(env: MeasurementEnv, state: ControllerState, params: ControllerParams) -> ControllerState:
    """Raise the common level in steps of ``delta_c / N`` while aggregate bandwidth keeps growing."""
    state.phase = Phase.PHASE2
    n = state.n_drives
    step = params.cache_step(n) / n
    tol = params.decision_tol
    while True:
        cur = _ensure_measured(env, state, params)
        target = cur.level + step
        h = _hits(state)
        probe = ValveConfig(tuple(estimate_valve(target, cur.b[i], h[i]) for i in range(n)))
        if _same(state, probe, state.P, params):
            break
        tel = _measure(env, state, probe)
        if tel.S > cur.S * (1.0 + tol):
            _commit(state, probe, tel)
        else:
            env.apply(state.P)
            break
    return state


@dataclass
class TwoPhaseReport:
    converged: bool
    cycles: int
    alternations: int
    trajectory: list[float]
    best_S: float


def run_two_phase(
    env: MeasurementEnv,
    state: ControllerState,
    params: ControllerParams,
    max_cycles: int | None = None,
) -> TwoPhaseReport:
    """Alternate both phases until a full alternation leaves the valves unchanged.

    ``max_cycles`` bounds the telemetry cycles spent here; on exhaustion the
    best committed configuration is restored and the report is flagged
    non-converged.
    """
    start_cycle = state.cycle
    start_trace = len(state.trace)
    outer_limit = state.cycle_limit
    if max_cycles is not None:
        limit = start_cycle + max_cycles
        state.cycle_limit = limit if outer_limit is None else min(limit, outer_limit)

    best = None
    alternations = 0
    converged = False
    try:
        _ensure_measured(env, state, params)
        best = (state.telemetry.S, state.P, state.telemetry)
        while True:
            before = state.P
            phase1_sweep(env, state, params)
            phase2_sweep(env, state, params)
            alternations += 1
            if state.telemetry.S >= best[0]:
                best = (state.telemetry.S, state.P, state.telemetry)
            if _same(state, before, state.P, params):
                converged = True
                break
    except _BudgetExhausted:
        if best is not None and (state.telemetry is None or best[0] > state.telemetry.S):
            state.P, state.telemetry = best[1], best[2]
            state.last_S = best[0]
        env.apply(state.P)
    finally:
        state.cycle_limit = outer_limit

    trajectory = [row[4] for row in state.trace[start_trace:]]
    return TwoPhaseReport(
        converged=converged,
        cycles=state.cycle - start_cycle,
        alternations=alternations,
        trajectory=trajectory,
        best_S=best[0] if best else 0.0,
    )


# -- capacity regulation -----------------------------------------------------


@dataclass
class RegulationResult:
    moves: dict[int, int]
    needy: list[int]
    surplus: list[int]
    reclaimed_from: list[int]
    skipped: list[int]

    @property
    def regulated(self) -> bool:
        return bool(self.moves)


def regulate_capacity(env: MeasurementEnv, state: ControllerState, params: ControllerParams) -> RegulationResult:
    """Move ``delta_q`` shards from each drive with spare cache to drives whose valve is pinned at 1.

    A drive is needy when its valve is fully open and has surplus when its
    valve sits below ``p_thres``. Drives that have received capacity are
    never reclaimed from. A surplus drive keeps its shards when the hits on
    the shards it would lose, as a fraction of all its hits, plus its valve
    exceed 1: the reduced hit rate could no longer carry its current
    diversion. Reclaimed shards go round-robin to needy drives in index order
    and lose their contents.
    """
    state.phase = Phase.CAPACITY
    owners = list(env.shard_owner())
    n = state.n_drives
    empty = RegulationResult({}, [], [], [], [])
    if not owners:
        return empty
    if len(state.received_capacity) != n:
        state.received_capacity = [False] * n

    p = state.P.p
    needy = [i for i in range(n) if p[i] >= 1.0]
    if not needy:
        return RegulationResult({}, needy, [], [], [])
    shard_ids = {i: [k for k, o in enumerate(owners) if o == i] for i in range(n)}
    surplus = [
        i for i in range(n)
        if p[i] < params.p_thres and not state.received_capacity[i] and shard_ids[i]
    ]
    if not surplus:
        return RegulationResult({}, needy, surplus, [], [])

    hits = state.shard_hits if len(state.shard_hits) == len(owners) else [0.0] * len(owners)
    reclaimed: list[int] = []
    reclaimed_from, skipped = [], []
    for i in surplus:
        mine = sorted(shard_ids[i], key=lambda k: (hits[k], k))
        take = mine[: params.delta_q]
        total = math.fsum(hits[k] for k in shard_ids[i])
        share = math.fsum(hits[k] for k in take) / total if total > 0 else 0.0
        if share + p[i] > 1.0:
            skipped.append(i)
            continue
        reclaimed.extend(take)
        reclaimed_from.append(i)

    moves = {k: needy[j % len(needy)] for j, k in enumerate(sorted(reclaimed))}
    if moves:
        env.reassign(moves)
        for i in needy:
            state.received_capacity[i] = True
    return RegulationResult(moves, needy, surplus, reclaimed_from, skipped)


# -- full execution flow -----------------------------------------------------


@dataclass
class LoopReport:
    stable: bool
    cycles: int
    passes: int
    regulation_iterations: int
    two_phase: list[TwoPhaseReport]
    regulations: list[RegulationResult]
    paused: bool = False

    @property
    def iterations(self) -> int:
        """Passes up to the one whose regulation fixed the final allocation (at least one)."""
        return max(1, self.regulation_iterations)

    @property
    def converged(self) -> bool:
        return self.stable and all(r.converged for r in self.two_phase[-1:])


def _reset_hit_tracking(state: ControllerState) -> None:
    state.hit_rates = ()
    state.hit_sum = []
    state.hit_samples = 0
    state.shard_hits = []


def _hit_tolerance(h: float, lookups: int, params: ControllerParams) -> float:
    """Largest hit-rate change still read as steady: relative bound, absolute floor, or sampling error."""
    tol = max(params.noise_bound * h, params.hit_abs_tol)
    if lookups:
        # three standard errors of the difference of two binomial estimates
        tol = max(tol, 3.0 * math.sqrt(2.0 * h * (1.0 - h) / lookups))
    return tol


def warm_up(env: MeasurementEnv, state: ControllerState, params: ControllerParams) -> bool:
    """Measure until every drive's hit rate has held still for ``hit_stable_cycles`` cycles."""
    state.phase = Phase.WARMUP
    _reset_hit_tracking(state)
    prev = None
    steady = 0
    while steady < params.hit_stable_cycles:
        tel = _measure(env, state, state.P)
        state.telemetry = tel
        if not tel.hits_defined():
            prev, steady = None, 0
            continue
        if prev is not None and all(
            abs(h - g) <= _hit_tolerance(g, n, params) for h, g, n in zip(tel.h, prev, tel.lookups or repeat(0))
        ):
            steady += 1
        else:
            steady = 0
        prev = tel.h
    _reset_hit_tracking(state)
    state.hit_rates = prev
    state.hit_sum = list(prev)
    state.hit_samples = 1
    return True


def controller_loop(
    env: MeasurementEnv,
    state: ControllerState,
    params: ControllerParams,
    max_cycles: int,
    *,
    until_stable: bool = True,
    probe_interval: int = 50,
) -> LoopReport:
    """Warm-up, two-phase adjustment and capacity evaluation, repeated until the allocation holds.

    With ``until_stable=False`` the loop keeps running low-rate two-phase
    passes every ``probe_interval`` cycles after reaching Stable, to track
    workload drift, until ``max_cycles`` is spent.
    """
    start = state.cycle
    state.cycle_limit = start + max_cycles
    reports: list[TwoPhaseReport] = []
    regulations: list[RegulationResult] = []
    passes = 0
    stable = False
    paused = False
    try:
        while True:
            warm_up(env, state, params)
            passes += 1
            reports.append(run_two_phase(env, state, params))
            if not reports[-1].converged:
                break
            result = regulate_capacity(env, state, params) if params.regulation else RegulationResult({}, [], [], [], [])
            regulations.append(result)
            if result.regulated:
                continue
            state.phase = Phase.STABLE
            stable = True
            if until_stable:
                break
            while True:
                for _ in range(probe_interval):
                    state.telemetry = _measure(env, state, state.P)
                state.phase = Phase.STABLE
                run_two_phase(env, state, params)
                state.phase = Phase.STABLE
    except _BudgetExhausted:
        pass
    except EnvironmentFailure:
        paused = True
    finally:
        state.cycle_limit = None
    return LoopReport(
        stable=stable,
        cycles=state.cycle - start,
        passes=passes,
        regulation_iterations=sum(1 for r in regulations if r.regulated),
        two_phase=reports,
        regulations=regulations,
        paused=paused,
    )


# -- NHC single-valve baseline -----------------------------------------------


@dataclass
class NHCResult:
    p: float
    S: float
    trajectory: list[tuple[float, float]]
    cycles: int
    converged: bool


def nhc_optimize(
    env: MeasurementEnv,
    step: float = 0.05,
    *,
    p0: float = 0.0,
    tol: float = 0.0,
    max_cycles: int = 10_000,
) -> NHCResult:
    """Hill-climb one valve shared by every drive.

    Each round probes ``p - step`` and ``p + step`` and moves to the best of
    the three; it stops when the current point is the best.
    """
    if not 0.0 < step <= 0.5:
        raise DomainError(f"step must lie in (0, 0.5], got {step}")
    n = env.n_drives
    cycles = 0

    def f(p: float) -> float:
        nonlocal cycles
        env.apply(ValveConfig.uniform(n, p))
        cycles += 1
        return env.measure().S

    p = min(1.0, max(0.0, p0))
    s_cur = f(p)
    trajectory = [(p, s_cur)]
    converged = False
    while cycles < max_cycles:
        best_p, best_s = p, s_cur
        for q in (p - step, p + step):
            q = round(min(1.0, max(0.0, q)), 12)
            if q == p:
                continue
            s = f(q)
            trajectory.append((q, s))
            if s > best_s * (1.0 + tol) and s > best_s:
                best_p, best_s = q, s
        if best_p == p:
            converged = True
            break
        p, s_cur = best_p, best_s
    env.apply(ValveConfig.uniform(n, p))
    return NHCResult(p=p, S=s_cur, trajectory=trajectory, cycles=cycles, converged=converged)


# -- trace output ------------------------------------------------------------


def trace_header(n_drives: int) -> list[str]:
    return (
        ["cycle", "phase"]
        + [f"p{i + 1}" for i in range(n_drives)]
        + [f"b{i + 1}" for i in range(n_drives)]
        + ["S"]
        + [f"quota{i + 1}" for i in range(n_drives)]
    )


def trace_rows(state: ControllerState) -> list[list]:
    n = state.n_drives
    rows = []
    for cycle, phase, p, b, S, quotas in state.trace:
        q = list(quotas) if quotas else [""] * n
        rows.append([cycle, phase, *(f"{x:.6f}" for x in p), *(f"{x:.3f}" for x in b), f"{S:.3f}", *q])
    return rows


def write_trace(state: ControllerState, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trace_header(state.n_drives))
    w.writerows(trace_rows(state))
