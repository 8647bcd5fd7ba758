"""Experiment drivers behind the CLI commands; each returns plain result records."""

from __future__ import annotations

import dataclasses
import itertools
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from ..controller import (
    ControllerParams,
    ControllerState,
    LoopReport,
    NHCResult,
    controller_loop,
    nhc_optimize,
    run_two_phase,
    warm_up,
)
from ..env import AnalyticEnv
from ..errors import ConfigurationError
from ..model import aggregate_bound
from ..planner import DiversionPlan, plan_optimal
from ..presets import ARRAYS, HETEROGENEOUS, HOMOGENEOUS
from ..sim.engine import SimEnv, Simulator
from .config import ScenarioConfig

# windows averaged for the reported steady-state bandwidth
FINAL_WINDOWS = 5


def make_env(cfg: ScenarioConfig, *, topology: str | None = None) -> SimEnv:
    topo = cfg.array(topology)
    sim = Simulator(topo, cfg.workload(), cache_frac=cfg.cache_fraction, shard_count=cfg.shard_count)
    window = cfg.window_ms / 1000.0
    settle = None if cfg.settle_ms is None else cfg.settle_ms / 1000.0
    return SimEnv(sim, window=window, settle=settle, noise=cfg.noise_bound)


def bound_of(cfg: ScenarioConfig, topology: str | None = None) -> float:
    topo = cfg.array(topology)
    return aggregate_bound(topo.b_max(cfg.block_size), topo.c_max(cfg.block_size))


def settled_bandwidth(env: SimEnv, windows: int = FINAL_WINDOWS) -> float:
    return statistics.fmean(env.measure().S for _ in range(windows))


# -- plan -------------------------------------------------------------------------


@dataclass
class PlanResult:
    topology: str
    block_size: int
    b_max: tuple[float, ...]
    c_max: float
    plan: DiversionPlan
    bound: float

    @property
    def utilization(self) -> float:
        return self.plan.aggregate / self.bound


def plan(cfg: ScenarioConfig, topology: str | None = None) -> PlanResult:
    topo = cfg.array(topology)
    b, c = topo.b_max(cfg.block_size), topo.c_max(cfg.block_size)
    return PlanResult(topology or cfg.topology, cfg.block_size, b, c, plan_optimal(b, c), aggregate_bound(b, c))


# -- controller runs on the simulator ---------------------------------------------


@dataclass
class RunResult:
    topology: str
    controller: str
    S: float
    bound: float
    P: tuple[float, ...]
    hit_rates: tuple[float, ...]
    quotas: tuple[int, ...]
    converged: bool
    cycles: int
    regulation_iterations: int
    iterations: int
    state: ControllerState | None = None
    report: LoopReport | None = None
    nhc: NHCResult | None = None

    @property
    def utilization(self) -> float:
        return self.S / self.bound if self.bound else 0.0


def run_hacache(cfg: ScenarioConfig, *, topology: str | None = None) -> RunResult:
    env = make_env(cfg, topology=topology)
    state = ControllerState.fresh(env.n_drives)
    report = controller_loop(env, state, cfg.controller_params(), cfg.max_cycles)
    S = settled_bandwidth(env)
    return RunResult(
        topology=topology or cfg.topology,
        controller="hacache",
        S=S,
        bound=bound_of(cfg, topology),
        P=state.P.p,
        hit_rates=tuple(state.hit_rates),
        quotas=tuple(env.quotas()),
        converged=report.converged,
        cycles=report.cycles,
        regulation_iterations=report.regulation_iterations,
        iterations=report.iterations,
        state=state,
        report=report,
    )


def run_nhc(cfg: ScenarioConfig, *, topology: str | None = None) -> RunResult:
    """Single shared valve, hill-climbed after the same hit-rate warm-up HACache gets."""
    env = make_env(cfg, topology=topology)
    params = cfg.controller_params()
    state = ControllerState.fresh(env.n_drives, 0.0)
    state.cycle_limit = cfg.max_cycles
    warm_up(env, state, params)
    warm = state.cycle
    result = nhc_optimize(
        env, params.nhc_step, tol=params.decision_tol, max_cycles=max(1, cfg.max_cycles - warm)
    )
    S = settled_bandwidth(env)
    return RunResult(
        topology=topology or cfg.topology,
        controller="nhc",
        S=S,
        bound=bound_of(cfg, topology),
        P=(result.p,) * env.n_drives,
        hit_rates=tuple(state.hit_rates),
        quotas=tuple(env.quotas()),
        converged=result.converged,
        cycles=warm + result.cycles,
        regulation_iterations=0,
        iterations=1,
        state=state,
        nhc=result,
    )


def run_controller(cfg: ScenarioConfig, *, topology: str | None = None) -> RunResult:
    if cfg.controller == "nhc":
        return run_nhc(cfg, topology=topology)
    return run_hacache(cfg, topology=topology)


@dataclass
class Comparison:
    hacache: RunResult
    nhc: RunResult

    @property
    def gain_pp(self) -> float:
        """Utilization difference in percentage points."""
        return 100.0 * (self.hacache.utilization - self.nhc.utilization)

    @property
    def relative_gain(self) -> float:
        return self.hacache.S / self.nhc.S - 1.0 if self.nhc.S else 0.0


def compare(cfg: ScenarioConfig, *, topology: str | None = None) -> Comparison:
    return Comparison(run_hacache(cfg, topology=topology), run_nhc(cfg, topology=topology))


# -- valve-space sweep on the analytic model --------------------------------------


def initial_valves(n: int, samples: int, seed: int) -> np.ndarray:
    """Latin-hypercube starting points followed by every corner of the unit cube."""
    lhs = qmc.LatinHypercube(d=n, seed=seed).random(samples) if samples else np.empty((0, n))
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    return np.vstack([lhs, corners])


@dataclass
class ValveSample:
    topology: str
    index: int
    start: tuple[float, ...]
    cycles: int
    alternations: int
    converged: bool
    S: float
    optimum: float

    @property
    def gap(self) -> float:
        return self.optimum - self.S


@dataclass
class ValveSweep:
    samples: list[ValveSample]

    def by_topology(self) -> dict[str, list[ValveSample]]:
        out: dict[str, list[ValveSample]] = {}
        for s in self.samples:
            out.setdefault(s.topology, []).append(s)
        return out

    def summary(self) -> dict[str, dict[str, float]]:
        rows = {}
        for name, group in self.by_topology().items():
            cycles = [s.cycles for s in group]
            mean = statistics.fmean(cycles)
            rows[name] = {
                "samples": len(group),
                "converged": sum(s.converged for s in group),
                "mean_cycles": mean,
                "max_cycles": max(cycles),
                "max_over_mean": max(cycles) / mean if mean else 0.0,
                "worst_gap": max(s.gap for s in group),
            }
        return rows

    def hetero_homo_ratio(self) -> float | None:
        groups = self.by_topology()
        het = [s.cycles for t in HETEROGENEOUS for s in groups.get(t, [])]
        hom = [s.cycles for t in HOMOGENEOUS for s in groups.get(t, [])]
        if not het or not hom:
            return None
        return statistics.fmean(het) / statistics.fmean(hom)


def analytic_params(cfg: ScenarioConfig) -> ControllerParams:
    # the model answers exactly, so no noise margins
    return dataclasses.replace(cfg.controller_params(), decision_tol=0.0, valve_eps=1e-9)


def sweep_valves(
    cfg: ScenarioConfig,
    topologies: Sequence[str] | None = None,
    samples: int | None = None,
) -> ValveSweep:
    samples = cfg.samples if samples is None else samples
    if samples > cfg.sample_cap:
        raise ConfigurationError(f"samples={samples} exceeds sample_cap={cfg.sample_cap}")
    params = analytic_params(cfg)
    out = []
    for name in topologies or (cfg.topology,):
        topo = cfg.array(name)
        b, c = topo.b_max(cfg.block_size), topo.c_max(cfg.block_size)
        optimum = plan_optimal(b, c).aggregate
        env = AnalyticEnv(b, c, cfg.hit_rate)
        for k, start in enumerate(initial_valves(topo.n_drives, samples, cfg.seed)):
            state = ControllerState.fresh(topo.n_drives, tuple(float(x) for x in start))
            rep = run_two_phase(env, state, params, max_cycles=cfg.max_cycles)
            out.append(
                ValveSample(
                    name, k, tuple(start.tolist()), rep.cycles, rep.alternations,
                    rep.converged, state.telemetry.S, optimum,
                )
            )
    return ValveSweep(out)


# -- capacity sweep on the simulator ----------------------------------------------


def sweep_capacity(
    cfg: ScenarioConfig,
    capacities: Sequence[float] | None = None,
    topologies: Sequence[str] | None = None,
) -> list[tuple[float, RunResult]]:
    """Run the full loop under a uniform workload at each cache size; returns ``(capacity, result)``."""
    out = []
    for name in topologies or (cfg.topology,):
        for cap in capacities or cfg.capacities:
            point = cfg.replace(pattern="uniform", cache_frac=cap, cache_bytes=None)
            out.append((cap, run_hacache(point, topology=name)))
    return out


def preset_names(spec: str | None) -> list[str]:
    """``all`` or a ``;``/whitespace separated list of topology names."""
    if spec is None or spec.strip().lower() == "all":
        return list(ARRAYS)
    return [t for t in spec.replace(";", " ").split() if t]
