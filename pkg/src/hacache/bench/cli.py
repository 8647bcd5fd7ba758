"""``hacache-bench``: planner, controller runs, baselines and sweeps, emitted as CSV.

CSV goes to ``--out`` (or standard output); human-readable summary lines,
each prefixed with ``# ``, go to standard output unless ``--quiet``.

Exit status: 0 on success, 2 on a configuration error, 3 when a run did not
converge within ``max_cycles``.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import sys
from typing import IO, Iterator, Sequence

from ..controller import trace_header, trace_rows
from ..errors import ConfigurationError, HACacheError
from . import experiments as ex
from .config import CONFIG_KEYS, ScenarioConfig, apply_overrides, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3

COMMANDS = ("plan", "run", "compare", "sweep-valves", "sweep-capacity")


def _f(x: float, digits: int = 3) -> str:
    return f"{x:.{digits}f}"


class Output:
    """CSV sink plus the summary channel."""

    def __init__(self, csv_fh: IO[str], quiet: bool):
        self.writer = csv.writer(csv_fh, lineterminator="\n")
        self.quiet = quiet

    def rows(self, header: Sequence[str], rows: Sequence[Sequence]) -> None:
        self.writer.writerow(header)
        self.writer.writerows(rows)

    def note(self, text: str) -> None:
        if not self.quiet:
            print(f"# {text}", file=sys.stdout)


# -- commands ------------------------------------------------------------------------


def cmd_plan(cfg: ScenarioConfig, out: Output, args) -> int:
    r = ex.plan(cfg)
    p = r.plan
    rows = []
    for i, (b, rho) in enumerate(zip(r.b_max, p.rho)):
        backend = (1.0 - rho) * p.t_star
        # headroom: backend bandwidth left idle because striping caps every drive at T*
        rows.append([r.topology, r.block_size, i + 1, _f(b), _f(rho, 6), _f(backend), _f(rho * p.t_star), _f(b - backend)])
    out.rows(["topology", "block_size", "drive", "b_max", "rho", "backend", "cache", "headroom"], rows)
    out.note(f"T* = {_f(p.t_star)} MB/s  rho = ({', '.join(_f(x, 4) for x in p.rho)})")
    out.note(f"cache used = {_f(p.cache_used)} of {_f(r.c_max)} MB/s  aggregate = {_f(p.aggregate)} MB/s")
    out.note(f"aggregate bound = {_f(r.bound)} MB/s  utilization = {_f(r.utilization, 4)}")
    return EXIT_OK


def _summary_notes(out: Output, r: ex.RunResult) -> None:
    out.note(
        f"{r.controller} {r.topology}: S = {_f(r.S)} MB/s  utilization = {_f(r.utilization, 4)}  "
        f"converged = {str(r.converged).lower()}  cycles = {r.cycles}"
    )
    out.note(
        f"valves = ({', '.join(_f(x, 4) for x in r.P)})  hit rates = ({', '.join(_f(x, 4) for x in r.hit_rates)})"
    )
    if r.controller == "hacache":
        out.note(
            f"iterations = {r.iterations}  regulation iterations = {r.regulation_iterations}  "
            f"quotas = ({', '.join(str(q) for q in r.quotas)})"
        )


def cmd_run(cfg: ScenarioConfig, out: Output, args) -> int:
    r = ex.run_controller(cfg)
    if r.controller == "nhc":
        out.rows(["cycle", "p", "S"], [[k + 1, _f(p, 6), _f(s)] for k, (p, s) in enumerate(r.nhc.trajectory)])
    else:
        out.rows(trace_header(len(r.P)), trace_rows(r.state))
    _summary_notes(out, r)
    return EXIT_OK if r.converged else EXIT_NOT_CONVERGED


COMPARE_HEADER = ["controller", "topology", "S", "utilization", "aggregate_bound", "converged", "cycles"]


def cmd_compare(cfg: ScenarioConfig, out: Output, args) -> int:
    c = ex.compare(cfg)
    rows = [
        [r.controller, r.topology, _f(r.S), _f(r.utilization, 4), _f(r.bound), str(r.converged).lower(), r.cycles]
        for r in (c.hacache, c.nhc)
    ]
    out.rows(COMPARE_HEADER, rows)
    out.note(
        f"gain = {_f(c.gain_pp, 1)} pp of the aggregate bound  "
        f"(relative bandwidth gain {_f(100 * c.relative_gain, 1)}%)"
    )
    return EXIT_OK if c.hacache.converged and c.nhc.converged else EXIT_NOT_CONVERGED


def cmd_sweep_valves(cfg: ScenarioConfig, out: Output, args) -> int:
    sweep = ex.sweep_valves(cfg, ex.preset_names(args.topologies))
    n = max(len(s.start) for s in sweep.samples)
    out.rows(
        ["topology", "sample", *(f"p{i + 1}" for i in range(n)), "cycles", "alternations", "converged", "S", "optimum"],
        [
            [s.topology, s.index, *(_f(x, 6) for x in s.start), s.cycles, s.alternations,
             str(s.converged).lower(), _f(s.S), _f(s.optimum)]
            for s in sweep.samples
        ],
    )
    for name, row in sweep.summary().items():
        out.note(
            f"{name}: {row['converged']}/{row['samples']} converged  mean cycles = {_f(row['mean_cycles'], 2)}  "
            f"max = {row['max_cycles']}  max/mean = {_f(row['max_over_mean'], 3)}  worst gap = {_f(row['worst_gap'], 1)} MB/s"
        )
    ratio = sweep.hetero_homo_ratio()
    if ratio is not None:
        out.note(f"heterogeneous/homogeneous mean-cycle ratio = {_f(ratio, 3)}")
    ok = all(s.converged for s in sweep.samples)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_sweep_capacity(cfg: ScenarioConfig, out: Output, args) -> int:
    names = ex.preset_names(args.topologies) if args.topologies else [cfg.topology]
    points = ex.sweep_capacity(cfg, topologies=names)
    n = max(len(r.P) for _, r in points)
    out.rows(
        ["topology", "capacity", "iterations", "regulation_iterations", "stable", "cycles", "S", "utilization",
         *(f"quota{i + 1}" for i in range(n))],
        [
            [r.topology, _f(cap, 4), r.iterations, r.regulation_iterations, str(r.converged).lower(), r.cycles,
             _f(r.S), _f(r.utilization, 4), *r.quotas]
            for cap, r in points
        ],
    )
    for cap, r in points:
        out.note(f"{r.topology} capacity {_f(100 * cap, 1)}%: {r.iterations} iteration(s), utilization {_f(r.utilization, 4)}")
    return EXIT_OK if all(r.converged for _, r in points) else EXIT_NOT_CONVERGED


HANDLERS = {
    "plan": cmd_plan,
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep-valves": cmd_sweep_valves,
    "sweep-capacity": cmd_sweep_capacity,
}


# -- argument parsing -------------------------------------------------------------------


def _common(suppress: bool) -> argparse.ArgumentParser:
    """Global flags plus one ``--key`` flag per config key.

    The same options sit on the main parser and on every subcommand; the
    subcommand copies default to SUPPRESS so they never clobber a value
    given before the command name.
    """
    d = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="scenario file of key = value lines", **d)
    g.add_argument("--seed", metavar="N", help="random seed", **d)
    g.add_argument("--out", metavar="PATH", help="write CSV here instead of standard output", **d)
    g.add_argument("--quiet", action="store_true", help="emit only CSV", **d)
    g.add_argument("--no-regulation", action="store_true", help="disable capacity regulation", **d)
    g.add_argument("--controller", choices=("hacache", "nhc"), **d)
    s = p.add_argument_group("scenario keys (override the config file)")
    for key in CONFIG_KEYS:
        if key in ("seed", "controller", "regulation"):
            continue
        s.add_argument(f"--{key.replace('_', '-')}", dest=f"key_{key}", metavar="VALUE", **d)
    s.add_argument("--device", action="append", metavar="NAME=SIZE:MBPS,...", help="declare a device model", **d)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hacache-bench",
        description="Heterogeneity-aware cache valve planner, controller and simulator benchmarks.",
        parents=[_common(False)],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common(True)
    sub.add_parser("plan", parents=[common], help="optimal diversion ratios for the configured array")
    sub.add_parser("run", parents=[common], help="controller on the simulator; cycle trace CSV")
    sub.add_parser("compare", parents=[common], help="HACache against the single-valve NHC baseline")
    sv = sub.add_parser("sweep-valves", parents=[common], help="convergence cycles over initial valve vectors")
    sv.add_argument("--topologies", metavar="LIST", help="'all' (default) or names separated by ';'")
    sc = sub.add_parser("sweep-capacity", parents=[common], help="regulation iterations across cache sizes")
    sc.add_argument("--topologies", metavar="LIST", help="names separated by ';' (default: the config topology)")
    return parser


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ScenarioConfig()
    overrides: dict[str, str] = {}
    for key in CONFIG_KEYS:
        value = getattr(args, f"key_{key}", None)
        if value is not None:
            overrides[key] = value
    for item in getattr(args, "device", None) or ():
        name, sep, table = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--device expects NAME=SIZE:MBPS,..., got {item!r}")
        overrides[f"device.{name.strip()}"] = table
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "controller", None) is not None:
        overrides["controller"] = args.controller
    if getattr(args, "no_regulation", False):
        overrides["regulation"] = "false"
    return apply_overrides(cfg, overrides)


@contextlib.contextmanager
def _sink(path: str | None) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
        return
    # build in memory so a failed run leaves no partial file
    buf = io.StringIO()
    yield buf
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "topologies"):
        args.topologies = None
    try:
        cfg = resolve_config(args)
    except ConfigurationError as e:
        print(f"hacache-bench: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with _sink(getattr(args, "out", None)) as fh:
            status = HANDLERS[args.command](cfg, Output(fh, getattr(args, "quiet", False)), args)
    except ConfigurationError as e:
        print(f"hacache-bench: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HACacheError as e:
        print(f"hacache-bench: {e}", file=sys.stderr)
        return 1
    if status == EXIT_NOT_CONVERGED:
        print("hacache-bench: did not converge within max_cycles", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
