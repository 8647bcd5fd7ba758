import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hacache.bench import cli
from hacache.bench.config import (
    CONFIG_KEYS,
    ScenarioConfig,
    format_config,
    load_config,
    parse_config,
    parse_size,
)
from hacache.bench.experiments import initial_valves, preset_names
from hacache.errors import ConfigurationError
from hacache.presets import ARRAYS, BS_4K, BS_128K

# short simulator runs: 20 ms windows settle 3A-1B in about a second
FAST = ["--topology", "3A-1B", "--window-ms", "20", "--max-cycles", "2000"]


def _csv(text: str) -> list[list[str]]:
    return list(csv.reader(io.StringIO(text)))


def _run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# -- config ------------------------------------------------------------------------


def test_parse_size():
    assert parse_size("4096") == 4096
    assert parse_size("4K") == BS_4K
    assert parse_size("128KiB") == BS_128K
    assert parse_size("1m") == 1024**2
    with pytest.raises(ConfigurationError):
        parse_size("4 potatoes")


def test_parse_config_basics():
    cfg = parse_config(
        """
        # scenario
        topology = 1A-3B
        block_size = 4K   # trailing comment
        cache_frac = 0.25
        regulation = off
        delta_c = auto
        capacities = 0.1, 0.5; 1
        device.Z = 4K:900, 128K:2000
        """
    )
    assert cfg.topology == "1A-3B"
    assert cfg.block_size == BS_4K
    assert cfg.cache_frac == 0.25
    assert cfg.regulation is False
    assert cfg.delta_c is None
    assert cfg.capacities == (0.1, 0.5, 1.0)
    assert cfg.devices == (("Z", ((BS_4K, 900.0), (BS_128K, 2000.0))),)
    assert cfg.replace(topology="Z,Z,A").array().b_max(BS_4K) == (900.0, 900.0, 1800.0)


@pytest.mark.parametrize(
    "text",
    [
        "topology",
        "nonsense = 1",
        "topology = 9Z",
        "topology = A,Q",
        "cache_frac = 1.5",
        "pattern = zipf",
        "threads = 0",
        "seed = one",
        "regulation = maybe",
        "block_size = 8K",
        "samples = 10\nsample_cap = 5",
        "delta_q = 999",
        "capacities = 0",
        "topology = 3A-1B\ntopology = 4B",
        "device.Z = 4096",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "absent.cfg"))


def test_every_key_is_written():
    text = format_config(ScenarioConfig())
    keys = [line.split("=")[0].strip() for line in text.splitlines()]
    assert keys == list(CONFIG_KEYS)


finite = dict(allow_nan=False, allow_infinity=False)
device_table = st.tuples(st.floats(1.0, 1e5, **finite), st.floats(1.0, 1e5, **finite)).map(
    lambda t: ((BS_4K, t[0]), (BS_128K, t[1]))
)


@st.composite
def configs(draw):
    devices = draw(st.dictionaries(st.sampled_from(["X", "Y", "Z"]), device_table, max_size=2))
    names = ["A", "B", *devices]
    topo = draw(
        st.one_of(
            st.sampled_from(list(ARRAYS)),
            st.lists(st.sampled_from(names), min_size=2, max_size=6).map(",".join),
        )
    )
    io_blocks = draw(st.integers(1, 10**6))
    block = draw(st.sampled_from([BS_4K, BS_128K]))
    shard_count = draw(st.integers(1, 1024))
    samples = draw(st.integers(1, 10**5))
    return ScenarioConfig(
        topology=topo,
        cache_device=draw(st.sampled_from(["C", *devices])),
        devices=tuple(sorted(devices.items())),
        block_size=block,
        stripe_unit=draw(st.sampled_from([BS_4K, BS_128K, 1024**2])),
        pattern=draw(st.sampled_from(["uniform", "randmap", "hotspot", "sequential"])),
        hot_space_frac=draw(st.floats(0.001, 0.999)),
        hot_access_frac=draw(st.floats(0.001, 0.999)),
        io_blocks=io_blocks,
        threads=draw(st.integers(1, 256)),
        qd=draw(st.integers(1, 256)),
        cache_frac=draw(st.floats(0.0, 1.0)),
        cache_bytes=draw(st.none() | st.integers(0, io_blocks * block)),
        seed=draw(st.integers(0, 2**63)),
        max_cycles=draw(st.integers(1, 10**6)),
        window_ms=draw(st.floats(0.001, 1e4, **finite)),
        settle_ms=draw(st.none() | st.floats(0.0, 1e4, **finite)),
        controller=draw(st.sampled_from(["hacache", "nhc"])),
        regulation=draw(st.booleans()),
        delta_b=draw(st.floats(1e-3, 1e5, **finite)),
        delta_c=draw(st.none() | st.floats(1e-3, 1e5, **finite)),
        p_thres=draw(st.floats(0.01, 0.99)),
        shard_count=shard_count,
        delta_q=draw(st.integers(1, shard_count)),
        noise_bound=draw(st.floats(0.0, 1.0)),
        decision_tol=draw(st.floats(0.0, 1.0)),
        valve_eps=draw(st.floats(0.0, 1.0)),
        nhc_step=draw(st.floats(0.001, 0.5)),
        hit_rate=draw(st.floats(0.0, 1.0)),
        samples=samples,
        sample_cap=draw(st.integers(samples, 10**6)),
        capacities=tuple(draw(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=8))),
    )


@pytest.mark.invariant
@given(configs())
def test_config_round_trip(cfg):
    text = format_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert format_config(again) == text


def test_cli_flag_overrides_config_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("topology = 1A-3B\nblock_size = 4K\nseed = 5\n")
    args = cli.build_parser().parse_args(["--config", str(path), "--seed", "9", "plan", "--block-size", "128K"])
    cfg = cli.resolve_config(args)
    assert (cfg.topology, cfg.block_size, cfg.seed) == ("1A-3B", BS_128K, 9)
    args = cli.build_parser().parse_args(["--no-regulation", "--controller", "nhc", "run"])
    cfg = cli.resolve_config(args)
    assert cfg.regulation is False and cfg.controller == "nhc"


# -- CLI ---------------------------------------------------------------------------


def test_plan_csv(capsys):
    code, out, _ = _run(capsys, ["plan", "--topology", "1A-3B"])
    assert code == cli.EXIT_OK
    rows = [r for r in _csv("\n".join(l for l in out.splitlines() if not l.startswith("# ")))]
    assert rows[0] == ["topology", "block_size", "drive", "b_max", "rho", "backend", "cache", "headroom"]
    assert len(rows) == 5
    assert [float(r[4]) for r in rows[1:]] == pytest.approx([0.561129, 0.109718, 0.109718, 0.109718], abs=1e-6)
    assert "T* = 7975.000" in out


def test_quiet_emits_only_csv(capsys):
    code, out, _ = _run(capsys, ["--quiet", "plan"])
    assert code == cli.EXIT_OK
    assert not any(line.startswith("#") for line in out.splitlines())
    assert _csv(out)[0][0] == "topology"


def test_out_file_and_config_file(tmp_path, capsys):
    path = tmp_path / "s.cfg"
    path.write_text("topology = 2A-2B\nblock_size = 4K\n")
    target = tmp_path / "plan.csv"
    code, out, _ = _run(capsys, ["--config", str(path), "--out", str(target), "plan"])
    assert code == cli.EXIT_OK
    rows = _csv(target.read_text())
    assert rows[1][:2] == ["2A-2B", str(BS_4K)]
    assert out.startswith("# T* = 5300.000")


def test_config_error_exit_code(tmp_path, capsys):
    assert _run(capsys, ["plan", "--topology", "7Q"])[0] == cli.EXIT_CONFIG
    assert _run(capsys, ["--config", str(tmp_path / "nope"), "plan"])[0] == cli.EXIT_CONFIG
    code, _, err = _run(capsys, ["plan", "--cache-frac", "2"])
    assert code == cli.EXIT_CONFIG
    assert "config error" in err
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus-command"])
    assert e.value.code == cli.EXIT_CONFIG


def test_failed_run_writes_no_partial_file(tmp_path, capsys):
    target = tmp_path / "x.csv"
    assert _run(capsys, ["--out", str(target), "plan", "--cache-frac", "2"])[0] == cli.EXIT_CONFIG
    assert not target.exists()


def test_non_convergence_exit_code(tmp_path, capsys):
    target = tmp_path / "run.csv"
    code, _, err = _run(capsys, ["--quiet", "--out", str(target), *FAST, "--max-cycles", "3", "run"])
    assert code == cli.EXIT_NOT_CONVERGED
    assert "did not converge" in err
    assert len(_csv(target.read_text())) == 4


def test_run_trace_csv(tmp_path, capsys):
    target = tmp_path / "run.csv"
    code, out, _ = _run(capsys, ["--out", str(target), *FAST, "run"])
    assert code == cli.EXIT_OK
    rows = _csv(target.read_text())
    assert rows[0] == ["cycle", "phase", "p1", "p2", "p3", "p4", "b1", "b2", "b3", "b4", "S",
                       "quota1", "quota2", "quota3", "quota4"]
    assert [int(r[0]) for r in rows[1:]] == list(range(1, len(rows)))
    assert rows[1][1] == "WarmUp"
    assert "converged = true" in out


def test_run_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(capsys, ["--seed", "7", "--out", str(a), *FAST, "run"])[0] == cli.EXIT_OK
    assert _run(capsys, ["--seed", "7", "--out", str(b), *FAST, "run"])[0] == cli.EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_nhc_run_csv(capsys):
    code, out, _ = _run(capsys, ["--quiet", "--controller", "nhc", *FAST, "run"])
    assert code == cli.EXIT_OK
    rows = _csv(out)
    assert rows[0] == ["cycle", "p", "S"]
    assert float(rows[1][1]) == 0.0


def test_compare_csv(capsys):
    code, out, _ = _run(capsys, [*FAST, "compare"])
    assert code == cli.EXIT_OK
    rows = _csv("\n".join(l for l in out.splitlines() if not l.startswith("# ")))
    assert rows[0] == cli.COMPARE_HEADER
    assert [r[0] for r in rows[1:]] == ["hacache", "nhc"]
    assert float(rows[1][2]) > float(rows[2][2])
    assert "pp of the aggregate bound" in out


def test_sweep_valves_csv(capsys):
    code, out, _ = _run(capsys, ["--samples", "8", "sweep-valves", "--topologies", "3A-1B;4B"])
    assert code == cli.EXIT_OK
    rows = _csv("\n".join(l for l in out.splitlines() if not l.startswith("# ")))
    assert rows[0] == ["topology", "sample", "p1", "p2", "p3", "p4", "cycles", "alternations", "converged", "S", "optimum"]
    # 8 Latin-hypercube starts plus 16 corners per topology
    assert len(rows) == 1 + 2 * 24
    assert all(r[8] == "true" for r in rows[1:])
    assert "mean-cycle ratio" in out


def test_sweep_capacity_csv(capsys):
    code, out, _ = _run(capsys, ["--quiet", *FAST, "--capacities", "0.25,1", "sweep-capacity"])
    assert code == cli.EXIT_OK
    rows = _csv(out)
    assert rows[0][:8] == ["topology", "capacity", "iterations", "regulation_iterations", "stable", "cycles", "S",
                           "utilization"]
    assert [r[1] for r in rows[1:]] == ["0.2500", "1.0000"]
    assert sum(int(q) for q in rows[2][8:]) == 256


def test_initial_valves_and_presets():
    v = initial_valves(3, 5, seed=1)
    assert v.shape == (5 + 8, 3)
    assert ((v >= 0) & (v <= 1)).all()
    assert (initial_valves(3, 5, seed=1) == v).all()
    assert preset_names("all") == list(ARRAYS)
    assert preset_names("3A-1B; 4B") == ["3A-1B", "4B"]
