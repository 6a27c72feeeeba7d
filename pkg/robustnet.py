#!/usr/bin/env python3
"""
Min-max robust shortest path / spanning tree toolkit.

Generates instances, solves them with the LP-rounding approximations, the
average-cost baselines or the exact oracle, and benchmarks all of them.

Usage:
  python robustnet.py --create-config
  python robustnet.py --config robustnet_config.json solve --algo sp-alg1 --in gap_sp_r0.json
  python robustnet.py solve --algo mst-rand --in gap_mst_k2.json --seed 7 --practical-k 8 --retries 20
  python robustnet.py generate gap-sp --r 1 --out fixtures/gap_sp_r1.json
  python robustnet.py generate --fixtures fixtures
  python robustnet.py bench --suite random --trials 5 --seed 0 --out results/random.csv

Exit codes: 0 success, 1 usage or input error, 2 infeasible or solver
failure, 3 internal invariant violation. ROBUSTNET_LOG={off,info,debug}
sets the log level unless --log-level is given.
"""

import argparse
import json
import logging
import multiprocessing
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import psutil

from src.bench import SUITES, SolverSettings, algorithms_for, practical_coin, run_algorithm, run_bench, write_csv
from src.generators import ParameterError, gen_cst, gen_gap_mst, gen_gap_sp, gen_random, singleton_cuts, write_fixtures
from src.instance_model import (
    ConfigError,
    EnumerationLimitError,
    InstanceError,
    InvariantViolation,
    IterationLimitError,
    NoFeasibleL,
    ProblemKind,
    SolverFailure,
    load_instance,
    report_to_dict,
    save_instance,
    solution_to_dict,
)
from src.lp_engine import LpSettings, configure_trace
from src.mst_approx import CoinConfig, CoinMode, MstConfig
from src.simplex import LpTrace
from src.sp_approx import SpConfig

logger = logging.getLogger("robustnet")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INTERNAL = 0, 1, 2, 3
ENV_LOG = "ROBUSTNET_LOG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
SOLVE_ALGORITHMS = ("sp-alg1", "sp-avg", "mst-det", "mst-rand", "mst-avg", "exact")


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- Configuration ---

@dataclass
class RuntimeConfig:
    log_level: str = "WARNING"
    output_dir: str = "results"
    lp_tolerance: float = 1e-9
    separation_tolerance: float = 1e-7
    cut_cap_factor: int = 10
    enum_limit: int = 10 ** 6

    @property
    def lp_settings(self) -> LpSettings:
        return LpSettings(feasibility_tol=self.lp_tolerance, separation_tol=self.separation_tolerance,
                          cut_cap_factor=self.cut_cap_factor)


@dataclass
class HardwareConfig:
    """Worker budget for `bench`: usable cores and memory, each scaled by a safety factor."""
    max_cores: Optional[int] = None
    max_memory_gb: Optional[float] = None
    memory_safety_factor: float = 0.8
    core_safety_factor: float = 0.8
    worker_memory_gb: float = 0.5

    def __post_init__(self):
        for name in ("memory_safety_factor", "core_safety_factor"):
            factor = getattr(self, name)
            if not 0 < factor <= 1:
                raise ConfigError(f"hardware.{name} must lie in (0, 1], got {factor}")
        if self.worker_memory_gb <= 0:
            raise ConfigError(f"hardware.worker_memory_gb must be positive, got {self.worker_memory_gb}")
        if self.max_cores is None:
            self.max_cores = max(1, int(multiprocessing.cpu_count() * self.core_safety_factor))
        if self.max_memory_gb is None:
            available_gb = psutil.virtual_memory().available / (1024 ** 3)
            self.max_memory_gb = available_gb * self.memory_safety_factor

    def worker_count(self, requested: Optional[int] = None) -> int:
        """Requested (or all usable) cores, capped by how many workers fit in memory."""
        cores = requested or self.max_cores
        fit = max(1, int(self.max_memory_gb // self.worker_memory_gb))
        if cores > fit:
            logger.warning(f"Limiting {cores} workers to {fit}: {self.max_memory_gb:.1f} GB "
                           f"at {self.worker_memory_gb} GB each")
        return max(1, min(cores, fit))


@dataclass
class AppConfig:
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    hardware: HardwareConfig = field(default_factory=HardwareConfig)
    sp: Dict = field(default_factory=dict)
    mst: Dict = field(default_factory=dict)
    coin: Dict = field(default_factory=dict)

    def solver_settings(self) -> SolverSettings:
        lp = self.runtime.lp_settings
        coin = dict(self.coin)
        if "mode" in coin:
            coin["mode"] = CoinMode(coin["mode"])
        try:
            return SolverSettings(
                sp=SpConfig(lp=lp, **self.sp),
                mst=MstConfig(lp=lp, **self.mst),
                coin=CoinConfig(lp=lp, **coin),
                lp=lp,
                enum_limit=self.runtime.enum_limit,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid solver section: {exc}")


DEFAULT_SECTIONS = {
    "sp": {"hop_threshold": None, "round_cap": None, "mass_abort": 0.99},
    "mst": {"round_cap": None},
    "coin": {"gamma": 1.0, "mode": "analytic", "practical_k": 8, "max_retries": 20, "seed": None},
}


def create_config_file(filename: str = "robustnet_config.json") -> str:
    default_config = {
        "runtime": asdict(RuntimeConfig()),
        "hardware": {
            "max_cores": None,
            "max_memory_gb": None,
            "memory_safety_factor": 0.8,
            "core_safety_factor": 0.8,
            "worker_memory_gb": 0.5,
        },
        **DEFAULT_SECTIONS,
    }
    with open(filename, "w") as f:
        json.dump(default_config, f, indent=2)
    return filename


def load_config(filename: str) -> AppConfig:
    try:
        with open(filename, "r") as f:
            config_data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {filename}: {exc}")
    known = {f.name for f in fields(AppConfig)}
    unknown = set(config_data) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    try:
        return AppConfig(
            runtime=RuntimeConfig(**config_data.get("runtime", {})),
            hardware=HardwareConfig(**config_data.get("hardware", {})),
            sp=config_data.get("sp", {}),
            mst=config_data.get("mst", {}),
            coin=config_data.get("coin", {}),
        )
    except TypeError as exc:
        raise ConfigError(f"invalid config {filename}: {exc}")


def resolve_log_level(flag: Optional[str], env: Optional[str], configured: str) -> Optional[int]:
    """--log-level beats ROBUSTNET_LOG beats the config file; None means logging off."""
    if flag:
        name = flag
    elif env:
        name = env
        if name.lower() not in ("off", "info", "debug"):
            raise ConfigError(f"{ENV_LOG} must be one of off, info, debug (got {env!r})")
    else:
        name = configured
    if name.lower() == "off":
        return None
    level = getattr(logging, name.upper(), None)
    if not isinstance(level, int):
        raise ConfigError(f"unknown log level {name!r}")
    return level


def setup_logging(level: Optional[int]):
    if level is None:
        logging.disable(logging.CRITICAL)
        return
    logging.disable(logging.NOTSET)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


# --- Commands ---

def _check_algorithm(kind: ProblemKind, algorithm: str):
    if algorithm not in algorithms_for(kind):
        raise UsageError(f"algorithm {algorithm} does not apply to {kind.value} instances")


def cmd_solve(args, config: AppConfig) -> int:
    instance = load_instance(args.infile)
    _check_algorithm(instance.kind, args.algo)
    settings = config.solver_settings()
    if args.algo == "mst-rand":
        seed = args.seed if args.seed is not None else settings.coin.seed
        if seed is None:
            raise UsageError("mst-rand needs an explicit --seed")
        settings.coin.seed = seed
        if args.gamma is not None:
            settings.coin.gamma = args.gamma
        if args.practical_k is not None:
            settings.coin.mode = CoinMode.PRACTICAL
            settings.coin.practical_k = args.practical_k
        if args.retries is not None:
            settings.coin.max_retries = args.retries

    try:
        solution, report = run_algorithm(instance, args.algo, settings)
    except SolverFailure as exc:
        if exc.report is not None:
            print(json.dumps({"solution": None, "report": report_to_dict(exc.report)}, indent=2))
        raise
    print(json.dumps({"solution": solution_to_dict(solution), "report": report_to_dict(report)}, indent=2))
    return EXIT_OK


def _parse_cuts(text: str) -> List[List[int]]:
    try:
        return [[int(v) for v in part.split(",") if v.strip()] for part in text.split(";") if part.strip()]
    except ValueError:
        raise UsageError(f"cuts must look like '0,1;2' (got {text!r})")


def cmd_generate(args, config: AppConfig) -> int:
    if args.fixtures is not None:
        directory = args.fixtures or Path(config.runtime.output_dir) / "fixtures"
        for path in write_fixtures(directory):
            print(path)
        if not args.family:
            return EXIT_OK
    if not args.family:
        raise UsageError("generate needs a family (gap-sp, gap-mst, random, cst) or --fixtures DIR")

    if args.family == "gap-sp":
        instance = gen_gap_sp(args.r)
    elif args.family == "gap-mst":
        instance = gen_gap_mst(args.k)
    elif args.family == "random":
        instance = gen_random(args.kind, args.n, args.density, args.K, args.seed, args.cost_dist)
    else:
        base = load_instance(args.infile)
        if base.is_sp:
            raise UsageError("cst needs an undirected (mst) base instance")
        cuts = singleton_cuts(base.n) if args.singletons else _parse_cuts(args.cuts or "")
        instance = gen_cst(base, cuts, name=args.name)
    path = save_instance(instance, args.out)
    print(f"{path}: n={instance.n} m={instance.m} K={instance.K}")
    return EXIT_OK


def cmd_bench(args, config: AppConfig) -> int:
    settings = config.solver_settings()
    settings.coin = practical_coin(args.seed)
    settings.coin.lp = settings.lp
    workers = config.hardware.worker_count(args.workers)
    logger.info(f"Benchmark on {workers} worker(s), memory budget {config.hardware.max_memory_gb:.1f} GB")
    rows = run_bench(args.suite, args.trials, args.seed, workers, settings)
    write_csv(rows, sys.stdout, args.timing)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as f:
            write_csv(rows, f, args.timing)
        logger.info(f"Wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> CliParser:
    parser = CliParser(prog="robustnet", description="Min-max robust shortest path and spanning tree")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--create-config", nargs="?", const="robustnet_config.json", metavar="FILE",
                        help="Write a default config file and exit")
    parser.add_argument("--log-level", help="Log level (off, debug, info, warning, ...)")
    parser.add_argument("--lp-trace", metavar="FILE", help="Write simplex pivots and cuts as JSON lines")
    commands = parser.add_subparsers(dest="command", parser_class=CliParser)

    solve = commands.add_parser("solve", help="Solve one instance")
    solve.add_argument("--algo", required=True, choices=SOLVE_ALGORITHMS)
    solve.add_argument("--in", dest="infile", required=True)
    solve.add_argument("--seed", type=int)
    solve.add_argument("--gamma", type=float)
    solve.add_argument("--practical-k", type=int)
    solve.add_argument("--retries", type=int)

    generate = commands.add_parser("generate", help="Write instances as canonical JSON")
    generate.add_argument("--fixtures", nargs="?", const="", metavar="DIR",
                          help="Write the golden fixture suite to DIR (default: <output_dir>/fixtures)")
    families = generate.add_subparsers(dest="family", parser_class=CliParser)
    gap_sp = families.add_parser("gap-sp")
    gap_sp.add_argument("--r", type=int, required=True)
    gap_mst = families.add_parser("gap-mst")
    gap_mst.add_argument("--k", type=int, required=True)
    random_family = families.add_parser("random")
    random_family.add_argument("--kind", choices=[k.value for k in ProblemKind], required=True)
    random_family.add_argument("--n", type=int, required=True)
    random_family.add_argument("--K", type=int, required=True)
    random_family.add_argument("--seed", type=int, required=True)
    random_family.add_argument("--density", type=float, default=0.3)
    random_family.add_argument("--cost-dist", default="uniform")
    cst = families.add_parser("cst")
    cst.add_argument("--in", dest="infile", required=True)
    cst_cuts = cst.add_mutually_exclusive_group(required=True)
    cst_cuts.add_argument("--cuts", help="Node sets separated by ';', nodes by ','")
    cst_cuts.add_argument("--singletons", action="store_true", help="One cut per node")
    cst.add_argument("--name", default="cst")
    for family in (gap_sp, gap_mst, random_family, cst):
        family.add_argument("--out", required=True)

    bench = commands.add_parser("bench", help="Benchmark all algorithms, CSV on stdout")
    bench.add_argument("--suite", choices=SUITES, required=True)
    bench.add_argument("--trials", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="Also write the CSV here")
    bench.add_argument("--workers", type=int, help="Worker processes (default: hardware config)")
    bench.add_argument("--timing", action="store_true", help="Fill the millis column")
    return parser


COMMANDS = {"solve": cmd_solve, "generate": cmd_generate, "bench": cmd_bench}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.create_config:
        print(f"Wrote {create_config_file(args.create_config)}")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    trace_file = None
    try:
        config = load_config(args.config) if args.config else AppConfig()
        setup_logging(resolve_log_level(args.log_level, os.environ.get(ENV_LOG), config.runtime.log_level))
        if args.lp_trace:
            trace_file = open(args.lp_trace, "w")
            configure_trace(LpTrace(trace_file))
        return COMMANDS[args.command](args, config)
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (NoFeasibleL, SolverFailure, EnumerationLimitError, IterationLimitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, InstanceError, ConfigError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # RoundingError and other ValueErrors raised inside a solver
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        if trace_file is not None:
            configure_trace(None)
            trace_file.close()


if __name__ == "__main__":
    sys.exit(main())
