"""
Benchmark harness: runs every applicable algorithm on a suite of instances
and reports one BenchRow per (instance, algorithm) as CSV.
"""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import IO, Dict, List, Optional, Sequence, Tuple

from src.generators import FIXTURE_RANDOM, gen_gap_mst, gen_gap_sp, gen_random
from src.instance_model import (
    DiscreteSolution,
    EnumerationLimitError,
    Instance,
    ProblemKind,
    RunReport,
    SolverFailure,
    cost_ratio,
    format_cost,
)
from src.lp_engine import LpSettings, minimize_L
from src.mst_approx import (
    CoinConfig,
    CoinMode,
    MstConfig,
    solve_mst_average_baseline,
    solve_mst_deterministic,
    solve_mst_randomized,
)
from src.oracle import DEFAULT_LIMIT, brute_force_opt
from src.sp_approx import SpConfig, solve_sp, solve_sp_average_baseline

logger = logging.getLogger(__name__)

SUITES = ("gaps", "random")
ALGORITHMS = {
    ProblemKind.SHORTEST_PATH: ("exact", "sp-alg1", "sp-avg"),
    ProblemKind.SPANNING_TREE: ("exact", "mst-det", "mst-rand", "mst-avg"),
}
FIELDS = ("instance", "kind", "n", "m", "K", "lower_bound", "algorithm", "max_cost", "ratio", "rounds", "seed",
          "millis")


@dataclass
class SolverSettings:
    """Everything a solve needs besides the instance and algorithm name."""
    sp: SpConfig = field(default_factory=SpConfig)
    mst: MstConfig = field(default_factory=MstConfig)
    coin: CoinConfig = field(default_factory=CoinConfig)
    lp: LpSettings = field(default_factory=LpSettings)
    enum_limit: int = DEFAULT_LIMIT


def algorithms_for(kind: ProblemKind) -> Tuple[str, ...]:
    return ALGORITHMS[kind]


def run_algorithm(instance: Instance, algorithm: str, settings: Optional[SolverSettings] = None,
                  bound: Optional[Fraction] = None) -> Tuple[DiscreteSolution, RunReport]:
    """Dispatch one named algorithm; baselines and the oracle report L* as their lower bound."""
    settings = settings or SolverSettings()
    if algorithm not in ALGORITHMS[instance.kind]:
        raise ValueError(f"algorithm {algorithm!r} does not apply to kind {instance.kind.value!r}")
    if algorithm == "sp-alg1":
        return solve_sp(instance, settings.sp)
    if algorithm == "mst-det":
        return solve_mst_deterministic(instance, settings.mst)
    if algorithm == "mst-rand":
        return solve_mst_randomized(instance, settings.coin)

    started = time.perf_counter()
    if algorithm == "exact":
        solution = brute_force_opt(instance, settings.enum_limit)
    elif algorithm == "sp-avg":
        solution = solve_sp_average_baseline(instance)
    else:
        solution = solve_mst_average_baseline(instance)
    if bound is None:
        bound = minimize_L(instance, settings.lp)[0] if instance.n > 1 else Fraction(0)
    report = RunReport(algorithm, lower_bound=bound, max_cost=solution.max_cost,
                       selections=[list(solution.edges)], wall_time=time.perf_counter() - started)
    return solution, report


@dataclass
class BenchRow:
    instance: str
    kind: str
    n: int
    m: int
    K: int
    lower_bound: Fraction
    algorithm: str
    max_cost: Optional[Fraction]
    ratio: float
    rounds: int
    seed: int
    millis: float

    def as_csv(self, timing: bool) -> Dict[str, str]:
        row = asdict(self)
        row["lower_bound"] = str(format_cost(self.lower_bound))
        row["max_cost"] = "fail" if self.max_cost is None else str(format_cost(self.max_cost))
        row["ratio"] = f"{self.ratio:.6f}"
        row["millis"] = f"{self.millis:.1f}" if timing else "0"
        return row


def suite_instances(suite: str, trials: int = 5, seed: int = 0) -> List[Instance]:
    if suite == "gaps":
        return [gen_gap_sp(0), gen_gap_sp(1), gen_gap_mst(2), gen_gap_mst(3)]
    if suite == "random":
        instances = []
        for trial in range(trials):
            for kind in ProblemKind:
                instances.append(gen_random(kind, FIXTURE_RANDOM["n"], FIXTURE_RANDOM["density"],
                                            FIXTURE_RANDOM["K"], seed + trial, FIXTURE_RANDOM["cost_dist"]))
        return instances
    raise ValueError(f"unknown suite {suite!r}, expected one of {SUITES}")


def bench_instance(instance: Instance, seed: int, settings: SolverSettings) -> List[BenchRow]:
    """All rows for one instance, in algorithm order."""
    bound = minimize_L(instance, settings.lp)[0]
    settings = replace(settings, coin=replace(settings.coin, seed=seed))
    rows = []
    for algorithm in ALGORITHMS[instance.kind]:
        started = time.perf_counter()
        try:
            solution, report = run_algorithm(instance, algorithm, settings, bound)
            max_cost, rounds = solution.max_cost, report.rounds
            ratio = cost_ratio(max_cost, bound)
        except EnumerationLimitError as exc:
            logger.info(f"Skipping exact row for {instance.name}: {exc}")
            continue
        except SolverFailure as exc:
            logger.warning(f"{algorithm} failed on {instance.name}: {exc}")
            max_cost, rounds, ratio = None, exc.report.rounds if exc.report else 0, float("nan")
        millis = (time.perf_counter() - started) * 1000.0
        rows.append(BenchRow(instance.name, instance.kind.value, instance.n, instance.m, instance.K, bound,
                             algorithm, max_cost, ratio, rounds, seed, millis))
    return rows


def _bench_job(args) -> List[BenchRow]:
    return bench_instance(*args)


def practical_coin(seed: int) -> CoinConfig:
    return CoinConfig(mode=CoinMode.PRACTICAL, practical_k=8, max_retries=20, seed=seed)


def run_bench(suite: str, trials: int = 5, seed: int = 0, workers: int = 1,
              settings: Optional[SolverSettings] = None) -> List[BenchRow]:
    """
    Rows ordered by (suite index, algorithm); instances run in parallel
    when `workers` > 1 but the merge keeps that order.
    """
    settings = settings or SolverSettings(coin=practical_coin(seed))
    instances = suite_instances(suite, trials, seed)
    jobs = [(instance, seed, settings) for instance in instances]
    logger.info(f"Benchmark '{suite}': {len(instances)} instances on {workers} worker(s)")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            per_instance = list(executor.map(_bench_job, jobs))
    else:
        per_instance = [_bench_job(job) for job in jobs]
    return [row for rows in per_instance for row in rows]


def write_csv(rows: Sequence[BenchRow], stream: IO[str], timing: bool = False):
    writer = csv.DictWriter(stream, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_csv(timing))
