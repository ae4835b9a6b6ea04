"""Approximation-ratio sweep over sampling rates."""

import asyncio
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional

from .densest import approx_densest_by_sampling, exact_densest
from .graph import Graph
from .hashing import derive_seed
from .report import ReportWriter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialSpec:
    rate_index: int
    rate: float
    trial: int
    sample_size: int
    seed: int
    solver: str


@dataclass(frozen=True)
class TrialResult:
    spec: TrialSpec
    vertices: int
    density: Fraction
    p: Fraction
    seconds: float


def sample_size_for_rate(m: int, rate: float) -> int:
    if not 0 < rate <= 1:
        raise ValueError(f"sampling rate must be in (0, 1], got {rate}")
    return max(1, math.ceil(rate * m))


def plan_trials(g: Graph, rates: list[float], trials: int, seed: int, solver: str) -> list[TrialSpec]:
    """Trials in (rate, trial) order; each trial seed is derived from the run seed."""
    specs = []
    for ri, rate in enumerate(rates):
        c = sample_size_for_rate(g.m, rate)
        for t in range(trials):
            specs.append(TrialSpec(ri, rate, t, c, derive_seed(seed, f"bench/{ri}/{t}"), solver))
    return specs


def run_trial(g: Graph, spec: TrialSpec) -> TrialResult:
    """One sample-and-solve run; module level so worker processes can import it."""
    start = time.monotonic()
    result = approx_densest_by_sampling(
        g, solver=spec.solver, seed=spec.seed, sample_size=spec.sample_size
    )
    return TrialResult(
        spec,
        result.size,
        result.density_in_source,
        result.p,
        time.monotonic() - start,
    )


async def run_trials(g: Graph, specs: list[TrialSpec], workers: int = 1) -> list[TrialResult]:
    """Run trials, in a process pool when ``workers > 1``; results keep ``specs`` order."""
    if workers <= 1:
        return [run_trial(g, spec) for spec in specs]
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, run_trial, g, spec) for spec in specs]
        return list(await asyncio.gather(*futures))


def trial_record(result: TrialResult, opt: Fraction, threshold: float, timing: bool) -> dict[str, Any]:
    spec = result.spec
    ratio = result.density / opt if opt else Fraction(1)
    record: dict[str, Any] = {
        "kind": "trial",
        "rate": spec.rate,
        "trial": spec.trial,
        "seed": spec.seed,
        "C": spec.sample_size,
        "p": result.p,
        "vertices": result.vertices,
        "density": result.density,
        "ratio": round(float(ratio), 9),
        "failed": float(ratio) < threshold,
    }
    if timing:
        record["wall_seconds"] = round(result.seconds, 6)
    return record


def summary_record(rate: float, sample_size: int, results: list[TrialResult], opt: Fraction, threshold: float) -> dict[str, Any]:
    ratios = [float(r.density / opt) if opt else 1.0 for r in results]
    return {
        "kind": "summary",
        "rate": rate,
        "C": sample_size,
        "trials": len(results),
        "failures": sum(1 for x in ratios if x < threshold),
        "threshold": threshold,
        "mean_ratio": round(sum(ratios) / len(ratios), 9),
        "min_ratio": round(min(ratios), 9),
    }


async def run_bench(
    g: Graph,
    writer: ReportWriter,
    rates: list[float],
    trials: int = 20,
    seed: int = 0,
    solver: str = "exact",
    threshold: float = 0.7,
    workers: int = 1,
    timing: bool = False,
    opt: Optional[Fraction] = None,
) -> list[dict[str, Any]]:
    """Write a header, per-trial records and one summary per rate; return the summaries."""
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    if opt is None:
        opt = exact_densest(g).density_in_source
    writer.write(
        {
            "kind": "bench",
            "n": g.n,
            "m": g.m,
            "opt": opt,
            "seed": seed,
            "solver": solver,
            "rates": rates,
            "trials": trials,
            "threshold": threshold,
        }
    )
    specs = plan_trials(g, rates, trials, seed, solver)
    start = time.monotonic()
    results = await run_trials(g, specs, workers)
    logger.info("Ran %d trials in %.2fs with %d workers", len(specs), time.monotonic() - start, workers)

    summaries = []
    for ri, rate in enumerate(rates):
        batch = [r for r in results if r.spec.rate_index == ri]
        for r in batch:
            writer.write(trial_record(r, opt, threshold, timing))
        summary = summary_record(rate, batch[0].spec.sample_size, batch, opt, threshold)
        logger.info(
            "rate=%s C=%d: %d/%d trials below %.2f of opt",
            rate,
            summary["C"],
            summary["failures"],
            len(batch),
            threshold,
        )
        writer.write(summary)
        summaries.append(summary)
    return summaries
