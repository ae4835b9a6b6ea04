"""Main entry point for densketch."""

import argparse
import asyncio
import logging
import sys
import time
from typing import Any, Optional

from .bench import run_bench
from .config import (
    PROBLEMS,
    SOLVERS,
    Config,
    ConfigError,
    RunConfig,
    load_config,
)
from .densest import approx_densest_by_sampling, compute_sample_size, exact_densest
from .graph import SizeGuardError
from .hashing import derive_seed
from .heavy import (
    BipartitionSolution,
    Labeling,
    check_gamma_bound,
    estimate_heavy,
    get_problem,
)
from .report import ReportWriter
from .sketch import (
    LeveledSampler,
    SampledGraph,
    SamplerFailure,
    SketchStats,
    load_sketch,
    merge,
    save_sketch,
)
from .stream import (
    ParsedStream,
    StrictTurnstileError,
    StreamFormatError,
    generate_stream,
    parse_gen_spec,
    parse_stream,
    replay,
    require_strict_turnstile,
    validate_strict_turnstile,
)

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SAMPLER = 3


class UsageError(Exception):
    """Raised instead of exiting so usage errors map to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def load_source(run: RunConfig) -> ParsedStream:
    """The input stream, from a file or a generator spec."""
    if run.input_path is not None:
        with open(run.input_path) as f:
            parsed = parse_stream(f)
    else:
        spec = parse_gen_spec(run.gen, seed=derive_seed(run.seed, "stream/gen"))
        generated = generate_stream(spec)
        parsed = ParsedStream(generated.n, generated.directed, generated.events)
    require_strict_turnstile(parsed.events, parsed.directed)
    return parsed


def stream_sample_size(run: RunConfig, n: int, directed: bool) -> int:
    """C for a sampler built before m is known: the formula at the largest possible m."""
    if run.sample_size is not None:
        return run.sample_size
    max_edges = n * (n - 1) // (1 if directed else 2)
    return compute_sample_size(n, max(max_edges, 2), run.epsilon, run.delta).sample_size


def build_sampler(run: RunConfig, parsed: ParsedStream) -> LeveledSampler:
    sampler = LeveledSampler.create(
        parsed.n,
        parsed.directed,
        stream_sample_size(run, parsed.n, parsed.directed),
        run.delta,
        run.seed,
        run.config.sketch,
    )
    return sampler.consume(parsed.events)


def _edges(sample: SampledGraph) -> list[list[int]]:
    return [[e.u, e.v] for e in sorted(sample.sampled_edges)]


def _solution(sol: Any) -> Any:
    if isinstance(sol, Labeling):
        return list(sol.labels)
    if isinstance(sol, BipartitionSolution):
        return {"A": sorted(sol.A), "B": sorted(sol.B)}
    return sol


def _base(run: RunConfig) -> dict[str, Any]:
    record: dict[str, Any] = {"command": run.command, "seed": run.seed}
    if run.input_path is not None:
        record["input"] = run.input_path
    if run.gen is not None:
        record["gen"] = run.gen
    return record


def _sample_record(run: RunConfig, sampler: LeveledSampler, sample: SampledGraph) -> dict[str, Any]:
    stats = SketchStats.of(sampler)
    record = _base(run)
    record.update(
        {
            "n": sample.base_n,
            "directed": sample.directed,
            "m": sample.m,
            "C": sampler.params.sample_size,
            "p": sample.p,
            "edges": _edges(sample),
            "level_counts": stats.level_counts,
        }
    )
    return record


def cmd_sample(run: RunConfig, writer: ReportWriter) -> int:
    parsed = load_source(run)
    sampler = build_sampler(run, parsed)
    sample = sampler.query()
    if run.sketch_out:
        save_sketch(sampler, run.sketch_out)
    writer.write(_sample_record(run, sampler, sample))
    return EXIT_OK


def cmd_merge(run: RunConfig, writer: ReportWriter) -> int:
    samplers = [load_sketch(path, run.config.sketch) for path in run.sketch_paths]
    merged = samplers[0]
    for other in samplers[1:]:
        merged = merge(merged, other)
    logger.info("Merged %d sketches (m=%d)", len(samplers), merged.m)
    if run.sketch_out:
        save_sketch(merged, run.sketch_out)
    record = _sample_record(run, merged, merged.query())
    record["sketches"] = list(run.sketch_paths)
    writer.write(record)
    return EXIT_OK


def cmd_densest(run: RunConfig, writer: ReportWriter) -> int:
    parsed = load_source(run)
    g = replay(parsed.n, parsed.directed, parsed.events)
    if run.stream:
        source: Any = build_sampler(run, parsed)
        result = approx_densest_by_sampling(
            source, run.epsilon, run.delta, run.solver, run.seed, reference=g
        )
    else:
        result = approx_densest_by_sampling(
            g, run.epsilon, run.delta, run.solver, run.seed, run.sample_size
        )
    record = _base(run)
    record.update(
        {
            "n": g.n,
            "m": g.m,
            "solver": run.solver,
            "stream": run.stream,
            "C": result.sample_size,
            "p": result.p,
            "vertices": result.sorted_vertices(),
            "size": result.size,
            "density": result.density_in_source,
            "density_in_sample": result.density_in_sample,
        }
    )
    writer.write(record)
    return EXIT_OK


def cmd_estimate(run: RunConfig, writer: ReportWriter) -> int:
    parsed = load_source(run)
    problem = get_problem(run.problem, run.d)
    mode = run.mode or "exact"
    restarts = run.config.solver.local_search_restarts
    if run.stream:
        source: Any = build_sampler(run, parsed)
    else:
        source = replay(parsed.n, parsed.directed, parsed.events)
    est = estimate_heavy(
        problem, source, run.epsilon, run.delta, mode, run.seed, run.sample_size, restarts
    )
    record = _base(run)
    record.update(
        {
            "problem": est.problem,
            "d": run.d,
            "mode": mode,
            "stream": run.stream,
            "n": parsed.n,
            "m": est.m,
            "C": est.sample_size,
            "p": est.p,
            "value": round(est.value, 9),
            "normalized": round(est.normalized, 9),
            "witness": _solution(est.witness),
            "exact_solver": est.exact_solver,
        }
    )
    writer.write(record)
    return EXIT_OK


def cmd_oracle(run: RunConfig, writer: ReportWriter) -> int:
    parsed = load_source(run)
    g = replay(parsed.n, parsed.directed, parsed.events)
    record = _base(run)
    record.update({"n": g.n, "m": g.m})
    if run.problem is None:
        result = exact_densest(g)
        record.update(
            {
                "problem": "densest",
                "vertices": result.sorted_vertices(),
                "density": result.density_in_source,
            }
        )
    else:
        problem = get_problem(run.problem, run.d)
        found = problem.solve(g, "exact")
        reports = check_gamma_bound(problem, g)
        record.update(
            {
                "problem": problem.name,
                "d": run.d,
                "value": found.value,
                "normalized": problem.normalized_value(found.solution, g),
                "solution": _solution(found.solution),
                "gamma": problem.gamma(g.n),
                "gamma_bound_holds": all(r.holds for r in reports),
            }
        )
    writer.write(record)
    return EXIT_OK


def cmd_bench(run: RunConfig, writer: ReportWriter) -> int:
    parsed = load_source(run)
    g = replay(parsed.n, parsed.directed, parsed.events)
    bench = run.config.bench
    asyncio.run(
        run_bench(
            g,
            writer,
            rates=bench.rates,
            trials=run.trials,
            seed=run.seed,
            solver=run.solver,
            threshold=bench.threshold,
            workers=run.workers,
            timing=run.timing,
        )
    )
    return EXIT_OK


def cmd_validate(run: RunConfig, writer: ReportWriter) -> int:
    with open(run.input_path) as f:
        parsed = parse_stream(f)
    violation = validate_strict_turnstile(parsed.events, parsed.directed)
    record = _base(run)
    record.update({"n": parsed.n, "events": len(parsed.events), "valid": violation is None})
    if violation is not None:
        ev = violation.event
        record.update(
            {"index": violation.index, "reason": violation.reason, "event": [ev.op.value, ev.u, ev.v]}
        )
        logger.error("Stream violates strict turnstile at event %d: %s", violation.index, violation.reason)
    writer.write(record)
    return EXIT_OK if violation is None else EXIT_DATA


HANDLERS = {
    "sample": cmd_sample,
    "densest": cmd_densest,
    "estimate": cmd_estimate,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
    "validate": cmd_validate,
    "merge": cmd_merge,
}


def run(run_config: RunConfig, writer: Optional[ReportWriter] = None) -> int:
    """Execute one command; returns the process exit status."""
    try:
        run_config.validate()
        if run_config.command == "validate" and run_config.input_path is None:
            raise ConfigError("validate needs a stream file")
        own = writer is None
        writer = writer or ReportWriter(run_config.output_path)
        start = time.monotonic()
        if own:
            with writer:
                status = HANDLERS[run_config.command](run_config, writer)
        else:
            status = HANDLERS[run_config.command](run_config, writer)
        logger.info("%s finished in %.3fs", run_config.command, time.monotonic() - start)
        return status
    except ConfigError as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_USAGE
    except SamplerFailure as e:
        logger.error("Sampler failed: %s", e)
        return EXIT_SAMPLER
    except StreamFormatError as e:
        logger.error("Malformed stream: %s", e)
        return EXIT_DATA
    except StrictTurnstileError as e:
        logger.error("Stream is not strict turnstile: %s", e)
        return EXIT_DATA
    except SizeGuardError as e:
        logger.error("Refused by size guard: %s", e)
        return EXIT_DATA
    except (ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_DATA


def _seed(text: str) -> int:
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("input", nargs="?", help="Stream file ('n <count> [directed]' header, '+ u v' / '- u v' events)")
    common.add_argument("--gen", help="Generator spec instead of a file, e.g. planted:n=500,p=0.05,clique=30")
    common.add_argument("--seed", type=_seed, help="Run seed (default: DENSKETCH_SEED, then config, then 0)")
    common.add_argument("--epsilon", type=float, help="Accuracy in (0, 1)")
    common.add_argument("--delta", type=float, help="Confidence parameter, at least 1")
    common.add_argument("--C", dest="sample_size", type=int, help="Sample size override")
    common.add_argument("-o", "--output", help="Write report lines here instead of stdout")
    common.add_argument("--timing", action="store_true", help="Include wall time in report records")
    common.add_argument("-c", "--config", help="Path to config file (default: ~/.densketch/config.yaml)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = _Parser(
        prog="densketch",
        description="densketch - uniform edge sampling over dynamic graph streams and sample-and-solve estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="Sketch a stream and dump its edge sample")
    p.add_argument("--sketch-out", help="Save the sampler state here")

    p = sub.add_parser("densest", parents=[common], help="Approximate densest subgraph by sampling")
    p.add_argument("--solver", choices=SOLVERS, default="exact")
    p.add_argument("--stream", action="store_true", help="Sample through the leveled sketch")

    p = sub.add_parser("estimate", parents=[common], help="Estimate a heavy-subgraph optimum")
    p.add_argument("--problem", choices=PROBLEMS, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--mode", help="Solver mode (exact, local_search, greedy, singleton_heuristic)")
    p.add_argument("--stream", action="store_true", help="Sample through the leveled sketch")
    p.add_argument("--C-from-formula", action="store_true", help="Use the sample-size formula (the default without --C)")

    p = sub.add_parser("oracle", parents=[common], help="Run an exact solver on the whole graph")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--d", type=int, default=2)

    p = sub.add_parser("bench", parents=[common], help="Approximation-ratio sweep over sampling rates")
    p.add_argument("--solver", choices=SOLVERS, default="exact")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--rates", type=lambda s: [float(x) for x in s.split(",")], help="Comma-separated rates")
    p.add_argument("--threshold", type=float, help="Failure threshold as a fraction of opt")

    sub.add_parser("validate", parents=[common], help="Check a stream file for strict-turnstile violations")

    p = sub.add_parser("merge", parents=[common], help="Merge saved sketches and query the result")
    p.add_argument("sketches", nargs="+", help="Sketch files written by 'sample --sketch-out'")
    p.add_argument("--sketch-out", help="Save the merged sketch here")
    return parser


def build_run_config(args: argparse.Namespace, config: Config) -> RunConfig:
    """Combine parsed flags with the loaded config; flags win."""
    bench = config.bench
    if getattr(args, "rates", None):
        bench.rates = args.rates
    if getattr(args, "threshold", None) is not None:
        bench.threshold = args.threshold
    if args.command == "merge":
        input_path, sketch_paths = None, list(args.sketches)
        if args.input is not None:
            sketch_paths.insert(0, args.input)
    else:
        input_path, sketch_paths = args.input, []
    trials = getattr(args, "trials", None)
    workers = getattr(args, "workers", None)
    if getattr(args, "C_from_formula", False) and args.sample_size is not None:
        raise ConfigError("--C and --C-from-formula are mutually exclusive")
    return RunConfig(
        command=args.command,
        config=config,
        input_path=input_path,
        gen=args.gen,
        sketch_paths=sketch_paths,
        epsilon=args.epsilon if args.epsilon is not None else config.epsilon,
        delta=args.delta if args.delta is not None else config.delta,
        seed=args.seed if args.seed is not None else config.seed,
        sample_size=args.sample_size,
        solver=getattr(args, "solver", "exact"),
        problem=getattr(args, "problem", None),
        d=getattr(args, "d", 2),
        mode=getattr(args, "mode", None),
        stream=getattr(args, "stream", False),
        output_path=args.output,
        sketch_out=getattr(args, "sketch_out", None),
        trials=trials if trials is not None else bench.trials,
        workers=workers if workers is not None else bench.workers,
        timing=args.timing,
    )


def main(argv: Optional[list[str]] = None) -> None:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        logger.error("%s", e)
        sys.exit(EXIT_USAGE)

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        config = load_config(args.config)
        run_config = build_run_config(args, config)
    except (ConfigError, ValueError, OSError, TypeError) as e:
        logger.error("Failed to load config: %s", e)
        sys.exit(EXIT_USAGE)

    sys.exit(run(run_config))


if __name__ == "__main__":
    main()
