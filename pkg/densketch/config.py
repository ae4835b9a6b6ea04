"""Configuration loading for densketch."""

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .hashing import MERSENNE_61

DEFAULT_CONFIG_PATH = "~/.densketch/config.yaml"

# Environment variable that overrides the configured default seed.
SEED_ENV_VAR = "DENSKETCH_SEED"

COMMANDS = ("sample", "densest", "estimate", "oracle", "bench", "validate", "merge")
SOLVERS = ("charikar", "exact")
PROBLEMS = ("densest-bipartite", "directed-densest", "d-max-cut", "d-sum-max")
DEFAULT_MINWISE_EPS = 0.1


class ConfigError(ValueError):
    """The run configuration is invalid or inconsistent."""


@dataclass
class SketchConfig:
    """Leveled-sampler and hash-family knobs."""

    prime: int = MERSENNE_61
    degree_cap: int = 512
    c_prime: float = 1.0
    c_double_prime: float = 2.0
    # None = min(e^-delta, DEFAULT_MINWISE_EPS).
    minwise_eps: Optional[float] = None
    # Removes degree_cap; only sensible for small tests.
    full_fidelity: bool = False
    # Updates are buffered and hashed in batches once the degree is large.
    batch_size: int = 256
    batch_degree_threshold: int = 32

    def effective_minwise_eps(self, delta: float) -> float:
        if self.minwise_eps is not None:
            return self.minwise_eps
        return min(math.exp(-delta), DEFAULT_MINWISE_EPS)


@dataclass
class BenchConfig:
    """Approximation-ratio sweep settings."""

    trials: int = 20
    workers: int = 1
    rates: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.5])
    # A trial fails when den_G(returned set) < threshold * opt.
    threshold: float = 0.7


@dataclass
class SolverConfig:
    """Heuristic solver settings."""

    local_search_restarts: int = 8


@dataclass
class Config:
    """Main configuration."""

    seed: int = 0
    epsilon: float = 0.5
    delta: float = 1.0
    sketch: SketchConfig = field(default_factory=SketchConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class RunConfig:
    """One CLI invocation, fully resolved."""

    command: str
    config: Config = field(default_factory=Config)
    input_path: Optional[str] = None
    gen: Optional[str] = None
    sketch_paths: list[str] = field(default_factory=list)
    epsilon: float = 0.5
    delta: float = 1.0
    seed: int = 0
    sample_size: Optional[int] = None
    solver: str = "exact"
    problem: Optional[str] = None
    d: int = 2
    mode: Optional[str] = None
    stream: bool = False
    output_path: Optional[str] = None
    sketch_out: Optional[str] = None
    trials: int = 20
    workers: int = 1
    timing: bool = False

    def validate(self) -> None:
        """Raise ConfigError when the invocation cannot run."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}'")
        if self.command == "merge":
            if len(self.sketch_paths) < 1:
                raise ConfigError("merge needs at least one sketch file")
        elif (self.input_path is None) == (self.gen is None):
            raise ConfigError("exactly one input source is required: a stream file or --gen")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.delta < 1:
            raise ConfigError(f"delta must be at least 1, got {self.delta}")
        if self.trials < 1:
            raise ConfigError(f"trials must be positive, got {self.trials}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.sample_size is not None and self.sample_size < 1:
            raise ConfigError(f"sample size must be positive, got {self.sample_size}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver '{self.solver}' (expected one of {SOLVERS})")
        if self.command == "estimate":
            if self.problem not in PROBLEMS:
                raise ConfigError(
                    f"estimate needs --problem, one of {', '.join(PROBLEMS)}"
                )
        if self.problem in ("d-max-cut", "d-sum-max") and self.d < 2:
            raise ConfigError(f"--d must be at least 2, got {self.d}")


def _build_sketch(data: dict) -> SketchConfig:
    defaults = SketchConfig()
    return SketchConfig(
        prime=int(data.get("prime", defaults.prime)),
        degree_cap=int(data.get("degree_cap", defaults.degree_cap)),
        c_prime=float(data.get("c_prime", defaults.c_prime)),
        c_double_prime=float(data.get("c_double_prime", defaults.c_double_prime)),
        minwise_eps=data.get("minwise_eps"),
        full_fidelity=bool(data.get("full_fidelity", False)),
        batch_size=int(data.get("batch_size", defaults.batch_size)),
        batch_degree_threshold=int(
            data.get("batch_degree_threshold", defaults.batch_degree_threshold)
        ),
    )


def load_config(config_path: Optional[str] = None) -> Config:
    """Load configuration from file and environment variables.

    Priority for values:
    1. Environment variables (highest; only the seed)
    2. Config file
    3. Defaults (lowest)

    Command-line flags are applied on top of the result by the CLI.
    """
    path = Path(config_path or DEFAULT_CONFIG_PATH).expanduser()

    data: dict = {}
    if path.exists():
        with open(path) as f:
            data = yaml.safe_load(f) or {}

    run_data = data.get("run", {})
    bench_data = data.get("bench", {})
    solver_data = data.get("solver", {})

    seed = run_data.get("seed", 0)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed, 0)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{env_seed}'") from e

    bench_defaults = BenchConfig()
    bench = BenchConfig(
        trials=int(bench_data.get("trials", bench_defaults.trials)),
        workers=int(bench_data.get("workers", bench_defaults.workers)),
        rates=[float(r) for r in bench_data.get("rates", bench_defaults.rates)],
        threshold=float(bench_data.get("threshold", bench_defaults.threshold)),
    )

    return Config(
        seed=int(seed),
        epsilon=float(run_data.get("epsilon", 0.5)),
        delta=float(run_data.get("delta", 1.0)),
        sketch=_build_sketch(data.get("sketch", {})),
        bench=bench,
        solver=SolverConfig(
            local_search_restarts=int(solver_data.get("local_search_restarts", 8)),
        ),
    )
