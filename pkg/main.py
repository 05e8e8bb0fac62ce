import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from dotenv import load_dotenv
from prometheus_client import write_to_textfile
from pydantic import ValidationError

from models.config import EngineEnum, OutputSection, RunConfig
from models.mjp import ThetaAlpha
from models.observation import ObservationSeries
from utils.exceptions import (
    ConfigurationError,
    PersistenceError,
    SimulationExplosionError,
    StepFailureError,
)
from utils.gillespie import simulate_observations
from utils.load_config import LOG_LEVEL_ENV, apply_overrides, load_run_config, resolve_model
from utils.metrics import REGISTRY
from utils.persistence import (
    format_summary,
    read_observations,
    read_particles,
    summarize_particles,
    write_baseline,
    write_observations,
    write_particles,
    write_summary,
    write_trace,
)
from utils.reactions import to_theta
from utils.rng import root_stream
from utils.smc import baseline, run
from utils.worker_pool import AttemptPool

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STEP_FAILURE = 3
EXIT_IO = 4

# stream key for synthetic data, clear of the per-step keys used by inference
GENERATE_STREAM = 2**32


def _load(args: argparse.Namespace) -> RunConfig:
    if args.config is None:
        raise ConfigurationError(f"{args.command} needs --config")
    config = apply_overrides(load_run_config(args.config), seed=args.seed, threads=args.threads, out=args.out)
    print(f"seed: {config.smc.seed}")
    return config


def _obs_path(args: argparse.Namespace, config: RunConfig) -> Path:
    return Path(args.obs) if args.obs else config.output.dir / config.output.observations


def _write_metrics(config: RunConfig) -> None:
    if config.output.metrics:
        path = config.output.dir / config.output.metrics
        path.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), REGISTRY)


def cmd_generate(args: argparse.Namespace) -> int:
    """Simulate one trajectory and write its observed components."""
    config = _load(args)
    if config.generate is None:
        raise ConfigurationError("generate needs a [generate] section")
    model = resolve_model(config)
    gen = config.generate
    if len(gen.x0) != model.n_species:
        raise ConfigurationError(f"x0 needs {model.n_species} entries for {model.name}")
    try:
        theta = to_theta(ThetaAlpha(alpha=gen.alpha, omega=gen.omega), model)
    except ValidationError as e:
        raise ConfigurationError(f"invalid generating parameters: {e}") from e

    times = np.arange(gen.n + 1) * gen.delta
    rng = root_stream(config.smc.seed).child(GENERATE_STREAM).generator
    grid, events = simulate_observations(model, theta, np.asarray(gen.x0), times, rng, config.smc.max_events)

    z0 = None
    if gen.record_z0 and model.unobserved_species:
        z0 = tuple(int(v) for v in grid[0, model.unobserved_index])
        logger.info(f"Recording the latent start {dict(zip(model.unobserved_species, z0))} as known")
    series = ObservationSeries(
        species=model.observed_species,
        times=times,
        y=grid[:, model.observed_index],
        z0=z0,
    )
    path = _obs_path(args, config)
    write_observations(path, series, model.unobserved_species)
    print(f"events: {events}")
    print(f"observations: {path}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    config = _load(args)
    model = resolve_model(config)
    observations = read_observations(_obs_path(args, config), model)
    logger.info(f"Inferring {model.name} from {observations.n} intervals with {config.smc.workers} workers")

    with AttemptPool(workers=config.smc.workers) as pool:
        try:
            trace, particles = run(model, observations, config.prior, config.smc, config.policy, pool=pool)
        finally:
            _write_metrics(config)

    out = config.output
    write_trace(out.dir / out.trace, trace)
    write_particles(out.dir / out.particles, particles, model, config.smc.scales)
    print(f"attempts: {trace.total_attempts}")
    print(f"trace: {out.dir / out.trace}")
    print(f"particles: {out.dir / out.particles}")
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    """Weighted posterior means and standard deviations of a particle file."""
    if args.particles is None:
        if args.config is None:
            raise ConfigurationError("summarize needs a particle file or --config")
        config = load_run_config(args.config)
        particles_path = (Path(args.out) if args.out else config.output.dir) / config.output.particles
    else:
        particles_path = Path(args.particles)
    frame, names = read_particles(particles_path)
    summary = summarize_particles(frame, names)
    print(format_summary(summary))
    if args.out:
        path = Path(args.out) / OutputSection().summary
        write_summary(path, summary)
        print(f"summary: {path}")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    """Compare attempt counts of the plain, coupled, steered and coupled-steered engines."""
    config = _load(args)
    model = resolve_model(config)
    observations = read_observations(_obs_path(args, config), model)

    with AttemptPool(workers=config.smc.workers) as pool:
        try:
            report = baseline(
                model, observations, config.prior, config.smc, config.policy, pool=pool, steps=args.steps
            )
        finally:
            _write_metrics(config)

    for engine in report.engines:
        marker = ">= " if engine in report.censored else ""
        counts = report.attempts[engine][: report.steps]
        print(f"{engine.value} attempts: {marker}{sum(counts)} {counts}")
    for engine in report.engines:
        if engine == EngineEnum.PLAIN:
            continue
        print(f"ratio plain/{engine.value}: {report.ratio_of(engine):.3f}")
    path = config.output.dir / config.output.baseline
    write_baseline(path, report)
    print(f"baseline: {path}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "infer": cmd_infer,
    "summarize": cmd_summarize,
    "baseline": cmd_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mjp-smc",
        description="Sequential Monte Carlo inference for discretely observed Markov jump processes",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--obs", type=Path, help="observation CSV")
    common.add_argument("--seed", type=int, help="run seed, overrides the file and MJP_SMC_SEED")
    common.add_argument("--threads", type=int, help="worker processes, overrides the file and MJP_SMC_THREADS")
    common.add_argument("--out", type=Path, help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate synthetic observations")
    sub.add_parser("infer", parents=[common], help="run the coupled, steered filter")
    summarize = sub.add_parser("summarize", parents=[common], help="summarise a particle file")
    summarize.add_argument("particles", nargs="?", type=Path, help="particle CSV")
    baseline_parser = sub.add_parser("baseline", parents=[common], help="compare attempt counts across engines")
    baseline_parser.add_argument("--steps", type=int, help="observation intervals to compare over")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv(LOG_LEVEL_ENV, "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except StepFailureError as e:
        logger.error(f"{e}; diagnostics: {e.diagnostics}")
        return EXIT_STEP_FAILURE
    except SimulationExplosionError as e:
        logger.error(f"Simulation stopped: {e}")
        return EXIT_STEP_FAILURE
    except (PersistenceError, OSError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
