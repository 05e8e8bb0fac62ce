from prometheus_client import CollectorRegistry, Counter, Histogram

REGISTRY = CollectorRegistry()

ATTEMPT_COUNT = Counter("smc_simulation_attempts_total", "Simulation attempts made", ["engine"], registry=REGISTRY)

ACCEPTED_COUNT = Counter("smc_accepted_particles_total", "Attempts kept as particles", ["engine"], registry=REGISTRY)

EXPLOSION_COUNT = Counter("smc_explosions_total", "Simulations stopped at the event cap", ["engine"], registry=REGISTRY)

PRIOR_REJECTION_COUNT = Counter("smc_prior_rejections_total", "Proposals outside the prior support", ["engine"], registry=REGISTRY)

STEP_COUNT = Counter("smc_steps_total", "Time steps processed", ["engine", "status"], registry=REGISTRY)

STEP_LATENCY = Histogram("smc_step_duration_seconds", "Wall time per time step", ["engine"], registry=REGISTRY)

EVENTS_PER_ATTEMPT = Histogram(
    "smc_events_per_attempt",
    "Mean simulated events per attempt within a step",
    ["engine"],
    buckets=(1, 10, 100, 1_000, 10_000, 100_000, 1_000_000),
    registry=REGISTRY,
)
