"""
Sequential Monte Carlo over observation times.

Each step repeats independent attempts until the accepted weights reach the
target effective sample size M:

  (a) pick a particle in proportion to its weight (step 1: draw from the prior)
  (b) shrink and perturb its parameters with the Liu-West kernel
  (c) draw a random level set B of speeds around the conditional phi centre
  (d) simulate once at speed 1, optionally steered towards the next
      observation, and integrate the matching intervals over B
  (e) keep a positive-weight attempt as a particle, drawing phi and the latent
      components from the matching part of the trajectory

Attempt k of step i always uses the random stream (seed, i, k), and the kept
set is cut at the first attempt where the running ESS reaches M, so results
do not depend on the number of workers.
"""
import logging
import math
import time
from enum import Enum
from contextlib import closing
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from middleware.metrics_middleware import StepMetricsMiddleware
from models.config import NULL_POLICY, EngineEnum, Policy, PolicySchedule, PriorSpec, ScaleEnum, SmcConfig
from models.mjp import ModelSpec
from models.observation import ObservationSeries
from models.particle import (
    BaselineReport,
    MomentSummary,
    Particle,
    ParticleSet,
    PosteriorTrace,
    StepDiagnostics,
    TraceRow,
)
from utils.exceptions import ConfigurationError, ContractError, SimulationExplosionError, StepFailureError
from utils.gillespie import choose_channel, match_weight, sample_phi_and_z, sample_power_law, simulate_coupled
from utils.levelset import gaussian_levelset
from utils.priors import (
    alpha_matrix,
    builtin_scales,
    check_prior,
    draw_initial,
    draw_prior_point,
    in_support,
    phi_support,
    theta_from_tilde,
    tilde_bounds,
    to_natural,
)
from utils.rng import RngStream
from utils.steering import check_compatible
from utils.worker_pool import AttemptPool

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12
RIDGE = 1e-10


class AttemptStatusEnum(str, Enum):
    """
    The here Enum: represents how a single simulation attempt ended
    """
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    PRIOR_REJECTION = "prior_rejection"
    EXPLOSION = "explosion"


class AttemptOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    status: AttemptStatusEnum
    events: int = 0
    particle: Optional[Particle] = None


class StepContext(BaseModel):
    """
    This here Model: represents everything a worker needs to run attempts of one
    step. It is pickled once per chunk.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model: ModelSpec
    prior: PriorSpec
    scales: tuple[ScaleEnum, ...]
    policy: Policy
    seed: int
    step: int
    delta: float
    h: float
    coupled: bool
    condition: bool
    max_events: int
    y_prev: np.ndarray
    target: np.ndarray
    known_z0: Optional[tuple[int, ...]] = None
    previous: Optional[ParticleSet] = None
    moments: Optional[MomentSummary] = None
    bounds: tuple[np.ndarray, np.ndarray]

    def full_state(self, z: np.ndarray) -> np.ndarray:
        state = np.empty(self.model.n_species, dtype=np.int64)
        state[self.model.observed_index] = self.y_prev
        state[self.model.unobserved_index] = z
        return state


def ess(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2."""
    weights = np.asarray(weights, dtype=np.float64)
    if (weights < 0).any():
        raise ContractError("weights must be non-negative")
    total = weights.sum()
    if not total > 0:
        raise ContractError("effective sample size needs a positive weight")
    # rescale first so tiny or huge weights do not under/overflow when squared
    scaled = weights / weights.max()
    return float(scaled.sum() ** 2 / (scaled ** 2).sum())


def weighted_mean_sd(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise weighted mean and standard deviation."""
    W = np.asarray(weights, dtype=np.float64)
    W = W / W.sum()
    mean = W @ values
    var = W @ (values - mean) ** 2
    return mean, np.sqrt(np.maximum(var, 0.0))


def _noise_factor(V_tilde: np.ndarray) -> np.ndarray:
    """A matrix L with L @ L.T = V_tilde."""
    try:
        return linalg.cholesky(V_tilde, lower=True)
    except linalg.LinAlgError:
        values, vectors = linalg.eigh(V_tilde)
        return vectors * np.sqrt(np.clip(values, 0.0, None))


def weighted_moments(particles: ParticleSet) -> MomentSummary:
    """
    Weighted mean and covariance of (theta_tilde, phi) and the conditional
    variance of phi given theta_tilde.
    """
    weights = particles.weights
    if len(particles) < 2:
        raise ContractError("moments need at least two particles")
    if (weights < 0).any() or not weights.sum() > 0:
        raise ContractError("moments need non-negative weights with a positive total")
    X = particles.full_theta()
    W = weights / weights.sum()
    mu = W @ X
    D = X - mu
    V = (D * W[:, None]).T @ D
    V = 0.5 * (V + V.T)

    V_tilde = V[:-1, :-1]
    C = V[:-1, -1]
    V_phi = float(V[-1, -1])
    dim = len(C)
    trace = float(np.trace(V_tilde)) if dim else 0.0

    if dim == 0 or not trace > 0:
        gain = np.zeros(dim)
        noise_factor = np.zeros((dim, dim))
    else:
        try:
            gain = linalg.cho_solve(linalg.cho_factor(V_tilde), C)
        except linalg.LinAlgError:
            logger.warning("Singular parameter covariance, solving with a ridge")
            ridged = V_tilde + (RIDGE * trace / dim) * np.eye(dim)
            gain = linalg.solve(ridged, C, assume_a="pos")
        noise_factor = _noise_factor(V_tilde)

    sigma_phi_sq = V_phi - float(C @ gain)
    floor = SIGMA_FLOOR * (V_phi + np.finfo(np.float64).eps)
    if sigma_phi_sq < floor:
        sigma_phi_sq = floor
    return MomentSummary(mu=mu, V=V, gain=gain, sigma_phi_sq=sigma_phi_sq, noise_factor=noise_factor)


def liu_west_propose(
    theta_tilde: np.ndarray,
    phi: float,
    moments: MomentSummary,
    h: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float, float]:
    """
    Shrink towards the cloud mean and perturb.

    theta* = a theta + (1 - a) mu + zeta with zeta ~ N(0, h^2 V_tilde); the speed
    centre follows the same kernel conditioned on zeta. Returns
    (theta*, phi_tilde, sigma_c).
    """
    if not 0 < h < 1:
        raise ContractError(f"smoothing parameter h must lie in (0, 1), got {h}")
    a = math.sqrt(1.0 - h * h)
    zeta = h * (moments.noise_factor @ rng.standard_normal(moments.dim))
    theta_star = a * np.asarray(theta_tilde, dtype=np.float64) + (1 - a) * moments.mu_tilde + zeta
    phi_tilde = a * phi + (1 - a) * moments.mu_phi + float(moments.gain @ zeta)
    sigma_c = h * math.sqrt(moments.sigma_phi_sq)
    return theta_star, float(phi_tilde), sigma_c


def resample_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    return choose_channel(np.ascontiguousarray(weights, dtype=np.float64), rng.random())


def _rejected(index: int, status: AttemptStatusEnum = AttemptStatusEnum.REJECTED, events: int = 0) -> AttemptOutcome:
    return AttemptOutcome(index=index, status=status, events=events)


def _accepted(index: int, theta_tilde: np.ndarray, phi: float, z: np.ndarray, weight: float, events: int) -> AttemptOutcome:
    particle = Particle(
        theta_tilde=tuple(float(v) for v in theta_tilde),
        phi=phi,
        z=tuple(int(v) for v in z),
        weight=weight,
    )
    return AttemptOutcome(index=index, status=AttemptStatusEnum.ACCEPTED, events=events, particle=particle)


def _coupled_attempt(ctx: StepContext, index: int, rng: np.random.Generator) -> AttemptOutcome:
    model = ctx.model
    if ctx.previous is None:
        theta_tilde, z, B = draw_initial(ctx.prior, model, ctx.scales, ctx.known_z0, rng)
        steer_point = B.midpoint
    else:
        j = resample_index(ctx.previous.weights, rng)
        z = ctx.previous.z[j]
        theta_tilde, phi_tilde, sigma_c = liu_west_propose(
            ctx.previous.theta_tilde[j], float(ctx.previous.phi[j]), ctx.moments, ctx.h, rng
        )
        if not in_support(theta_tilde, ctx.bounds):
            return _rejected(index, AttemptStatusEnum.PRIOR_REJECTION)
        B = gaussian_levelset(phi_tilde, sigma_c, 1.0 - rng.random())
        B = B.intersect(*phi_support(ctx.prior, model, theta_tilde, ctx.scales))
        steer_point = phi_tilde if B.lo <= phi_tilde <= B.hi else B.midpoint

    if B.empty or not B.width > 0:
        return _rejected(index)

    if not ctx.condition:
        phi = sample_power_law(B.lo, B.hi, B.density_power, rng.random())
        return _accepted(index, theta_tilde, phi, z, B.measure(), 0)

    theta_v = theta_from_tilde(model, theta_tilde, 1.0, ctx.scales)
    try:
        traj = simulate_coupled(
            model,
            theta_v,
            ctx.full_state(z),
            B.hi * ctx.delta,
            rng,
            policy=ctx.policy,
            target=ctx.target,
            steer_time=steer_point * ctx.delta,
            max_events=ctx.max_events,
        )
    except SimulationExplosionError as e:
        return _rejected(index, AttemptStatusEnum.EXPLOSION, e.events)

    weight = match_weight(traj, B, model, ctx.target, ctx.delta)
    if not weight > 0:
        return _rejected(index, events=traj.n_events)
    phi_plus, z_next = sample_phi_and_z(traj, B, model, ctx.target, ctx.delta, rng)
    return _accepted(index, theta_tilde, phi_plus, z_next, weight, traj.n_events)


def _single_speed_attempt(ctx: StepContext, index: int, rng: np.random.Generator) -> AttemptOutcome:
    """One phi per attempt; the simulation is kept only if it ends on the observation."""
    model = ctx.model
    if ctx.previous is None:
        theta_tilde, phi, z = draw_prior_point(ctx.prior, model, ctx.scales, ctx.known_z0, rng)
    else:
        j = resample_index(ctx.previous.weights, rng)
        z = ctx.previous.z[j]
        theta_tilde, phi_tilde, sigma_c = liu_west_propose(
            ctx.previous.theta_tilde[j], float(ctx.previous.phi[j]), ctx.moments, ctx.h, rng
        )
        if not in_support(theta_tilde, ctx.bounds):
            return _rejected(index, AttemptStatusEnum.PRIOR_REJECTION)
        phi = phi_tilde + sigma_c * float(rng.standard_normal())
        lo, hi = phi_support(ctx.prior, model, theta_tilde, ctx.scales)
        if not lo < phi < hi:
            return _rejected(index, AttemptStatusEnum.PRIOR_REJECTION)

    theta_v = theta_from_tilde(model, theta_tilde, 1.0, ctx.scales)
    horizon = phi * ctx.delta
    try:
        traj = simulate_coupled(
            model,
            theta_v,
            ctx.full_state(z),
            horizon,
            rng,
            policy=ctx.policy,
            target=ctx.target,
            steer_time=horizon,
            max_events=ctx.max_events,
        )
    except SimulationExplosionError as e:
        return _rejected(index, AttemptStatusEnum.EXPLOSION, e.events)

    end = traj.states[-1]
    if not ctx.condition:
        return _accepted(index, theta_tilde, phi, end[model.unobserved_index], 1.0, traj.n_events)
    if not (end[model.observed_index] == ctx.target).all():
        return _rejected(index, events=traj.n_events)
    return _accepted(index, theta_tilde, phi, end[model.unobserved_index], float(traj.weights[-1]), traj.n_events)


def run_attempts(ctx: StepContext, attempts: range) -> list[AttemptOutcome]:
    """Worker task: run a chunk of consecutive attempts of one step."""
    stream = RngStream(seed=ctx.seed).child(ctx.step)
    attempt = _coupled_attempt if ctx.coupled else _single_speed_attempt
    return [attempt(ctx, index, stream.child(index).generator) for index in attempts]


def resolve_scales(config: SmcConfig, model: ModelSpec) -> tuple[ScaleEnum, ...]:
    return config.scales or builtin_scales(model)


def _chunks(chunk_size: int, max_attempts: int):
    for start in range(0, max_attempts, chunk_size):
        yield range(start, min(start + chunk_size, max_attempts))


def smc_step(
    previous: Optional[ParticleSet],
    step: int,
    y_prev: np.ndarray,
    y_next: np.ndarray,
    delta: float,
    model: ModelSpec,
    prior: PriorSpec,
    config: SmcConfig,
    policy: Policy,
    pool: Optional[AttemptPool] = None,
    known_z0: Optional[tuple[int, ...]] = None,
    condition: bool = True,
) -> tuple[ParticleSet, StepDiagnostics]:
    """
    Move the particle cloud from one observation time to the next.

    ``previous`` is None at the first step, where attempts draw from the prior.
    ``condition=False`` drops the observation constraint so every attempt with a
    non-empty speed set is kept (weights are then the prior slice integrals).

    Raises:
        StepFailureError: max_attempts ran out before the ESS reached M
    """
    if not delta > 0:
        raise ContractError("observation interval must be positive")
    if step < 1:
        raise ContractError("steps are numbered from 1")
    check_compatible(policy, model)
    scales = resolve_scales(config, model)
    ctx = StepContext(
        model=model,
        prior=prior,
        scales=scales,
        policy=policy,
        seed=config.seed,
        step=step,
        delta=delta,
        h=config.h,
        coupled=config.coupled,
        condition=condition,
        max_events=config.max_events,
        y_prev=np.asarray(y_prev, dtype=np.int64),
        target=np.asarray(y_next, dtype=np.int64),
        known_z0=known_z0,
        previous=previous,
        moments=weighted_moments(previous) if previous is not None else None,
        bounds=tilde_bounds(prior, model),
    )

    pool = pool or AttemptPool(workers=1)
    diagnostics = StepDiagnostics(step=step)
    started = time.perf_counter()
    kept: list[Particle] = []
    sum_w = 0.0
    sum_w2 = 0.0
    done = False
    counts = {status: 0 for status in AttemptStatusEnum}
    events = 0
    attempts = 0

    with closing(pool.map_chunks(run_attempts, ctx, _chunks(config.chunk_size, config.max_attempts))) as chunks:
        for outcomes in chunks:
            for outcome in outcomes:
                attempts += 1
                events += outcome.events
                counts[outcome.status] += 1
                if outcome.particle is not None:
                    kept.append(outcome.particle)
                    w = outcome.particle.weight
                    sum_w += w
                    sum_w2 += w * w
                    if sum_w * sum_w >= config.M * sum_w2:
                        done = True
                        break
            if done:
                break

    diagnostics = diagnostics.model_copy(
        update={
            "attempts": attempts,
            "accepted": len(kept),
            "ess": ess([p.weight for p in kept]) if kept else 0.0,
            "explosions": counts[AttemptStatusEnum.EXPLOSION],
            "prior_rejections": counts[AttemptStatusEnum.PRIOR_REJECTION],
            "events": events,
            "seconds": time.perf_counter() - started,
        }
    )
    if diagnostics.explosions:
        logger.warning(f"Step {step}: {diagnostics.explosions} simulations hit the {config.max_events} event cap")
    if not done:
        logger.error(
            f"Step {step} failed after {attempts} attempts: {len(kept)} accepted, ESS {diagnostics.ess:.2f} < {config.M}"
        )
        raise StepFailureError(step, diagnostics, reason=f"ESS {diagnostics.ess:.2f} below {config.M} after {attempts} attempts")

    particles = ParticleSet.from_particles(kept, len(ctx.bounds[0]), len(model.unobserved_index))
    return particles, diagnostics


def plain_smc_step(
    previous: Optional[ParticleSet],
    step: int,
    y_prev: np.ndarray,
    y_next: np.ndarray,
    delta: float,
    model: ModelSpec,
    prior: PriorSpec,
    config: SmcConfig,
    pool: Optional[AttemptPool] = None,
    known_z0: Optional[tuple[int, ...]] = None,
) -> tuple[ParticleSet, StepDiagnostics]:
    """One speed per attempt, no steering, exact-match acceptance."""
    return smc_step(
        previous,
        step,
        y_prev,
        y_next,
        delta,
        model,
        prior,
        config.model_copy(update={"coupled": False}),
        NULL_POLICY,
        pool=pool,
        known_z0=known_z0,
    )


def prior_particles(
    model: ModelSpec,
    prior: PriorSpec,
    config: SmcConfig,
    count: int,
    known_z0: Optional[tuple[int, ...]] = None,
) -> ParticleSet:
    """``count`` exact prior draws with unit weights."""
    scales = resolve_scales(config, model)
    stream = RngStream(seed=config.seed).child(0)
    draws = []
    for k in range(count):
        theta_tilde, phi, z = draw_prior_point(prior, model, scales, known_z0, stream.child(k).generator)
        draws.append(Particle(theta_tilde=tuple(theta_tilde.tolist()), phi=phi, z=tuple(int(v) for v in z), weight=1.0))
    return ParticleSet.from_particles(draws, len(tilde_bounds(prior, model)[0]), len(model.unobserved_index))


def trace_row(
    step: int,
    time_point: float,
    particles: ParticleSet,
    diagnostics: StepDiagnostics,
    model: ModelSpec,
    scales: tuple[ScaleEnum, ...],
) -> TraceRow:
    """Weighted alpha-scale (and omega) summaries of the cloud after one step."""
    alpha = alpha_matrix(model, particles.theta_tilde, particles.phi, scales)
    alpha_mean, alpha_sd = weighted_mean_sd(alpha, particles.weights)
    omega = to_natural(particles.theta_tilde, scales)[:, model.n_constants - 1:]
    if model.omega_dim:
        omega_mean, omega_sd = weighted_mean_sd(omega, particles.weights)
    else:
        omega_mean, omega_sd = np.zeros(0), np.zeros(0)
    return TraceRow(
        step=step,
        time=time_point,
        alpha_mean=tuple(alpha_mean.tolist()),
        alpha_sd=tuple(alpha_sd.tolist()),
        omega_mean=tuple(omega_mean.tolist()),
        omega_sd=tuple(omega_sd.tolist()),
        attempts=diagnostics.attempts,
        accepted=diagnostics.accepted,
        ess=diagnostics.ess,
        explosions=diagnostics.explosions,
    )


def _check_observations(model: ModelSpec, observations: ObservationSeries) -> None:
    if tuple(observations.species) != tuple(model.observed_species):
        raise ConfigurationError(
            f"observation columns {observations.species} do not match the observed species {model.observed_species}"
        )
    if observations.z0 is not None and len(observations.z0) != len(model.unobserved_index):
        raise ConfigurationError("known initial latent state has the wrong length")


def run(
    model: ModelSpec,
    observations: ObservationSeries,
    prior: PriorSpec,
    config: SmcConfig,
    schedule: Optional[PolicySchedule] = None,
    pool: Optional[AttemptPool] = None,
    engine: Optional[EngineEnum] = None,
    steps: Optional[int] = None,
    trace: Optional[PosteriorTrace] = None,
) -> tuple[PosteriorTrace, ParticleSet]:
    """
    Filter through the observations, one step per interval.

    ``engine`` picks coupling and steering; by default it follows
    ``config.coupled`` and steers with the schedule. ``steps`` stops after that
    many intervals. Rows are appended to ``trace`` when one is given, so a
    caller still holds the completed steps after a StepFailureError.
    """
    _check_observations(model, observations)
    scales = resolve_scales(config, model)
    check_prior(prior, model, scales)
    schedule = schedule or PolicySchedule()
    if engine is None:
        engine = EngineEnum.COUPLED_STEERED if config.coupled else EngineEnum.STEERED
    config = config.model_copy(update={"coupled": engine.coupled})
    step_call = StepMetricsMiddleware(plain_smc_step if engine == EngineEnum.PLAIN else smc_step, engine.value)

    n = observations.n if steps is None else min(steps, observations.n)
    if trace is None:
        trace = PosteriorTrace(alpha_names=model.alpha_names, omega_names=model.omega_names, seed=config.seed)
    if n == 0:
        return trace, prior_particles(model, prior, config, math.ceil(config.M), observations.z0)

    particles: Optional[ParticleSet] = None
    for i in range(1, n + 1):
        args = (particles, i, observations.y[i - 1], observations.y[i], observations.interval(i), model, prior, config)
        if engine == EngineEnum.PLAIN:
            particles, diagnostics = step_call(*args, pool=pool, known_z0=observations.z0)
        else:
            policy = schedule.for_step(i) if engine.steered else NULL_POLICY
            particles, diagnostics = step_call(*args, policy, pool=pool, known_z0=observations.z0)
        trace.rows.append(trace_row(i, float(observations.times[i]), particles, diagnostics, model, scales))
        logger.info(
            f"[{engine.value}] step {i}/{n}: {diagnostics.attempts} attempts, {diagnostics.accepted} kept, "
            f"ESS {diagnostics.ess:.1f}, {diagnostics.seconds:.2f}s"
        )
    return trace, particles


def baseline(
    model: ModelSpec,
    observations: ObservationSeries,
    prior: PriorSpec,
    config: SmcConfig,
    schedule: Optional[PolicySchedule] = None,
    pool: Optional[AttemptPool] = None,
    steps: Optional[int] = None,
    engines: tuple[EngineEnum, ...] = tuple(EngineEnum),
) -> BaselineReport:
    """
    Attempts per step of each engine on the same data and seed.

    An engine whose step runs out of attempts stops there; that step is
    recorded at the attempt cap and the engine is marked censored.
    """
    report = BaselineReport()
    for engine in engines:
        trace = PosteriorTrace(alpha_names=model.alpha_names, omega_names=model.omega_names, seed=config.seed)
        try:
            run(model, observations, prior, config, schedule, pool=pool, engine=engine, steps=steps, trace=trace)
        except StepFailureError as e:
            logger.warning(f"[{engine.value}] stopped at step {e.step}; its attempt counts are lower bounds")
            report.censored.add(engine)
            report.attempts[engine] = [row.attempts for row in trace.rows] + [config.max_attempts]
            continue
        report.attempts[engine] = [row.attempts for row in trace.rows]
    return report
