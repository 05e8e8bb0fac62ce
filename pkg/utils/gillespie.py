"""
Exact stochastic simulation.

Waiting times are exponential with the total rate and are never steered; only
the identity of each transition may be drawn from a steering policy. Each event
consumes one standard exponential followed by one uniform, so two simulations
fed the same stream stay synchronised: the direct process at speed phi and the
speed-1 process read at phi * t share every event.

The event loop is a numba kernel over plain arrays. It takes the model's
compiled rate basis as an argument and reports explosions and policy
violations as status codes, which the Python wrappers turn into exceptions.
"""
import logging
from typing import Optional

import numpy as np
from numba import njit

from models.config import Policy
from models.mjp import ModelSpec, StateVector, Theta
from models.trajectory import CoupledTrajectory, PhiSet
from utils.exceptions import ContractError, PolicyContractError, SimulationExplosionError
from utils.reactions import channel_beta
from utils.steering import STEER_NONE, check_compatible, steer_probabilities, variant_code

logger = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 1_000_000
INITIAL_CAPACITY = 1024

RUN_OK = 0
RUN_EXPLODED = 1
RUN_POLICY_VIOLATION = 2

_NO_TARGET = np.zeros(0)


@njit
def choose_channel(weights, u):
    """Inverse-CDF draw; never returns a channel with zero weight."""
    total = 0.0
    for k in range(len(weights)):
        total += weights[k]
    threshold = u * total
    cumulative = 0.0
    last = -1
    for k in range(len(weights)):
        if weights[k] > 0:
            cumulative += weights[k]
            last = k
            if cumulative > threshold:
                return k
    return last


@njit
def _grow(times, states, weights):
    size = 2 * len(times)
    new_times = np.empty(size)
    new_times[: len(times)] = times
    new_states = np.empty((size, states.shape[1]), dtype=np.int64)
    new_states[: len(times)] = states
    new_weights = np.empty(size)
    new_weights[: len(times)] = weights
    return new_times, new_states, new_weights


@njit
def _run_kernel(
    basis,
    rate_beta,
    beta,
    omega,
    stoich,
    x0,
    speed,
    start,
    stop,
    rng,
    max_events,
    events,
    record,
    variant,
    epsilon,
    kappa,
    target,
    steer_time,
):
    """
    Advance from ``start`` to ``stop`` at the given speed.

    Steering applies while speed * t < steer_time. Returns the final state, the
    running event count, a status code, the last event time and (when
    ``record``) the piecewise record of times, states and weights.
    """
    state = x0.copy()
    n_channels = stoich.shape[0]
    capacity = INITIAL_CAPACITY if record else 1
    times = np.empty(capacity)
    states = np.empty((capacity, len(state)), dtype=np.int64)
    weights = np.empty(capacity)
    times[0] = start
    states[0] = state
    weights[0] = 1.0
    n = 1
    t = start
    P = 1.0
    status = RUN_OK

    while True:
        rates = rate_beta * basis(state, omega)
        total = rates.sum()
        if not total > 0:
            break
        t_next = t + rng.standard_exponential() / (speed * total)
        if t_next > stop:
            break
        t = t_next
        s = speed * t
        if variant != STEER_NONE and s < steer_time:
            p = rates / total
            q = steer_probabilities(variant, state, target, rates, p, s, steer_time, epsilon, kappa, beta, omega)
            violated = False
            for j in range(n_channels):
                if p[j] > 0 and not q[j] > 0:
                    violated = True
            if violated:
                status = RUN_POLICY_VIOLATION
                break
            k = choose_channel(q, rng.random())
            P *= p[k] / q[k]
        else:
            k = choose_channel(rates, rng.random())
        for i in range(len(state)):
            state[i] += stoich[k, i]
        events += 1
        if events > max_events:
            status = RUN_EXPLODED
            break
        if record:
            if n == len(times):
                times, states, weights = _grow(times, states, weights)
            times[n] = t
            states[n] = state
            weights[n] = P
            n += 1

    return state, events, status, t, times[:n], states[:n], weights[:n]


def _run(
    model: ModelSpec,
    theta: Theta,
    x0: StateVector,
    start: float,
    stop: float,
    rng: np.random.Generator,
    max_events: int,
    events: int = 0,
    record: bool = False,
    policy: Optional[Policy] = None,
    target: Optional[np.ndarray] = None,
    steer_time: float = 0.0,
):
    steered = policy is not None and not policy.is_null and target is not None
    if steered:
        check_compatible(policy, model)
    state, events, status, t, times, states, weights = _run_kernel(
        model.rate_basis,
        channel_beta(model, theta),
        theta.beta_array,
        theta.omega_array,
        model.stoichiometry,
        np.ascontiguousarray(x0, dtype=np.int64),
        float(theta.phi),
        float(start),
        float(stop),
        rng,
        int(max_events),
        int(events),
        bool(record),
        variant_code(policy) if steered else STEER_NONE,
        float(policy.params.epsilon) if steered else 0.0,
        float(policy.params.kappa) if steered else 0.0,
        np.ascontiguousarray(target, dtype=np.float64) if steered else _NO_TARGET,
        float(steer_time) if steered else 0.0,
    )
    if status == RUN_EXPLODED:
        raise SimulationExplosionError(events, t, max_events)
    if status == RUN_POLICY_VIOLATION:
        raise PolicyContractError(f"{policy.variant.value} gave q = 0 to a possible channel")
    return state, events, times, states, weights


def simulate(
    model: ModelSpec,
    theta: Theta,
    x0: StateVector,
    duration: float,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
    policy: Optional[Policy] = None,
    target: Optional[np.ndarray] = None,
) -> StateVector:
    """
    Sample X(duration) given X(0) = x0.

    A non-null policy steers the channel choices towards ``target`` over the
    whole duration; the importance weight is not tracked here.
    """
    if duration < 0:
        raise ContractError("duration must be non-negative")
    state, _, _, _, _ = _run(
        model,
        theta,
        x0,
        0.0,
        duration,
        rng,
        max_events,
        policy=policy,
        target=target,
        steer_time=theta.phi * duration,
    )
    return state


def simulate_observations(
    model: ModelSpec,
    theta: Theta,
    x0: StateVector,
    times: np.ndarray,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> tuple[np.ndarray, int]:
    """
    One trajectory read at every time in ``times`` (first entry is the start).

    Returns the full states on the grid and the total number of events.
    """
    state = np.asarray(x0, dtype=np.int64)
    grid = np.empty((len(times), model.n_species), dtype=np.int64)
    grid[0] = state
    events = 0
    for i in range(1, len(times)):
        # memorylessness lets each interval restart its clock
        state, events, _, _, _ = _run(model, theta, state, times[i - 1], times[i], rng, max_events, events)
        grid[i] = state
    return grid, events


def simulate_coupled(
    model: ModelSpec,
    theta_v: Theta,
    x0: StateVector,
    horizon: float,
    rng: np.random.Generator,
    policy: Optional[Policy] = None,
    target: Optional[np.ndarray] = None,
    steer_time: float = 0.0,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> CoupledTrajectory:
    """
    Speed-1 simulation on [0, horizon], recorded piecewise.

    Before ``steer_time`` channels are drawn from the policy's q and the running
    weight is multiplied by p_k / q_k; afterwards (and for a null policy) q = p.
    """
    if theta_v.phi != 1.0:
        raise ContractError("coupled simulations run at speed phi = 1")
    if horizon < 0:
        raise ContractError("horizon must be non-negative")
    if policy is not None and not policy.is_null and target is not None and not steer_time > 0:
        raise ContractError("steer time must be positive for a steering policy")

    _, _, times, states, weights = _run(
        model,
        theta_v,
        x0,
        0.0,
        horizon,
        rng,
        max_events,
        record=True,
        policy=policy,
        target=target,
        steer_time=steer_time,
    )
    return CoupledTrajectory(breakpoints=times, states=states, weights=weights, horizon=horizon)


def _interval_integrals(starts: np.ndarray, ends: np.ndarray, power: int) -> np.ndarray:
    n = power + 1
    return (ends ** n - starts ** n) / n


def sample_power_law(lo: float, hi: float, power: int, u: float) -> float:
    """Inverse-CDF draw from the density proportional to phi^power on [lo, hi]."""
    if power == 0:
        return float(lo + u * (hi - lo))
    n = power + 1
    return float((lo ** n + u * (hi ** n - lo ** n)) ** (1.0 / n))


def _match_contributions(
    traj: CoupledTrajectory,
    B: PhiSet,
    model: ModelSpec,
    target: np.ndarray,
    interval_length: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-interval contribution P_j * integral over B of phi^n, restricted to matching states."""
    if not interval_length > 0:
        raise ContractError("interval length must be positive")
    if B.empty:
        empty = np.zeros(0)
        return empty, empty, empty
    # phi in B maps to speed-1 time phi * interval_length
    if traj.horizon < B.hi * interval_length * (1 - 1e-12):
        raise ContractError(
            f"trajectory horizon {traj.horizon} is shorter than sup(B) * delta = {B.hi * interval_length}"
        )
    starts = np.maximum(traj.breakpoints / interval_length, B.lo)
    ends = np.minimum(traj.interval_ends / interval_length, B.hi)
    overlap = ends > starts
    matches = (traj.states[:, model.observed_index] == np.asarray(target)).all(axis=1)
    keep = overlap & matches
    contributions = np.zeros(len(starts))
    contributions[keep] = traj.weights[keep] * _interval_integrals(starts[keep], ends[keep], B.density_power)
    return contributions, starts, ends


def match_weight(
    traj: CoupledTrajectory,
    B: PhiSet,
    model: ModelSpec,
    target: np.ndarray,
    interval_length: float,
) -> float:
    """
    Integral over phi in B of P(phi) * 1{observed W(phi * delta) = target}.

    Exact over the piecewise-constant record.
    """
    contributions, _, _ = _match_contributions(traj, B, model, target, interval_length)
    return float(contributions.sum())


def sample_phi_and_z(
    traj: CoupledTrajectory,
    B: PhiSet,
    model: ModelSpec,
    target: np.ndarray,
    interval_length: float,
    rng: np.random.Generator,
) -> tuple[float, StateVector]:
    """
    Draw phi+ from B with density proportional to the match-weight integrand and
    return it with the unobserved components of W(phi+ * delta).
    """
    if B.empty or not B.width > 0:
        raise ContractError("cannot sample from a phi set of zero width")
    contributions, starts, ends = _match_contributions(traj, B, model, target, interval_length)
    total = contributions.sum()
    if not total > 0:
        raise ContractError("no matching interval intersects B")
    j = choose_channel(contributions, rng.random())
    phi = sample_power_law(starts[j], ends[j], B.density_power, rng.random())
    return phi, traj.states[j, model.unobserved_index].copy()
