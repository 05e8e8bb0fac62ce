"""
Exact transition probabilities on small state spaces.

With lambda the largest exit rate, the jump chain P = I + Q / lambda gives
p(t) = sum_k Poisson(k; lambda t) p(0) P^k. The series is cut where the Poisson
tail drops below ``tol``.
"""
import logging
from collections import deque
from typing import Optional

import numpy as np
from scipy import stats

from models.mjp import ModelSpec, StateVector, Theta
from utils.exceptions import ContractError
from utils.reactions import apply_transition, channel_rates

logger = logging.getLogger(__name__)


def enumerate_states(
    model: ModelSpec,
    theta: Theta,
    x0: StateVector,
    upper: Optional[StateVector] = None,
    max_states: int = 10_000,
) -> np.ndarray:
    """
    States reachable from x0 through channels with positive rate.

    ``upper`` bounds every component; reaching past it raises ContractError
    since probability would leak out of the enumerated space.
    """
    start = tuple(int(v) for v in x0)
    seen = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        state = np.array(queue.popleft(), dtype=np.int64)
        rates = channel_rates(model, theta, state)
        for k in np.flatnonzero(rates > 0):
            nxt = apply_transition(model, state, k)
            if upper is not None and (nxt > np.asarray(upper)).any():
                raise ContractError(f"state {nxt.tolist()} is reachable but lies outside the bounding box")
            key = tuple(int(v) for v in nxt)
            if key in seen:
                continue
            if len(order) >= max_states:
                raise ContractError(f"more than {max_states} reachable states")
            seen[key] = len(order)
            order.append(key)
            queue.append(key)
    return np.array(order, dtype=np.int64)


def generator_matrix(model: ModelSpec, theta: Theta, states: np.ndarray) -> np.ndarray:
    """Physical-time rate matrix Q over ``states``, including the phi factor."""
    index = {tuple(int(v) for v in s): i for i, s in enumerate(states)}
    n = len(states)
    Q = np.zeros((n, n))
    for i, state in enumerate(states):
        rates = theta.phi * channel_rates(model, theta, state)
        for k in np.flatnonzero(rates > 0):
            j = index.get(tuple(int(v) for v in apply_transition(model, state, k)))
            if j is None:
                raise ContractError("the state list is not closed under the model's transitions")
            Q[i, j] += rates[k]
        Q[i, i] -= rates.sum()
    return Q


def transition_probabilities(
    model: ModelSpec,
    theta: Theta,
    x0: StateVector,
    t: float,
    states: Optional[np.ndarray] = None,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Distribution of X(t) given X(0) = x0.

    Returns (states, probabilities) with probabilities aligned to states.
    """
    if t < 0:
        raise ContractError("time must be non-negative")
    if states is None:
        states = enumerate_states(model, theta, x0)
    Q = generator_matrix(model, theta, states)
    p = np.zeros(len(states))
    start = np.flatnonzero((states == np.asarray(x0)).all(axis=1))
    if len(start) != 1:
        raise ContractError("x0 is not among the enumerated states")
    p[start[0]] = 1.0

    lam = float(-Q.diagonal().min()) if len(states) else 0.0
    if t == 0 or lam == 0:
        return states, p
    P = np.eye(len(states)) + Q / lam
    mean = lam * t
    k_max = int(stats.poisson.ppf(1.0 - tol, mean)) + 1
    pmf = stats.poisson.pmf(np.arange(k_max + 1), mean)

    out = np.zeros(len(states))
    term = p
    for k in range(k_max + 1):
        out += pmf[k] * term
        term = term @ P
    logger.debug(f"uniformisation with rate {lam:.4g} used {k_max + 1} terms")
    return states, out


def observation_probability(
    model: ModelSpec,
    theta: Theta,
    x0: StateVector,
    t: float,
    y: np.ndarray,
    states: Optional[np.ndarray] = None,
) -> float:
    """Pr(observed components of X(t) equal y | X(0) = x0)."""
    states, probs = transition_probabilities(model, theta, x0, t, states)
    matches = (states[:, model.observed_index] == np.asarray(y)).all(axis=1)
    return float(probs[matches].sum())
