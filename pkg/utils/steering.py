"""
Importance-sampling channel selection.

A policy replaces the natural channel probabilities p by q while the
simulation is before the steer time; the caller multiplies its running weight
by p_k / q_k for the channel that fires. Every policy mixes

    q = (1 - w) p + w Q,   w = epsilon * (s / steer_time)^kappa

so q_k >= (1 - epsilon) p_k > 0 wherever p_k > 0.

The steering vectors are numba kernels shared by the simulator's event loop
and the Python entry points below; policies reach the kernels as integer codes.
"""
import logging
import math

import numpy as np
from numba import njit

from models.config import Policy, PolicyParams, PolicyVariantEnum
from models.mjp import ModelSpec, StateVector, Theta
from utils.builtin_models import (
    N_GENES,
    REPRESSOR_PARTNER,
    RepressilatorBlocks,
    builtin_lotka_volterra,
    builtin_repressilator,
    repression_one,
)
from utils.exceptions import ConfigurationError, ContractError
from utils.reactions import channel_rates, probabilities_from_rates

logger = logging.getLogger(__name__)

_LV_STOICHIOMETRY = builtin_lotka_volterra().stoichiometry
_REPRESSILATOR = builtin_repressilator()

STEER_NONE = 0
STEER_LV_FULL = 1
STEER_LV_PREY = 2
STEER_REPRESSILATOR = 3

VARIANT_CODES = {
    PolicyVariantEnum.NULL: STEER_NONE,
    PolicyVariantEnum.LV_FULL: STEER_LV_FULL,
    PolicyVariantEnum.LV_PREY: STEER_LV_PREY,
    PolicyVariantEnum.REPRESSILATOR: STEER_REPRESSILATOR,
}

_BASAL = RepressilatorBlocks.PRODUCTION_BASAL.start
_DECAY = RepressilatorBlocks.MRNA_DECAY.start


def check_compatible(policy: Policy, model: ModelSpec) -> None:
    """Raise ConfigurationError unless the policy's scheme fits the model's structure."""
    variant = policy.variant
    if variant == PolicyVariantEnum.NULL:
        return
    if variant in (PolicyVariantEnum.LV_FULL, PolicyVariantEnum.LV_PREY):
        if model.stoichiometry.shape != _LV_STOICHIOMETRY.shape or not (
            model.stoichiometry == _LV_STOICHIOMETRY
        ).all():
            raise ConfigurationError(f"{variant.value} steering needs Lotka-Volterra stoichiometry, got {model.name}")
        expected = (0, 1) if variant == PolicyVariantEnum.LV_FULL else (0,)
        if tuple(model.observation_mask) != expected:
            raise ConfigurationError(
                f"{variant.value} steering needs observation mask {expected}, got {model.observation_mask}"
            )
        return
    if variant == PolicyVariantEnum.REPRESSILATOR:
        same_shape = model.stoichiometry.shape == _REPRESSILATOR.stoichiometry.shape
        if not same_shape or not (model.stoichiometry == _REPRESSILATOR.stoichiometry).all() or not (
            model.constant_index == _REPRESSILATOR.constant_index
        ).all():
            raise ConfigurationError(f"repressilator steering needs the Repressilator channels, got {model.name}")
        if tuple(model.observation_mask) != (0, 1, 2):
            raise ConfigurationError("repressilator steering needs the three mRNA species observed")


def variant_code(policy: Policy) -> int:
    return VARIANT_CODES[policy.variant]


@njit
def _mixing_weight(epsilon, kappa, s, steer_time):
    return epsilon * (s / steer_time) ** kappa


def mixing_weight(params: PolicyParams, s: float, steer_time: float) -> float:
    return _mixing_weight(params.epsilon, params.kappa, float(s), float(steer_time))


@njit
def _lv_full_Q(state, target, R, p):
    L1 = target[0] - state[0]
    L2 = target[1] - state[1]
    Q = np.empty(3)
    Q[0] = max(0.0, (R + 2.0 * L1 + L2) / (3.0 * R))
    Q[1] = max(0.0, (R - L1 + L2) / (3.0 * R))
    Q[2] = max(0.0, (R - L1 - 2.0 * L2) / (3.0 * R))
    # never charge a channel that cannot fire
    for k in range(3):
        if not p[k] > 0:
            Q[k] = 0.0
    total = Q.sum()
    if not total > 0:
        return p.copy()
    return Q / total


@njit
def _lv_prey_Q(state, target_prey, R, p):
    L1 = target_prey - state[0]
    prey_mass = p[0] + p[1]
    Q1 = (R * prey_mass + L1) / (2.0 * R)
    Q2 = (R * prey_mass - L1) / (2.0 * R)
    if not p[1] > 0:
        Q1 = prey_mass
        Q2 = 0.0
    elif not p[0] > 0 or Q1 < 0:
        Q1 = 0.0
        Q2 = prey_mass
    elif Q2 < 0:
        Q1 = prey_mass
        Q2 = 0.0
    Q = np.empty(3)
    Q[0] = Q1
    Q[1] = Q2
    Q[2] = p[2]
    return Q


@njit
def turnover_rate(beta1, beta2, omega, mrna, repressor):
    """Speed-1 mRNA production plus decay rate of one gene."""
    return beta1 * repression_one(repressor, omega) + beta2 + mrna


@njit
def _repressilator_q(state, target, beta1, beta2, omega, s, steer_time, epsilon, kappa, p):
    delta = steer_time - s
    w = _mixing_weight(epsilon, kappa, s, steer_time)
    q = p.copy()
    for k in range(N_GENES):
        partner = REPRESSOR_PARTNER[k]
        mrna = float(state[k])
        # the unobserved target protein of the partner is proxied by its target mRNA
        D = math.sqrt(
            turnover_rate(beta1, beta2, omega, target[k], target[partner])
            * turnover_rate(beta1, beta2, omega, mrna, state[N_GENES + partner])
        )
        if not D > 0:
            continue
        b = (delta * D + target[k] - mrna) / (2.0 * delta * D)
        b = min(1.0, max(0.0, b))
        repressed = p[k]
        basal = p[_BASAL + k]
        decay = p[_DECAY + k]
        production = repressed + basal
        # never charge a channel that cannot fire
        if decay == 0:
            b = 1.0
        elif production == 0:
            b = 0.0
        mass = production + decay
        q_production = (1.0 - w) * production + w * b * mass
        if production > 0:
            q[k] = q_production * repressed / production
            q[_BASAL + k] = q_production * basal / production
        q[_DECAY + k] = (1.0 - w) * decay + w * (1.0 - b) * mass
    return q


@njit
def steer_probabilities(variant, state, target, rates, p, s, steer_time, epsilon, kappa, beta, omega):
    """q for one event at speed-1 time s < steer_time; ``rates`` are the speed-1 rates behind p."""
    if variant == STEER_REPRESSILATOR:
        return _repressilator_q(state, target, beta[0], beta[1], omega[0], s, steer_time, epsilon, kappa, p)
    if variant == STEER_NONE:
        return p.copy()
    w = _mixing_weight(epsilon, kappa, s, steer_time)
    R = (steer_time - s) * rates.sum()
    if variant == STEER_LV_FULL:
        return (1.0 - w) * p + w * _lv_full_Q(state, target, R, p)
    q = (1.0 - w) * p + w * _lv_prey_Q(state, target[0], R, p)
    q[2] = p[2]
    return q


def _state(state: StateVector) -> np.ndarray:
    return np.ascontiguousarray(state, dtype=np.int64)


def _floats(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.float64)


def lv_full_Q(state: StateVector, target: np.ndarray, R: float, p: np.ndarray) -> np.ndarray:
    """
    Locally linear steering vector when prey and predators are both observed.

    With R events expected before the steer time, choosing the three channels
    with frequencies Q moves the state on average by the displacement
    L = target - state.
    """
    if not R > 0:
        raise ContractError(f"expected event count R must be positive, got {R}")
    return _lv_full_Q(_state(state), _floats(target), float(R), _floats(p))


def lv_prey_Q(state: StateVector, target_prey: float, R: float, p: np.ndarray) -> np.ndarray:
    """Steering vector when only prey are observed; predator death keeps p_3."""
    if not R > 0:
        raise ContractError(f"expected event count R must be positive, got {R}")
    return _lv_prey_Q(_state(state), float(target_prey), float(R), _floats(p))


def repressilator_q(
    state: StateVector,
    target: np.ndarray,
    theta_v: Theta,
    s: float,
    steer_time: float,
    params: PolicyParams,
    p: np.ndarray,
) -> np.ndarray:
    """
    Steer mRNA production/decay of each gene towards the target mRNA levels;
    translation and protein decay keep their natural probabilities.
    """
    if not s < steer_time:
        raise ContractError("repressilator steering applies only before the steer time")
    return _repressilator_q(
        _state(state),
        _floats(target),
        theta_v.beta[0],
        theta_v.beta[1],
        theta_v.omega[0],
        float(s),
        float(steer_time),
        params.epsilon,
        params.kappa,
        _floats(p),
    )


def propose_from_rates(
    policy: Policy,
    theta_v: Theta,
    state: StateVector,
    rates: np.ndarray,
    s: float,
    steer_time: float,
    target: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    p = probabilities_from_rates(rates)
    if policy.is_null or target is None or not s < steer_time:
        return p, p
    q = steer_probabilities(
        variant_code(policy),
        _state(state),
        _floats(target),
        _floats(rates),
        p,
        float(s),
        float(steer_time),
        policy.params.epsilon,
        policy.params.kappa,
        theta_v.beta_array,
        theta_v.omega_array,
    )
    return q, p


def propose(
    policy: Policy,
    model: ModelSpec,
    theta_v: Theta,
    state: StateVector,
    s: float,
    steer_time: float,
    target: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Channel probabilities (q, p) at speed-1 time s.

    q equals p for the null policy and from the steer time onwards.
    """
    if s < 0:
        raise ContractError("time must be non-negative")
    check_compatible(policy, model)
    rates = channel_rates(model, theta_v, state)
    return propose_from_rates(policy, theta_v, state, rates, s, steer_time, target)
