import logging

import numpy as np

from models.mjp import ModelSpec, StateVector, Theta, ThetaAlpha
from utils.exceptions import AbsorbingStateError, ModelDomainError

logger = logging.getLogger(__name__)


def to_theta(alpha: ThetaAlpha, model: ModelSpec) -> Theta:
    """Factor the reference rate constant out as the speed phi."""
    if len(alpha.alpha) != model.n_constants:
        raise ModelDomainError(
            f"{model.name} expects {model.n_constants} rate constants, got {len(alpha.alpha)}"
        )
    if len(alpha.omega) != model.omega_dim:
        raise ModelDomainError(
            f"{model.name} expects {model.omega_dim} omega components, got {len(alpha.omega)}"
        )
    if any(not a > 0 for a in alpha.alpha):
        raise ModelDomainError("all alpha entries must be positive")

    phi = float(alpha.alpha[model.reference_constant])
    beta = [float(a) / phi for a in alpha.alpha]
    beta[model.reference_constant] = 1.0
    return Theta(beta=tuple(beta), omega=alpha.omega, phi=phi, reference=model.reference_constant)


def to_alpha(theta: Theta, model: ModelSpec) -> ThetaAlpha:
    if len(theta.beta) != model.n_constants:
        raise ModelDomainError(
            f"{model.name} expects {model.n_constants} rate ratios, got {len(theta.beta)}"
        )
    alpha = [b * theta.phi for b in theta.beta]
    alpha[model.reference_constant] = theta.phi
    return ThetaAlpha(alpha=tuple(alpha), omega=theta.omega)


def channel_beta(model: ModelSpec, theta: Theta) -> np.ndarray:
    """beta_{m(k)} for every channel k."""
    return theta.beta_array[model.constant_index]


def channel_rates(model: ModelSpec, theta: Theta, state: StateVector) -> np.ndarray:
    """
    Speed-1 rates beta_{m(k)} * rho_k(state, omega).

    The physical rate of the process is phi times the returned vector.
    """
    return channel_beta(model, theta) * model.basis(state, theta.omega_array)


def probabilities_from_rates(rates: np.ndarray) -> np.ndarray:
    total = rates.sum()
    if not total > 0:
        raise AbsorbingStateError("total transition rate is zero")
    return rates / total


def channel_probs(model: ModelSpec, theta: Theta, state: StateVector) -> np.ndarray:
    """Probability that the next transition is of each type; independent of phi."""
    return probabilities_from_rates(channel_rates(model, theta, state))


def apply_transition(model: ModelSpec, state: StateVector, channel: int) -> StateVector:
    new_state = state + model.stoichiometry[channel]
    if (new_state < 0).any():
        # rate functions must vanish whenever a channel would empty a species below zero
        raise ModelDomainError(
            f"channel {model.channels[channel].name} drove state {state.tolist()} negative"
        )
    return new_state
