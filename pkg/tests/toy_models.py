"""Small models with closed state spaces for exact comparisons."""
import numpy as np
from numba import njit

from models.mjp import ModelSpec, TransitionChannel

CAPACITY = 3


@njit
def capped_predation_basis(state, omega):
    """Lotka-Volterra channels on the triangle A + B <= 3 (ten states)."""
    a = float(state[0])
    b = float(state[1])
    out = np.empty(3)
    out[0] = max(0.0, CAPACITY - a - b)
    out[1] = a
    out[2] = b
    return out


def capped_predation(observation_mask: tuple[int, ...] = (0, 1)) -> ModelSpec:
    return ModelSpec(
        name="capped_predation",
        species=("prey", "predator"),
        channels=(
            TransitionChannel(name="prey_birth", stoichiometry=(1, 0), rate_constant_index=0),
            TransitionChannel(name="predation", stoichiometry=(-1, 1), rate_constant_index=1),
            TransitionChannel(name="predator_death", stoichiometry=(0, -1), rate_constant_index=2),
        ),
        alpha_names=("alpha_1", "alpha_2", "alpha_3"),
        reference_constant=2,
        observation_mask=observation_mask,
        rate_basis=capped_predation_basis,
    )


@njit
def double_decay_basis(state, omega):
    out = np.empty(2)
    out[0] = float(state[0])
    out[1] = float(state[0])
    return out


def double_decay() -> ModelSpec:
    """One species removed by two channels; zero is absorbing."""
    return ModelSpec(
        name="double_decay",
        species=("x",),
        channels=(
            TransitionChannel(name="decay_a", stoichiometry=(-1,), rate_constant_index=0),
            TransitionChannel(name="decay_b", stoichiometry=(-1,), rate_constant_index=1),
        ),
        alpha_names=("alpha_1", "alpha_2"),
        reference_constant=1,
        observation_mask=(0,),
        rate_basis=double_decay_basis,
    )
