"""
Builtin model families.

Lotka-Volterra: prey X1, predator X2; prey birth alpha_1 X1, predation
alpha_2 X1 X2, predator death alpha_3 X2 (reference constant alpha_3).

Repressilator: mRNA Y1..Y3 and protein Z1..Z3. Gene i is repressed by the
protein of gene j = 3, 1, 2. mRNA production alpha_1 / (1 + Zj^omega) + alpha_2
is split into two channels so every channel has a single rate constant;
translation and protein decay share alpha_3; mRNA decay uses alpha_4, the
reference constant.

Rate bases are numba kernels: the simulator calls them once per event.
"""
import numpy as np
from numba import njit

from models.mjp import ModelSpec, TransitionChannel
from utils.exceptions import ConfigurationError

LOTKA_VOLTERRA = "lotka_volterra"
REPRESSILATOR = "repressilator"

N_GENES = 3
# partner[k] is the gene whose protein represses gene k
REPRESSOR_PARTNER = np.array([2, 0, 1], dtype=np.intp)


@njit
def lotka_volterra_basis(state, omega):
    prey = float(state[0])
    predator = float(state[1])
    out = np.empty(3)
    out[0] = prey
    out[1] = prey * predator
    out[2] = predator
    return out


@njit
def repression_one(z, omega):
    """1 / (1 + z^omega) with z^omega taken as 0 at z = 0."""
    x = float(z)
    powered = x ** omega if x > 0 else 0.0
    return 1.0 / (1.0 + powered)


@njit
def repression(proteins, omega):
    out = np.empty(len(proteins))
    for i in range(len(proteins)):
        out[i] = repression_one(proteins[i], omega)
    return out


@njit
def repressilator_basis(state, omega):
    out = np.empty(5 * N_GENES)
    for k in range(N_GENES):
        mrna = float(state[k])
        out[k] = repression_one(state[N_GENES + REPRESSOR_PARTNER[k]], omega[0])
        out[N_GENES + k] = 1.0
        out[2 * N_GENES + k] = mrna
        out[3 * N_GENES + k] = mrna
        out[4 * N_GENES + k] = float(state[N_GENES + k])
    return out


def builtin_lotka_volterra() -> ModelSpec:
    channels = (
        TransitionChannel(name="prey_birth", stoichiometry=(1, 0), rate_constant_index=0),
        TransitionChannel(name="predation", stoichiometry=(-1, 1), rate_constant_index=1),
        TransitionChannel(name="predator_death", stoichiometry=(0, -1), rate_constant_index=2),
    )
    return ModelSpec(
        name=LOTKA_VOLTERRA,
        species=("prey", "predator"),
        channels=channels,
        alpha_names=("alpha_1", "alpha_2", "alpha_3"),
        reference_constant=2,
        observation_mask=(0, 1),
        rate_basis=lotka_volterra_basis,
    )


def _gene_channels(prefix: str, constant: int, species_offset: int, sign: int) -> list[TransitionChannel]:
    channels = []
    for gene in range(N_GENES):
        delta = [0] * (2 * N_GENES)
        delta[species_offset + gene] = sign
        channels.append(
            TransitionChannel(
                name=f"{prefix}_{gene + 1}",
                stoichiometry=tuple(delta),
                rate_constant_index=constant,
            )
        )
    return channels


def builtin_repressilator() -> ModelSpec:
    # channel blocks: production (alpha_1 part), production (alpha_2 part),
    # mRNA decay, translation, protein decay; each block is ordered by gene
    channels = (
        _gene_channels("mrna_production_repressed", 0, 0, 1)
        + _gene_channels("mrna_production_basal", 1, 0, 1)
        + _gene_channels("mrna_decay", 3, 0, -1)
        + _gene_channels("translation", 2, N_GENES, 1)
        + _gene_channels("protein_decay", 2, N_GENES, -1)
    )
    return ModelSpec(
        name=REPRESSILATOR,
        species=("mrna_1", "mrna_2", "mrna_3", "protein_1", "protein_2", "protein_3"),
        channels=tuple(channels),
        alpha_names=("alpha_1", "alpha_2", "alpha_3", "alpha_4"),
        reference_constant=3,
        omega_names=("omega",),
        observation_mask=(0, 1, 2),
        rate_basis=repressilator_basis,
    )


class RepressilatorBlocks:
    """Channel index blocks of the builtin Repressilator, each of length N_GENES."""
    PRODUCTION_REPRESSED = slice(0, 3)
    PRODUCTION_BASAL = slice(3, 6)
    MRNA_DECAY = slice(6, 9)
    TRANSLATION = slice(9, 12)
    PROTEIN_DECAY = slice(12, 15)


BUILTIN_MODELS = {
    LOTKA_VOLTERRA: builtin_lotka_volterra,
    REPRESSILATOR: builtin_repressilator,
}


def get_model(name: str, observed: tuple[str, ...] | None = None) -> ModelSpec:
    """Look a builtin model up by name, optionally overriding which species are observed."""
    try:
        model = BUILTIN_MODELS[name]()
    except KeyError:
        raise ConfigurationError(
            f"Unknown model '{name}'; expected one of {sorted(BUILTIN_MODELS)}"
        )
    if observed:
        unknown = [s for s in observed if s not in model.species]
        if unknown:
            raise ConfigurationError(f"{name} has no species {unknown}")
        model = model.with_observation_mask(tuple(model.species.index(s) for s in observed))
    return model
