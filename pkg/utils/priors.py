"""
Parameter scales and prior handling.

theta_tilde holds the non-reference beta ratios followed by omega, each on its
storage scale (identity or log); phi is always kept on its natural scale.
"""
import logging
import math
from typing import Optional

import numpy as np

from models.config import (
    DiscreteUniformPrior,
    IntervalPrior,
    Policy,
    PolicyParams,
    PolicySchedule,
    PolicyVariantEnum,
    PriorModeEnum,
    PriorSpec,
    ScaleEnum,
)
from models.mjp import ModelSpec, Theta
from models.trajectory import PhiSet
from utils.builtin_models import LOTKA_VOLTERRA, REPRESSILATOR
from utils.exceptions import ConfigurationError
from utils.levelset import POSITIVE_AXIS, uniform_levelset

logger = logging.getLogger(__name__)


def free_beta_index(model: ModelSpec) -> np.ndarray:
    return np.array([j for j in range(model.n_constants) if j != model.reference_constant], dtype=np.intp)


def tilde_dim(model: ModelSpec) -> int:
    return model.n_constants - 1 + model.omega_dim


def builtin_scales(model: ModelSpec) -> tuple[ScaleEnum, ...]:
    if model.name == LOTKA_VOLTERRA:
        return (ScaleEnum.LOG,) * tilde_dim(model)
    return (ScaleEnum.IDENTITY,) * tilde_dim(model)


def builtin_prior(model: ModelSpec) -> PriorSpec:
    if model.name == LOTKA_VOLTERRA:
        z0 = tuple(DiscreteUniformPrior(lo=10, hi=300) for _ in model.unobserved_index)
        return PriorSpec(
            mode=PriorModeEnum.INDEPENDENT,
            beta=(IntervalPrior(lo=-4, hi=2), IntervalPrior(lo=-8, hi=-3)),
            phi=IntervalPrior(lo=0, hi=2),
            z0=z0,
        )
    if model.name == REPRESSILATOR:
        return PriorSpec(
            mode=PriorModeEnum.ALPHA_CUBE,
            alpha=(
                IntervalPrior(lo=500, hi=2500),
                IntervalPrior(lo=0, hi=10),
                IntervalPrior(lo=0, hi=10),
                IntervalPrior(lo=0.5, hi=2),
            ),
            omega=(IntervalPrior(lo=0, hi=10),),
        )
    raise ConfigurationError(f"no builtin prior for model {model.name}")


def builtin_policy_schedule(model: ModelSpec) -> PolicySchedule:
    if model.name == LOTKA_VOLTERRA:
        variant = PolicyVariantEnum.LV_FULL if len(model.observation_mask) == 2 else PolicyVariantEnum.LV_PREY
        return PolicySchedule(
            default=Policy(variant=variant, params=PolicyParams(epsilon=0.3, kappa=2)),
            off_steps=(1,),
        )
    if model.name == REPRESSILATOR:
        return PolicySchedule(
            default=Policy(variant=PolicyVariantEnum.REPRESSILATOR, params=PolicyParams(epsilon=0.2, kappa=4)),
        )
    return PolicySchedule()


def check_prior(prior: PriorSpec, model: ModelSpec, scales: tuple[ScaleEnum, ...]) -> None:
    n_free = model.n_constants - 1
    if len(scales) != tilde_dim(model):
        raise ConfigurationError(f"{model.name} needs {tilde_dim(model)} scales, got {len(scales)}")
    if len(prior.omega) != model.omega_dim:
        raise ConfigurationError(f"{model.name} needs {model.omega_dim} omega priors, got {len(prior.omega)}")
    if prior.mode == PriorModeEnum.INDEPENDENT:
        if len(prior.beta) != n_free:
            raise ConfigurationError(f"{model.name} needs {n_free} beta priors, got {len(prior.beta)}")
    else:
        if len(prior.alpha) != model.n_constants:
            raise ConfigurationError(f"{model.name} needs {model.n_constants} alpha priors, got {len(prior.alpha)}")
        if prior.alpha[model.reference_constant].lo <= 0:
            raise ConfigurationError("the reference alpha interval must be strictly positive")
        if any(scale != ScaleEnum.IDENTITY for scale in scales[:n_free]):
            raise ConfigurationError("alpha_cube priors store beta on the identity scale")
    if prior.z0 and len(prior.z0) != len(model.unobserved_index):
        raise ConfigurationError(
            f"{model.name} has {len(model.unobserved_index)} unobserved species, got {len(prior.z0)} z0 priors"
        )


def to_natural(theta_tilde: np.ndarray, scales: tuple[ScaleEnum, ...]) -> np.ndarray:
    out = np.array(theta_tilde, dtype=np.float64, copy=True)
    for i, scale in enumerate(scales):
        if scale == ScaleEnum.LOG:
            out[..., i] = np.exp(out[..., i])
    return out


def to_storage(natural: np.ndarray, scales: tuple[ScaleEnum, ...]) -> np.ndarray:
    out = np.array(natural, dtype=np.float64, copy=True)
    for i, scale in enumerate(scales):
        if scale == ScaleEnum.LOG:
            out[..., i] = np.log(out[..., i])
    return out


def theta_from_tilde(
    model: ModelSpec,
    theta_tilde: np.ndarray,
    phi: float,
    scales: tuple[ScaleEnum, ...],
) -> Theta:
    natural = to_natural(theta_tilde, scales)
    n_free = model.n_constants - 1
    beta = np.ones(model.n_constants)
    beta[free_beta_index(model)] = natural[:n_free]
    return Theta(
        beta=tuple(float(b) for b in beta),
        omega=tuple(float(w) for w in natural[n_free:]),
        phi=float(phi),
        reference=model.reference_constant,
    )


def alpha_matrix(model: ModelSpec, theta_tilde: np.ndarray, phi: np.ndarray, scales: tuple[ScaleEnum, ...]) -> np.ndarray:
    """(N, n_constants) alpha = beta * phi for every particle."""
    natural = to_natural(theta_tilde, scales)
    n_free = model.n_constants - 1
    alpha = np.empty((len(phi), model.n_constants))
    alpha[:, free_beta_index(model)] = natural[:, :n_free] * phi[:, None]
    alpha[:, model.reference_constant] = phi
    return alpha


def tilde_bounds(prior: PriorSpec, model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Storage-scale box holding the theta_tilde prior support."""
    if prior.mode == PriorModeEnum.INDEPENDENT:
        boxes = list(prior.beta) + list(prior.omega)
        return np.array([b.lo for b in boxes]), np.array([b.hi for b in boxes])
    phi_box = prior.alpha[model.reference_constant]
    lo, hi = [], []
    for j in free_beta_index(model):
        box = prior.alpha[j]
        lo.append(box.lo / phi_box.hi)
        hi.append(box.hi / phi_box.lo)
    lo.extend(b.lo for b in prior.omega)
    hi.extend(b.hi for b in prior.omega)
    return np.array(lo), np.array(hi)


def in_support(theta_tilde: np.ndarray, bounds: tuple[np.ndarray, np.ndarray]) -> bool:
    lo, hi = bounds
    return bool(((theta_tilde > lo) & (theta_tilde < hi)).all())


def phi_support(prior: PriorSpec, model: ModelSpec, theta_tilde: np.ndarray, scales: tuple[ScaleEnum, ...]) -> tuple[float, float]:
    """
    Interval of phi values with positive prior density given theta_tilde.

    For an alpha cube every beta_k * phi must stay inside its alpha interval.
    May come back empty (lo > hi).
    """
    positive_lo = POSITIVE_AXIS[0]
    if prior.mode == PriorModeEnum.INDEPENDENT:
        return max(prior.phi.lo, positive_lo), prior.phi.hi
    phi_box = prior.alpha[model.reference_constant]
    lo, hi = phi_box.lo, phi_box.hi
    natural = to_natural(theta_tilde, scales)
    for i, j in enumerate(free_beta_index(model)):
        beta = natural[i]
        if not beta > 0:
            return math.inf, -math.inf
        lo = max(lo, prior.alpha[j].lo / beta)
        hi = min(hi, prior.alpha[j].hi / beta)
    return max(lo, positive_lo), hi


def phi_density_power(prior: PriorSpec, model: ModelSpec) -> int:
    """Uniform alpha = beta * phi on a cube has density proportional to phi^(K-1) in (beta, phi)."""
    if prior.mode == PriorModeEnum.ALPHA_CUBE:
        return model.n_constants - 1
    return 0


def draw_z0(prior: PriorSpec, model: ModelSpec, known_z0: Optional[tuple[int, ...]], rng: np.random.Generator) -> np.ndarray:
    if len(model.unobserved_index) == 0:
        return np.zeros(0, dtype=np.int64)
    if known_z0 is not None:
        return np.asarray(known_z0, dtype=np.int64)
    if not prior.z0:
        raise ConfigurationError("the initial unobserved components are neither known nor given a prior")
    return np.array([rng.integers(box.lo, box.hi, endpoint=True) for box in prior.z0], dtype=np.int64)


def draw_initial(
    prior: PriorSpec,
    model: ModelSpec,
    scales: tuple[ScaleEnum, ...],
    known_z0: Optional[tuple[int, ...]],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, PhiSet]:
    """
    Step-one draw: theta_tilde uniform on its box, z0, and the phi set.

    The phi set is the prior support of phi given theta_tilde, carrying the
    phi^n Jacobian in alpha-cube mode.
    """
    lo, hi = tilde_bounds(prior, model)
    theta_tilde = lo + (hi - lo) * rng.random(len(lo))
    z0 = draw_z0(prior, model, known_z0, rng)
    u = 1.0 - rng.random()
    support = phi_support(prior, model, theta_tilde, scales)
    if not support[0] < support[1]:
        return theta_tilde, z0, PhiSet.nothing()
    B = uniform_levelset(support[0], support[1], u).with_power(phi_density_power(prior, model))
    return theta_tilde, z0, B


def draw_prior_point(
    prior: PriorSpec,
    model: ModelSpec,
    scales: tuple[ScaleEnum, ...],
    known_z0: Optional[tuple[int, ...]],
    rng: np.random.Generator,
) -> tuple[np.ndarray, float, np.ndarray]:
    """An exact prior draw of (theta_tilde, phi, z0)."""
    if prior.mode == PriorModeEnum.INDEPENDENT:
        lo, hi = tilde_bounds(prior, model)
        theta_tilde = lo + (hi - lo) * rng.random(len(lo))
        phi = prior.phi.lo + prior.phi.width * rng.random()
        phi = max(phi, POSITIVE_AXIS[0])
    else:
        alpha = np.array([box.lo + box.width * rng.random() for box in prior.alpha])
        phi = float(alpha[model.reference_constant])
        beta = alpha[free_beta_index(model)] / phi
        omega = np.array([box.lo + box.width * rng.random() for box in prior.omega])
        theta_tilde = to_storage(np.concatenate((beta, omega)), scales)
    z0 = draw_z0(prior, model, known_z0, rng)
    return theta_tilde, float(phi), z0
