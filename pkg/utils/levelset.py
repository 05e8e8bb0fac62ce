"""
Random level sets of a density.

For a density f with peak kappa and U ~ U(0, 1), the set
A_U = {x : f(x) >= U * kappa} satisfies Pr(x in A_U) = f(x) / kappa, so
kappa * integral_{A_U} g(x) dx is an unbiased estimate of E[g(X)]. The
Gaussian and uniform families give single intervals in closed form.
"""
import math
from typing import Callable

import numpy as np
from scipy import integrate

from models.trajectory import DensityKindEnum, LevelSetSpec, PhiSet
from utils.exceptions import ContractError

POSITIVE_AXIS = (float(np.finfo(np.float64).tiny), math.inf)


def _check_u(u: float) -> None:
    if not 0 < u <= 1:
        raise ContractError(f"level u must lie in (0, 1], got {u}")


def gaussian_half_width(sigma: float, u: float) -> float:
    """T with g(phi_tilde +- T) = u * g(phi_tilde)."""
    _check_u(u)
    return sigma * math.sqrt(-2.0 * math.log(u))


def gaussian_levelset(
    phi_tilde: float,
    sigma_c: float,
    u: float,
    clamp: tuple[float, float] = POSITIVE_AXIS,
) -> PhiSet:
    if not sigma_c > 0:
        raise ContractError(f"sigma_c must be positive, got {sigma_c}")
    T = gaussian_half_width(sigma_c, u)
    density = LevelSetSpec(kind=DensityKindEnum.GAUSSIAN, mean=phi_tilde, sd=sigma_c, clamp=clamp)
    return PhiSet(lo=phi_tilde - T, hi=phi_tilde + T, density=density).intersect(*clamp)


def uniform_levelset(
    lo: float,
    hi: float,
    u: float,
    clamp: tuple[float, float] = POSITIVE_AXIS,
) -> PhiSet:
    """A flat density meets every threshold on its whole support."""
    if not lo < hi:
        raise ContractError(f"uniform level set needs lo < hi, got [{lo}, {hi}]")
    _check_u(u)
    density = LevelSetSpec(kind=DensityKindEnum.UNIFORM, lo=lo, hi=hi, clamp=clamp)
    return PhiSet(lo=lo, hi=hi, density=density).intersect(*clamp)


def levelset(spec: LevelSetSpec, u: float) -> PhiSet:
    if spec.kind == DensityKindEnum.GAUSSIAN:
        return gaussian_levelset(spec.mean, spec.sd, u, spec.clamp)
    return uniform_levelset(spec.lo, spec.hi, u, spec.clamp)


def levelset_samples(
    density: LevelSetSpec,
    g: Callable[[float], float],
    samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Independent single-set estimates kappa * integral_{A_U} g."""
    kappa = density.peak_density
    # 1 - U keeps the level inside (0, 1]
    levels = 1.0 - rng.random(samples)
    out = np.empty(samples)
    for i, u in enumerate(levels):
        B = levelset(density, float(u))
        if B.empty or B.width == 0:
            out[i] = 0.0
            continue
        value, _ = integrate.quad(g, B.lo, B.hi)
        out[i] = kappa * value
    return out


def levelset_estimate(
    density: LevelSetSpec,
    g: Callable[[float], float],
    samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo estimate of E[g(X)] from ``samples`` random level sets."""
    return float(levelset_samples(density, g, samples, rng).mean())
