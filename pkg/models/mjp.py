from functools import cached_property
from typing import Callable

import numpy as np
import numpy.typing as npt
from numba.extending import is_jitted
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# Integer population vector; int64 keeps thousands-scale counts safe
StateVector = npt.NDArray[np.int64]

# rho(state, omega) -> per-channel basis rates at speed 1 (before the beta factor),
# compiled with numba so the simulator can call it inside its event loop
RateBasis = Callable[[np.ndarray, np.ndarray], np.ndarray]


class TransitionChannel(BaseModel):
	"""
	This here Model: represents one transition type, its stoichiometry and the
	rate constant multiplying it.
	"""
	model_config = ConfigDict(frozen=True)

	name: str = Field(..., description="Human readable label, e.g. 'prey_birth'.")
	stoichiometry: tuple[int, ...] = Field(..., description="Change applied to the state when the channel fires.")
	rate_constant_index: int = Field(..., ge=0, description="Index m(k) of the alpha multiplying this channel.")


class ModelSpec(BaseModel):
	"""
	This here Model: represents a Markov jump process family, its channels and
	which species are observed.
	"""
	model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

	name: str
	species: tuple[str, ...] = Field(..., min_length=1)
	channels: tuple[TransitionChannel, ...] = Field(..., min_length=1)
	alpha_names: tuple[str, ...] = Field(..., min_length=1, description="One label per distinct rate constant.")
	reference_constant: int = Field(..., ge=0, description="Index of the alpha designated as the speed phi.")
	omega_names: tuple[str, ...] = Field(default=())
	observation_mask: tuple[int, ...] = Field(..., min_length=1, description="0-based indices of the observed species.")
	rate_basis: RateBasis = Field(..., description="@njit kernel returning rho_k for every channel.")

	@model_validator(mode="after")
	def _check_structure(self) -> "ModelSpec":
		d = len(self.species)
		if self.reference_constant >= len(self.alpha_names):
			raise ValueError("reference_constant is not a valid alpha index")
		for channel in self.channels:
			if len(channel.stoichiometry) != d:
				raise ValueError(f"Channel {channel.name} stoichiometry has the wrong dimension")
			if channel.rate_constant_index >= len(self.alpha_names):
				raise ValueError(f"Channel {channel.name} refers to an unknown rate constant")
		if not is_jitted(self.rate_basis):
			raise ValueError("rate_basis must be compiled with numba.njit")
		if len(set(self.observation_mask)) != len(self.observation_mask):
			raise ValueError("observation_mask has duplicate entries")
		if any(i < 0 or i >= d for i in self.observation_mask):
			raise ValueError("observation_mask is outside the species range")
		return self

	@property
	def n_species(self) -> int:
		return len(self.species)

	@property
	def n_channels(self) -> int:
		return len(self.channels)

	@property
	def n_constants(self) -> int:
		return len(self.alpha_names)

	@property
	def omega_dim(self) -> int:
		return len(self.omega_names)

	@cached_property
	def stoichiometry(self) -> np.ndarray:
		return np.array([c.stoichiometry for c in self.channels], dtype=np.int64)

	@cached_property
	def constant_index(self) -> np.ndarray:
		return np.array([c.rate_constant_index for c in self.channels], dtype=np.intp)

	@cached_property
	def observed_index(self) -> np.ndarray:
		return np.array(self.observation_mask, dtype=np.intp)

	@cached_property
	def unobserved_index(self) -> np.ndarray:
		observed = set(self.observation_mask)
		return np.array([i for i in range(self.n_species) if i not in observed], dtype=np.intp)

	@property
	def observed_species(self) -> tuple[str, ...]:
		return tuple(self.species[i] for i in self.observation_mask)

	@property
	def unobserved_species(self) -> tuple[str, ...]:
		return tuple(self.species[i] for i in self.unobserved_index)

	def basis(self, state: np.ndarray, omega: np.ndarray) -> np.ndarray:
		"""rho_k(state, omega) for every channel."""
		return self.rate_basis(np.ascontiguousarray(state, dtype=np.int64), np.ascontiguousarray(omega, dtype=np.float64))

	def with_observation_mask(self, mask: tuple[int, ...]) -> "ModelSpec":
		fields = {name: getattr(self, name) for name in type(self).model_fields}
		fields["observation_mask"] = tuple(mask)
		return type(self)(**fields)


class ThetaAlpha(BaseModel):
	"""
	This here Model: represents the natural parameterisation (alpha, omega).
	"""
	model_config = ConfigDict(frozen=True)

	alpha: tuple[float, ...] = Field(..., min_length=1, description="Rate constants per unit time.")
	omega: tuple[float, ...] = Field(default=(), description="Shape parameters.")

	@field_validator("alpha")
	@classmethod
	def _positive_alpha(cls, value: tuple[float, ...]) -> tuple[float, ...]:
		if any(not a > 0 for a in value):
			raise ValueError("all alpha entries must be positive")
		return value


class Theta(BaseModel):
	"""
	This here Model: represents the speed parameterisation (beta, omega, phi)
	with beta[reference] identically 1.
	"""
	model_config = ConfigDict(frozen=True)

	beta: tuple[float, ...] = Field(..., min_length=1, description="Rate ratios alpha_j / phi.")
	omega: tuple[float, ...] = Field(default=())
	phi: float = Field(..., gt=0, description="Speed measure per unit time.")
	reference: int = Field(..., ge=0)

	@model_validator(mode="after")
	def _check_beta(self) -> "Theta":
		if self.reference >= len(self.beta):
			raise ValueError("reference index outside beta")
		if self.beta[self.reference] != 1.0:
			raise ValueError("beta at the reference constant must be exactly 1")
		if any(not b > 0 for b in self.beta):
			raise ValueError("all beta entries must be positive")
		return self

	@cached_property
	def beta_array(self) -> np.ndarray:
		return np.asarray(self.beta, dtype=np.float64)

	@cached_property
	def omega_array(self) -> np.ndarray:
		return np.asarray(self.omega, dtype=np.float64)

	def at_speed(self, phi: float) -> "Theta":
		return Theta(beta=self.beta, omega=self.omega, phi=phi, reference=self.reference)
