from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.config import EngineEnum


class Particle(BaseModel):
	"""
	This here Model: represents one weighted sample (theta_tilde, phi, z, weight).
	"""
	model_config = ConfigDict(frozen=True)

	theta_tilde: tuple[float, ...] = Field(..., description="Non-reference beta then omega, on storage scales.")
	phi: float = Field(..., gt=0)
	z: tuple[int, ...] = Field(default=(), description="Unobserved state components.")
	weight: float = Field(..., gt=0)


class ParticleSet(BaseModel):
	"""
	This here Model: represents a weighted particle cloud column-wise.
	"""
	model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

	theta_tilde: np.ndarray = Field(..., description="(N, p) storage-scale parameters.")
	phi: np.ndarray = Field(..., description="(N,) speeds.")
	z: np.ndarray = Field(..., description="(N, u) unobserved components.")
	weights: np.ndarray = Field(..., description="(N,) non-negative weights.")

	@model_validator(mode="after")
	def _check_shapes(self) -> "ParticleSet":
		n = len(self.weights)
		if self.theta_tilde.ndim != 2 or self.z.ndim != 2:
			raise ValueError("theta_tilde and z must be two-dimensional")
		if len(self.theta_tilde) != n or len(self.phi) != n or len(self.z) != n:
			raise ValueError("particle columns have different lengths")
		return self

	def __len__(self) -> int:
		return len(self.weights)

	@classmethod
	def from_particles(cls, particles: list[Particle], p: int, u: int) -> "ParticleSet":
		return cls(
			theta_tilde=np.array([q.theta_tilde for q in particles], dtype=np.float64).reshape(len(particles), p),
			phi=np.array([q.phi for q in particles], dtype=np.float64),
			z=np.array([q.z for q in particles], dtype=np.int64).reshape(len(particles), u),
			weights=np.array([q.weight for q in particles], dtype=np.float64),
		)

	def full_theta(self) -> np.ndarray:
		"""(N, p + 1) matrix of theta_tilde with phi appended as the last column."""
		return np.column_stack((self.theta_tilde, self.phi))


class MomentSummary(BaseModel):
	"""
	This here Model: represents weighted first and second moments of the full
	parameter vector and the conditional spread of phi given theta_tilde.
	"""
	model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

	mu: np.ndarray
	V: np.ndarray
	gain: np.ndarray = Field(..., description="V_tilde^-1 C, the regression of phi on theta_tilde.")
	sigma_phi_sq: float = Field(..., ge=0)
	noise_factor: np.ndarray = Field(..., description="Square root of V_tilde used to draw the Liu-West noise.")

	@property
	def dim(self) -> int:
		return len(self.mu) - 1

	@property
	def mu_tilde(self) -> np.ndarray:
		return self.mu[:-1]

	@property
	def mu_phi(self) -> float:
		return float(self.mu[-1])

	@property
	def V_tilde(self) -> np.ndarray:
		return self.V[:-1, :-1]

	@property
	def C(self) -> np.ndarray:
		return self.V[:-1, -1]

	@property
	def V_phi(self) -> float:
		return float(self.V[-1, -1])


class StepDiagnostics(BaseModel):
	step: int
	attempts: int = 0
	accepted: int = 0
	ess: float = 0.0
	explosions: int = 0
	prior_rejections: int = 0
	events: int = 0
	seconds: float = 0.0


class TraceRow(BaseModel):
	"""
	This here Model: represents the posterior summary after one time step.
	"""
	step: int
	time: float
	alpha_mean: tuple[float, ...]
	alpha_sd: tuple[float, ...]
	omega_mean: tuple[float, ...] = ()
	omega_sd: tuple[float, ...] = ()
	attempts: int
	accepted: int
	ess: float
	explosions: int = 0


class PosteriorTrace(BaseModel):
	alpha_names: tuple[str, ...]
	omega_names: tuple[str, ...] = ()
	rows: list[TraceRow] = Field(default_factory=list)
	seed: Optional[int] = None

	def __len__(self) -> int:
		return len(self.rows)

	@property
	def total_attempts(self) -> int:
		return sum(row.attempts for row in self.rows)


class BaselineReport(BaseModel):
	"""
	This here Model: represents attempt counts per step of every engine run on
	the same data, from the plain exact-match engine to the coupled, steered one.
	"""
	attempts: dict[EngineEnum, list[int]] = Field(default_factory=dict)
	censored: set[EngineEnum] = Field(default_factory=set, description="Engines that hit their attempt cap; their counts are lower bounds.")

	@property
	def engines(self) -> list[EngineEnum]:
		return [engine for engine in EngineEnum if engine in self.attempts]

	@property
	def steps(self) -> int:
		return min((len(counts) for counts in self.attempts.values()), default=0)

	def total(self, engine: EngineEnum) -> int:
		return sum(self.attempts[engine][: self.steps])

	def ratio_of(self, engine: EngineEnum) -> float:
		"""Plain attempts per attempt of ``engine`` over the common steps."""
		total = self.total(engine)
		if total == 0:
			return float("nan")
		return self.total(EngineEnum.PLAIN) / total

	@property
	def ratio(self) -> float:
		return self.ratio_of(EngineEnum.COUPLED_STEERED)
