import math
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PolicyVariantEnum(str, Enum):
	"""
	The here Enum: represents the available steering schemes
	"""
	NULL = "null"
	LV_FULL = "lv_full"
	LV_PREY = "lv_prey"
	REPRESSILATOR = "repressilator"


class ScaleEnum(str, Enum):
	"""
	The here Enum: represents the scale a parameter is stored and smoothed on
	"""
	IDENTITY = "identity"
	LOG = "log"


class EngineEnum(str, Enum):
	"""
	The here Enum: represents the attempt engines, with or without coupling over
	phi and with or without steering
	"""
	PLAIN = "plain"
	COUPLED = "coupled"
	STEERED = "steered"
	COUPLED_STEERED = "coupled_steered"

	@property
	def coupled(self) -> bool:
		return self in (EngineEnum.COUPLED, EngineEnum.COUPLED_STEERED)

	@property
	def steered(self) -> bool:
		return self in (EngineEnum.STEERED, EngineEnum.COUPLED_STEERED)


class PriorModeEnum(str, Enum):
	"""
	The here Enum: represents how the prior is specified, independently over
	(theta_tilde, phi) or uniformly on a cube of alpha values
	"""
	INDEPENDENT = "independent"
	ALPHA_CUBE = "alpha_cube"


class PolicyParams(BaseModel):
	model_config = ConfigDict(frozen=True)

	epsilon: float = Field(0.3, ge=0.0, lt=1.0, description="Weight on the steering vector as s reaches the steer time.")
	kappa: float = Field(2.0, ge=0.0, description="Time-sharpening exponent.")


class Policy(BaseModel):
	"""
	This here Model: represents one steering scheme and its mixing parameters.
	"""
	model_config = ConfigDict(frozen=True)

	variant: PolicyVariantEnum = PolicyVariantEnum.NULL
	params: PolicyParams = Field(default_factory=PolicyParams)

	@property
	def is_null(self) -> bool:
		return self.variant == PolicyVariantEnum.NULL


NULL_POLICY = Policy()


class PolicyOverride(BaseModel):
	model_config = ConfigDict(frozen=True)

	step: int = Field(..., ge=1)
	variant: PolicyVariantEnum
	epsilon: Optional[float] = Field(None, ge=0.0, lt=1.0)
	kappa: Optional[float] = Field(None, ge=0.0)


class PolicySchedule(BaseModel):
	"""
	This here Model: represents the policy used at every time step, a default
	plus per-step overrides.
	"""
	model_config = ConfigDict(frozen=True)

	default: Policy = Field(default_factory=Policy)
	off_steps: tuple[int, ...] = Field(default=(), description="Steps simulated without steering.")
	overrides: tuple[PolicyOverride, ...] = Field(default=())

	def for_step(self, step: int) -> Policy:
		for override in self.overrides:
			if override.step == step:
				params = PolicyParams(
					epsilon=override.epsilon if override.epsilon is not None else self.default.params.epsilon,
					kappa=override.kappa if override.kappa is not None else self.default.params.kappa,
				)
				return Policy(variant=override.variant, params=params)
		if step in self.off_steps:
			return NULL_POLICY
		return self.default


class IntervalPrior(BaseModel):
	model_config = ConfigDict(frozen=True)

	lo: float
	hi: float

	@model_validator(mode="after")
	def _ordered(self) -> "IntervalPrior":
		if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
			raise ValueError(f"prior interval needs finite lo < hi, got [{self.lo}, {self.hi}]")
		return self

	@property
	def width(self) -> float:
		return self.hi - self.lo


class DiscreteUniformPrior(BaseModel):
	model_config = ConfigDict(frozen=True)

	lo: int = Field(..., ge=0)
	hi: int = Field(..., ge=0)

	@model_validator(mode="after")
	def _ordered(self) -> "DiscreteUniformPrior":
		if self.lo > self.hi:
			raise ValueError("discrete prior needs lo <= hi")
		return self


class PriorSpec(BaseModel):
	"""
	This here Model: represents the prior over (theta_tilde, phi) and the latent
	initial components z0.

	In independent mode ``beta`` holds the non-reference ratios on their storage
	scale and ``phi`` the speed prior. In alpha-cube mode ``alpha`` bounds every
	rate constant (natural scale) and the beta boxes are derived from it.
	"""
	model_config = ConfigDict(frozen=True)

	mode: PriorModeEnum = PriorModeEnum.INDEPENDENT
	beta: tuple[IntervalPrior, ...] = Field(default=())
	omega: tuple[IntervalPrior, ...] = Field(default=())
	phi: Optional[IntervalPrior] = None
	alpha: Optional[tuple[IntervalPrior, ...]] = None
	z0: tuple[DiscreteUniformPrior, ...] = Field(default=())

	@model_validator(mode="after")
	def _check_mode(self) -> "PriorSpec":
		if self.mode == PriorModeEnum.INDEPENDENT:
			if self.phi is None:
				raise ValueError("independent priors need a phi interval")
			if self.phi.lo < 0:
				raise ValueError("the phi prior must lie on the positive axis")
		else:
			if not self.alpha:
				raise ValueError("alpha_cube priors need alpha intervals")
			if any(box.lo < 0 for box in self.alpha):
				raise ValueError("alpha intervals must lie on the non-negative axis")
		return self


class SmcConfig(BaseModel):
	"""
	This here Model: represents the tuning of the sequential Monte Carlo engine.
	"""
	model_config = ConfigDict(frozen=True)

	M: float = Field(1000, ge=2, description="Target effective sample size per step.")
	h: float = Field(0.15, gt=0.0, lt=1.0, description="Liu-West smoothing parameter.")
	seed: int = Field(0, ge=0, lt=2**64)
	workers: int = Field(1, ge=1)
	max_attempts: int = Field(10_000_000, ge=1)
	max_events: int = Field(1_000_000, ge=1, description="Event cap per simulation attempt.")
	chunk_size: int = Field(64, ge=1, description="Consecutive attempts handed to a worker at once.")
	coupled: bool = Field(True, description="Couple simulations over a set of phi values.")
	scales: tuple[ScaleEnum, ...] = Field(default=(), description="Storage scale per theta_tilde component.")


class ModelSection(BaseModel):
	name: str
	observed: Optional[tuple[str, ...]] = None


class GenerateSection(BaseModel):
	alpha: tuple[float, ...]
	omega: tuple[float, ...] = ()
	x0: tuple[int, ...]
	n: int = Field(..., ge=0)
	delta: float = Field(1.0, gt=0)
	record_z0: bool = Field(False, description="Write the latent initial state into the observation file as known.")

	@field_validator("x0")
	@classmethod
	def _non_negative(cls, value: tuple[int, ...]) -> tuple[int, ...]:
		if any(x < 0 for x in value):
			raise ValueError("initial counts must be non-negative")
		return value


class OutputSection(BaseModel):
	dir: Path = Path("out")
	observations: str = "observations.csv"
	trace: str = "trace.csv"
	particles: str = "particles.csv"
	summary: str = "summary.csv"
	baseline: str = "baseline.csv"
	metrics: Optional[str] = "metrics.prom"


class RunConfig(BaseModel):
	"""
	This here Model: represents a whole configuration file.
	"""
	model: ModelSection
	prior: Optional[PriorSpec] = None
	smc: SmcConfig = Field(default_factory=SmcConfig)
	policy: Optional[PolicySchedule] = None
	generate: Optional[GenerateSection] = None
	output: OutputSection = Field(default_factory=OutputSection)
