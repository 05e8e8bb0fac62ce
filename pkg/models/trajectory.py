import math
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class DensityKindEnum(str, Enum):
	"""
	The here Enum: represents the density families a phi set can be drawn from
	"""
	GAUSSIAN = "gaussian"
	UNIFORM = "uniform"


class LevelSetSpec(BaseModel):
	"""
	This here Model: represents a density f whose level sets {x : f(x) >= u sup f}
	are drawn, plus the interval every drawn set is intersected with.
	"""
	model_config = ConfigDict(frozen=True)

	kind: DensityKindEnum
	mean: Optional[float] = Field(None, description="Gaussian centre.")
	sd: Optional[float] = Field(None, description="Gaussian standard deviation.")
	lo: Optional[float] = Field(None, description="Uniform lower bound.")
	hi: Optional[float] = Field(None, description="Uniform upper bound.")
	clamp: tuple[float, float] = Field((-math.inf, math.inf), description="Support the set is intersected with.")

	@model_validator(mode="after")
	def _check_parameters(self) -> "LevelSetSpec":
		if self.kind == DensityKindEnum.GAUSSIAN:
			if self.mean is None or self.sd is None or not self.sd > 0:
				raise ValueError("gaussian level sets need a mean and a positive sd")
		else:
			if self.lo is None or self.hi is None or not self.lo < self.hi:
				raise ValueError("uniform level sets need lo < hi")
		return self

	@property
	def peak_density(self) -> float:
		"""sup f, the constant in front of the level-set integral."""
		if self.kind == DensityKindEnum.GAUSSIAN:
			return 1.0 / (math.sqrt(2.0 * math.pi) * self.sd)
		return 1.0 / (self.hi - self.lo)


class PhiSet(BaseModel):
	"""
	This here Model: represents the set B of speed values covered by one coupled
	simulation, a single closed interval (or empty).

	``density_power`` n weights every phi in B by phi^n inside the match-weight
	integral; n = 0 is the plain length measure.
	"""
	model_config = ConfigDict(frozen=True)

	lo: float = 0.0
	hi: float = 0.0
	empty: bool = False
	density: Optional[LevelSetSpec] = None
	density_power: int = Field(0, ge=0)

	@model_validator(mode="after")
	def _check_bounds(self) -> "PhiSet":
		if not self.empty and not self.lo <= self.hi:
			raise ValueError("PhiSet needs lo <= hi")
		return self

	@classmethod
	def nothing(cls, density: Optional[LevelSetSpec] = None) -> "PhiSet":
		return cls(empty=True, density=density)

	@property
	def width(self) -> float:
		return 0.0 if self.empty else self.hi - self.lo

	@property
	def sup(self) -> float:
		return 0.0 if self.empty else self.hi

	@property
	def midpoint(self) -> float:
		return 0.5 * (self.lo + self.hi)

	def intersect(self, lo: float, hi: float) -> "PhiSet":
		if self.empty:
			return self
		new_lo, new_hi = max(self.lo, lo), min(self.hi, hi)
		if new_lo > new_hi:
			return PhiSet.nothing(self.density)
		return self.model_copy(update={"lo": new_lo, "hi": new_hi})

	def with_power(self, power: int) -> "PhiSet":
		return self.model_copy(update={"density_power": power})

	def measure(self) -> float:
		"""Integral of phi^n over B."""
		if self.empty:
			return 0.0
		n = self.density_power + 1
		return (self.hi ** n - self.lo ** n) / n


class CoupledTrajectory(BaseModel):
	"""
	This here Model: represents a piecewise-constant speed-1 trajectory.

	Interval j is [breakpoints[j], breakpoints[j + 1]) (the last one ends at the
	horizon); the process sits in states[j] with cumulative importance ratio
	weights[j].
	"""
	model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

	breakpoints: np.ndarray = Field(..., description="Event times 0 = s_0 < s_1 < ... (speed-1 units).")
	states: np.ndarray = Field(..., description="(J + 1, d) integer states.")
	weights: np.ndarray = Field(..., description="Cumulative p/q ratio on each interval.")
	horizon: float = Field(..., ge=0)

	@property
	def n_events(self) -> int:
		return len(self.breakpoints) - 1

	@property
	def interval_ends(self) -> np.ndarray:
		return np.append(self.breakpoints[1:], self.horizon)
