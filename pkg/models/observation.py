from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ObservationSeries(BaseModel):
	"""
	This here Model: represents the observed components of one trajectory at
	times t_0 < t_1 < ... < t_n, plus the initial unobserved components when
	they are known.
	"""
	model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

	species: tuple[str, ...] = Field(..., description="Names of the observed columns, in mask order.")
	times: np.ndarray = Field(..., description="(n + 1,) observation times.")
	y: np.ndarray = Field(..., description="(n + 1, m) observed counts.")
	z0: Optional[tuple[int, ...]] = Field(None, description="Known initial unobserved components.")

	@model_validator(mode="after")
	def _check_series(self) -> "ObservationSeries":
		if self.times.ndim != 1 or len(self.times) == 0:
			raise ValueError("an observation series needs at least the initial time")
		if self.y.shape != (len(self.times), len(self.species)):
			raise ValueError(f"observed values have shape {self.y.shape}, expected {(len(self.times), len(self.species))}")
		if not (np.diff(self.times) > 0).all():
			raise ValueError("observation times must be strictly increasing")
		if (self.y < 0).any():
			raise ValueError("observed counts must be non-negative")
		if self.z0 is not None and any(v < 0 for v in self.z0):
			raise ValueError("initial unobserved counts must be non-negative")
		return self

	@property
	def n(self) -> int:
		"""Number of observation intervals."""
		return len(self.times) - 1

	def interval(self, step: int) -> float:
		return float(self.times[step] - self.times[step - 1])

	def __eq__(self, other: object) -> bool:
		if not isinstance(other, ObservationSeries):
			return NotImplemented
		return (
			self.species == other.species
			and self.z0 == other.z0
			and np.array_equal(self.times, other.times)
			and np.array_equal(self.y, other.y)
		)
