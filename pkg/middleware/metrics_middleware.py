import time
from typing import Callable

from models.particle import ParticleSet, StepDiagnostics
from utils.exceptions import StepFailureError
from utils.metrics import (
	ACCEPTED_COUNT,
	ATTEMPT_COUNT,
	EVENTS_PER_ATTEMPT,
	EXPLOSION_COUNT,
	PRIOR_REJECTION_COUNT,
	STEP_COUNT,
	STEP_LATENCY,
)

StepCall = Callable[..., tuple[ParticleSet, StepDiagnostics]]


def _record(engine: str, diagnostics: StepDiagnostics) -> None:
	ATTEMPT_COUNT.labels(engine=engine).inc(diagnostics.attempts)
	ACCEPTED_COUNT.labels(engine=engine).inc(diagnostics.accepted)
	EXPLOSION_COUNT.labels(engine=engine).inc(diagnostics.explosions)
	PRIOR_REJECTION_COUNT.labels(engine=engine).inc(diagnostics.prior_rejections)
	if diagnostics.attempts:
		EVENTS_PER_ATTEMPT.labels(engine=engine).observe(diagnostics.events / diagnostics.attempts)


class StepMetricsMiddleware:
	"""Wraps a step function, timing each call and counting its outcome."""

	def __init__(self, call_next: StepCall, engine: str):
		self.call_next = call_next
		self.engine = engine

	def __call__(self, *args, **kwargs) -> tuple[ParticleSet, StepDiagnostics]:
		start_time = time.time()

		try:
			particles, diagnostics = self.call_next(*args, **kwargs)
		except StepFailureError as e:
			if isinstance(e.diagnostics, StepDiagnostics):
				_record(self.engine, e.diagnostics)
			STEP_COUNT.labels(engine=self.engine, status="failed").inc()
			raise e

		process_time = time.time() - start_time

		_record(self.engine, diagnostics)
		STEP_COUNT.labels(engine=self.engine, status="ok").inc()
		STEP_LATENCY.labels(engine=self.engine).observe(process_time)

		return particles, diagnostics
