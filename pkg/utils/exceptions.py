from typing import Any, Optional


class MjpSmcError(Exception):
    """Base class for every error raised by the inference engine"""
    pass


class ModelDomainError(MjpSmcError):
    """Raised when parameters or states fall outside a model's domain"""
    pass


class AbsorbingStateError(MjpSmcError):
    """Raised when transition probabilities are requested for a state with zero total rate"""
    pass


class ContractError(MjpSmcError):
    """Raised when an operation is called outside its preconditions"""
    pass


class PolicyContractError(ContractError):
    """Raised when a steering policy gives zero probability to a possible transition"""
    pass


class ConfigurationError(MjpSmcError):
    """Raised for invalid or incompatible run configuration"""
    pass


class PersistenceError(MjpSmcError):
    """Raised when an observation, trace or particle file cannot be read or written"""
    pass


class SimulationExplosionError(MjpSmcError):
    """Raised when a single simulation exceeds its event cap"""

    def __init__(self, events: int, time: float, max_events: int):
        self.events = events
        self.time = time
        self.max_events = max_events
        super().__init__(
            f"Simulation exceeded {max_events} events at time {time:.6g}"
        )


class StepFailureError(MjpSmcError):
    """
    Raised when a time step exhausts its attempt budget before reaching the
    target effective sample size.
    """

    def __init__(self, step: int, diagnostics: Any, reason: Optional[str] = None):
        self.step = step
        self.diagnostics = diagnostics
        message = f"Step {step} failed"
        if reason:
            message = f"{message}: {reason}"
        super().__init__(message)
