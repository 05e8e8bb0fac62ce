"""
Run configuration.

A TOML file is read with tomllib and validated into ``RunConfig``; sections the
file leaves out (prior, policy, scales) fall back to the builtin defaults of the
chosen model. Environment variables, loaded from ``.env`` when present, sit
between command-line flags and the file.
"""
import logging
import os
import tomllib
from pathlib import Path
from typing import Any, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from models.config import PolicySchedule, PriorSpec, RunConfig
from models.mjp import ModelSpec
from utils.builtin_models import get_model
from utils.exceptions import ConfigurationError
from utils.priors import builtin_policy_schedule, builtin_prior, builtin_scales, check_prior

logger = logging.getLogger(__name__)

SEED_ENV = "MJP_SMC_SEED"
THREADS_ENV = "MJP_SMC_THREADS"
LOG_LEVEL_ENV = "MJP_SMC_LOG_LEVEL"

_POLICY_DEFAULT_KEYS = ("variant", "epsilon", "kappa")


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with Path(path).open("rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"configuration file {path} does not exist")
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"configuration file {path} is not valid TOML: {e}")


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    merged.update(override)
    return merged


def _policy_schedule(model: ModelSpec, section: Optional[dict[str, Any]]) -> PolicySchedule:
    """Turn the flat ``[policy]`` table into a schedule over the model's default."""
    schedule = builtin_policy_schedule(model).model_dump(mode="json")
    if not section:
        return PolicySchedule(**schedule)
    unknown = set(section) - {*_POLICY_DEFAULT_KEYS, "off_steps", "overrides"}
    if unknown:
        raise ConfigurationError(f"unknown policy keys {sorted(unknown)}")
    default = schedule["default"]
    if "variant" in section:
        default["variant"] = section["variant"]
    for key in ("epsilon", "kappa"):
        if key in section:
            default["params"][key] = section[key]
    if "off_steps" in section:
        schedule["off_steps"] = section["off_steps"]
    if "overrides" in section:
        schedule["overrides"] = section["overrides"]
    return PolicySchedule(**schedule)


def _prior(model: ModelSpec, section: Optional[dict[str, Any]]) -> PriorSpec:
    if not section:
        return builtin_prior(model)
    try:
        base = builtin_prior(model).model_dump(mode="json", exclude_none=True)
    except ConfigurationError:
        base = {}
    if "mode" in section and section["mode"] != base.get("mode"):
        base = {}
    return PriorSpec(**_merge(base, section))


def parse_run_config(raw: dict[str, Any]) -> RunConfig:
    """Validate a parsed configuration mapping and fill in model defaults."""
    try:
        model_section = raw.get("model")
        if not model_section or "name" not in model_section:
            raise ConfigurationError("the [model] section needs a name")
        model = get_model(model_section["name"], tuple(model_section.get("observed") or ()) or None)

        smc = dict(raw.get("smc", {}))
        if not smc.get("scales"):
            smc["scales"] = [scale.value for scale in builtin_scales(model)]
        if "seed" not in smc:
            smc["seed"] = int(np.random.SeedSequence().entropy % 2**64)
        if "workers" not in smc:
            smc["workers"] = os.cpu_count() or 1

        unknown = set(raw) - {"model", "prior", "smc", "policy", "generate", "output"}
        if unknown:
            raise ConfigurationError(f"unknown configuration sections {sorted(unknown)}")

        config = RunConfig(
            model=model_section,
            prior=_prior(model, raw.get("prior")),
            smc=smc,
            policy=_policy_schedule(model, raw.get("policy")),
            generate=raw.get("generate"),
            output=raw.get("output", {}),
        )
        check_prior(config.prior, model, config.smc.scales)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}") from e
    return config


def load_run_config(path: Path) -> RunConfig:
    config = parse_run_config(_read_toml(path))
    logger.info(f"Loaded configuration from {path} for model {config.model.name}")
    return config


def _env_int(name: str) -> Optional[int]:
    value = os.getenv(name)
    if value is None or value == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out: Optional[Path] = None,
) -> RunConfig:
    """Flags win over environment variables, which win over the file."""
    load_dotenv()
    smc_update: dict[str, Any] = {}
    seed = seed if seed is not None else _env_int(SEED_ENV)
    threads = threads if threads is not None else _env_int(THREADS_ENV)
    if seed is not None:
        smc_update["seed"] = seed
    if threads is not None:
        smc_update["workers"] = threads
    try:
        smc = config.smc.model_validate(config.smc.model_dump() | smc_update)
        output = config.output.model_copy(update={"dir": Path(out)}) if out is not None else config.output
    except ValidationError as e:
        raise ConfigurationError(f"invalid override: {e}") from e
    return config.model_copy(update={"smc": smc, "output": output})


def resolve_model(config: RunConfig) -> ModelSpec:
    return get_model(config.model.name, config.model.observed)
