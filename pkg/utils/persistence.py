"""
CSV files for observations, traces, particle clouds and summaries.

Files may open with ``# key: value`` metadata lines; pandas skips them as
comments when reading the table itself.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from models.config import EngineEnum, ScaleEnum
from models.mjp import ModelSpec
from models.observation import ObservationSeries
from models.particle import BaselineReport, ParticleSet, PosteriorTrace
from utils.exceptions import PersistenceError
from utils.priors import alpha_matrix, free_beta_index, to_natural

logger = logging.getLogger(__name__)

TIME_COLUMN = "t"
WEIGHT_COLUMN = "weight"
PHI_COLUMN = "phi"


def _write_csv(path: Path, frame: pd.DataFrame, metadata: Optional[dict[str, str]] = None) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            for key, value in (metadata or {}).items():
                handle.write(f"# {key}: {value}\n")
            frame.to_csv(handle, index=False, lineterminator="\n")
    except OSError as e:
        raise PersistenceError(f"could not write {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} rows to {path}")


def _read_csv(path: Path) -> tuple[pd.DataFrame, dict[str, str]]:
    path = Path(path)
    metadata: dict[str, str] = {}
    try:
        with path.open() as handle:
            for line in handle:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition(":")
                metadata[key.strip()] = value.strip()
        frame = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise PersistenceError(f"could not read {path}: {e}") from e
    return frame, metadata


def write_observations(path: Path, series: ObservationSeries, unobserved: tuple[str, ...] = ()) -> None:
    frame = pd.DataFrame(series.y, columns=list(series.species))
    frame.insert(0, TIME_COLUMN, series.times)
    metadata = {}
    if series.z0 is not None and unobserved:
        metadata["z0"] = " ".join(f"{name}={value}" for name, value in zip(unobserved, series.z0))
    _write_csv(path, frame, metadata)


def read_observations(path: Path, model: ModelSpec) -> ObservationSeries:
    """
    Read the columns of the model's observed species; other columns are ignored.

    The initial latent state is known only when the ``z0`` line names every
    unobserved species of the model.
    """
    frame, metadata = _read_csv(path)
    missing = [name for name in (TIME_COLUMN, *model.observed_species) if name not in frame.columns]
    if missing:
        raise PersistenceError(f"{path} lacks the columns {missing}")
    values = frame[list(model.observed_species)]
    if values.isna().any().any():
        raise PersistenceError(f"{path} has missing observations")
    if not np.array_equal(values.to_numpy(), values.to_numpy().round()):
        raise PersistenceError(f"{path} has non-integer counts")

    z0 = None
    if "z0" in metadata and len(model.unobserved_index):
        known = dict(item.split("=", 1) for item in metadata["z0"].split())
        if all(name in known for name in model.unobserved_species):
            z0 = tuple(int(known[name]) for name in model.unobserved_species)

    try:
        return ObservationSeries(
            species=model.observed_species,
            times=frame[TIME_COLUMN].to_numpy(dtype=np.float64),
            y=values.to_numpy(dtype=np.int64),
            z0=z0,
        )
    except ValueError as e:
        raise PersistenceError(f"{path} is not a valid observation series: {e}") from e


def trace_frame(trace: PosteriorTrace) -> pd.DataFrame:
    records = []
    for row in trace.rows:
        record = {"step": row.step, "time": row.time}
        for name, mean, sd in zip(trace.alpha_names, row.alpha_mean, row.alpha_sd):
            record[f"{name}_mean"] = mean
            record[f"{name}_sd"] = sd
        for name, mean, sd in zip(trace.omega_names, row.omega_mean, row.omega_sd):
            record[f"{name}_mean"] = mean
            record[f"{name}_sd"] = sd
        record.update(attempts=row.attempts, accepted=row.accepted, ess=row.ess, explosions=row.explosions)
        records.append(record)
    return pd.DataFrame.from_records(records)


def write_trace(path: Path, trace: PosteriorTrace) -> None:
    metadata = {"seed": str(trace.seed)} if trace.seed is not None else None
    _write_csv(path, trace_frame(trace), metadata)


def particle_frame(particles: ParticleSet, model: ModelSpec, scales: tuple[ScaleEnum, ...]) -> pd.DataFrame:
    natural = to_natural(particles.theta_tilde, scales)
    n_free = model.n_constants - 1
    alpha = alpha_matrix(model, particles.theta_tilde, particles.phi, scales)
    columns: dict[str, np.ndarray] = {}
    for i, j in enumerate(free_beta_index(model)):
        columns[f"beta_{model.alpha_names[j]}"] = natural[:, i]
    columns[PHI_COLUMN] = particles.phi
    for j, name in enumerate(model.alpha_names):
        columns[name] = alpha[:, j]
    for i, name in enumerate(model.omega_names):
        columns[name] = natural[:, n_free + i]
    for i, name in enumerate(model.unobserved_species):
        columns[f"z_{name}"] = particles.z[:, i]
    columns[WEIGHT_COLUMN] = particles.weights
    return pd.DataFrame(columns)


def write_particles(path: Path, particles: ParticleSet, model: ModelSpec, scales: tuple[ScaleEnum, ...]) -> None:
    metadata = {
        "model": model.name,
        "alpha": ",".join(model.alpha_names),
        "omega": ",".join(model.omega_names),
    }
    _write_csv(path, particle_frame(particles, model, scales), metadata)


def read_particles(path: Path) -> tuple[pd.DataFrame, tuple[str, ...]]:
    """The particle table and the names of its parameter columns (alpha then omega)."""
    frame, metadata = _read_csv(path)
    if frame.empty:
        raise PersistenceError(f"{path} holds no particles")
    if WEIGHT_COLUMN not in frame.columns:
        raise PersistenceError(f"{path} has no {WEIGHT_COLUMN} column")
    names = tuple(
        name for key in ("alpha", "omega") for name in metadata.get(key, "").split(",") if name
    )
    if not names:
        names = tuple(c for c in frame.columns if c.startswith("alpha_"))
    missing = [name for name in names if name not in frame.columns]
    if missing or not names:
        raise PersistenceError(f"{path} lacks the parameter columns {missing or 'alpha_*'}")
    return frame, names


def summarize_particles(frame: pd.DataFrame, names: tuple[str, ...]) -> pd.DataFrame:
    """Weighted mean and standard deviation of every named column."""
    weights = frame[WEIGHT_COLUMN].to_numpy(dtype=np.float64)
    if (weights < 0).any() or not weights.sum() > 0:
        raise PersistenceError("particle weights must be non-negative with a positive total")
    W = weights / weights.sum()
    values = frame[list(names)].to_numpy(dtype=np.float64)
    mean = W @ values
    sd = np.sqrt(np.maximum(W @ (values - mean) ** 2, 0.0))
    return pd.DataFrame({"parameter": list(names), "mean": mean, "sd": sd})


def write_summary(path: Path, summary: pd.DataFrame) -> None:
    _write_csv(path, summary)


def format_summary(summary: pd.DataFrame) -> str:
    return summary.to_string(index=False, float_format=lambda v: f"{v:.6g}")


def write_baseline(path: Path, report: BaselineReport) -> None:
    """One attempt column per engine; metadata holds the plain-over-engine ratios and censored engines."""
    steps = report.steps
    columns = {"step": np.arange(1, steps + 1)}
    metadata = {}
    for engine in report.engines:
        columns[f"{engine.value}_attempts"] = report.attempts[engine][:steps]
        if engine != EngineEnum.PLAIN and EngineEnum.PLAIN in report.attempts:
            metadata[f"ratio_{engine.value}"] = f"{report.ratio_of(engine):.6g}"
    metadata["censored"] = ",".join(sorted(engine.value for engine in report.censored)) or "none"
    _write_csv(path, pd.DataFrame(columns), metadata)
