import numpy as np
import pandas as pd
import pytest

import main
from models.config import PolicyVariantEnum, ScaleEnum
from models.observation import ObservationSeries
from models.particle import ParticleSet
from tests.toy_models import capped_predation
from utils.builtin_models import get_model
from utils.exceptions import ConfigurationError, PersistenceError
from utils.load_config import SEED_ENV, THREADS_ENV, apply_overrides, load_run_config, parse_run_config
from utils.persistence import (
    read_observations,
    read_particles,
    summarize_particles,
    write_observations,
    write_particles,
)

LV_CONFIG = """
[model]
name = "lotka_volterra"

[smc]
M = 20
seed = 4
workers = 1

[generate]
alpha = [1.0, 0.005, 0.6]
x0 = [3, 2]
n = {n}
delta = 0.5
"""


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in (SEED_ENV, THREADS_ENV):
        monkeypatch.delenv(name, raising=False)


def _toy_cloud() -> ParticleSet:
    return ParticleSet(
        theta_tilde=np.array([[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]]),
        phi=np.array([1.0, 2.0, 0.5]),
        z=np.zeros((3, 0), dtype=np.int64),
        weights=np.array([1.0, 1.0, 2.0]),
    )


def _write_config(tmp_path, n: int = 2):
    path = tmp_path / "run.toml"
    path.write_text(LV_CONFIG.format(n=n))
    return path


def test_observations_round_trip_with_latent_start(tmp_path):
    model = get_model("lotka_volterra", ("prey",))
    series = ObservationSeries(
        species=("prey",),
        times=np.array([0.0, 0.5, 1.0]),
        y=np.array([[71], [75], [80]]),
        z0=(79,),
    )

    write_observations(tmp_path / "obs.csv", series, model.unobserved_species)

    assert (tmp_path / "obs.csv").read_text().startswith("# z0: predator=79\n")
    assert read_observations(tmp_path / "obs.csv", model) == series


def test_read_observations_ignores_extra_columns(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("t,prey,predator,note\n0,3,2,9\n1,4,1,9\n")

    prey_only = read_observations(path, get_model("lotka_volterra", ("prey",)))
    full = read_observations(path, get_model("lotka_volterra"))

    assert prey_only.y.tolist() == [[3], [4]]
    assert prey_only.z0 is None
    assert full.y.tolist() == [[3, 2], [4, 1]]


def test_partial_latent_start_is_ignored(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("# z0: protein_1=2\nt,mrna_1,mrna_2,mrna_3\n0,1,2,3\n1,2,2,2\n")

    series = read_observations(path, get_model("repressilator"))

    assert series.z0 is None


@pytest.mark.parametrize(
    "content",
    [
        "t,prey\n0,3\n1,4\n",
        "t,prey,predator\n0,3,2.5\n1,4,1\n",
        "t,prey,predator\n1,3,2\n0,4,1\n",
    ],
)
def test_read_observations_rejects_bad_files(tmp_path, content):
    path = tmp_path / "obs.csv"
    path.write_text(content)

    with pytest.raises(PersistenceError):
        read_observations(path, get_model("lotka_volterra"))


def test_read_observations_missing_file(tmp_path):
    with pytest.raises(PersistenceError):
        read_observations(tmp_path / "nothing.csv", get_model("lotka_volterra"))


def test_summarize_particle_file(tmp_path):
    toy = capped_predation()
    write_particles(tmp_path / "particles.csv", _toy_cloud(), toy, (ScaleEnum.IDENTITY, ScaleEnum.IDENTITY))

    frame, names = read_particles(tmp_path / "particles.csv")
    summary = summarize_particles(frame, names).set_index("parameter")

    assert names == ("alpha_1", "alpha_2", "alpha_3")
    assert list(frame.columns) == ["beta_alpha_1", "beta_alpha_2", "phi", "alpha_1", "alpha_2", "alpha_3", "weight"]
    assert summary.loc["alpha_1", "mean"] == pytest.approx(2.0)
    assert summary.loc["alpha_1", "sd"] == pytest.approx(1.375 ** 0.5)
    assert summary.loc["alpha_2", "mean"] == pytest.approx(1.75)
    assert summary.loc["alpha_2", "sd"] == pytest.approx(0.25)
    assert summary.loc["alpha_3", "mean"] == pytest.approx(1.0)
    assert summary.loc["alpha_3", "sd"] == pytest.approx(0.375 ** 0.5)


def test_summarize_single_particle():
    frame = pd.DataFrame({"alpha_1": [2.5], "weight": [0.3]})

    summary = summarize_particles(frame, ("alpha_1",))

    assert summary["mean"].tolist() == [2.5]
    assert summary["sd"].tolist() == [0.0]


def test_summarize_rejects_negative_weights():
    frame = pd.DataFrame({"alpha_1": [1.0, 2.0], "weight": [1.0, -0.5]})

    with pytest.raises(PersistenceError):
        summarize_particles(frame, ("alpha_1",))


def test_parse_config_fills_model_defaults():
    config = parse_run_config({"model": {"name": "lotka_volterra"}, "smc": {"seed": 5}})

    assert config.smc.seed == 5
    assert config.smc.scales == (ScaleEnum.LOG, ScaleEnum.LOG)
    assert config.smc.workers >= 1
    assert config.policy.default.variant == PolicyVariantEnum.LV_FULL
    assert config.policy.off_steps == (1,)
    assert config.prior.phi.hi == 2.0


def test_parse_config_draws_a_seed_when_missing():
    config = parse_run_config({"model": {"name": "repressilator"}})

    assert 0 <= config.smc.seed < 2**64


def test_parse_config_policy_overlay():
    config = parse_run_config(
        {"model": {"name": "lotka_volterra", "observed": ["prey"]}, "policy": {"epsilon": 0.1, "off_steps": []}}
    )

    assert config.policy.default.variant == PolicyVariantEnum.LV_PREY
    assert config.policy.default.params.epsilon == 0.1
    assert config.policy.default.params.kappa == 2
    assert config.policy.for_step(1).variant == PolicyVariantEnum.LV_PREY


@pytest.mark.parametrize(
    "raw",
    [
        {"model": {"name": "sir"}},
        {"smc": {"M": 10}},
        {"model": {"name": "lotka_volterra"}, "extra": {}},
        {"model": {"name": "lotka_volterra"}, "policy": {"strength": 1.0}},
        {"model": {"name": "lotka_volterra"}, "smc": {"h": 1.5}},
        {"model": {"name": "lotka_volterra"}, "smc": {"scales": ["log"]}},
        {"model": {"name": "repressilator"}, "smc": {"scales": ["log", "log", "log", "identity"]}},
    ],
)
def test_parse_config_rejects_invalid(raw):
    with pytest.raises(ConfigurationError):
        parse_run_config(raw)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(tmp_path / "missing.toml")


def test_overrides_precedence(tmp_path, monkeypatch):
    config = load_run_config(_write_config(tmp_path))
    monkeypatch.setenv(SEED_ENV, "99")
    monkeypatch.setenv(THREADS_ENV, "3")

    from_env = apply_overrides(config)
    from_flags = apply_overrides(config, seed=12, threads=2, out=tmp_path / "elsewhere")

    assert config.smc.seed == 4
    assert (from_env.smc.seed, from_env.smc.workers) == (99, 3)
    assert (from_flags.smc.seed, from_flags.smc.workers) == (12, 2)
    assert from_flags.output.dir == tmp_path / "elsewhere"


def test_bad_environment_value(tmp_path, monkeypatch):
    config = load_run_config(_write_config(tmp_path))
    monkeypatch.setenv(THREADS_ENV, "many")

    with pytest.raises(ConfigurationError):
        apply_overrides(config)


def test_generate_without_intervals_writes_one_row(tmp_path, capsys):
    out = tmp_path / "out"

    code = main.main(["generate", "--config", str(_write_config(tmp_path, n=0)), "--out", str(out)])

    assert code == main.EXIT_OK
    assert "seed: 4" in capsys.readouterr().out
    frame = pd.read_csv(out / "observations.csv", comment="#")
    assert frame.to_dict("records") == [{"t": 0.0, "prey": 3, "predator": 2}]


def test_exit_code_for_configuration_errors(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[model]\nname = 'sir'\n")

    assert main.main(["generate", "--config", str(path)]) == main.EXIT_CONFIG
    assert main.main(["infer"]) == main.EXIT_CONFIG


def test_exit_code_for_missing_observations(tmp_path):
    code = main.main(
        ["infer", "--config", str(_write_config(tmp_path)), "--obs", str(tmp_path / "none.csv"), "--out", str(tmp_path)]
    )

    assert code == main.EXIT_IO


def test_exit_code_for_step_failure(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[model]\nname = "lotka_volterra"\n\n[smc]\nM = 5\nseed = 1\nworkers = 1\nmax_attempts = 40\n')
    obs = tmp_path / "obs.csv"
    # (0, 0) is absorbing so (5, 5) can never be reached
    obs.write_text("t,prey,predator\n0,0,0\n1,5,5\n")

    code = main.main(["infer", "--config", str(config), "--obs", str(obs), "--out", str(tmp_path / "out")])

    assert code == main.EXIT_STEP_FAILURE
    assert (tmp_path / "out" / "metrics.prom").exists()


def test_infer_and_summarize(tmp_path, capsys):
    config = str(_write_config(tmp_path))
    out = tmp_path / "out"
    assert main.main(["generate", "--config", config, "--out", str(out)]) == main.EXIT_OK

    assert main.main(["infer", "--config", config, "--out", str(out)]) == main.EXIT_OK
    trace = pd.read_csv(out / "trace.csv", comment="#")
    assert trace["step"].tolist() == [1, 2]
    assert (trace["attempts"] >= trace["accepted"]).all()
    assert (trace["ess"] >= 20 - 1e-9).all()

    assert main.main(["summarize", str(out / "particles.csv"), "--out", str(out)]) == main.EXIT_OK
    printed = capsys.readouterr().out
    assert "alpha_1" in printed
    summary = pd.read_csv(out / "summary.csv")
    assert summary["parameter"].tolist() == ["alpha_1", "alpha_2", "alpha_3"]


def test_infer_is_identical_across_thread_counts(tmp_path):
    config = str(_write_config(tmp_path))
    obs = tmp_path / "obs.csv"
    assert main.main(["generate", "--config", config, "--obs", str(obs)]) == main.EXIT_OK

    for threads in ("1", "2"):
        code = main.main(["infer", "--config", config, "--obs", str(obs), "--threads", threads, "--out", str(tmp_path / threads)])
        assert code == main.EXIT_OK

    assert (tmp_path / "1" / "trace.csv").read_bytes() == (tmp_path / "2" / "trace.csv").read_bytes()
    assert (tmp_path / "1" / "particles.csv").read_bytes() == (tmp_path / "2" / "particles.csv").read_bytes()


def test_baseline_command(tmp_path, capsys):
    config = str(_write_config(tmp_path))
    out = tmp_path / "out"
    assert main.main(["generate", "--config", config, "--out", str(out)]) == main.EXIT_OK

    assert main.main(["baseline", "--config", config, "--out", str(out), "--steps", "1"]) == main.EXIT_OK

    printed = capsys.readouterr().out
    assert "ratio plain/coupled_steered:" in printed
    frame = pd.read_csv(out / "baseline.csv", comment="#")
    assert frame["step"].tolist() == [1]
    assert list(frame.columns) == [
        "step",
        "plain_attempts",
        "coupled_attempts",
        "steered_attempts",
        "coupled_steered_attempts",
    ]


def test_generate_keeps_latent_start_unknown_by_default(tmp_path):
    config = tmp_path / "prey.toml"
    config.write_text(LV_CONFIG.format(n=1).replace('name = "lotka_volterra"', 'name = "lotka_volterra"\nobserved = ["prey"]'))
    out = tmp_path / "out"

    assert main.main(["generate", "--config", str(config), "--out", str(out)]) == main.EXIT_OK
    assert "# z0" not in (out / "observations.csv").read_text()

    config.write_text(config.read_text() + "record_z0 = true\n")
    assert main.main(["generate", "--config", str(config), "--out", str(tmp_path / "known")]) == main.EXIT_OK
    assert (tmp_path / "known" / "observations.csv").read_text().startswith("# z0: predator=2\n")
