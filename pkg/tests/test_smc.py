import math

import numpy as np
import pytest
from scipy import stats

from middleware.metrics_middleware import StepMetricsMiddleware
from models.config import (
    NULL_POLICY,
    EngineEnum,
    IntervalPrior,
    PriorModeEnum,
    PriorSpec,
    ScaleEnum,
    SmcConfig,
)
from models.observation import ObservationSeries
from models.particle import ParticleSet, StepDiagnostics
from utils.builtin_models import builtin_repressilator
from utils.exceptions import ConfigurationError, ContractError, StepFailureError
from utils.metrics import REGISTRY
from utils.priors import alpha_matrix, builtin_prior
from utils.smc import (
    baseline,
    ess,
    liu_west_propose,
    plain_smc_step,
    resample_index,
    run,
    smc_step,
    weighted_mean_sd,
    weighted_moments,
)
from utils.worker_pool import AttemptPool

DECAY_PRIOR = PriorSpec(
    mode=PriorModeEnum.INDEPENDENT,
    beta=(IntervalPrior(lo=0.5, hi=2.0),),
    phi=IntervalPrior(lo=0.0, hi=2.0),
)
DECAY_CONFIG = SmcConfig(M=25.5, h=0.2, seed=3, scales=(ScaleEnum.IDENTITY,), chunk_size=8)
ZERO = np.array([0])


def _cloud(rng: np.random.Generator, n: int = 50, dim: int = 2) -> ParticleSet:
    theta = rng.normal(size=(n, dim)) @ np.array([[1.0, 0.3], [0.0, 0.5]])[:dim, :dim]
    phi = 1.0 + 0.4 * theta[:, 0] + 0.1 * rng.normal(size=n)
    return ParticleSet(
        theta_tilde=theta,
        phi=np.abs(phi) + 0.05,
        z=np.zeros((n, 0), dtype=np.int64),
        weights=rng.random(n) + 0.1,
    )


def _decay_series(n: int = 2) -> ObservationSeries:
    return ObservationSeries(species=("x",), times=np.arange(n + 1, dtype=float), y=np.zeros((n + 1, 1), dtype=np.int64))


def test_ess_examples():
    assert ess(np.ones(7)) == pytest.approx(7.0)
    assert ess(np.array([3.0, 1.0])) == pytest.approx(1.6)
    assert ess(np.array([0.0, 0.0, 5.0])) == pytest.approx(1.0)


def test_ess_is_scale_invariant(rng):
    w = rng.random(40)

    assert ess(w) == pytest.approx(ess(1e-200 * w))
    assert ess(w) == pytest.approx(ess(1e200 * w))


def test_ess_rejects_all_zero():
    with pytest.raises(ContractError):
        ess(np.zeros(3))


def test_weighted_moments_match_direct_sums(rng):
    cloud = _cloud(rng)
    moments = weighted_moments(cloud)

    X = cloud.full_theta()
    w = cloud.weights
    mu = sum(w[i] * X[i] for i in range(len(w))) / w.sum()
    V = sum(w[i] * np.outer(X[i] - mu, X[i] - mu) for i in range(len(w))) / w.sum()
    sigma_sq = V[-1, -1] - V[:-1, -1] @ np.linalg.solve(V[:-1, :-1], V[:-1, -1])

    np.testing.assert_allclose(moments.mu, mu, rtol=1e-10)
    np.testing.assert_allclose(moments.V, V, rtol=1e-10, atol=1e-14)
    assert moments.sigma_phi_sq == pytest.approx(sigma_sq, rel=1e-10)


def test_weighted_moments_of_repeated_particle():
    cloud = ParticleSet(
        theta_tilde=np.tile([0.5, -1.0], (4, 1)),
        phi=np.full(4, 0.75),
        z=np.zeros((4, 0), dtype=np.int64),
        weights=np.ones(4),
    )

    moments = weighted_moments(cloud)

    assert np.allclose(moments.V, 0.0)
    assert 0 < moments.sigma_phi_sq < 1e-12
    assert np.array_equal(moments.gain, np.zeros(2))


def test_weighted_moments_two_particles_differing_in_phi():
    cloud = ParticleSet(
        theta_tilde=np.array([[1.0], [1.0]]),
        phi=np.array([0.5, 1.5]),
        z=np.zeros((2, 0), dtype=np.int64),
        weights=np.ones(2),
    )

    moments = weighted_moments(cloud)

    assert moments.sigma_phi_sq == pytest.approx(0.25)
    assert moments.gain.tolist() == [0.0]


def test_liu_west_small_h_limit(rng):
    cloud = _cloud(rng)
    moments = weighted_moments(cloud)

    theta_star, phi_tilde, sigma_c = liu_west_propose(cloud.theta_tilde[3], cloud.phi[3], moments, 1e-8, rng)

    np.testing.assert_allclose(theta_star, cloud.theta_tilde[3], atol=1e-6)
    assert phi_tilde == pytest.approx(cloud.phi[3], abs=1e-6)
    assert sigma_c < 1e-6


def test_liu_west_conditional_matches_joint_gaussian(rng):
    cloud = _cloud(rng, n=200)
    moments = weighted_moments(cloud)
    h = 0.15
    a = math.sqrt(1 - h * h)
    mean = a * cloud.full_theta()[9] + (1 - a) * moments.mu
    cov = h * h * moments.V

    theta_star, phi_tilde, sigma_c = liu_west_propose(cloud.theta_tilde[9], cloud.phi[9], moments, h, rng)

    # condition N(mean, cov) on its theta block
    zeta = theta_star - mean[:-1]
    cond_mean = mean[-1] + cov[-1, :-1] @ np.linalg.solve(cov[:-1, :-1], zeta)
    cond_var = cov[-1, -1] - cov[-1, :-1] @ np.linalg.solve(cov[:-1, :-1], cov[:-1, -1])
    assert phi_tilde == pytest.approx(cond_mean, rel=1e-10)
    assert sigma_c ** 2 == pytest.approx(cond_var, rel=1e-10)


def _assert_liu_west_preserves_moments(rng: np.random.Generator, proposals: int, tolerance: float) -> None:
    cloud = _cloud(rng, n=500)
    moments = weighted_moments(cloud)
    h = 0.2

    draws = np.empty((proposals, 3))
    for r in range(len(draws)):
        j = resample_index(cloud.weights, rng)
        theta_star, phi_tilde, sigma_c = liu_west_propose(cloud.theta_tilde[j], cloud.phi[j], moments, h, rng)
        draws[r, :2] = theta_star
        draws[r, 2] = phi_tilde + sigma_c * rng.standard_normal()

    n = len(draws)
    means = draws.mean(axis=0)
    assert (np.abs(means - moments.mu) < tolerance * draws.std(axis=0, ddof=1) / math.sqrt(n)).all()
    centred = draws - moments.mu
    for a in range(3):
        for b in range(3):
            products = centred[:, a] * centred[:, b]
            se = products.std(ddof=1) / math.sqrt(n)
            assert abs(products.mean() - moments.V[a, b]) < tolerance * se


def test_liu_west_preserves_cloud_moments():
    _assert_liu_west_preserves_moments(np.random.default_rng(31), 20_000, 4)


@pytest.mark.slow
def test_liu_west_preserves_cloud_moments_at_scale():
    _assert_liu_west_preserves_moments(np.random.default_rng(32), 100_000, 3)


def test_resample_frequencies():
    rng = np.random.default_rng(8)
    weights = np.array([1.0, 2.0, 3.0, 4.0])

    counts = np.bincount([resample_index(weights, rng) for _ in range(20_000)], minlength=4)

    _, p_value = stats.chisquare(counts, 20_000 * weights / weights.sum())
    assert p_value > 0.01


def test_certain_match_reaches_target_in_ceil_m_attempts(decay):
    particles, diagnostics = smc_step(None, 1, ZERO, ZERO, 1.0, decay, DECAY_PRIOR, DECAY_CONFIG, NULL_POLICY)

    assert diagnostics.attempts == 26
    assert diagnostics.accepted == 26
    assert len(particles) == 26
    assert np.allclose(particles.weights, particles.weights[0])
    assert diagnostics.ess == pytest.approx(26.0)


def test_later_step_keeps_particles_in_support(decay):
    first, _ = smc_step(None, 1, ZERO, ZERO, 1.0, decay, DECAY_PRIOR, DECAY_CONFIG, NULL_POLICY)

    second, diagnostics = smc_step(first, 2, ZERO, ZERO, 1.0, decay, DECAY_PRIOR, DECAY_CONFIG, NULL_POLICY)

    assert diagnostics.ess >= DECAY_CONFIG.M
    assert diagnostics.attempts >= diagnostics.accepted
    assert ((second.phi > 0) & (second.phi < 2.0)).all()
    assert ((second.theta_tilde > 0.5) & (second.theta_tilde < 2.0)).all()


def test_plain_step_weights_are_indicators(decay):
    particles, diagnostics = plain_smc_step(None, 1, ZERO, ZERO, 1.0, decay, DECAY_PRIOR, DECAY_CONFIG)

    assert diagnostics.attempts == 26
    assert (particles.weights == 1.0).all()


def test_step_failure_carries_diagnostics(toy, toy_prior, toy_config):
    config = toy_config.model_copy(update={"max_attempts": 300})

    with pytest.raises(StepFailureError) as info:
        smc_step(None, 1, np.array([1, 1]), np.array([5, 5]), 1.0, toy, toy_prior, config, NULL_POLICY)

    assert info.value.step == 1
    assert info.value.diagnostics.attempts == 300
    assert info.value.diagnostics.accepted == 0


def test_results_do_not_depend_on_chunking(toy, toy_prior, toy_config):
    args = (None, 1, np.array([1, 1]), np.array([1, 2]), 1.0, toy, toy_prior)

    coarse, _ = smc_step(*args, toy_config.model_copy(update={"chunk_size": 64}), NULL_POLICY)
    fine, _ = smc_step(*args, toy_config.model_copy(update={"chunk_size": 1}), NULL_POLICY)

    np.testing.assert_array_equal(coarse.theta_tilde, fine.theta_tilde)
    np.testing.assert_array_equal(coarse.phi, fine.phi)
    np.testing.assert_array_equal(coarse.weights, fine.weights)


def test_results_do_not_depend_on_worker_count(toy, toy_prior, toy_config):
    args = (None, 1, np.array([1, 1]), np.array([1, 2]), 1.0, toy, toy_prior, toy_config, NULL_POLICY)

    inline, _ = smc_step(*args)
    with AttemptPool(workers=2) as pool:
        pooled, _ = smc_step(*args, pool=pool)

    np.testing.assert_array_equal(inline.phi, pooled.phi)
    np.testing.assert_array_equal(inline.weights, pooled.weights)


def test_plain_and_coupled_steps_agree(toy, toy_prior, toy_config):
    config = toy_config.model_copy(update={"M": 400})
    args = (None, 1, np.array([1, 1]), np.array([1, 2]), 1.0, toy, toy_prior)
    scales = config.scales

    coupled, _ = smc_step(*args, config, NULL_POLICY)
    plain, _ = plain_smc_step(*args, config)

    mean_c, sd_c = weighted_mean_sd(alpha_matrix(toy, coupled.theta_tilde, coupled.phi, scales), coupled.weights)
    mean_p, sd_p = weighted_mean_sd(alpha_matrix(toy, plain.theta_tilde, plain.phi, scales), plain.weights)
    se = np.sqrt(sd_c ** 2 / ess(coupled.weights) + sd_p ** 2 / ess(plain.weights))
    assert (np.abs(mean_c - mean_p) < 4 * se).all()


def test_prior_recovery_on_alpha_cube():
    """Without the observation constraint step one returns the uniform prior on alpha."""
    model = builtin_repressilator()
    prior = builtin_prior(model)
    config = SmcConfig(M=1000, h=0.2, seed=11, scales=(ScaleEnum.IDENTITY,) * 4)
    y = np.zeros(3, dtype=np.int64)

    particles, _ = smc_step(None, 1, y, y, 1.0, model, prior, config, NULL_POLICY, known_z0=(2, 1, 3), condition=False)

    alpha = alpha_matrix(model, particles.theta_tilde, particles.phi, config.scales)
    boxes = prior.alpha
    mean, _ = weighted_mean_sd(alpha, particles.weights)
    n_eff = ess(particles.weights)
    for j, box in enumerate(boxes):
        se = box.width / math.sqrt(12 * n_eff)
        assert abs(mean[j] - (box.lo + box.hi) / 2) < 4 * se

    rng = np.random.default_rng(4)
    picks = rng.choice(len(particles), size=400, p=particles.weights / particles.weights.sum())
    for j in (0, 3):
        box = boxes[j]
        _, p_value = stats.kstest(alpha[picks, j], stats.uniform(loc=box.lo, scale=box.width).cdf)
        assert p_value > 0.001


def test_run_without_observation_intervals_returns_prior(decay):
    trace, particles = run(decay, _decay_series(0), DECAY_PRIOR, DECAY_CONFIG)

    assert len(trace) == 0
    assert len(particles) == 26
    assert (particles.weights == 1.0).all()


def test_run_records_trace_and_metrics(decay):
    before = REGISTRY.get_sample_value("smc_steps_total", {"engine": "coupled_steered", "status": "ok"}) or 0.0

    trace, particles = run(decay, _decay_series(2), DECAY_PRIOR, DECAY_CONFIG)

    after = REGISTRY.get_sample_value("smc_steps_total", {"engine": "coupled_steered", "status": "ok"})
    assert after - before == 2
    assert [row.step for row in trace.rows] == [1, 2]
    for row in trace.rows:
        assert row.attempts >= row.accepted >= 1
        assert len(row.alpha_mean) == 2
    assert trace.total_attempts == sum(row.attempts for row in trace.rows)


def test_run_rejects_mismatched_observations(toy, toy_prior, toy_config):
    with pytest.raises(ConfigurationError):
        run(toy, _decay_series(1), toy_prior, toy_config)


def test_baseline_ratio_is_one_when_every_simulation_matches(decay):
    report = baseline(decay, _decay_series(2), DECAY_PRIOR, DECAY_CONFIG, steps=1)

    assert report.engines == list(EngineEnum)
    for engine in EngineEnum:
        assert report.attempts[engine] == [26]
    assert report.ratio == pytest.approx(1.0)
    assert not report.censored


def test_middleware_counts_failed_steps():
    diagnostics = StepDiagnostics(step=4, attempts=30, prior_rejections=5)

    def failing_step(*args, **kwargs):
        raise StepFailureError(4, diagnostics)

    labels = {"engine": "failing"}
    step = StepMetricsMiddleware(failing_step, "failing")

    with pytest.raises(StepFailureError):
        step()

    assert REGISTRY.get_sample_value("smc_steps_total", {"engine": "failing", "status": "failed"}) == 1.0
    assert REGISTRY.get_sample_value("smc_simulation_attempts_total", labels) == 30.0
    assert REGISTRY.get_sample_value("smc_prior_rejections_total", labels) == 5.0
