import numpy as np
import pytest

from clusysid import (
    BatchData,
    DegeneracyError,
    ModelSet,
    StepRule,
    SystemSpec,
    collect_batches,
    frobenius_cost,
    least_squares,
    least_squares_pooled,
    pooled_run,
    run,
    safe_step_size,
    single_agent_run,
    spectral_error,
    system_rng,
)

from conftest import make_spec, random_truth


def noiseless(truth, rng, N=5, T=10, sid=0):
    return collect_batches(SystemSpec(sid, 0, 0.3, 0.3, 0.0, N, T), truth, rng)


def test_single_agent_fixed_point(rng):
    truth = random_truth(rng)
    b = noiseless(truth, rng)
    h = single_agent_run(b, truth.theta, 1e-3, 20, truth=truth)
    assert np.all(h.errors <= 1e-12)


def test_single_agent_equals_clustered_reduction(rng):
    truth = random_truth(rng)
    b = collect_batches(make_spec(N=5, T=10), truth, rng)
    init = truth.theta + 0.1 * rng.standard_normal(truth.theta.shape)
    h1 = single_agent_run(b, init, 2e-3, 50, truth=truth)
    h2 = run([b], ModelSet((init,)), 50, StepRule("fixed", 2e-3), truths=[truth])
    assert h1.errors.tobytes() == h2.errors.tobytes()
    assert h1.final[0].tobytes() == h2.final[0].tobytes()


def test_single_agent_converges_to_least_squares(rng):
    truth = random_truth(rng)
    b = collect_batches(make_spec(sigma=0.3, N=4, T=8), truth, rng)
    eta = safe_step_size([b])
    h = single_agent_run(b, np.zeros_like(truth.theta), eta, 20_000)
    assert spectral_error(h.final[0], least_squares(b)) < 1e-6


def test_pooled_homogeneous_equals_single_cluster_run(rng):
    truth = random_truth(rng)
    batches = [collect_batches(make_spec(sid=i), truth, rng) for i in range(5)]
    init = np.zeros_like(truth.theta)
    h1 = pooled_run(batches, init, 1e-2, 30, truths=[truth])
    h2 = run(batches, ModelSet((init,)), 30, StepRule("fixed", 1e-2), truths=[truth])
    assert h1.errors.tobytes() == h2.errors.tobytes()


def test_pooled_two_clusters_reaches_stationarity(rng):
    t1, t2 = random_truth(rng), random_truth(rng)
    batches = [noiseless(t, np.random.default_rng(i), sid=i) for i, t in enumerate([t1, t1, t2, t2])]
    eta = safe_step_size(batches)
    h = pooled_run(batches, np.zeros_like(t1.theta), eta, 20_000, truths=[t1, t2])
    grad = sum((b.X - h.final[0] @ b.Z) @ b.Z.T for b in batches)
    assert np.linalg.norm(grad) < 1e-6
    assert h.errors.shape == (20_000, 2)


def test_pooled_heterogeneous_plateaus(bench_config, bench_truths):
    from clusysid.harness.experiment import generate_batches, initial_models

    _, batches = generate_batches(bench_config, 1, rollouts=20)
    init = initial_models(bench_config, 1)
    pooled = pooled_run(batches, sum(init.thetas) / 3, 1e-3, 100, truths=bench_truths)
    clustered = run(batches, init, 100, truths=bench_truths, labels=bench_config.labels)
    assert np.all(pooled.errors[-1] > 3 * clustered.errors[-1])
    assert pooled.misclassified is None


def test_least_squares_noiseless_recovery(rng):
    truth = random_truth(rng)
    assert spectral_error(least_squares(noiseless(truth, rng)), truth.theta) < 1e-8


def test_least_squares_identity_design(rng):
    X = rng.standard_normal((3, 5))
    b = BatchData(X, np.eye(5), np.zeros((3, 5)))
    np.testing.assert_allclose(least_squares(b), X, atol=1e-14)


def test_least_squares_stationary_and_minimal(rng):
    truth = random_truth(rng)
    b = collect_batches(make_spec(sigma=0.2, N=6, T=10), truth, rng)
    th = least_squares(b)
    grad = -2 * (b.X - th @ b.Z) @ b.Z.T
    assert np.linalg.norm(grad) < 1e-8
    c0 = frobenius_cost(b, th)
    for _ in range(100):
        assert c0 <= frobenius_cost(b, th + 1e-3 * rng.standard_normal(th.shape))


def test_least_squares_singular():
    b = BatchData(np.ones((1, 4)), np.vstack([np.ones((1, 4)), np.ones((1, 4))]), np.zeros((1, 4)))
    with pytest.raises(DegeneracyError):
        least_squares(b)
    with pytest.raises(DegeneracyError):
        least_squares_pooled([b, b])


def test_least_squares_pooled_identities(rng):
    truth = random_truth(rng)
    b = collect_batches(make_spec(N=4, T=5), truth, rng)
    np.testing.assert_array_equal(least_squares_pooled([b]), least_squares(b))
    np.testing.assert_allclose(least_squares_pooled([b, b]), least_squares(b), rtol=1e-12, atol=1e-13)


def test_least_squares_pooled_beats_single_system(bench_config, bench_truths):
    specs = [s for s in bench_config.specs() if s.cluster_id == 0]
    truth = bench_truths[0]
    single, pooled = [], []
    for seed in range(20):
        batches = [collect_batches(s, truth, system_rng(seed, s.system_id)) for s in specs]
        single.append(spectral_error(least_squares(batches[0]), truth.theta))
        pooled.append(spectral_error(least_squares_pooled(batches), truth.theta))
    assert np.median(pooled) < np.median(single)
