import logging

import numpy as np
import pytest

from clusysid import (
    Assignment,
    BatchData,
    ClusterGroundTruth,
    ConfigurationError,
    DegeneracyError,
    ModelSet,
    StepRule,
    SystemSpec,
    collect_batches,
    estimate_cluster,
    frobenius_cost,
    model_update_step,
    run,
    safe_step_size,
    separation,
    spectral_error,
    system_rng,
    theoretical_step_size,
    warm_init,
)
from clusysid.harness.experiment import generate_batches, initial_models

from conftest import make_spec, random_truth


def noiseless_batch(truth, rng, N=4, T=6, sigma=0.5, sid=0):
    return collect_batches(SystemSpec(sid, 0, sigma, sigma, 0.0, N, T), truth, rng)


def test_frobenius_cost_exact_fit(rng):
    truth = random_truth(rng)
    b = noiseless_batch(truth, rng)
    assert frobenius_cost(b, truth.theta) <= 1e-26


def test_frobenius_cost_empty_signal():
    b = BatchData(np.zeros((2, 4)), np.zeros((3, 4)), np.zeros((2, 4)))
    assert frobenius_cost(b, np.ones((2, 3))) == 0.0


def test_frobenius_cost_triple_loop_oracle():
    g = np.random.default_rng(77)
    X, Z, th = g.standard_normal((2, 4)), g.standard_normal((3, 4)), g.standard_normal((2, 3))
    b = BatchData(X, Z, np.zeros((2, 4)))
    total = 0.0
    for i in range(2):
        for k in range(4):
            pred = 0.0
            for m in range(3):
                pred += th[i, m] * Z[m, k]
            total += (X[i, k] - pred) ** 2
    assert frobenius_cost(b, th) == pytest.approx(total, rel=1e-12)
    with pytest.raises(ConfigurationError):
        frobenius_cost(b, np.zeros((2, 2)))


def test_estimate_cluster_recovers_true_cluster(bench_truths, rng):
    models = ModelSet(tuple(t.theta for t in bench_truths))
    for j, truth in enumerate(bench_truths):
        a = estimate_cluster(noiseless_batch(truth, rng), models)
        assert a.index == j
        np.testing.assert_array_equal(a.one_hot, np.eye(3)[j])


def test_estimate_cluster_single_and_tied(rng):
    b = collect_batches(make_spec(), random_truth(rng), rng)
    assert estimate_cluster(b, ModelSet((np.ones((3, 5)),))).index == 0
    th = rng.standard_normal((3, 5))
    assert estimate_cluster(b, ModelSet((th, th, th))).index == 0


def test_update_fixed_point(bench_truths, rng):
    batches = [noiseless_batch(t, rng, sid=i) for i, t in enumerate(bench_truths)]
    models = ModelSet(tuple(t.theta for t in bench_truths))
    new = model_update_step(models, [Assignment(j, 3) for j in range(3)], batches, [1e-3] * 3)
    assert new.iteration == 1
    for j in range(3):
        assert np.max(np.abs(new[j] - bench_truths[j].theta)) <= 1e-12


def test_update_zero_step(rng):
    b = collect_batches(make_spec(), random_truth(rng), rng)
    models = ModelSet((rng.standard_normal((3, 5)),))
    new = model_update_step(models, [Assignment(0, 1)], [b], [0.0])
    np.testing.assert_array_equal(new[0], models[0])


def test_update_one_step_closed_form(rng):
    truth = random_truth(rng)
    b = noiseless_batch(truth, rng)
    E = rng.standard_normal(truth.theta.shape)
    eta = 1e-3
    new = model_update_step(ModelSet((truth.theta + E,)), [Assignment(0, 1)], [b], [eta])
    expected = E @ (np.eye(5) - 2 * eta * b.Z @ b.Z.T)
    np.testing.assert_allclose(new[0] - truth.theta, expected, atol=1e-12)


def test_update_leaves_empty_cluster_and_logs(rng, caplog):
    b = collect_batches(make_spec(), random_truth(rng), rng)
    models = ModelSet((rng.standard_normal((3, 5)), rng.standard_normal((3, 5))))
    with caplog.at_level(logging.INFO, logger="clusysid.algorithm"):
        new = model_update_step(models, [Assignment(0, 2)], [b], [1e-3, 1e-3])
    np.testing.assert_array_equal(new[1], models[1])
    assert not np.array_equal(new[0], models[0])
    assert "no assigned systems" in caplog.text


def test_warm_init_radius(bench_truths):
    dmin = separation(bench_truths).delta_min
    for alpha0 in (0.01, 0.25, 0.49):
        init = warm_init(bench_truths, alpha0, np.random.default_rng(1))
        for j, t in enumerate(bench_truths):
            assert abs(spectral_error(init[j], t.theta) - (0.5 - alpha0) * dmin) <= 1e-10
    init = warm_init(bench_truths, 0.25, np.random.default_rng(1))
    assert spectral_error(init[0], bench_truths[0].theta) == pytest.approx(0.25 * 0.9086829492412268, rel=1e-10)


def test_warm_init_limit_and_errors(bench_truths, rng):
    init = warm_init(bench_truths, 0.5 - 1e-12, rng)
    for j, t in enumerate(bench_truths):
        assert spectral_error(init[j], t.theta) < 1e-11
    with pytest.raises(ConfigurationError):
        warm_init(bench_truths, 0.5, rng)
    with pytest.raises(ConfigurationError):
        warm_init(bench_truths, 0.0, rng)
    with pytest.raises(DegeneracyError):
        warm_init([bench_truths[0], bench_truths[0]], 0.25, rng)


def test_run_one_iteration_matches_manual(bench_config, bench_truths):
    _, batches = generate_batches(bench_config, 3, rollouts=5)
    init = initial_models(bench_config, 3)
    hist = run(batches, init, 1, StepRule("fixed", 1e-3), truths=bench_truths, labels=bench_config.labels)
    assignments = [estimate_cluster(b, init) for b in batches]
    manual = model_update_step(init, assignments, batches, [1e-3] * 3)
    for j in range(3):
        np.testing.assert_array_equal(hist.final[j], manual[j])
    assert list(hist.assignments[0]) == [a.index for a in assignments]
    assert hist.final.iteration == 1


def test_noise_free_contraction(rng):
    truth = random_truth(rng)
    batches = [noiseless_batch(truth, rng, N=3, T=8, sid=i) for i in range(3)]
    init = ModelSet((truth.theta + rng.standard_normal(truth.theta.shape),))
    hist = run(batches, init, 10_000, StepRule("safe"), truths=[truth])
    errs = np.concatenate([hist.initial_errors, hist.errors[:, 0]])
    assert np.all(np.diff(errs) <= 1e-15)
    assert errs[-1] < 1e-6
    first_small = np.argmax(errs < 1e-6)
    assert np.all(np.diff(errs[: first_small + 1]) < 0)  # strict while far from the solution


def test_safe_step_bound(rng):
    truth = random_truth(rng)
    batches = [noiseless_batch(truth, rng, sid=i) for i in range(4)]
    S = sum(b.Z @ b.Z.T for b in batches)
    assert safe_step_size(batches) == pytest.approx(4 / (2 * np.linalg.eigvalsh(S)[-1]), rel=1e-12)


def test_run_is_deterministic(bench_config, bench_truths):
    def once():
        _, batches = generate_batches(bench_config, 8, rollouts=5)
        return run(batches, initial_models(bench_config, 8), 5, truths=bench_truths, labels=bench_config.labels)

    a, b = once(), once()
    assert a.errors.tobytes() == b.errors.tobytes()
    assert np.array_equal(a.assignments, b.assignments)


def test_run_permutation_equivariant(bench_config, bench_truths):
    _, batches = generate_batches(bench_config, 2, rollouts=5)
    init = initial_models(bench_config, 2)
    perm = np.random.default_rng(0).permutation(len(batches))
    a = run(batches, init, 3)
    b = run([batches[i] for i in perm], init, 3)
    for j in range(3):
        np.testing.assert_allclose(a.final[j], b.final[j], atol=1e-12, rtol=0)
    np.testing.assert_array_equal(a.assignments[:, perm], b.assignments)


def test_run_theoretical_rule_uses_estimated_membership(bench_config, bench_truths):
    specs, batches = generate_batches(bench_config, 4, rollouts=5)
    init = initial_models(bench_config, 4)
    hist = run(batches, init, 1, StepRule("theoretical", None), truths=bench_truths,
               labels=bench_config.labels, specs=specs)
    for j in range(3):
        members = [specs[i] for i in range(len(specs)) if hist.assignments[0, i] == j]
        assert hist.step_sizes[0, j] == pytest.approx(theoretical_step_size(members, bench_truths), rel=1e-14)
    with pytest.raises(ConfigurationError):
        run(batches, init, 1, StepRule("theoretical", None))


def test_run_validates_inputs(rng):
    b = collect_batches(make_spec(), random_truth(rng), rng)
    init = ModelSet((np.zeros((3, 5)),))
    with pytest.raises(ConfigurationError):
        run([b], init, 0)
    with pytest.raises(ConfigurationError):
        run([b], ModelSet((np.zeros((3, 4)),)), 1)
    with pytest.raises(ConfigurationError):
        StepRule("adaptive", 1.0)


def test_bench_configuration_run(bench_config, bench_truths):
    specs, batches = generate_batches(bench_config, 0)
    hist = run(batches, initial_models(bench_config, 0), bench_config.iterations, bench_config.step,
               truths=bench_truths, labels=bench_config.labels)
    assert hist.misclassified[-1] == 0
    first_zero = int(np.argmax(hist.misclassified == 0))
    assert np.all(hist.misclassified[first_zero:] == 0)
    assert np.all(np.diff(hist.errors[5:], axis=0) <= 0)
    assert np.all(hist.errors[-1] < hist.initial_errors)


def test_first_iteration_misclassification_decays_with_rollouts_short_horizon(bench_config, bench_truths):
    """At T = 1 the classification problem is hard enough to show the decay in N."""
    import dataclasses

    cfg = dataclasses.replace(bench_config, horizon=1)
    rates = []
    for N in (5, 20, 100):
        wrong = 0
        for seed in range(4):
            _, batches = generate_batches(cfg, 500 + seed, rollouts=N)
            hist = run(batches, initial_models(cfg, 500 + seed), 1, labels=cfg.labels)
            wrong += int(hist.misclassified[0])
        rates.append(wrong / (4 * cfg.M))
    assert rates[0] > rates[1] > rates[2]
    assert rates[2] < 0.02
