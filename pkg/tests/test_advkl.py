import numpy as np
import pytest

from bornvi.advkl import (
    LOG_COLUMNS,
    AdvConfig,
    EpochLog,
    born_gradient,
    born_gradients,
    born_loss,
    classifier_inputs,
    read_log_csv,
    train,
    write_log_csv,
)
from bornvi.bayesnet import EvidenceModel, HmmModel, exact_posterior
from bornvi.bornmachine import ANGLE_ENCODING, AnsatzSpec, exact_distribution, init_machine, load_checkpoint
from bornvi.classifier import IdealClassifier, init_mlp
from bornvi.evalbench import random_sprinkler
from bornvi.statevector import all_bitstrings


def sprinkler_problem(seed=0):
    model, x = EvidenceModel.from_evidence(random_sprinkler(seed), {"W": 1})
    return model, x


def prior_of(model):
    return np.exp(model.log_prior(all_bitstrings(model.n_latent)))


def exact_kl(machine, model, x):
    """Oracle: KL(q || p(z|x)) by enumeration."""
    q = exact_distribution(machine, x)
    p = exact_posterior(model, x)
    keep = q > 0
    return float(q[keep] @ (np.log(q[keep]) - np.log(p[keep])))


@pytest.mark.parametrize("seed", range(6))
def test_ideal_classifier_gradient_matches_kl_finite_differences(seed):
    model, x = sprinkler_problem(seed)
    machine = init_machine(AnsatzSpec(3, seed % 3), seed, scale=1.0)
    d = IdealClassifier(exact_distribution(machine, x), prior_of(model))
    grad = born_gradients(machine, model, d, [x], shots=1, seed=0, exact=True)
    h = 1e-5
    fd = np.zeros_like(grad)
    for j in range(grad.size):
        up, down = machine.theta.copy(), machine.theta.copy()
        up[j] += h
        down[j] -= h
        fd[j] = (exact_kl(machine.with_theta(up), model, x) - exact_kl(machine.with_theta(down), model, x)) / (2 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


def test_single_parameter_gradient_matches_batched():
    model, x = sprinkler_problem(1)
    machine = init_machine(AnsatzSpec(3, 1), 1, scale=0.5)
    mlp = init_mlp(3, 6, 0)
    all_grads = born_gradients(machine, model, mlp, [x], 1, 0, exact=True)
    for j in (0, 3, 7):
        assert born_gradient(machine, model, mlp, [x], j, 1, 0, exact=True) == pytest.approx(all_grads[j], abs=1e-12)


def test_sampled_gradient_is_unbiased():
    model, x = sprinkler_problem(2)
    machine = init_machine(AnsatzSpec(3, 1), 2, scale=0.8)
    mlp = init_mlp(3, 6, 2)
    exact = born_gradients(machine, model, mlp, [x], 1, 0, exact=True)
    draws = np.array([born_gradients(machine, model, mlp, [x], 100, s) for s in range(200)])
    se = draws.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - exact) < 5 * se + 1e-12)


def test_loss_exact_vs_sampled():
    model, x = sprinkler_problem(3)
    machine = init_machine(AnsatzSpec(3, 2), 3, scale=0.5)
    mlp = init_mlp(3, 6, 3)
    exact = born_loss(machine, model, mlp, [x], 1, 0, exact=True)
    sampled = born_loss(machine, model, mlp, [x], 20_000, 0)
    assert sampled == pytest.approx(exact, abs=0.05)


def test_classifier_inputs():
    z = np.array([[1, 0], [0, 1]])
    out = classifier_inputs(z, np.array([0.5, 2.0, 3.0]), True)
    np.testing.assert_array_equal(out, [[1, 0, 0.5, 2, 3], [0, 1, 0.5, 2, 3]])
    np.testing.assert_array_equal(classifier_inputs(z, None, False), z)


class TestTraining:
    def test_zero_epochs_returns_initial_machine(self):
        model, x = sprinkler_problem(0)
        machine = init_machine(AnsatzSpec(3, 1), 0)
        out, logs = train(machine, model, [x], AdvConfig(epochs=0))
        np.testing.assert_array_equal(out.theta, machine.theta)
        assert len(logs) == 1 and logs[0].epoch == 0

    def test_logs_filled(self):
        model, x = sprinkler_problem(0)
        _, logs = train(init_machine(AnsatzSpec(3, 1), 0), model, [x], AdvConfig(epochs=3))
        assert [r.epoch for r in logs] == [0, 1, 2, 3]
        for r in logs[1:]:
            for v in (r.born_loss, r.mlp_objective, r.ideal_mlp_objective, r.tvd):
                assert np.isfinite(v)
            assert r.wall_time_ms is None

    def test_same_seed_same_logs(self):
        model, x = sprinkler_problem(4)
        cfg = AdvConfig(epochs=5, seed=9)
        _, a = train(init_machine(AnsatzSpec(3, 2), 1), model, [x], cfg)
        _, b = train(init_machine(AnsatzSpec(3, 2), 1), model, [x], cfg)
        assert a == b

    def test_width_mismatch(self):
        model, x = sprinkler_problem(0)
        with pytest.raises(ValueError):
            train(init_machine(AnsatzSpec(2, 1), 0), model, [x], AdvConfig(epochs=1))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            AdvConfig(lr_born=0.0)
        with pytest.raises(ValueError):
            AdvConfig(epochs=-1)

    def test_tvd_drops_on_easy_instance(self):
        model, x = sprinkler_problem(0)
        cfg = AdvConfig(epochs=200, lr_born=0.03, use_exact_expectations=True)
        _, logs = train(init_machine(AnsatzSpec(3, 2), 0, scale=0.3), model, [x], cfg)
        assert logs[-1].tvd < logs[0].tvd - 0.1

    def test_amortized_training_on_two_observations(self):
        hmm = HmmModel(T=3)
        data = [hmm.sample(1)[0], hmm.sample(2)[0]]
        cfg = AdvConfig(epochs=3, hidden=4)
        out, logs = train(init_machine(AnsatzSpec(3, 1, ANGLE_ENCODING), 0), hmm, data, cfg)
        assert out.spec.encoding == ANGLE_ENCODING
        # the ideal objective is only defined for a single observation
        assert all(r.ideal_mlp_objective is None for r in logs)
        assert all(np.isfinite(r.tvd) for r in logs)

    def test_angle_encoding_needs_matching_observation(self):
        model, x = sprinkler_problem(0)
        with pytest.raises(ValueError):
            train(init_machine(AnsatzSpec(3, 1, ANGLE_ENCODING), 0), model, [x, x], AdvConfig(epochs=1))

    def test_checkpoint_written(self, tmp_path):
        model, x = sprinkler_problem(5)
        path = tmp_path / "best.json"
        train(init_machine(AnsatzSpec(3, 1), 0), model, [x], AdvConfig(epochs=4), checkpoint=path)
        machine, seed, epoch = load_checkpoint(path)
        assert 0 <= epoch < 4 and seed == 0
        assert machine.spec == AnsatzSpec(3, 1)


def test_csv_round_trip(tmp_path):
    logs = [EpochLog(0, tvd=0.4), EpochLog(1, born_loss=-1.25, mlp_objective=-1.3, ideal_mlp_objective=-1.2, tvd=0.1 + 0.2)]
    path = tmp_path / "log.csv"
    write_log_csv(path, logs)
    text = path.read_text().splitlines()
    assert text[0] == ",".join(LOG_COLUMNS)
    assert text[1] == "0,,,,0.4,"
    assert read_log_csv(path) == logs
