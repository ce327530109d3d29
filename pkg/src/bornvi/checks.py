"""Self-checks run by the ``grad-check`` and ``stein-check`` commands.

Every analytic gradient is compared with central finite differences on
random small configurations; the Stein checks verify the identity and the
zero of the discrepancy at the true posterior by enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _random
from .advkl import born_gradients
from .bayesnet import EvidenceModel, exact_posterior, load_network
from .bornmachine import AmplitudeMachine, AnsatzSpec, distribution_gradient, exact_distribution, init_machine
from .classifier import IdealClassifier, LabeledBatch, Mlp, gradient, init_mlp, log_likelihood
from .evalbench import SPRINKLER_EVIDENCE, random_sprinkler
from .ksd import ksd_estimate, ksd_gradients, ksd_inner_exact, stein_operator
from .statevector import all_bitstrings

RTOL = 1e-5
ATOL = 1e-8


@dataclass
class CheckResult:
    name: str
    trials: int
    worst: float  # largest |a - b| / (RTOL |b| + ATOL); at most 1 means pass

    @property
    def passed(self):
        return self.worst <= 1.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.trials} trials, worst ratio {self.worst:.3g}"


def _ratio(analytic, numeric, rtol=RTOL, atol=ATOL):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    return float(np.max(np.abs(analytic - numeric) / (rtol * np.abs(numeric) + atol)))


def _central(fn, theta, h):
    out = []
    for j in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        out.append((fn(up) - fn(down)) / (2 * h))
    return np.array(out)


def random_chain_model(rng, n):
    """Positive model: a chain of ``n`` latents and one observed leaf."""
    nodes = [{"name": "Z0", "parents": [], "cpt": [float(rng.uniform(0.05, 0.95))]}]
    for i in range(1, n):
        nodes.append({"name": f"Z{i}", "parents": [f"Z{i - 1}"], "cpt": [float(v) for v in rng.uniform(0.05, 0.95, 2)]})
    nodes.append({"name": "X", "parents": [f"Z{n - 1}"], "cpt": [float(v) for v in rng.uniform(0.05, 0.95, 2)]})
    return EvidenceModel.from_evidence(load_network({"nodes": nodes}), {"X": 1})


def _configs(seed, trials):
    rng = _random.stream(seed, 0)
    for t in range(trials):
        n = int(rng.integers(2, 5))
        layers = int(rng.integers(0, 3))
        model, x = random_chain_model(rng, n)
        machine = init_machine(AnsatzSpec(n, layers), _random.child_seed(seed, t), scale=1.0)
        yield model, x, machine


def check_probability_gradients(seed, trials=100, h=1e-5):
    worst = 0.0
    for model, x, machine in _configs(seed, trials):
        fn = lambda th: exact_distribution(machine.with_theta(th), x)
        worst = max(worst, _ratio(distribution_gradient(machine, x), _central(fn, machine.theta.copy(), h)))
    return CheckResult("parameter-shift probability gradients", trials, worst)


def check_backprop(seed, trials=100, h=1e-6):
    rng = _random.stream(seed, 1)
    worst = 0.0
    for t in range(trials):
        in_dim, hidden, m = int(rng.integers(2, 6)), int(rng.integers(2, 8)), int(rng.integers(2, 12))
        mlp = init_mlp(in_dim, hidden, rng)
        batch = LabeledBatch(rng.normal(size=(m, in_dim)), rng.integers(0, 2, m))
        fn = lambda phi: log_likelihood(Mlp.from_params(in_dim, hidden, phi), batch)
        worst = max(worst, _ratio(gradient(mlp, batch).params(), _central(fn, mlp.params(), h)))
    return CheckResult("classifier backpropagation", trials, worst)


def _exact_kl(machine, model, x, post):
    q = exact_distribution(machine, x)
    keep = q > 0
    return float(q[keep] @ (np.log(q[keep]) - np.log(post[keep])))


def check_kl_gradients(seed, trials=100, h=1e-5):
    worst = 0.0
    for model, x, machine in _configs(seed, trials):
        post = exact_posterior(model, x)
        prior = np.exp(model.log_prior(all_bitstrings(model.n_latent)))
        d = IdealClassifier(exact_distribution(machine, x), prior)
        analytic = born_gradients(machine, model, d, [x], 1, 0, exact=True)
        fn = lambda th: _exact_kl(machine.with_theta(th), model, x, post)
        worst = max(worst, _ratio(analytic, _central(fn, machine.theta.copy(), h)))
    return CheckResult("KL gradient with the ideal classifier", trials, worst)


def check_ksd_gradients(seed, trials=100, h=1e-5):
    worst = 0.0
    for model, x, machine in _configs(seed, trials):
        analytic, _ = ksd_gradients(machine, model, [x], 0, 0, exact=True)
        fn = lambda th: ksd_estimate(machine.with_theta(th), model, x, 0, 0, exact=True)
        worst = max(worst, _ratio(analytic, _central(fn, machine.theta.copy(), h)))
    return CheckResult("KSD gradient", trials, worst)


def gradient_checks(seed, trials=100):
    return [
        check_probability_gradients(seed, trials),
        check_backprop(seed, trials),
        check_kl_gradients(seed, trials),
        check_ksd_gradients(seed, trials),
    ]


def check_stein_identity(seed, models=20, functions=50, tol=1e-10):
    rng = _random.stream(seed, 2)
    worst = 0.0
    for _ in range(models):
        model, x = random_chain_model(rng, 3)
        post = exact_posterior(model, x)
        for _ in range(functions):
            f = rng.normal(size=(8, 3))
            worst = max(worst, abs(float(post @ stein_operator(model, x, f))) / tol)
    return CheckResult("Stein identity", models * functions, worst)


def check_ksd_zero_at_truth(seed, instances=10, low=-1e-12, high=1e-8):
    worst = 0.0
    for i in range(instances):
        net = random_sprinkler(_random.child_seed(seed, _random.INSTANCE, i))
        model, x = EvidenceModel.from_evidence(net, SPRINKLER_EVIDENCE)
        hook = AmplitudeMachine.from_distribution(exact_posterior(model, x))
        inner = ksd_inner_exact(exact_distribution(hook), model, x)
        # scaled so that 1 sits on the nearer edge of [low, high]
        worst = max(worst, inner / high if inner >= 0 else inner / low)
    return CheckResult("KSD zero at the true posterior", instances, worst)


def stein_checks(seed):
    return [check_stein_identity(seed), check_ksd_zero_at_truth(seed)]
