"""Acceptance criteria 1 to 9.

Each test records a one-line PASS/FAIL summary (printed at the end of the
session by ``conftest.py``) before asserting. Thresholds and runtimes are
the stated ones; nothing is relaxed when a criterion fails.

The training reproductions (4 to 7) take several minutes each on one core;
they carry the ``slow`` marker so ``pytest -m "not slow"`` skips them.
"""
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from bornvi.advkl import AdvConfig, born_gradients
from bornvi.bayesnet import EvidenceModel, difference_score, exact_posterior, load_network
from bornvi.bornmachine import AmplitudeMachine, AnsatzSpec, distribution_gradient, exact_distribution, init_machine
from bornvi.classifier import IdealClassifier, LabeledBatch, Mlp, gradient, init_mlp, log_likelihood
from bornvi.evalbench import (
    HMM_CONFIG,
    SPRINKLER_EVIDENCE,
    random_sprinkler,
    run_hmm,
    run_lungcancer,
    run_sprinkler,
)
from bornvi.ksd import KsdConfig, ksd_gradients, ksd_inner_exact, stein_kernel, stein_operator
from bornvi.statevector import (
    ENTANGLE,
    HADAMARD,
    ROTX,
    ROTZ,
    Circuit,
    all_bitstrings,
    bits_to_index,
    run_circuit,
    sample_outcomes,
)


def random_model(rng, n, extra_parent=True):
    """Positive network: a chain of ``n`` latents and an observed leaf X."""
    nodes = [{"name": "Z0", "parents": [], "cpt": [float(rng.uniform(0.05, 0.95))]}]
    for i in range(1, n):
        nodes.append({"name": f"Z{i}", "parents": [f"Z{i - 1}"], "cpt": rng.uniform(0.05, 0.95, 2).tolist()})
    parents = [f"Z{n - 1}"] + (["Z0"] if extra_parent and n > 1 else [])
    nodes.append({"name": "X", "parents": parents, "cpt": rng.uniform(0.05, 0.95, 2 ** len(parents)).tolist()})
    return EvidenceModel.from_evidence(load_network({"nodes": nodes}), {"X": int(rng.integers(0, 2))})


def central_difference(fn, theta, h):
    """Independent finite-difference gradient (vector or scalar ``fn``)."""
    cols = []
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        cols.append((np.asarray(fn(theta + e)) - np.asarray(fn(theta - e))) / (2 * h))
    return np.array(cols)


def within(a, b, rtol=1e-5, atol=1e-8):
    return bool(np.all(np.abs(np.asarray(a) - np.asarray(b)) <= atol + rtol * np.abs(np.asarray(b))))


def random_circuit(n, depth, rng):
    circ = Circuit(n)
    for _ in range(depth):
        kind = rng.choice([HADAMARD, ROTX, ROTZ, ENTANGLE])
        q = int(rng.integers(n))
        if kind == ENTANGLE:
            circ.cz(q, int((q + 1 + rng.integers(n - 1)) % n))
        elif kind == HADAMARD:
            circ.h(q)
        elif kind == ROTX:
            circ.rx(q, rng.uniform(-np.pi, np.pi))
        else:
            circ.rz(q, rng.uniform(-np.pi, np.pi))
    return circ


def test_criterion_1_stein_identity(acceptance):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    score_ok = True
    for _ in range(20):
        model, x = random_model(rng, 3)
        post = exact_posterior(model, x)
        # the difference score must agree with posterior ratios computed directly
        z = all_bitstrings(3)
        ratios = np.stack([post[(np.arange(8) ^ (1 << (2 - i)))] / post for i in range(3)], axis=1)
        score_ok &= np.allclose(difference_score(model, x, z), 1 - ratios, rtol=1e-12, atol=1e-12)
        for _ in range(50):
            f = rng.normal(size=(8, 3))
            worst = max(worst, abs(float(post @ stein_operator(model, x, f))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 1.0 and bool(score_ok)
    acceptance(1, ok, f"Stein identity, worst |E| {worst:.2e} over 1000 functions, {elapsed:.2f} s")
    assert score_ok
    assert worst < 1e-10
    assert elapsed < 1.0


def test_criterion_2_ksd_zero_at_truth(acceptance):
    t0 = time.perf_counter()
    values = []
    for i in range(10):
        model, x = EvidenceModel.from_evidence(random_sprinkler(500 + i), SPRINKLER_EVIDENCE)
        hook = AmplitudeMachine.from_distribution(exact_posterior(model, x))
        values.append(ksd_inner_exact(exact_distribution(hook), model, x))
    elapsed = time.perf_counter() - t0
    lo, hi = min(values), max(values)
    ok = lo >= -1e-12 and hi <= 1e-8 and elapsed < 1.0
    acceptance(2, ok, f"KSD at q = p in [{lo:.2e}, {hi:.2e}] on 10 instances, {elapsed:.2f} s")
    assert lo >= -1e-12 and hi <= 1e-8
    assert elapsed < 1.0


def test_criterion_3_gradient_oracles(acceptance):
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    fails = {"probability": 0, "backprop": 0, "kl": 0, "ksd": 0}
    for t in range(100):
        n, layers = int(rng.integers(2, 5)), int(rng.integers(0, 3))
        model, x = random_model(rng, n)
        machine = init_machine(AnsatzSpec(n, layers), 7000 + t, scale=1.0)
        theta = machine.theta.copy()

        def q_of(th):
            return exact_distribution(machine.with_theta(th), x)

        fd = central_difference(q_of, theta, 1e-5)
        fails["probability"] += not within(distribution_gradient(machine, x), fd)

        post = exact_posterior(model, x)
        prior = np.exp(model.log_prior(all_bitstrings(n)))

        def kl(th):
            q = q_of(th)
            return float(np.sum(q * (np.log(q) - np.log(post))))

        ideal = IdealClassifier(q_of(theta), prior)
        analytic = born_gradients(machine, model, ideal, [x], 1, 0, exact=True)
        fails["kl"] += not within(analytic, central_difference(kl, theta, 1e-5))

        bits = all_bitstrings(n)
        kappa = np.array([[stein_kernel(model, x, a, b) for b in bits] for a in bits])

        def ksd(th):
            q = q_of(th)
            return float(np.sqrt(q @ kappa @ q))

        analytic, _ = ksd_gradients(machine, model, [x], 0, 0, exact=True)
        fails["ksd"] += not within(analytic, central_difference(ksd, theta, 1e-5))

        in_dim, hidden, m = int(rng.integers(2, 6)), int(rng.integers(2, 8)), int(rng.integers(2, 12))
        mlp = init_mlp(in_dim, hidden, 9000 + t)
        batch = LabeledBatch(rng.normal(size=(m, in_dim)), rng.integers(0, 2, m))

        def ll(phi):
            return log_likelihood(Mlp.from_params(in_dim, hidden, phi), batch)

        fails["backprop"] += not within(gradient(mlp, batch).params(), central_difference(ll, mlp.params(), 1e-6))
    elapsed = time.perf_counter() - t0
    ok = not any(fails.values()) and elapsed < 30.0
    detail = ", ".join(f"{k} {100 - v}/100" for k, v in fails.items())
    acceptance(3, ok, f"gradient oracles within 1e-5 relative: {detail}, {elapsed:.1f} s")
    assert not any(fails.values()), fails
    assert elapsed < 30.0


@pytest.mark.slow
def test_criterion_4_sprinkler_kl(acceptance):
    cfg = AdvConfig(epochs=1000, lr_born=0.003, lr_mlp=0.03, shots_born=100, minibatch=10, use_exact_expectations=True)
    t0 = time.perf_counter()
    deep = run_sprinkler("kl", 2, cfg)
    shallow = run_sprinkler("kl", 0, cfg, baseline=False)
    elapsed = time.perf_counter() - t0
    m2, m0, base = deep.median_tvd_final, shallow.median_tvd_final, deep.baseline_median_tvd
    beats_baseline = m2 < base
    ordered = m2 <= m0 + 0.02
    ok = beats_baseline and ordered and elapsed <= 1800
    acceptance(4, ok, f"sprinkler KL median TVD L=2 {m2:.4f} vs factorized {base:.4f}, L=0 {m0:.4f}, {elapsed:.0f} s")
    assert ordered
    assert beats_baseline, f"median {m2:.4f} not below factorized baseline {base:.4f}"
    assert elapsed <= 1800


@pytest.mark.slow
def test_criterion_5_sprinkler_ksd(acceptance):
    cfg = KsdConfig(epochs=1000, lr_born=0.003, shots_born=100, use_exact_expectations=True)
    res = {layers: run_sprinkler("ksd", layers, cfg, baseline=False) for layers in (0, 1, 2)}
    m = {layers: r.median_tvd_final for layers, r in res.items()}
    initial = res[2].median_tvd_initial
    improved = m[2] <= initial - 0.05
    ordered = m[2] <= m[1] + 0.02 <= m[0] + 0.04
    acceptance(5, improved and ordered,
               f"sprinkler KSD median TVD L=2 {m[2]:.4f} (initial {initial:.4f}), L=1 {m[1]:.4f}, L=0 {m[0]:.4f}")
    assert improved
    assert ordered


@pytest.mark.slow
def test_criterion_6_hmm_amortization(acceptance):
    t0 = time.perf_counter()
    attempts = []
    for seed in range(4):  # the first run plus at most three reseeds; the data stay fixed
        res = run_hmm(replace(HMM_CONFIG, seed=seed), data_seed=0)
        distances = [obs["mode_distance"] for obs in res.extras["observations"]]
        attempts.append((seed, distances))
        if max(distances) <= 1:
            break
    elapsed = time.perf_counter() - t0
    ok = max(attempts[-1][1]) <= 1 and elapsed <= 3600
    tried = "; ".join(f"seed {s}: distances {d}" for s, d in attempts)
    acceptance(6, ok, f"HMM mode distances ({tried}), {elapsed:.0f} s")
    assert max(attempts[-1][1]) <= 1
    assert elapsed <= 3600


@pytest.mark.slow
def test_criterion_7_lung_cancer(acceptance):
    t0 = time.perf_counter()
    res = run_lungcancer()
    elapsed = time.perf_counter() - t0
    overlap, final = res.extras["top4_overlap"], res.final_tvd[0]
    ok = overlap >= 3 and final < 0.1 and elapsed <= 1200
    acceptance(7, ok, f"lung cancer top-4 overlap {overlap}, TVD {final:.4f}, {elapsed:.0f} s")
    assert overlap >= 3
    assert final < 0.1
    assert elapsed <= 1200


def test_criterion_8_simulator(acceptance):
    rng = np.random.default_rng(808)
    t0 = time.perf_counter()
    norm_err = 0.0
    for _ in range(50):
        state = run_circuit(random_circuit(4, 40, rng))
        norm_err = max(norm_err, abs(float(np.vdot(state.amplitudes, state.amplitudes).real) - 1.0))
    pvalues = []
    for k in range(10):
        state = run_circuit(random_circuit(4, 30, rng))
        probs = np.abs(state.amplitudes) ** 2
        shots = 20000
        idx = bits_to_index(sample_outcomes(state, shots, 8080 + k))
        observed = np.bincount(idx, minlength=16).astype(float)
        expected = probs * shots
        # merge sparse cells so every bin has an expected count of at least 5
        small = expected < 5
        obs = np.append(observed[~small], observed[small].sum())
        exp = np.append(expected[~small], expected[small].sum())
        if exp[-1] == 0:
            obs, exp = obs[:-1], exp[:-1]
        exp *= obs.sum() / exp.sum()
        pvalues.append(stats.chisquare(obs, exp).pvalue)
    grad_sum = 0.0
    for t in range(20):
        machine = init_machine(AnsatzSpec(4, int(rng.integers(0, 3))), 8800 + t, scale=1.0)
        grad_sum = max(grad_sum, float(np.abs(distribution_gradient(machine).sum(axis=1)).max()))
    elapsed = time.perf_counter() - t0
    ok = norm_err < 1e-10 and min(pvalues) > 0.001 and grad_sum < 1e-10 and elapsed < 10.0
    acceptance(8, ok, f"simulator norm error {norm_err:.1e}, min chi-square p {min(pvalues):.3f}, "
                      f"max |sum dq| {grad_sum:.1e}, {elapsed:.2f} s")
    assert norm_err < 1e-10
    assert min(pvalues) > 0.001
    assert grad_sum < 1e-10
    assert elapsed < 10.0


RUNS = [
    ["sprinkler", "--method", "kl", "--epochs", "5", "--instances", "3"],
    ["sprinkler", "--method", "ksd", "--epochs", "5", "--instances", "3"],
    ["hmm", "--epochs", "3"],
    ["lungcancer", "--epochs", "3", "--shots", "128", "--samples-per-class", "128"],
]


def test_criterion_9_cli_determinism(acceptance, tmp_path):
    mismatched = []
    for k, argv in enumerate(RUNS):
        outputs = []
        for rerun in range(2):
            out = tmp_path / f"{k}_{rerun}"
            proc = subprocess.run([sys.executable, "-m", "bornvi", *argv, "--seed", "11", "--out", str(out)],
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix == ".csv"})
        if not outputs[0] or outputs[0] != outputs[1]:
            mismatched.append(argv[0])
    ok = not mismatched
    acceptance(9, ok, f"CLI reruns byte-identical for {len(RUNS) - len(mismatched)}/{len(RUNS)} commands")
    assert not mismatched
