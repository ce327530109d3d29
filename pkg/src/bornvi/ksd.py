"""Kernelized Stein discrepancy training of Born machines.

The base kernel is the Hamming kernel ``exp(-|z - z'|_1 / n)``. The Stein
kernel combines it with the difference score of the joint, so the
discrepancy needs only samples of ``q`` and evaluations of ``p(x, z)``.

Sampled expectations are computed from count vectors over the distinct
outcomes seen in an epoch: a pairwise average over two sample sets is
``c_a @ K @ c_b / (m_a m_b)`` and the U-statistic drops the diagonal.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _backend, _random
from .advkl import EpochLog, _Diagnostics, _elapsed
from .bayesnet import difference_score, flip_stack
from .bornmachine import exact_distribution, shifted_distributions, shifted_machines
from .statevector import all_bitstrings, bits_to_index, index_to_bits, sample_indices

log = logging.getLogger(__name__)

EPS_DEN = 1e-8


@dataclass
class KsdConfig:
    epochs: int = 1000
    lr_born: float = 0.003
    shots_born: int = 100
    seed: int = 0
    use_exact_expectations: bool = False
    eps_den: float = EPS_DEN
    init_scale: float = 0.01
    diagnostics: bool = True
    record_timing: bool = False

    def __post_init__(self):
        if self.lr_born <= 0 or self.shots_born < 2:
            raise ValueError("lr_born must be positive and shots_born at least 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def hamming_kernel(z, z2, n=None):
    """``exp(-H(z, z2) / n)`` with ``H`` the number of differing bits."""
    z = np.asarray(z)
    z2 = np.asarray(z2)
    if z.shape != z2.shape:
        raise ValueError("bit vectors differ in length")
    n = z.shape[-1] if n is None else n
    return float(np.exp(-np.count_nonzero(z != z2) / n))


def stein_operator(model, x, f):
    """Apply the discrete Stein operator to a vector-valued test function.

    ``f`` is a table of shape ``(2**n, n)`` holding ``f(z)`` in basis-index
    order. Returns ``s(z).f(z) - sum_i [f_i(z) - f_i(flip_i z)]`` for every
    ``z``; its expectation under the posterior is zero for any ``f``.
    """
    n = model.n_latent
    f = np.asarray(f, dtype=float)
    if f.shape != (1 << n, n):
        raise ValueError(f"test function table must have shape {(1 << n, n)}")
    z = all_bitstrings(n)
    scores = difference_score(model, x, z)
    cols = np.arange(n)
    flipped = f[bits_to_index(flip_stack(z)).reshape(-1, n), cols]
    return np.einsum("zi,zi->z", scores, f) - (f - flipped).sum(axis=1)


def _flip(z, i):
    out = np.array(z, dtype=np.int64)
    out[i] ^= 1
    return out


def stein_kernel(model, x, z, z2):
    """Stein kernel for one pair, written term by term.

    ``s(z).s(z2) k - s(z).D_{z2} k - D_z k.s(z2) + tr(D_{z,z2} k)`` where
    ``D_z k`` is the vector of partial differences ``k(z, .) - k(flip_i z, .)``.
    This direct form is slow; training uses :func:`stein_matrix`.
    """
    z = np.asarray(z, dtype=np.int64)
    z2 = np.asarray(z2, dtype=np.int64)
    n = z.size
    s1 = difference_score(model, x, z)
    s2 = difference_score(model, x, z2)
    k = hamming_kernel(z, z2, n)
    dz = np.array([k - hamming_kernel(_flip(z, i), z2, n) for i in range(n)])
    dz2 = np.array([k - hamming_kernel(z, _flip(z2, i), n) for i in range(n)])
    trace = sum(
        k
        - hamming_kernel(_flip(z, i), z2, n)
        - hamming_kernel(z, _flip(z2, i), n)
        + hamming_kernel(_flip(z, i), _flip(z2, i), n)
        for i in range(n)
    )
    return float(s1 @ s2 * k - s1 @ dz2 - dz @ s2 + trace)


class SteinKernelCache:
    """Difference scores for one observation, cached by basis index."""

    def __init__(self, model, x):
        self.model = model
        self.x = x
        self.n = model.n_latent
        self._scores = {}

    def scores(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        missing = [int(i) for i in np.unique(idx) if int(i) not in self._scores]
        if missing:
            new = difference_score(self.model, self.x, index_to_bits(np.array(missing), self.n))
            for i, s in zip(missing, np.atleast_2d(new)):
                self._scores[i] = s
        return np.array([self._scores[int(i)] for i in idx]).reshape(len(idx), self.n)

    def matrix(self, idx_a, idx_b=None):
        """Stein kernel matrix between two index lists."""
        idx_b = idx_a if idx_b is None else idx_b
        za = index_to_bits(np.asarray(idx_a), self.n)
        zb = index_to_bits(np.asarray(idx_b), self.n)
        return _backend.stein_gram(za, np.ascontiguousarray(self.scores(idx_a)), zb, np.ascontiguousarray(self.scores(idx_b)))


def stein_matrix(model, x):
    """Full ``(2**n, 2**n)`` Stein kernel matrix over every latent configuration."""
    cache = SteinKernelCache(model, x)
    idx = np.arange(1 << model.n_latent)
    return cache.matrix(idx)


def ksd_inner_exact(q, model, x, kappa=None):
    """``sum_{z, z'} q(z) q(z') kappa(z, z')`` by enumeration."""
    kappa = stein_matrix(model, x) if kappa is None else kappa
    q = np.asarray(q, dtype=float)
    return float(q @ kappa @ q)


class _Pool:
    """Sample sets drawn in one epoch for one observation, kernel on their union."""

    def __init__(self, cache, sets):
        self.sets = sets
        allidx = np.concatenate([s.ravel() for s in sets])
        self.uniq, inv = np.unique(allidx, return_inverse=True)
        self.kappa = cache.matrix(self.uniq)
        self.counts = []
        start = 0
        for s in sets:
            m = s.size
            self.counts.append(np.bincount(inv[start : start + m], minlength=self.uniq.size).astype(float))
            start += m

    def ustat(self, a):
        c = self.counts[a]
        m = c.sum()
        return float((c @ self.kappa @ c - c @ np.diag(self.kappa)) / (m * (m - 1)))

    def cross(self, a, b):
        ca, cb = self.counts[a], self.counts[b]
        return float(ca @ self.kappa @ cb / (ca.sum() * cb.sum()))


def ksd_estimate(machine, model, x, shots, seed, exact=False, cache=None):
    """Kernelized Stein discrepancy of ``q(.|x)`` from the posterior.

    Exact mode enumerates; sampled mode uses the U-statistic over distinct
    sample pairs, clamped at zero before the square root.
    """
    q = exact_distribution(machine, x)
    if exact:
        inner = ksd_inner_exact(q, model, x)
    else:
        if shots < 2:
            raise ValueError("sampled KSD needs at least two shots")
        cache = SteinKernelCache(model, x) if cache is None else cache
        idx = sample_indices(q, shots, _random.stream(seed))
        inner = _Pool(cache, [idx]).ustat(0)
    return math.sqrt(max(inner, 0.0))


def _four_terms(q, plus, minus, kappa):
    # E_{q,q+} - E_{q,q-} + E_{q+,q} - E_{q-,q}, exact, for every parameter
    return plus @ kappa @ q - minus @ kappa @ q + (q @ kappa @ plus.T) - (q @ kappa @ minus.T)


def _x_gradient(model, x, shifted, shots, rng, exact, eps_den, cache):
    """Gradient contribution of one observation for all parameters, and its KSD."""
    q, plus, minus = shifted
    p = plus.shape[0]
    if exact:
        kappa = stein_matrix(model, x) if cache is None else cache.matrix(np.arange(q.size))
        inner = float(q @ kappa @ q)
        bracket = _four_terms(q, plus, minus, kappa)
    else:
        # rows: q (denominator), then per parameter q, q+, q, q-, q+, q, q-, q
        rows = [q[None, :]]
        for j in range(p):
            rows.append(np.stack([q, plus[j], q, minus[j], plus[j], q, minus[j], q]))
        idx = sample_indices(np.concatenate(rows), shots, rng)
        pool = _Pool(cache, list(idx))
        inner = pool.ustat(0)
        bracket = np.array([
            pool.cross(1 + 8 * j, 2 + 8 * j) - pool.cross(3 + 8 * j, 4 + 8 * j)
            + pool.cross(5 + 8 * j, 6 + 8 * j) - pool.cross(7 + 8 * j, 8 + 8 * j)
            for j in range(p)
        ])
    ksd = math.sqrt(max(inner, 0.0))
    if ksd < eps_den:
        log.warning("KSD %.3g below the denominator guard; gradient set to zero", ksd)
        return np.zeros(p), ksd
    return 0.25 * bracket / ksd, ksd


def ksd_gradients(machine, model, dataset, shots, seed, exact=False, eps_den=EPS_DEN, caches=None):
    """Gradient of the dataset-averaged KSD for every parameter; returns ``(grad, mean_ksd)``."""
    grad = np.zeros(machine.spec.n_params)
    total = 0.0
    for k, x in enumerate(dataset):
        cache = caches[k] if caches is not None else SteinKernelCache(model, x)
        g, ksd = _x_gradient(
            model, x, shifted_distributions(machine, x), shots,
            _random.stream(seed, _random.BORN, k), exact, eps_den, cache,
        )
        grad += g
        total += ksd
    return grad / len(dataset), total / len(dataset)


def ksd_gradient(machine, model, dataset, j, shots, seeds, exact=False, eps_den=EPS_DEN):
    """Gradient of the KSD objective with respect to parameter ``j`` alone."""
    plus_m, minus_m = shifted_machines(machine, j)
    total = 0.0
    for k, x in enumerate(dataset):
        shifted = (
            exact_distribution(machine, x),
            exact_distribution(plus_m, x)[None, :],
            exact_distribution(minus_m, x)[None, :],
        )
        g, _ = _x_gradient(
            model, x, shifted, shots, _random.stream(seeds, _random.BORN, k, j), exact, eps_den,
            SteinKernelCache(model, x),
        )
        total += float(g[0])
    return total / len(dataset)


def train_ksd(machine, model, dataset, config):
    """Plain gradient descent on the KSD objective.

    Returns the final machine and per-epoch logs; the ``ksd`` column holds
    the estimate at the parameters before that epoch's update.
    """
    dataset = [np.asarray(x, dtype=float) for x in dataset]
    if not dataset:
        raise ValueError("dataset is empty")
    cfg = config
    if machine.n_qubits != model.n_latent:
        raise ValueError("machine width differs from the latent dimension")
    caches = [SteinKernelCache(model, x) for x in dataset]
    diag = _Diagnostics(model, dataset, cfg.diagnostics)
    logs = [EpochLog(0, tvd=diag.tvd(machine, dataset))]
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        grad, ksd = ksd_gradients(
            machine, model, dataset, cfg.shots_born, _random.child_seed(cfg.seed, _random.BORN, epoch),
            exact=cfg.use_exact_expectations, eps_den=cfg.eps_den, caches=caches,
        )
        machine = machine.with_theta(machine.theta - cfg.lr_born * grad)
        logs.append(EpochLog(epoch, tvd=diag.tvd(machine, dataset), ksd=ksd, wall_time_ms=_elapsed(t0, cfg.record_timing)))
    return machine, logs
