"""One-hidden-layer ReLU classifier with a sigmoid output.

The classifier separates Born-machine samples (label 1) from prior samples
(label 0). Its logit estimates ``log q(z|x) / p(z)``. Training is plain
minibatch gradient ascent on the mean cross-entropy log-likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._random import stream
from .statevector import bits_to_index

CLASS_Q = 1
CLASS_P = 0


@dataclass(frozen=True, eq=False)
class Mlp:
    w1: np.ndarray  # (in_dim, hidden_dim)
    b1: np.ndarray  # (hidden_dim,)
    w2: np.ndarray  # (hidden_dim,)
    b2: float

    @property
    def in_dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    def params(self):
        """All weights as one flat vector ``phi``."""
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def from_params(cls, in_dim, hidden_dim, phi):
        phi = np.asarray(phi, dtype=float)
        a = in_dim * hidden_dim
        if phi.size != a + 2 * hidden_dim + 1:
            raise ValueError("parameter vector has the wrong length")
        return cls(
            phi[:a].reshape(in_dim, hidden_dim).copy(),
            phi[a : a + hidden_dim].copy(),
            phi[a + hidden_dim : a + 2 * hidden_dim].copy(),
            float(phi[-1]),
        )


@dataclass
class LabeledBatch:
    inputs: np.ndarray  # (m, in_dim)
    labels: np.ndarray  # (m,), CLASS_Q or CLASS_P

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels differ in length")


def init_mlp(in_dim, hidden_dim, seed):
    """He-scaled hidden weights, ``1/sqrt(hidden)`` output weights, zero biases."""
    rng = stream(seed)
    w1 = rng.standard_normal((in_dim, hidden_dim)) * np.sqrt(2.0 / in_dim)
    w2 = rng.standard_normal(hidden_dim) * np.sqrt(1.0 / hidden_dim)
    return Mlp(w1, np.zeros(hidden_dim), w2, 0.0)


def _inputs(mlp, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != mlp.in_dim:
        raise ValueError(f"input length {x.shape[-1]} does not match in_dim {mlp.in_dim}")
    return x


def logit(mlp, inputs):
    """Pre-sigmoid output, i.e. ``log d / (1 - d)`` without the round trip."""
    if isinstance(mlp, IdealClassifier):
        return mlp.logit(inputs)
    x = _inputs(mlp, inputs)
    h = np.maximum(x @ mlp.w1 + mlp.b1, 0.0)
    return h @ mlp.w2 + mlp.b2


def forward(mlp, inputs):
    """Class-q probability ``d(input)``; one value per input row."""
    return expit(logit(mlp, inputs))


def _log_sigmoid(a):
    return -np.logaddexp(0.0, -a)


def log_likelihood(mlp, batch):
    """Mean ``y log d + (1 - y) log(1 - d)`` over the batch."""
    a = logit(mlp, batch.inputs)
    y = batch.labels
    return float(np.mean(y * _log_sigmoid(a) + (1.0 - y) * _log_sigmoid(-a)))


def objective(mlp, inputs_q, inputs_p):
    """Empirical ``E_q[log d] + E_p[log(1 - d)]``."""
    return float(np.mean(_log_sigmoid(logit(mlp, inputs_q))) + np.mean(_log_sigmoid(-logit(mlp, inputs_p))))


def gradient(mlp, batch):
    """Backpropagated gradient of :func:`log_likelihood`, as an :class:`Mlp` of arrays."""
    x = _inputs(mlp, batch.inputs)
    pre = x @ mlp.w1 + mlp.b1
    h = np.maximum(pre, 0.0)
    a = h @ mlp.w2 + mlp.b2
    g_a = (batch.labels - expit(a)) / x.shape[0]
    g_h = np.outer(g_a, mlp.w2) * (pre > 0.0)
    return Mlp(x.T @ g_h, g_h.sum(axis=0), h.T @ g_a, float(g_a.sum()))


def train_step(mlp, batch, lr):
    """One ascent step of size ``lr``; returns the updated classifier."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    g = gradient(mlp, batch)
    return Mlp(mlp.w1 + lr * g.w1, mlp.b1 + lr * g.b1, mlp.w2 + lr * g.w2, mlp.b2 + lr * g.b2)


def train_pass(mlp, inputs_q, inputs_p, lr, batch_size, rng):
    """One shuffled pass over both classes in minibatches of ``batch_size``."""
    inputs = np.concatenate([inputs_q, inputs_p]).astype(float)
    labels = np.concatenate([np.full(len(inputs_q), CLASS_Q), np.full(len(inputs_p), CLASS_P)]).astype(float)
    order = stream(rng).permutation(len(labels))
    for start in range(0, len(order), batch_size):
        sel = order[start : start + batch_size]
        mlp = train_step(mlp, LabeledBatch(inputs[sel], labels[sel]), lr)
    return mlp


class IdealClassifier:
    """The optimal classifier for fixed distributions ``q`` and ``p`` over ``z``.

    Its logit is ``log q(z) - log p(z)``, read off the first ``n`` input
    columns. It can stand in for an :class:`Mlp` wherever only logits are
    needed, which makes exact-gradient checks possible.
    """

    def __init__(self, q, p, in_dim=None):
        self.q = np.asarray(q, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.n = int(np.log2(self.q.size))
        self.in_dim = self.n if in_dim is None else in_dim

    def logit(self, inputs):
        z = np.atleast_2d(np.asarray(inputs))[:, : self.n].astype(np.int64)
        idx = bits_to_index(z)
        with np.errstate(divide="ignore"):
            return np.log(self.q[idx]) - np.log(self.p[idx])


def ideal_classifier_value(q, p, z):
    """Optimal classifier output ``q(z) / (q(z) + p(z))`` for exact distributions."""
    idx = int(bits_to_index(np.asarray(z)))
    total = q[idx] + p[idx]
    if total <= 0:
        raise ValueError("q(z) and p(z) are both zero")
    return float(q[idx] / total)


def ideal_objective(q, p, idx_q, idx_p):
    """Cross-entropy objective of the optimal classifier on sampled basis indices."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    d_q = q[idx_q] / (q[idx_q] + p[idx_q])
    d_p = q[idx_p] / (q[idx_p] + p[idx_p])
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log(d_q)) + np.mean(np.log1p(-d_p)))
