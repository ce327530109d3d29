"""Adversarial (prior-contrastive KL) training of Born machines.

Each epoch alternates two steps:

1. fresh samples from the Born machine joint ``q(z|x) p_D(x)`` and from the
   prior joint ``p(z) p_D(x)`` train the classifier for one pass;
2. every angle takes one plain gradient-descent step on
   ``E_x E_{z~q}[logit d(z, x) - log p(x|z)]`` with the classifier held
   fixed, using parameter-shifted circuits.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import _random
from .bayesnet import exact_posterior
from .bornmachine import distributions, exact_distribution, save_checkpoint, shifted_distributions, shifted_machines
from .classifier import ideal_objective, init_mlp, logit, objective, train_pass
from .metrics import tvd
from .statevector import all_bitstrings, bits_to_index, index_to_bits, sample_indices

log = logging.getLogger(__name__)

DIAGNOSTIC_CAP = 12


@dataclass
class AdvConfig:
    epochs: int = 1000
    lr_born: float = 0.003
    lr_mlp: float = 0.03
    shots_born: int = 100
    samples_per_class: int = 100
    minibatch: int = 10
    hidden: int = 6
    seed: int = 0
    use_exact_expectations: bool = False
    init_scale: float = 0.01
    diagnostics: bool = True
    record_timing: bool = False

    def __post_init__(self):
        for name in ("lr_born", "lr_mlp", "shots_born", "samples_per_class", "minibatch", "hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class EpochLog:
    epoch: int
    born_loss: float | None = None
    mlp_objective: float | None = None
    ideal_mlp_objective: float | None = None
    tvd: float | None = None
    wall_time_ms: float | None = None
    ksd: float | None = None


LOG_COLUMNS = ("epoch", "born_loss", "mlp_objective", "ideal_mlp_objective", "tvd", "wall_time_ms")
KSD_LOG_COLUMNS = LOG_COLUMNS + ("ksd",)


def write_log_csv(path, logs, columns=LOG_COLUMNS):
    """Write epoch records; missing values become empty cells, floats use ``repr``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in logs:
            row = asdict(rec)
            w.writerow(["" if row[c] is None else repr(row[c]) for c in columns])


def read_log_csv(path):
    out = []
    names = {f.name for f in fields(EpochLog)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {k: (None if v == "" else float(v)) for k, v in row.items() if k in names}
            kw["epoch"] = int(kw["epoch"])
            out.append(EpochLog(**kw))
    return out


# -- objective pieces ----------------------------------------------------------

def classifier_inputs(z, x, include_x):
    """Classifier features: ``z`` alone, or ``z`` followed by ``x``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if not include_x:
        return z
    return np.concatenate([z, np.broadcast_to(np.asarray(x, dtype=float), (z.shape[0], len(x)))], axis=1)


def _includes_x(mlp, model):
    if mlp.in_dim == model.n_latent:
        return False
    if mlp.in_dim == model.n_latent + model.observation_dim:
        return True
    raise ValueError("classifier input size matches neither z nor z+x")


def integrand(model, mlp, x, idx):
    """``logit d(z, x) - log p(x|z)`` at basis indices ``idx``."""
    idx = np.asarray(idx)
    uniq, inv = np.unique(idx, return_inverse=True)
    z = index_to_bits(uniq, model.n_latent)
    vals = logit(mlp, classifier_inputs(z, x, _includes_x(mlp, model))) - np.asarray(
        model.log_likelihood(x, z), dtype=float
    )
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite log-likelihood")
    return vals[inv].reshape(idx.shape)


def _all_values(model, mlp, x):
    return integrand(model, mlp, x, np.arange(1 << model.n_latent))


def born_loss(machine, model, mlp, dataset, shots, seed, exact=False):
    """Estimate of ``E_x E_{z~q(z|x)}[logit d(z, x) - log p(x|z)]``."""
    total = 0.0
    for k, x in enumerate(dataset):
        q = exact_distribution(machine, x)
        if exact:
            total += float(q @ _all_values(model, mlp, x))
        else:
            idx = sample_indices(q, shots, _random.stream(seed, _random.LOSS, k))
            total += float(integrand(model, mlp, x, idx).mean())
    return total / len(dataset)


def _gradient_from_shifts(model, mlp, x, plus, minus, shots, rng, exact):
    # plus/minus: (P, D) shifted distributions
    if exact:
        f = _all_values(model, mlp, x)
        return 0.5 * (plus - minus) @ f
    idx = sample_indices(np.concatenate([plus, minus]), shots, rng)
    f = integrand(model, mlp, x, idx).mean(axis=1)
    p = plus.shape[0]
    return 0.5 * (f[:p] - f[p:])


def born_gradients(machine, model, mlp, dataset, shots, seed, exact=False, shifted=None):
    """Parameter-shift gradient of the Born-machine loss for every angle.

    The classifier is held fixed; shifted distributions for both signs of
    every parameter come from one batched simulation per observation.
    """
    grad = np.zeros(machine.spec.n_params)
    for k, x in enumerate(dataset):
        _, plus, minus = shifted[k] if shifted is not None else shifted_distributions(machine, x)
        rng = _random.stream(seed, _random.BORN, k)
        grad += _gradient_from_shifts(model, mlp, x, plus, minus, shots, rng, exact)
    return grad / len(dataset)


def born_gradient(machine, model, mlp, dataset, j, shots, seeds, exact=False):
    """Gradient for parameter ``j`` alone: ``0.5 * (E_{q+}[f] - E_{q-}[f])`` averaged over ``x``."""
    plus_m, minus_m = shifted_machines(machine, j)
    total = 0.0
    for k, x in enumerate(dataset):
        plus = exact_distribution(plus_m, x)[None, :]
        minus = exact_distribution(minus_m, x)[None, :]
        rng = _random.stream(seeds, _random.BORN, k, j)
        total += float(_gradient_from_shifts(model, mlp, x, plus, minus, shots, rng, exact)[0])
    return total / len(dataset)


# -- training ------------------------------------------------------------------

class _Diagnostics:
    """Exact posteriors and prior for enumerable problems."""

    def __init__(self, model, dataset, enabled):
        self.enabled = enabled and model.n_latent <= DIAGNOSTIC_CAP
        if self.enabled:
            self.posteriors = [exact_posterior(model, x) for x in dataset]
            self.prior = np.exp(np.asarray(model.log_prior(all_bitstrings(model.n_latent)), dtype=float))

    def tvd(self, machine, dataset):
        if not self.enabled:
            return None
        vals = [tvd(p, distributions(machine.spec, machine.theta[None, :], x)[0]) for p, x in zip(self.posteriors, dataset)]
        return float(np.mean(vals))


def _elapsed(t0, enabled):
    return round((time.perf_counter() - t0) * 1e3, 3) if enabled else None


def train(machine, model, dataset, config, mlp=None, checkpoint=None):
    """Alternate classifier and Born-machine updates for ``config.epochs`` epochs.

    Returns the final machine and one :class:`EpochLog` per epoch, preceded
    by an epoch-0 record of the initial state. With ``checkpoint`` set, the
    parameters with the lowest estimated Born loss are saved there.
    """
    dataset = [np.asarray(x, dtype=float) for x in dataset]
    if not dataset:
        raise ValueError("dataset is empty")
    cfg = config
    include_x = len(dataset) > 1
    n = model.n_latent
    if machine.n_qubits != n:
        raise ValueError("machine width differs from the latent dimension")
    if mlp is None:
        in_dim = n + (model.observation_dim if include_x else 0)
        mlp = init_mlp(in_dim, cfg.hidden, _random.stream(cfg.seed, _random.MLP_INIT))
    diag = _Diagnostics(model, dataset, cfg.diagnostics)
    logs = [EpochLog(0, tvd=diag.tvd(machine, dataset))]
    best = (math.inf, machine, 0)
    spc = cfg.samples_per_class

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        shifted = [shifted_distributions(machine, x) for x in dataset]

        # step 1: classifier on fresh samples from both joints
        rng = _random.stream(cfg.seed, _random.CLASSIFIER, epoch)
        xq = rng.integers(len(dataset), size=spc)
        xp = rng.integers(len(dataset), size=spc)
        idx_q = np.empty(spc, dtype=np.int64)
        for k in range(len(dataset)):
            sel = np.flatnonzero(xq == k)
            if sel.size:
                idx_q[sel] = sample_indices(shifted[k][0], sel.size, rng)
        z_p = np.asarray(model.sample_prior(spc, rng), dtype=float)
        z_q = index_to_bits(idx_q, n).astype(float)
        if include_x:
            in_q = np.concatenate([z_q, np.stack([dataset[k] for k in xq])], axis=1)
            in_p = np.concatenate([z_p, np.stack([dataset[k] for k in xp])], axis=1)
        else:
            in_q, in_p = z_q, z_p
        mlp = train_pass(mlp, in_q, in_p, cfg.lr_mlp, cfg.minibatch, rng)
        rec = EpochLog(epoch, mlp_objective=objective(mlp, in_q, in_p))
        if diag.enabled and not include_x:
            rec.ideal_mlp_objective = ideal_objective(shifted[0][0], diag.prior, idx_q, bits_to_index(z_p.astype(np.int64)))

        # step 2: Born machine descent with the classifier fixed
        if cfg.use_exact_expectations:
            rec.born_loss = float(np.mean([q @ _all_values(model, mlp, x) for (q, _, _), x in zip(shifted, dataset)]))
        else:
            vals = np.concatenate([integrand(model, mlp, dataset[k], idx_q[xq == k]) for k in range(len(dataset))])
            rec.born_loss = float(vals.mean())
        if rec.born_loss < best[0]:
            best = (rec.born_loss, machine, epoch - 1)
        grad = born_gradients(
            machine, model, mlp, dataset, cfg.shots_born, _random.child_seed(cfg.seed, _random.BORN, epoch),
            exact=cfg.use_exact_expectations, shifted=shifted,
        )
        machine = machine.with_theta(machine.theta - cfg.lr_born * grad)
        rec.tvd = diag.tvd(machine, dataset)
        rec.wall_time_ms = _elapsed(t0, cfg.record_timing)
        logs.append(rec)

    if checkpoint is not None:
        save_checkpoint(checkpoint, best[1], cfg.seed, best[2])
    return machine, logs
