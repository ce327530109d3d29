"""Baselines, random instances, and the three experiment runners.

Each runner returns an :class:`ExperimentResult` and, given an output
directory, writes per-instance epoch CSVs, histogram CSVs and a
``summary.json``. Output files contain no timing unless asked for, so runs
with the same seed are byte-identical.
"""
from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import _random
from .advkl import KSD_LOG_COLUMNS, LOG_COLUMNS, AdvConfig, write_log_csv
from .advkl import train as train_kl
from .bayesnet import EvidenceModel, HmmModel, bundled_path, exact_posterior, load_bundled, load_network
from .bornmachine import ANGLE_ENCODING, HADAMARD_PREP, AnsatzSpec, exact_distribution, init_machine, sample
from .ksd import KsdConfig, train_ksd
from .metrics import tvd
from .statevector import all_bitstrings, bits_to_index, index_to_bits

log = logging.getLogger(__name__)

FACTORIZED_MAX_N = 5
FACTORIZED_MAX_POINTS = 2 * 10**8
N_INSTANCES = 30
SPRINKLER_EVIDENCE = {"W": 1}
LUNG_EVIDENCE = {"X": 0, "D": 0, "I": 1}


# -- metrics and baselines ------------------------------------------------------

def product_distribution(marginals):
    """Joint of independent bits with ``p(z_k = 1) = marginals[k]``, basis-index order."""
    m = np.asarray(marginals, dtype=float)
    bits = all_bitstrings(m.size)
    return np.prod(np.where(bits == 1, m, 1.0 - m), axis=1)


def best_factorized(posterior, grid_step=0.01):
    """Exhaustive grid search for the product distribution closest in TVD.

    Each marginal ``q_k(z_k = 1)`` ranges over ``0, step, ..., 1``. Ties go
    to the lexicographically smallest marginal vector. Returns
    ``(marginals, tvd)``.
    """
    posterior = np.asarray(posterior, dtype=float)
    n = int(np.log2(posterior.size))
    if posterior.size != 1 << n:
        raise ValueError("posterior length must be a power of two")
    if n > FACTORIZED_MAX_N:
        raise ValueError(f"factorized search is capped at {FACTORIZED_MAX_N} variables")
    grid = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    g = grid.size
    if g**n > FACTORIZED_MAX_POINTS:
        raise ValueError(f"{g}**{n} grid points exceeds the search cap")
    bits = all_bitstrings(n)
    # factor tables: fac[k][i, z] = q_k(z_k) at grid value i
    fac = [np.where(bits[:, k] == 1, grid[:, None], 1.0 - grid[:, None]) for k in range(n)]
    best_val, best_params = np.inf, None
    lead = max(n - 2, 0)
    tail = n - lead
    for prefix in itertools.product(range(g), repeat=lead):
        w = np.ones(posterior.size)
        for k, i in enumerate(prefix):
            w = w * fac[k][i]
        q = w
        for k in range(lead, n):
            q = q[..., None, :] * fac[k].reshape((1,) * (k - lead) + fac[k].shape)
        dist = 0.5 * np.abs(q - posterior).sum(axis=-1)
        flat = int(np.argmin(dist))
        if dist.flat[flat] < best_val:
            best_val = float(dist.flat[flat])
            best_params = (*prefix, *np.unravel_index(flat, (g,) * tail))
    return grid[list(best_params)], best_val


def bootstrap_median_ci(values, seed, n_resamples=10_000, level=0.68):
    """Percentile bootstrap interval for the median."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.all(values == values[0]):
        v = float(np.median(values))
        return v, v
    res = stats.bootstrap(
        (values,), np.median, n_resamples=n_resamples, confidence_level=level,
        method="percentile", random_state=_random.stream(seed, _random.BOOTSTRAP),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def histogram_rows(p_true, q_learned, top=None):
    """Rows ``(basis_index, bitstring, p_true, q_learned)`` sorted by ``p_true`` descending."""
    p_true = np.asarray(p_true, dtype=float)
    n = int(np.log2(p_true.size))
    order = sorted(range(p_true.size), key=lambda i: (-p_true[i], i))
    if top is not None:
        order = order[:top]
    return [
        (i, "".join(map(str, index_to_bits(i, n))), float(p_true[i]), float(q_learned[i]))
        for i in order
    ]


def write_histogram_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("basis_index,bitstring,p_true,q_learned\n")
        for i, b, p, q in rows:
            fh.write(f"{i},{b},{p!r},{q!r}\n")


# -- instances -------------------------------------------------------------------

@dataclass
class SprinklerInstance:
    index: int
    net: object
    model: EvidenceModel
    x: np.ndarray
    posterior: np.ndarray


def random_sprinkler(seed, low=0.01, high=0.99, template=None):
    """Sprinkler network with every ``p(node = true | parents)`` drawn from ``U(low, high)``.

    ``template`` is an optional :class:`BayesNet` whose structure is reused
    in place of the bundled sprinkler network.
    """
    rng = _random.stream(seed)
    doc = (template if template is not None else load_bundled("sprinkler")).to_dict()
    for nd in doc["nodes"]:
        nd["cpt"] = [float(v) for v in rng.uniform(low, high, len(nd["cpt"]))]
    return load_network(doc)


def sprinkler_instances(seed, count=N_INSTANCES, template=None):
    out = []
    for i in range(count):
        net = random_sprinkler(_random.child_seed(seed, _random.INSTANCE, i), template=template)
        model, x = EvidenceModel.from_evidence(net, SPRINKLER_EVIDENCE)
        out.append(SprinklerInstance(i, net, model, x, exact_posterior(model, x)))
    return out


# -- results ---------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: dict
    logs: list = field(default_factory=list)  # one EpochLog list per instance
    final_tvd: list = field(default_factory=list)
    baseline_tvd: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    ci_seed: int = 0
    histograms: list = field(default_factory=list)

    @property
    def median_tvd_final(self):
        return float(np.median(self.final_tvd))

    @property
    def median_tvd_initial(self):
        return float(np.median([lg[0].tvd for lg in self.logs]))

    @property
    def baseline_median_tvd(self):
        return float(np.median(self.baseline_tvd)) if self.baseline_tvd else None

    def median_curve(self):
        """Median TVD per epoch across instances."""
        return np.median(np.array([[r.tvd for r in lg] for lg in self.logs]), axis=0)

    def summary(self):
        lo, hi = bootstrap_median_ci(self.final_tvd, self.ci_seed)
        return {
            "config": self.config,
            "median_tvd_final": self.median_tvd_final,
            "ci68": [lo, hi],
            "baseline_median_tvd": self.baseline_median_tvd,
            "median_tvd_initial": self.median_tvd_initial,
            "per_instance": [
                {
                    "instance": i,
                    "tvd_initial": lg[0].tvd,
                    "tvd_final": t,
                    **({"baseline_tvd": self.baseline_tvd[i]} if self.baseline_tvd else {}),
                }
                for i, (lg, t) in enumerate(zip(self.logs, self.final_tvd))
            ],
            **self.extras,
        }


def _write_summary(out, doc):
    Path(out, "summary.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- sprinkler ---------------------------------------------------------------------

def _sprinkler_job(args):
    method, layers, cfg, inst_seed, index, init_scale, template = args
    inst = sprinkler_instances(inst_seed, index + 1, template)[index]
    machine = init_machine(
        AnsatzSpec(inst.model.n_latent, layers, HADAMARD_PREP), _random.child_seed(cfg.seed, _random.INIT, index), init_scale
    )
    cfg = replace(cfg, seed=_random.child_seed(cfg.seed, _random.TRAIN, index))
    if method == "kl":
        _, logs = train_kl(machine, inst.model, [inst.x], cfg)
    else:
        _, logs = train_ksd(machine, inst.model, [inst.x], cfg)
    return logs


def run_sprinkler(method, layers, config, n_instances=N_INSTANCES, jobs=1, out=None,
                  baseline=True, init_scale=None, template=None):
    """Train one machine per random sprinkler instance conditioned on ``W = true``.

    ``config`` is an :class:`AdvConfig` (``method="kl"``) or
    :class:`KsdConfig` (``method="ksd"``). Instances depend only on
    ``config.seed`` and their index, so runs with different ``layers`` see
    the same networks.
    """
    if method not in ("kl", "ksd"):
        raise ValueError("method must be 'kl' or 'ksd'")
    init_scale = config.init_scale if init_scale is None else init_scale
    inst_seed = _random.child_seed(config.seed, _random.INSTANCE)
    instances = sprinkler_instances(inst_seed, n_instances, template)
    tasks = [(method, layers, config, inst_seed, i, init_scale, template) for i in range(n_instances)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            all_logs = list(ex.map(_sprinkler_job, tasks))
    else:
        all_logs = [_sprinkler_job(t) for t in tasks]
    res = ExperimentResult(
        config={"experiment": "sprinkler", "method": method, "layers": layers, "instances": n_instances, **asdict(config)},
        logs=all_logs,
        final_tvd=[lg[-1].tvd for lg in all_logs],
        ci_seed=config.seed,
    )
    if baseline:
        res.baseline_tvd = [best_factorized(inst.posterior)[1] for inst in instances]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        cols = LOG_COLUMNS if method == "kl" else KSD_LOG_COLUMNS
        for i, lg in enumerate(all_logs):
            write_log_csv(out / f"instance_{i:02d}.csv", lg, cols)
        _write_summary(out, res.summary())
    return res


# -- hidden Markov model -------------------------------------------------------------

HMM_CONFIG = AdvConfig(epochs=3000, lr_born=0.006, lr_mlp=0.03, hidden=24)
HMM_LAYERS = 2
HMM_TOP = 10
PREDICTION_SHOTS = 1000


def hmm_observations(model, seed, count=2):
    """``count`` observation sequences drawn from the HMM joint."""
    return [model.sample(_random.child_seed(seed, _random.DATA, k))[0] for k in range(count)]


def next_latent_estimate(model, machine, x, shots, seed):
    """Monte Carlo estimate of ``E_{z_T ~ q} E_{z_{T+1} ~ p(.|z_T)}[z_{T+1}]``."""
    z = sample(machine, x, shots, seed)
    return float(np.mean(np.array(model.p_on)[z[:, -1]]))


def _mode_bits(dist, n):
    return index_to_bits(int(np.argmax(dist)), n)


def run_hmm(config=None, layers=HMM_LAYERS, out=None, data_seed=None, model=None):
    """Train one amortized machine on two sampled HMM observations.

    The observations depend on ``data_seed`` (default ``config.seed``) so a
    run can be reseeded without changing the data.
    """
    config = HMM_CONFIG if config is None else config
    model = HmmModel.from_json(bundled_path("hmm")) if model is None else model
    data_seed = config.seed if data_seed is None else data_seed
    data = hmm_observations(model, data_seed)
    n = model.n_latent
    machine = init_machine(AnsatzSpec(n, layers, ANGLE_ENCODING), _random.child_seed(config.seed, _random.INIT), config.init_scale)
    machine, logs = train_kl(machine, model, data, config)

    posteriors = [exact_posterior(model, x) for x in data]
    learned = [exact_distribution(machine, x) for x in data]
    observations = []
    for k, (x, p, q) in enumerate(zip(data, posteriors, learned)):
        true_mode, mode = _mode_bits(p, n), _mode_bits(q, n)
        observations.append({
            "x": [float(v) for v in x],
            "true_mode": "".join(map(str, true_mode)),
            "learned_mode": "".join(map(str, mode)),
            "mode_distance": int(np.count_nonzero(true_mode != mode)),
            "tvd": tvd(p, q),
            "next_latent_estimate": next_latent_estimate(
                model, machine, x, PREDICTION_SHOTS, _random.child_seed(config.seed, _random.LOSS, k)
            ),
            "next_latent_true": float(p @ np.array(model.p_on)[all_bitstrings(n)[:, -1]]),
        })
    res = ExperimentResult(
        config={"experiment": "hmm", "layers": layers, "data_seed": data_seed, **asdict(config)},
        logs=[logs],
        final_tvd=[logs[-1].tvd],
        extras={"observations": observations, "theta": [float(t) for t in machine.theta]},
        ci_seed=config.seed,
    )
    res.histograms = [histogram_rows(p, q, HMM_TOP) for p, q in zip(posteriors, learned)]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_log_csv(out / "train.csv", logs, LOG_COLUMNS)
        for k, rows in enumerate(res.histograms, start=1):
            write_histogram_csv(out / f"histogram_x{k}.csv", rows)
        _write_summary(out, res.summary())
    return res


# -- lung cancer -----------------------------------------------------------------------

LUNG_CONFIG = AdvConfig(epochs=400, lr_born=0.006, lr_mlp=0.03, hidden=10, shots_born=1024, samples_per_class=1024)
LUNG_LAYERS = 2


def top_k_overlap(p, q, k=4):
    """Number of shared outcomes among the ``k`` most probable under each distribution."""
    top = lambda d: set(sorted(range(len(d)), key=lambda i: (-d[i], i))[:k])
    return len(top(np.asarray(p)) & top(np.asarray(q)))


def run_lungcancer(config=None, layers=LUNG_LAYERS, out=None, network=None, evidence=None):
    """Train a Born machine on the lung-cancer posterior given the evidence."""
    config = LUNG_CONFIG if config is None else config
    net = load_bundled("lung_cancer") if network is None else network
    evidence = LUNG_EVIDENCE if evidence is None else evidence
    model, x = EvidenceModel.from_evidence(net, evidence)
    machine = init_machine(
        AnsatzSpec(model.n_latent, layers, HADAMARD_PREP), _random.child_seed(config.seed, _random.INIT), config.init_scale
    )
    machine, logs = train_kl(machine, model, [x], config)
    p = exact_posterior(model, x)
    q = exact_distribution(machine, x)
    res = ExperimentResult(
        config={"experiment": "lungcancer", "layers": layers, "evidence": dict(evidence), **asdict(config)},
        logs=[logs],
        final_tvd=[tvd(p, q)],
        extras={
            "latent_names": list(model.latent_names),
            "top4_overlap": top_k_overlap(p, q, 4),
            "theta": [float(t) for t in machine.theta],
        },
        ci_seed=config.seed,
    )
    res.histograms = [histogram_rows(p, q)]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_log_csv(out / "train.csv", logs, LOG_COLUMNS)
        write_histogram_csv(out / "histogram.csv", res.histograms[0])
        _write_summary(out, res.summary())
    return res
