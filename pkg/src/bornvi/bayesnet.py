"""Binary Bayesian networks, the Gaussian-emission HMM, and exact enumeration.

Everything is computed in log space. Latent configurations are bit arrays
whose basis index follows the statevector convention (first latent
variable is the most significant bit), so ``exact_posterior`` lines up
element-wise with a Born machine's ``exact_distribution``.
"""
from __future__ import annotations

import graphlib
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from ._random import stream
from .statevector import all_bitstrings, bits_to_index

ENUMERATION_CAP = 20
ROW_TOL = 1e-9


class NetworkError(ValueError):
    """Invalid network document or table."""


@dataclass(frozen=True, eq=False)
class Node:
    name: str
    parents: tuple[int, ...]
    cpt: np.ndarray  # p(node = 1 | parent assignment), big-endian parent index


class BayesNet:
    """Directed acyclic network of binary variables with tabulated CPTs.

    ``nodes`` must already be in topological order; ``load_network`` takes
    care of that for documents.
    """

    def __init__(self, nodes, name=""):
        self.name = name
        self.nodes = tuple(nodes)
        self.names = tuple(nd.name for nd in self.nodes)
        if len(set(self.names)) != len(self.names):
            raise NetworkError("duplicate node names")
        self._index = {nm: i for i, nm in enumerate(self.names)}
        for i, nd in enumerate(self.nodes):
            if any(not 0 <= p < i for p in nd.parents):
                raise NetworkError(f"node {nd.name!r}: parents must precede it (topological order)")
            cpt = np.asarray(nd.cpt, dtype=float)
            if cpt.shape != (1 << len(nd.parents),):
                raise NetworkError(f"node {nd.name!r}: expected {1 << len(nd.parents)} CPT rows")
            if not np.all((cpt > 0.0) & (cpt < 1.0)):
                raise NetworkError(f"node {nd.name!r}: CPT entries must lie strictly in (0, 1)")
        self._logp1 = [np.log(np.asarray(nd.cpt, dtype=float)) for nd in self.nodes]
        self._logp0 = [np.log1p(-np.asarray(nd.cpt, dtype=float)) for nd in self.nodes]

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"BayesNet({self.name!r}, nodes={list(self.names)})"

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no node named {name!r}") from None

    def node_log_factors(self, bits, which=None):
        """Per-node log CPT factors for full assignments ``bits`` of shape ``(m, N)``."""
        bits = np.asarray(bits, dtype=np.int64)
        which = range(len(self.nodes)) if which is None else which
        total = np.zeros(bits.shape[0])
        for i in which:
            nd = self.nodes[i]
            row = bits_to_index(bits[:, list(nd.parents)]) if nd.parents else np.zeros(bits.shape[0], dtype=np.int64)
            total += np.where(bits[:, i] == 1, self._logp1[i][row], self._logp0[i][row])
        return total

    def log_joint(self, bits):
        """Log joint probability of full assignments ``(m, N)`` (or a single row)."""
        bits = np.asarray(bits)
        single = bits.ndim == 1
        out = self.node_log_factors(np.atleast_2d(bits))
        return float(out[0]) if single else out

    def to_dict(self):
        return {
            "name": self.name,
            "nodes": [
                {
                    "name": nd.name,
                    "parents": [self.names[p] for p in nd.parents],
                    "cpt": [float(v) for v in nd.cpt],
                }
                for nd in self.nodes
            ],
        }


def _assignment_bits(net, assignment):
    missing = [nm for nm in net.names if nm not in assignment]
    if missing:
        raise KeyError(f"missing assignment for {missing}")
    return np.array([[int(bool(assignment[nm])) for nm in net.names]])


def joint_probability(net, full_assignment):
    """Product of CPT entries for a complete ``{name: bit}`` assignment."""
    return float(np.exp(net.node_log_factors(_assignment_bits(net, full_assignment))[0]))


def ancestral_samples(net, size, seed):
    """``size`` joint samples drawn parents-first, shape ``(size, N)`` uint8."""
    rng = stream(seed)
    bits = np.zeros((size, len(net)), dtype=np.int64)
    u = rng.random((size, len(net)))
    for i, nd in enumerate(net.nodes):
        row = bits_to_index(bits[:, list(nd.parents)]) if nd.parents else np.zeros(size, dtype=np.int64)
        bits[:, i] = u[:, i] < np.asarray(nd.cpt)[row]
    return bits.astype(np.uint8)


def ancestral_sample(net, seed):
    """One joint sample as ``{name: bit}``."""
    row = ancestral_samples(net, 1, seed)[0]
    return {nm: int(b) for nm, b in zip(net.names, row)}


def smooth_table(p_true, eps=1e-2):
    """Additive smoothing of binary CPT rows given as ``p(true)``.

    Adds ``eps`` to both outcomes and renormalises, turning deterministic
    entries into strictly positive ones.
    """
    p_true = np.asarray(p_true, dtype=float)
    return (p_true + eps) / (1.0 + 2.0 * eps)


# -- loading -----------------------------------------------------------------

def _parse_cpt(name, raw, n_parents):
    if not isinstance(raw, list):
        raise NetworkError(f"node {name!r}: cpt must be a list")
    rows = 1 << n_parents
    if len(raw) != rows:
        raise NetworkError(f"node {name!r}: expected {rows} CPT rows, got {len(raw)}")
    out = []
    for r in raw:
        if isinstance(r, list):
            if len(r) != 2:
                raise NetworkError(f"node {name!r}: explicit rows are [p(false), p(true)]")
            p0, p1 = float(r[0]), float(r[1])
            if abs(p0 + p1 - 1.0) > ROW_TOL:
                raise NetworkError(f"node {name!r}: row {r} does not sum to 1")
            if p0 <= 0.0 or p1 <= 0.0:
                raise NetworkError(f"node {name!r}: nonpositive probability in row {r}")
            out.append(p1)
        elif isinstance(r, (int, float)) and not isinstance(r, bool):
            p1 = float(r)
            if not 0.0 < p1 < 1.0:
                raise NetworkError(f"node {name!r}: probability {p1} gives a nonpositive entry")
            out.append(p1)
        else:
            raise NetworkError(f"node {name!r}: CPT entries must be numbers")
    return np.array(out)


def network_from_dict(doc):
    """Validated :class:`BayesNet` from a parsed JSON document."""
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise NetworkError("document needs a 'nodes' list")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise NetworkError("'name' must be a string")
    specs = {}
    for entry in doc["nodes"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise NetworkError("every node needs a string 'name'")
        parents = entry.get("parents", [])
        if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
            raise NetworkError(f"node {entry['name']!r}: 'parents' must be a list of names")
        if entry["name"] in specs:
            raise NetworkError(f"duplicate node {entry['name']!r}")
        if "cpt" not in entry:
            raise NetworkError(f"node {entry['name']!r}: missing 'cpt'")
        specs[entry["name"]] = entry
    for nm, entry in specs.items():
        for p in entry.get("parents", []):
            if p not in specs:
                raise NetworkError(f"node {nm!r}: unknown parent {p!r}")

    sorter = graphlib.TopologicalSorter({nm: e.get("parents", []) for nm, e in specs.items()})
    try:
        sorter.prepare()
    except graphlib.CycleError as err:
        raise NetworkError(f"network has a cycle: {err.args[1]}") from None
    order = _stable_topological(specs)

    index = {nm: i for i, nm in enumerate(order)}
    nodes = []
    for nm in order:
        parents = specs[nm].get("parents", [])
        cpt = _parse_cpt(nm, specs[nm]["cpt"], len(parents))
        nodes.append(Node(nm, tuple(index[p] for p in parents), cpt))
    return BayesNet(nodes, name=name)


def _stable_topological(specs):
    # document order wherever it is already topological; graph known acyclic
    done, out = set(), []
    pending = list(specs)
    while pending:
        for nm in pending:
            if all(p in done for p in specs[nm].get("parents", [])):
                out.append(nm)
                done.add(nm)
                pending.remove(nm)
                break
    return out


def load_network(source):
    """Load a network from a path, a JSON string, or an already-parsed dict."""
    if isinstance(source, dict):
        return network_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise NetworkError(f"invalid JSON: {err}") from None
    return network_from_dict(doc)


def bundled_path(name):
    """Path of a bundled data file (``sprinkler``, ``lung_cancer``, ``hmm``)."""
    return resources.files("bornvi") / "data" / f"{name}.json"


def load_bundled(name):
    return load_network(bundled_path(name).read_text())


# -- joint models --------------------------------------------------------------

class JointModel(ABC):
    """Joint ``p(x, z)`` over ``n_latent`` binary latents and an observation ``x``.

    All ``z`` arguments accept a single bit vector or a stack ``(m, n)``.
    """

    n_latent: int

    @abstractmethod
    def log_prior(self, z):
        ...

    @abstractmethod
    def log_likelihood(self, x, z):
        ...

    @abstractmethod
    def sample_prior(self, size, rng):
        """Latent draws from ``p(z)``, shape ``(size, n)``."""

    def log_joint(self, x, z):
        return self.log_prior(z) + self.log_likelihood(x, z)


class EvidenceModel(JointModel):
    """A :class:`BayesNet` split into observed (evidence) and latent nodes.

    Observations ``x`` are bit vectors over ``evidence_names`` in that order.
    """

    def __init__(self, net, evidence_names):
        self.net = net
        unknown = [nm for nm in evidence_names if nm not in net.names]
        if unknown:
            raise KeyError(f"evidence names not in network: {unknown}")
        if len(set(evidence_names)) != len(evidence_names):
            raise ValueError("duplicate evidence names")
        self.evidence_names = tuple(evidence_names)
        self.latent_names = tuple(nm for nm in net.names if nm not in self.evidence_names)
        self.n_latent = len(self.latent_names)
        self._lat = np.array([net.index(nm) for nm in self.latent_names], dtype=np.int64)
        self._ev = np.array([net.index(nm) for nm in self.evidence_names], dtype=np.int64)
        lat_set = set(self._lat.tolist())
        self._closed_prior = all(
            set(net.nodes[i].parents) <= lat_set for i in self._lat.tolist()
        )
        if not self._closed_prior and len(self._ev) > ENUMERATION_CAP:
            raise ValueError("prior marginalisation over evidence exceeds the enumeration cap")

    @classmethod
    def from_evidence(cls, net, evidence):
        """Model plus its point observation from an ``{name: bit}`` mapping."""
        model = cls(net, list(evidence))
        return model, model.observation(evidence)

    @property
    def observation_dim(self):
        return len(self.evidence_names)

    def observation(self, evidence):
        return np.array([int(bool(evidence[nm])) for nm in self.evidence_names], dtype=float)

    def _full(self, x, z):
        z = np.atleast_2d(np.asarray(z, dtype=np.int64))
        bits = np.zeros((z.shape[0], len(self.net)), dtype=np.int64)
        bits[:, self._lat] = z
        bits[:, self._ev] = np.asarray(x, dtype=np.int64)
        return bits

    @staticmethod
    def _shape(z, out):
        return float(out[0]) if np.asarray(z).ndim == 1 else out

    def log_joint(self, x, z):
        return self._shape(z, self.net.node_log_factors(self._full(x, z)))

    def log_prior(self, z):
        if self._closed_prior:
            zero = np.zeros(len(self._ev))
            return self._shape(z, self.net.node_log_factors(self._full(zero, z), self._lat.tolist()))
        evs = all_bitstrings(len(self._ev))
        terms = np.stack([self.net.node_log_factors(self._full(e, z)) for e in evs])
        return self._shape(z, logsumexp(terms, axis=0))

    def log_likelihood(self, x, z):
        return self.log_joint(x, z) - self.log_prior(z)

    def sample_prior(self, size, rng):
        full = ancestral_samples(self.net, size, rng)
        return full[:, self._lat]


def _gauss_logpdf(x, mean, std):
    return -0.5 * np.log(2.0 * math.pi * std * std) - (x - mean) ** 2 / (2.0 * std * std)


@dataclass(frozen=True)
class HmmModel(JointModel):
    """Two-regime HMM with Bernoulli switching and Gaussian emissions.

    ``p_on[b]`` is ``p(z_t = 1 | z_{t-1} = b)``; ``means``/``stds`` are the
    emission parameters for ``z_t = 0`` and ``z_t = 1``.
    """

    T: int = 8
    p_first: float = 0.5
    p_on: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0)
    means: tuple[float, float] = (0.0, 1.0)
    stds: tuple[float, float] = (1.0, 0.5)

    def __post_init__(self):
        rates = (self.p_first, *self.p_on)
        if not all(0.0 < r < 1.0 for r in rates):
            raise ValueError("Bernoulli rates must lie in (0, 1)")
        if not all(s > 0.0 for s in self.stds):
            raise ValueError("standard deviations must be positive")
        if self.T < 1:
            raise ValueError("T must be positive")

    @property
    def n_latent(self):
        return self.T

    @property
    def observation_dim(self):
        return self.T

    @classmethod
    def from_json(cls, source):
        doc = json.loads(Path(source).read_text()) if not isinstance(source, dict) else source
        return cls(
            T=int(doc["T"]),
            p_first=float(doc["p_first"]),
            p_on=tuple(float(v) for v in doc["p_on"]),
            means=tuple(float(v) for v in doc["means"]),
            stds=tuple(float(v) for v in doc["stds"]),
        )

    def _check(self, z, x=None):
        z = np.atleast_2d(np.asarray(z, dtype=np.int64))
        if z.shape[1] != self.T or (x is not None and np.shape(x) != (self.T,)):
            raise ValueError(f"expected sequences of length T={self.T}")
        return z

    def log_prior(self, z):
        zz = self._check(z)
        p1 = np.array(self.p_on)
        lp = np.where(zz[:, 0] == 1, math.log(self.p_first), math.log1p(-self.p_first))
        if self.T > 1:
            on = p1[zz[:, :-1]]
            lp = lp + np.where(zz[:, 1:] == 1, np.log(on), np.log1p(-on)).sum(axis=1)
        return float(lp[0]) if np.asarray(z).ndim == 1 else lp

    def log_likelihood(self, x, z):
        return hmm_log_likelihood(self, x, z)

    def sample_prior(self, size, rng):
        rng = stream(rng)
        z = np.zeros((size, self.T), dtype=np.uint8)
        z[:, 0] = rng.random(size) < self.p_first
        for t in range(1, self.T):
            z[:, t] = rng.random(size) < np.array(self.p_on)[z[:, t - 1]]
        return z

    def sample(self, seed):
        """One ``(x, z)`` draw from the joint."""
        rng = stream(seed)
        z = self.sample_prior(1, rng)[0]
        mu = np.array(self.means)[z]
        sd = np.array(self.stds)[z]
        return mu + sd * rng.standard_normal(self.T), z


def hmm_log_likelihood(model, x, z):
    """``sum_t log N(x_t; mean[z_t], std[z_t])``."""
    x = np.asarray(x, dtype=float)
    zz = model._check(z, x)
    mu = np.array(model.means)[zz]
    sd = np.array(model.stds)[zz]
    out = _gauss_logpdf(x[None, :], mu, sd).sum(axis=1)
    return float(out[0]) if np.asarray(z).ndim == 1 else out


def exact_posterior(model, x, cap=ENUMERATION_CAP):
    """``p(z | x)`` for every latent configuration, in basis-index order."""
    if model.n_latent > cap:
        raise ValueError(f"{model.n_latent} latent bits exceeds the enumeration cap of {cap}")
    lj = model.log_joint(x, all_bitstrings(model.n_latent))
    return softmax(lj)


def flip_stack(z):
    """All single-bit flips: ``(m, n) -> (m, n, n)`` with ``[:, i]`` flipping bit ``i``."""
    z = np.atleast_2d(np.asarray(z, dtype=np.int64))
    n = z.shape[1]
    return z[:, None, :] ^ np.eye(n, dtype=np.int64)[None, :, :]


def difference_score(model, x, z):
    """Difference score ``1 - p(x, flip_i z) / p(x, z)`` for each bit ``i``.

    Accepts one bit vector (returns shape ``(n,)``) or a stack ``(m, n)``.
    """
    zz = np.atleast_2d(np.asarray(z, dtype=np.int64))
    m, n = zz.shape
    base = np.asarray(model.log_joint(x, zz), dtype=float).reshape(m)
    flips = np.asarray(model.log_joint(x, flip_stack(zz).reshape(m * n, n)), dtype=float).reshape(m, n)
    if not (np.all(np.isfinite(base)) and np.all(np.isfinite(flips))):
        raise ValueError("non-finite joint: positivity violated")
    s = -np.expm1(flips - base[:, None])
    return s[0] if np.asarray(z).ndim == 1 else s
