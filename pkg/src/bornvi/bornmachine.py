"""Born machines built on a hardware-efficient ansatz.

Layout of one machine with ``n`` qubits and ``L`` layers::

    S(x) -> R -> [CZ(0,1) CZ(1,2) ... CZ(n-2,n-1) -> R] * L

where ``R`` applies ``RZ`` then ``RX`` to every qubit in index order, each
with its own angle. ``S(x)`` is a Hadamard on every qubit (``"hadamard"``)
or ``RX(x_t)`` on qubit ``t`` (``"angle"``). Parameters are stored block by
block, qubit by qubit, as ``(rz, rx)`` pairs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .statevector import (
    ENTANGLE,
    HADAMARD,
    MAX_QUBITS,
    ROTX,
    ROTZ,
    Circuit,
    apply_gate_batch,
    bits_to_index,
    index_to_bits,
    sample_indices,
)
from ._random import stream

HADAMARD_PREP = "hadamard"
ANGLE_ENCODING = "angle"
ENCODINGS = (HADAMARD_PREP, ANGLE_ENCODING)
SHIFT = np.pi / 2


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    layers: int = 0
    encoding: str = HADAMARD_PREP

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_qubits > MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}")

    @property
    def n_params(self):
        return 2 * self.n_qubits * (self.layers + 1)

    @property
    def encoding_arity(self):
        return self.n_qubits if self.encoding == ANGLE_ENCODING else 0

    def param_index(self, block, qubit, kind):
        return 2 * (block * self.n_qubits + qubit) + (0 if kind == ROTZ else 1)

    def to_dict(self):
        return {"n_qubits": self.n_qubits, "layers": self.layers, "encoding": self.encoding}


@dataclass(frozen=True, eq=False)
class BornMachine:
    spec: AnsatzSpec
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.spec.n_params,):
            raise ValueError(f"theta must have length {self.spec.n_params}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n_qubits(self):
        return self.spec.n_qubits

    def with_theta(self, theta):
        return BornMachine(self.spec, theta)

    def distribution(self, x=None):
        return exact_distribution(self, x)

    def distributions(self, thetas, x=None):
        return distributions(self.spec, thetas, x)

    def sample(self, x, shots, seed):
        return sample(self, x, shots, seed)


class AmplitudeMachine:
    """Test hook: a fixed state loaded directly from amplitudes.

    Behaves like a parameter-free :class:`BornMachine` whose distribution
    ignores ``x``; use ``from_distribution`` to load ``sqrt(p)``.
    """

    def __init__(self, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex)
        n = int(np.log2(amps.size))
        if amps.size != 1 << n:
            raise ValueError("amplitude count must be a power of two")
        self.n_qubits = n
        self.amplitudes = amps / np.linalg.norm(amps)

    @classmethod
    def from_distribution(cls, p):
        return cls(np.sqrt(np.asarray(p, dtype=float)))

    def distribution(self, x=None):
        return np.abs(self.amplitudes) ** 2

    def sample(self, x, shots, seed):
        return index_to_bits(sample_indices(self.distribution(), shots, stream(seed)), self.n_qubits)


def init_machine(spec, seed, scale=0.01):
    """Machine with angles drawn i.i.d. from ``N(0, scale**2)``."""
    return BornMachine(spec, scale * stream(seed).standard_normal(spec.n_params))


def _check_x(spec, x):
    arity = spec.encoding_arity
    if arity == 0:
        return None
    if x is None:
        raise ValueError(f"angle encoding needs an observation of length {arity}")
    x = np.asarray(x, dtype=float)
    if x.shape != (arity,):
        raise ValueError(f"observation length {x.size} does not match encoding arity {arity}")
    return x


def build_circuit(machine, x=None):
    """The gate sequence of ``machine`` conditioned on ``x``."""
    spec = machine.spec
    n = spec.n_qubits
    x = _check_x(spec, x)
    circ = Circuit(n)
    for q in range(n):
        if spec.encoding == HADAMARD_PREP:
            circ.h(q)
        else:
            circ.rx(q, x[q])
    th = machine.theta
    for block in range(spec.layers + 1):
        if block:
            for q in range(n - 1):
                circ.cz(q, q + 1)
        for q in range(n):
            circ.rz(q, th[spec.param_index(block, q, ROTZ)])
            circ.rx(q, th[spec.param_index(block, q, ROTX)])
    return circ


def distributions(spec, thetas, x=None):
    """Exact output distributions for a stack of parameter vectors.

    ``thetas`` has shape ``(B, n_params)``; returns ``(B, 2**n)``. All rows
    share the observation ``x``. This is the fast path used in training.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != spec.n_params:
        raise ValueError(f"theta must have length {spec.n_params}")
    x = _check_x(spec, x)
    n = spec.n_qubits
    nb = thetas.shape[0]
    states = np.zeros((nb, 1 << n), dtype=complex)
    states[:, 0] = 1.0
    for q in range(n):
        if spec.encoding == HADAMARD_PREP:
            apply_gate_batch(states, n, HADAMARD, q)
        else:
            apply_gate_batch(states, n, ROTX, q, angles=np.full(nb, x[q]))
    for block in range(spec.layers + 1):
        if block:
            for q in range(n - 1):
                apply_gate_batch(states, n, ENTANGLE, q, q + 1)
        for q in range(n):
            apply_gate_batch(states, n, ROTZ, q, angles=thetas[:, spec.param_index(block, q, ROTZ)])
            apply_gate_batch(states, n, ROTX, q, angles=thetas[:, spec.param_index(block, q, ROTX)])
    return states.real ** 2 + states.imag ** 2


def exact_distribution(machine, x=None):
    """``q(z | x)`` over all ``2**n`` outcomes in basis-index order."""
    if isinstance(machine, AmplitudeMachine):
        return machine.distribution(x)
    return distributions(machine.spec, machine.theta[None, :], x)[0]


def sample(machine, x, shots, seed):
    """``shots`` measurement outcomes as a ``(shots, n)`` bit array."""
    if shots < 1:
        raise ValueError("shots must be positive")
    idx = sample_indices(exact_distribution(machine, x), shots, stream(seed))
    return index_to_bits(idx, machine.n_qubits)


def shifted_machines(machine, j):
    """Copies with parameter ``j`` moved by ``+pi/2`` and ``-pi/2``."""
    if not 0 <= j < machine.spec.n_params:
        raise IndexError(f"parameter index {j} out of range")
    plus = machine.theta.copy()
    minus = machine.theta.copy()
    plus[j] += SHIFT
    minus[j] -= SHIFT
    return machine.with_theta(plus), machine.with_theta(minus)


def shift_table(theta):
    """``(2P, P)`` stack: rows ``0..P-1`` shift each parameter up, ``P..2P-1`` down."""
    theta = np.asarray(theta, dtype=float)
    eye = SHIFT * np.eye(theta.size)
    return np.concatenate([theta + eye, theta - eye])


def shifted_distributions(machine, x=None):
    """``(q, q_plus, q_minus)`` with ``q_plus[j]`` the distribution at ``theta_j^+``.

    One batched simulation of ``2P + 1`` circuits.
    """
    p = machine.spec.n_params
    table = np.concatenate([machine.theta[None, :], shift_table(machine.theta)])
    dists = distributions(machine.spec, table, x)
    return dists[0], dists[1 : p + 1], dists[p + 1 :]


def distribution_gradient(machine, x=None):
    """Parameter-shift Jacobian ``d q(z|x) / d theta_j``, shape ``(P, 2**n)``."""
    _, plus, minus = shifted_distributions(machine, x)
    return 0.5 * (plus - minus)


def prob_gradient(machine, x, z, j):
    """Exact ``d q(z|x) / d theta_j`` from two shifted circuits."""
    plus, minus = shifted_machines(machine, j)
    idx = int(bits_to_index(np.asarray(z)))
    return 0.5 * float(exact_distribution(plus, x)[idx] - exact_distribution(minus, x)[idx])


def save_checkpoint(path, machine, seed, epoch):
    doc = {
        "spec": machine.spec.to_dict(),
        "theta": [float(t) for t in machine.theta],
        "seed": int(seed),
        "epoch": int(epoch),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Returns ``(machine, seed, epoch)``."""
    doc = json.loads(Path(path).read_text())
    spec = AnsatzSpec(**doc["spec"])
    return BornMachine(spec, doc["theta"]), doc["seed"], doc["epoch"]
