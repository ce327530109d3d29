"""Dense statevector simulation for the small circuits used by Born machines.

Conventions
-----------
Qubit 0 is the most significant bit of a basis index, so basis state
``|z_0 z_1 ... z_{n-1}>`` sits at index ``sum_i z_i * 2**(n-1-i)``.
Rotations are ``RX(t) = exp(-i t/2 X)`` and ``RZ(t) = exp(-i t/2 Z)``; the
two-qubit entangler is controlled-Z.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._random import stream

HADAMARD = "H"
ROTX = "RX"
ROTZ = "RZ"
ENTANGLE = "CZ"
GATE_KINDS = (HADAMARD, ROTX, ROTZ, ENTANGLE)
ROTATIONS = (ROTX, ROTZ)

MAX_QUBITS = 16

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_H = np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=complex)


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    partner: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == ENTANGLE:
            if self.partner is None or self.partner == self.target:
                raise ValueError("CZ needs a distinct partner qubit")
        elif self.partner is not None:
            raise ValueError(f"{self.kind} takes no partner qubit")
        if self.kind in ROTATIONS and self.angle is None:
            raise ValueError(f"{self.kind} needs an angle")

    def qubits(self):
        return (self.target,) if self.partner is None else (self.target, self.partner)


@dataclass
class Circuit:
    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        for op in self.ops:
            self._check(op)

    def _check(self, op):
        for q in op.qubits():
            if not 0 <= q < self.n_qubits:
                raise IndexError(f"qubit {q} out of range for {self.n_qubits} qubits")

    def append(self, op):
        self._check(op)
        self.ops.append(op)
        return self

    def h(self, q):
        return self.append(GateOp(HADAMARD, q))

    def rx(self, q, angle):
        return self.append(GateOp(ROTX, q, angle=float(angle)))

    def rz(self, q, angle):
        return self.append(GateOp(ROTZ, q, angle=float(angle)))

    def cz(self, a, b):
        return self.append(GateOp(ENTANGLE, a, partner=b))

    def count(self, kind):
        return sum(op.kind == kind for op in self.ops)


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError("amplitude vector must have length 2**n_qubits")

    @classmethod
    def zero(cls, n_qubits):
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, bits):
        bits = [int(b) for b in bits]
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[bits_to_index(bits)] = 1.0
        return cls(len(bits), amps)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))


def rotation_matrices(kind, angles):
    """Stack of 2x2 gate matrices, one per angle, shape ``(len(angles), 2, 2)``."""
    angles = np.asarray(angles, dtype=float)
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)
    mats = np.zeros((angles.size, 2, 2), dtype=complex)
    if kind == ROTX:
        mats[:, 0, 0] = c
        mats[:, 1, 1] = c
        mats[:, 0, 1] = -1j * s
        mats[:, 1, 0] = -1j * s
    elif kind == ROTZ:
        mats[:, 0, 0] = c - 1j * s
        mats[:, 1, 1] = c + 1j * s
    elif kind == HADAMARD:
        mats[:] = _H
    else:
        raise ValueError(f"{kind!r} is not a single-qubit gate")
    return mats


def apply_gate_batch(states, n_qubits, kind, target, partner=None, angles=None):
    """Apply one gate to every row of ``states`` (shape ``(B, 2**n)``) in place.

    ``angles`` holds one rotation angle per row for RX/RZ.
    """
    if kind == ENTANGLE:
        _backend.apply_cz(states, n_qubits, target, partner)
        return states
    if kind == HADAMARD:
        mats = np.broadcast_to(_H, (states.shape[0], 2, 2)).copy()
    else:
        mats = rotation_matrices(kind, np.broadcast_to(angles, (states.shape[0],)))
    _backend.apply_1q(states, n_qubits, target, mats)
    return states


def apply_gate(state, op):
    """Return the image of ``state`` under ``op``; the input is not modified."""
    for q in op.qubits():
        if not 0 <= q < state.n_qubits:
            raise IndexError(f"qubit {q} out of range for {state.n_qubits} qubits")
    out = np.ascontiguousarray(state.amplitudes, dtype=complex).copy()[None, :]
    angles = None if op.angle is None else np.array([op.angle])
    apply_gate_batch(out, state.n_qubits, op.kind, op.target, op.partner, angles)
    return StateVector(state.n_qubits, out[0])


def run_circuit(circuit, max_qubits=MAX_QUBITS):
    """Apply ``circuit.ops`` in order to ``|0...0>``."""
    if circuit.n_qubits > max_qubits:
        raise ValueError(f"{circuit.n_qubits} qubits exceeds the dense cap of {max_qubits}")
    state = StateVector.zero(circuit.n_qubits)
    for op in circuit.ops:
        state = apply_gate(state, op)
    return state


def outcome_probabilities(state):
    """Born-rule probabilities ``|amplitude|**2`` indexed by basis state."""
    amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    return amps.real ** 2 + amps.imag ** 2


def sample_indices(probs, shots, rng):
    """Draw ``shots`` basis indices from each row of ``probs``.

    ``probs`` may be 1-D or ``(B, D)``; returns integer array of shape
    ``(shots,)`` or ``(B, shots)``.
    """
    probs = np.asarray(probs, dtype=float)
    squeeze = probs.ndim == 1
    probs = np.atleast_2d(probs)
    u = rng.random((probs.shape[0], shots))
    out = np.empty((probs.shape[0], shots), dtype=np.int64)
    last = probs.shape[1] - 1
    for b in range(probs.shape[0]):
        cdf = np.cumsum(probs[b])
        cdf /= cdf[-1]
        out[b] = np.minimum(np.searchsorted(cdf, u[b], side="right"), last)
    return out[0] if squeeze else out


def sample_outcomes(state, shots, seed):
    """``shots`` i.i.d. measurement outcomes as a ``(shots, n)`` uint8 bit array."""
    if shots < 1:
        raise ValueError("shots must be positive")
    idx = sample_indices(outcome_probabilities(state), shots, stream(seed))
    return index_to_bits(idx, state.n_qubits)


def index_to_bits(index, n):
    """Big-endian bit array(s) for basis index(es)."""
    index = np.asarray(index, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1)
    return ((index[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_index(bits):
    """Inverse of :func:`index_to_bits` along the last axis."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[-1]
    return (bits << np.arange(n - 1, -1, -1)).sum(axis=-1)


def all_bitstrings(n):
    """Every ``n``-bit string in basis-index order, shape ``(2**n, n)``."""
    return index_to_bits(np.arange(1 << n), n)
