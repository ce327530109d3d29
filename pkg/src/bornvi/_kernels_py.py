"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one to one and are used when the compiled
extension is unavailable (or when ``BORNVI_PURE_PYTHON`` is set).
All state arrays are ``complex128`` of shape ``(batch, 2**n)`` with qubit 0
as the most significant bit of the basis index.
"""
import numpy as np


def apply_1q(states, n, q, mats):
    """Apply a per-row 2x2 matrix ``mats[b]`` to qubit ``q`` of ``states[b]`` in place."""
    b = states.shape[0]
    view = states.reshape(b, 1 << q, 2, 1 << (n - q - 1))
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :].copy()
    m = mats[:, :, :, None, None]
    view[:, :, 0, :] = m[:, 0, 0] * a0 + m[:, 0, 1] * a1
    view[:, :, 1, :] = m[:, 1, 0] * a0 + m[:, 1, 1] * a1


def apply_cz(states, n, q1, q2):
    """Controlled-Z between qubits ``q1`` and ``q2`` on every row, in place."""
    idx = np.arange(1 << n)
    both = ((idx >> (n - 1 - q1)) & 1) & ((idx >> (n - 1 - q2)) & 1)
    states[:, both.astype(bool)] *= -1.0


def stein_gram(za, sa, zb, sb):
    """Stein kernel matrix for the Hamming base kernel.

    ``za``/``zb`` are bit arrays ``(m, n)``, ``sa``/``sb`` their difference
    scores. Flipping bit ``i`` of either argument moves the Hamming distance
    by ``+1`` when the bits agree and ``-1`` otherwise, so every partial
    difference of ``k`` is ``k * w_i`` with ``w_i = 1 - exp(-sign_i / n)``.
    """
    za = np.asarray(za, dtype=np.int64)
    zb = np.asarray(zb, dtype=np.int64)
    n = za.shape[1]
    eq = za[:, None, :] == zb[None, :, :]
    dist = n - eq.sum(axis=-1)
    k = np.exp(-dist / n)
    w = np.where(eq, 1.0 - np.exp(-1.0 / n), 1.0 - np.exp(1.0 / n))
    ss = sa @ sb.T
    cross = (w * (sa[:, None, :] + sb[None, :, :] - 2.0)).sum(axis=-1)
    return k * (ss - cross)
