"""Distances between distributions over the same finite outcome set."""
import numpy as np

NORM_TOL = 1e-8


def tvd(p, q):
    """Total variation distance ``0.5 * sum |p - q|``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions differ in length")
    for d in (p, q):
        if abs(d.sum() - 1.0) > NORM_TOL or np.any(d < -NORM_TOL):
            raise ValueError("argument is not a normalised distribution")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))
