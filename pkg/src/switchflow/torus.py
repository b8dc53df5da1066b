"""Points on the 2-torus, identified with [0,1)^2.

Points are plain float arrays of shape (..., 2).  All reductions mod 1 go
through :func:`wrap`; differences and distances use the shortest
representative on the universal cover, so each coordinate of a difference
lies in [-1/2, 1/2).
"""

import numpy as np

__all__ = ["wrap", "delta", "distance"]


def wrap(x):
    """Reduce coordinates mod 1 into [0, 1)."""
    return np.asarray(x, dtype=float) % 1.0


def delta(a, b):
    """Shortest-representative difference a - b, componentwise in [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return (d + 0.5) % 1.0 - 0.5


def distance(a, b):
    """Euclidean distance on the torus (shortest representative)."""
    return np.linalg.norm(delta(a, b), axis=-1)
