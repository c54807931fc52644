"""Free-space 2-D Green's function and line-source fields (``exp(+i w t)``)."""

import numpy as np
from scipy.special import hankel2

from .core import MU0


def pairwise_distance(a, b):
    """``(len(a), len(b))`` Euclidean distances between two point sets."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def green2d(k, r):
    """Outgoing solution of ``(-lap - k^2) g = delta``: ``-(i/4) H0^(2)(k r)``."""
    return -0.25j * hankel2(0, k * np.asarray(r))


def line_source_field(omega, k, points, source):
    """E_z radiated by a unit line current at ``source``:
    ``-(omega mu0 / 4) H0^(2)(k |x - x_s|)``."""
    r = pairwise_distance(points, np.atleast_2d(source))
    r = r[:, 0] if np.ndim(source) == 1 else r
    return -0.25 * omega * MU0 * hankel2(0, k * r)
