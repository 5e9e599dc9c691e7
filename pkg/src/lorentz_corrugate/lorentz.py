"""Minkowski 3-space primitives.

Ambient space is R^3 with the flat Lorentzian metric h = dx^2 + dy^2 - dz^2
(signature +,+,-; the z axis is timelike) together with the Euclidean
reference metric used for all absolute norms. Vectors are numpy arrays whose
last axis has length 3; every function broadcasts over leading axes.
"""
from __future__ import annotations

import numpy as np

from .errors import DegeneratePlane

# Signs of h on the coordinate axes.
HSIG = np.array([1.0, 1.0, -1.0])

# A plane whose Euclidean-normalized raw normal has |h(n,n)| below this is
# treated as degenerate (too close to the light cone).
DEGENERATE_TOL = 1e-10


def minkowski_inner(v, w):
    """h(v, w) for vectors with a trailing axis of length 3."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return v[..., 0] * w[..., 0] + v[..., 1] * w[..., 1] - v[..., 2] * w[..., 2]


def euclidean_inner(v, w):
    """Euclidean dot product on the same layout."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return np.einsum("...i,...i->...", v, w)


def euclidean_norm(v):
    """Euclidean length, broadcasting over leading axes."""
    return np.sqrt(euclidean_inner(v, v))


def is_spacelike(v, tol=0.0):
    """True where h(v, v) > tol."""
    return minkowski_inner(v, v) > tol


def exp_point(p, w):
    """Exponential map of flat space: translate p by w."""
    return np.asarray(p, dtype=float) + np.asarray(w, dtype=float)


def timelike_unit_normal(t1, t2):
    """Future-pointing h-unit timelike normal of the plane span(t1, t2).

    Parameters
    ----------
    t1, t2 : arrays, shape (..., 3)
        Spanning vectors of a spacelike plane.

    Returns
    -------
    n : array, shape (..., 3)
        h(n, n) = -1, h(n, t1) = h(n, t2) = 0, and n has positive z
        component (future-pointing).

    Raises
    ------
    DegeneratePlane
        If the plane is degenerate or too close to the light cone for the
        normalization to be trustworthy.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    # Raising the index of the Euclidean cross product with diag(1,1,-1)
    # produces an h-orthogonal direction.
    e = np.cross(t1, t2)
    raw = e * HSIG
    span = euclidean_norm(raw)
    if np.any(span <= 0.0):
        raise DegeneratePlane("tangent vectors are parallel")
    q = minkowski_inner(raw, raw) / span**2
    if np.any(q >= -DEGENERATE_TOL):
        raise DegeneratePlane(
            "plane is not spacelike: normalized h(n,n) = %s" % float(np.max(q))
        )
    n = raw / np.sqrt(-minkowski_inner(raw, raw))[..., None]
    # Two candidate unit normals differ by sign; pick the future-pointing one.
    flip = n[..., 2] < 0.0
    n = np.where(flip[..., None], -n, n)
    return n
