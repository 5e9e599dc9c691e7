"""Grids, metric fields, linear forms, embedding jets and their norms.

Everything lives on a regular grid over the unit square C = [0,1]^2. A first
order jet stores positions and both partial derivative fields explicitly;
derivatives are exact data, never finite differences of the positions (a
consistency audit reports, but does not assert, their agreement).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GridMismatch, LostSpacelike, NotLong, NotPSD, SingularMetric
from .lorentz import minkowski_inner, timelike_unit_normal

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class Grid:
    """Regular nx-by-ny grid on the unit square."""

    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise DomainError("grid needs at least 2 nodes per axis")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def hx(self):
        return 1.0 / (self.nx - 1)

    @property
    def hy(self):
        return 1.0 / (self.ny - 1)

    @cached_property
    def x(self):
        return np.linspace(0.0, 1.0, self.nx)

    @cached_property
    def y(self):
        return np.linspace(0.0, 1.0, self.ny)

    def mesh(self):
        """Meshgrid (X, Y) with ij indexing, each of shape (nx, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise GridMismatch("field shapes %s and %s differ" % (a.shape, b.shape))


@dataclass
class MetricField:
    """Symmetric bilinear form field with components E, F, G per node."""

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        if self.E.shape != self.F.shape or self.F.shape != self.G.shape:
            raise GridMismatch("metric components have mismatched shapes")

    @classmethod
    def constant(cls, E, F, G, shape):
        return cls(np.full(shape, float(E)), np.full(shape, float(F)), np.full(shape, float(G)))

    @classmethod
    def identity(cls, shape):
        return cls.constant(1.0, 0.0, 1.0, shape)

    @property
    def shape(self):
        return self.E.shape

    def __add__(self, other):
        _same_shape(self.E, other.E)
        return MetricField(self.E + other.E, self.F + other.F, self.G + other.G)

    def __sub__(self, other):
        _same_shape(self.E, other.E)
        return MetricField(self.E - other.E, self.F - other.F, self.G - other.G)

    def __mul__(self, s):
        return MetricField(self.E * s, self.F * s, self.G * s)

    __rmul__ = __mul__

    def copy(self):
        return MetricField(self.E.copy(), self.F.copy(), self.G.copy())

    def det(self):
        return self.E * self.G - self.F**2

    def eigenvalues(self):
        """Pointwise symmetric eigenvalues (lmin, lmax)."""
        mean = 0.5 * (self.E + self.G)
        rad = np.sqrt((0.5 * (self.E - self.G)) ** 2 + self.F**2)
        return mean - rad, mean + rad

    def min_eigenvalue(self):
        return float(np.min(self.eigenvalues()[0]))

    def is_positive_definite(self, tol=0.0):
        return self.min_eigenvalue() > tol

    def require_positive_definite(self, tol=0.0, what="metric"):
        m = self.min_eigenvalue()
        if not m > tol:
            raise SingularMetric("%s not positive definite: min eigenvalue %.3e" % (what, m))

    def require_psd(self, tol=1e-12, what="field"):
        m = self.min_eigenvalue()
        if m < -tol:
            raise NotPSD("%s has eigenvalue %.3e below -%.1e" % (what, m, tol))

    def inner(self, u, w):
        """g(u, w) for tangent vectors given as (..., 2) component arrays."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        return (
            self.E * u[..., 0] * w[..., 0]
            + self.F * (u[..., 0] * w[..., 1] + u[..., 1] * w[..., 0])
            + self.G * u[..., 1] * w[..., 1]
        )

    def max_abs(self):
        return float(max(np.max(np.abs(self.E)), np.max(np.abs(self.F)), np.max(np.abs(self.G))))

    def frobenius(self):
        """Pointwise Frobenius norm of the component matrix."""
        return np.sqrt(self.E**2 + 2.0 * self.F**2 + self.G**2)


@dataclass(frozen=True)
class LinearForm:
    """Constant linear form ell = a dx + b dy on the square."""

    a: float
    b: float

    def __post_init__(self):
        if self.a == 0.0 and self.b == 0.0:
            raise DomainError("zero linear form")

    @classmethod
    def from_angle(cls, theta):
        return cls(float(np.cos(theta)), float(np.sin(theta)))

    def phase(self, X, Y):
        """ell evaluated on position coordinates, a*X + b*Y."""
        return self.a * np.asarray(X, dtype=float) + self.b * np.asarray(Y, dtype=float)

    def of(self, u):
        """ell applied to tangent vectors with trailing axis of length 2."""
        u = np.asarray(u, dtype=float)
        return self.a * u[..., 0] + self.b * u[..., 1]

    def kernel_direction(self):
        return np.array([-self.b, self.a])

    def outer(self, eta=1.0, shape=None):
        """eta * ell (x) ell as a MetricField; eta may be a scalar or array."""
        eta = np.asarray(eta, dtype=float)
        if shape is not None and eta.shape == ():
            eta = np.full(shape, float(eta))
        return MetricField(eta * self.a * self.a, eta * self.a * self.b, eta * self.b * self.b)


def form_norm(ell, g):
    """Pointwise norm of a constant 1-form with respect to metric field g."""
    d = g.det()
    if np.any(d <= 0.0):
        raise SingularMetric("form_norm needs a positive definite metric")
    q = (g.G * ell.a**2 - 2.0 * g.F * ell.a * ell.b + g.E * ell.b**2) / d
    return np.sqrt(np.maximum(q, 0.0))


@dataclass
class EmbeddingJet:
    """First order jet of a map C -> R^{2,1}: positions and both partials."""

    grid: Grid
    pos: np.ndarray
    dfx: np.ndarray
    dfy: np.ndarray

    def __post_init__(self):
        want = self.grid.shape + (3,)
        for name in ("pos", "dfx", "dfy"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise GridMismatch("%s has shape %s, expected %s" % (name, arr.shape, want))
            setattr(self, name, arr)

    def copy(self):
        return EmbeddingJet(self.grid, self.pos.copy(), self.dfx.copy(), self.dfy.copy())

    def apply_d(self, u):
        """df(u) for tangent vectors u with trailing axis of length 2."""
        u = np.asarray(u, dtype=float)
        return u[..., 0:1] * self.dfx + u[..., 1:2] * self.dfy

    def require_spacelike(self, tol=1e-10):
        g = pullback_metric(self)
        m = g.min_eigenvalue()
        if not m > tol:
            raise LostSpacelike("pullback min eigenvalue %.3e <= %.1e" % (m, tol))


def pullback_metric(f):
    """f*h as a MetricField: pairwise h-inner products of the partials."""
    return MetricField(
        minkowski_inner(f.dfx, f.dfx),
        minkowski_inner(f.dfx, f.dfy),
        minkowski_inner(f.dfy, f.dfy),
    )


def isometric_default(f, g):
    """Defect f*h - g, the amount of metric still to be absorbed."""
    if g.shape != f.grid.shape:
        raise GridMismatch("metric shape %s does not match grid %s" % (g.shape, f.grid.shape))
    return pullback_metric(f) - g


def require_long(f, g, tol=1e-12):
    """Raise NotLong unless f*h - g is positive semidefinite (within tol)."""
    d = isometric_default(f, g)
    m = d.min_eigenvalue()
    if m < -tol:
        raise NotLong("default min eigenvalue %.3e < -%.1e" % (m, tol))
    return d


def _pencil_eigenvalues(B, g):
    """Eigenvalues of the pencil det(B - lambda g) = 0 for PD g, both (...)."""
    dg = g.det()
    if np.any(dg <= 0.0):
        raise SingularMetric("pencil needs a positive definite base metric")
    tr = B.E * g.G + B.G * g.E - 2.0 * B.F * g.F
    disc = tr**2 - 4.0 * dg * B.det()
    # Symmetric pencil with PD base: discriminant is nonnegative up to rounding.
    rad = np.sqrt(np.maximum(disc, 0.0))
    lo = (tr - rad) / (2.0 * dg)
    hi = (tr + rad) / (2.0 * dg)
    return lo, hi


def operator_norm_map(Ax, Ay, g):
    """Pointwise operator norm of a linear map into R^3.

    The map sends the coordinate basis of the tangent plane to the vectors
    Ax, Ay in R^3; the domain carries the metric field g, the target the
    Euclidean reference. Returns the per-node norm as an array.
    """
    Ax = np.asarray(Ax, dtype=float)
    Ay = np.asarray(Ay, dtype=float)
    B = MetricField(
        np.einsum("...i,...i->...", Ax, Ax),
        np.einsum("...i,...i->...", Ax, Ay),
        np.einsum("...i,...i->...", Ay, Ay),
    )
    _, hi = _pencil_eigenvalues(B, g)
    return np.sqrt(np.maximum(hi, 0.0))


def operator_norm_form(B, g):
    """Pointwise operator norm of a symmetric form field relative to g.

    Largest absolute generalized eigenvalue of det(B - lambda g) = 0; B may
    be indefinite, g must be positive definite.
    """
    lo, hi = _pencil_eigenvalues(B, g)
    return np.maximum(np.abs(lo), np.abs(hi))


def c0_distance(f1, f2):
    """Sup over nodes of the Euclidean distance between positions."""
    if f1.grid != f2.grid:
        raise GridMismatch("jets live on different grids")
    d = f1.pos - f2.pos
    return float(np.max(np.sqrt(np.einsum("...i,...i->...", d, d))))


def c1_increment(f1, f2, g):
    """Sup over nodes of the operator norm of df1 - df2 against g."""
    if f1.grid != f2.grid:
        raise GridMismatch("jets live on different grids")
    return float(np.max(operator_norm_map(f1.dfx - f2.dfx, f1.dfy - f2.dfy, g)))


@dataclass
class FrameField:
    """Adapted corrugation frame along an embedding for a given form.

    v, u are tangent-plane fields (shape grid + (2,)), f*h-orthonormal with
    v spanning ker ell; vhat, t are their images under df; n is the
    future-pointing h-unit timelike normal; dlu = ell(u) > 0.
    """

    v: np.ndarray
    u: np.ndarray
    vhat: np.ndarray
    t: np.ndarray
    n: np.ndarray
    dlu: np.ndarray


def corrugation_frame(f, ell):
    """Build the f*h-orthonormal frame adapted to a linear form.

    Parameters
    ----------
    f : EmbeddingJet
        Spacelike embedding jet.
    ell : LinearForm
        Nonzero constant form whose kernel directs the corrugation.

    Returns
    -------
    FrameField
        With v in ker ell normalized, u completing the orthonormal pair on
        the side where ell(u) > 0, and the ambient fields vhat = df(v),
        t = df(u), n the timelike unit normal.
    """
    g = pullback_metric(f)
    g.require_positive_definite(tol=0.0, what="pullback")
    shape = f.grid.shape

    kd = ell.kernel_direction()
    v = np.broadcast_to(kd, shape + (2,)).copy()
    nv = np.sqrt(g.inner(v, v))
    v /= nv[..., None]

    w = np.broadcast_to(np.array([ell.a, ell.b]), shape + (2,)).copy()
    u = w - g.inner(w, v)[..., None] * v
    nu = np.sqrt(g.inner(u, u))
    if np.any(nu <= 0.0):
        raise SingularMetric("projection of the form direction collapsed")
    u /= nu[..., None]

    dlu = ell.of(u)
    if np.any(dlu <= 0.0):
        raise SingularMetric("frame orientation failed: ell(u) <= 0 somewhere")

    vhat = f.apply_d(v)
    t = f.apply_d(u)
    n = timelike_unit_normal(t, vhat)
    return FrameField(v=v, u=u, vhat=vhat, t=t, n=n, dlu=dlu)


def jet_consistency_audit(f):
    """Compare stored partials with central differences of the positions.

    Returns a dict with the max interior deviation per axis and the
    deviation scaled by the grid steps. Reported only, never asserted: the
    jet's derivative fields are exact data and the finite difference carries
    its own truncation error.
    """
    hx, hy = f.grid.hx, f.grid.hy
    ddx = (f.pos[2:, :, :] - f.pos[:-2, :, :]) / (2.0 * hx)
    ddy = (f.pos[:, 2:, :] - f.pos[:, :-2, :]) / (2.0 * hy)
    ex = float(np.max(np.abs(ddx - f.dfx[1:-1, :, :]))) if f.grid.nx > 2 else 0.0
    ey = float(np.max(np.abs(ddy - f.dfy[:, 1:-1, :]))) if f.grid.ny > 2 else 0.0
    scale = hx + hy
    return {
        "max_err_x": ex,
        "max_err_y": ey,
        "per_step": (ex + ey) / scale,
    }


def export_obj(f, path):
    """Write the jet positions as a triangulated OBJ mesh.

    Vertices appear in row-major node order; each grid quad is split into
    two triangles with consistent orientation. Floats carry 17 significant
    digits so the mesh round-trips the double values.
    """
    nx, ny = f.grid.shape
    pos = f.pos.reshape(nx * ny, 3)
    lines = []
    fmt = "v " + " ".join([FLOAT_FMT] * 3)
    for p in pos:
        lines.append(fmt % (p[0], p[1], p[2]))
    for i in range(nx - 1):
        base = i * ny
        for j in range(ny - 1):
            v00 = base + j + 1
            v10 = v00 + ny
            v11 = v10 + 1
            v01 = v00 + 1
            lines.append("f %d %d %d" % (v00, v10, v11))
            lines.append("f %d %d %d" % (v00, v11, v01))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_metric_csv(path, mf):
    """Write a metric field as x_idx,y_idx,E,F,G rows in row-major order."""
    nx, ny = mf.shape
    with open(path, "w") as fh:
        fh.write("x_idx,y_idx,E,F,G\n")
        for i in range(nx):
            for j in range(ny):
                fh.write(
                    ("%d,%d," + ",".join([FLOAT_FMT] * 3) + "\n")
                    % (i, j, mf.E[i, j], mf.F[i, j], mf.G[i, j])
                )


def read_metric_csv(path):
    """Read a metric field written by write_metric_csv; infers the grid."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    xi = data["x_idx"].astype(int)
    yi = data["y_idx"].astype(int)
    nx, ny = int(xi.max()) + 1, int(yi.max()) + 1
    if len(data) != nx * ny:
        raise DomainError("metric CSV is not a complete %dx%d grid" % (nx, ny))
    E = np.zeros((nx, ny))
    F = np.zeros((nx, ny))
    G = np.zeros((nx, ny))
    E[xi, yi] = data["E"]
    F[xi, yi] = data["F"]
    G[xi, yi] = data["G"]
    return MetricField(E, F, G)


def write_scalar_csv(path, field, name="value"):
    """Write a scalar field as x_idx,y_idx,<name> rows."""
    field = np.asarray(field, dtype=float)
    nx, ny = field.shape
    with open(path, "w") as fh:
        fh.write("x_idx,y_idx,%s\n" % name)
        for i in range(nx):
            for j in range(ny):
                fh.write(("%d,%d," + FLOAT_FMT + "\n") % (i, j, field[i, j]))


def read_scalar_csv(path):
    """Read a scalar field written by write_scalar_csv."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    xi = data["x_idx"].astype(int)
    yi = data["y_idx"].astype(int)
    nx, ny = int(xi.max()) + 1, int(yi.max()) + 1
    if len(data) != nx * ny:
        raise DomainError("scalar CSV is not a complete %dx%d grid" % (nx, ny))
    out = np.zeros((nx, ny))
    value_col = data.dtype.names[2]
    out[xi, yi] = data[value_col]
    return out
