"""Grid containers, metric fields, jets, norms and exchange formats."""
import numpy as np
import pytest

from lorentz_corrugate.errors import (
    DomainError,
    GridMismatch,
    LostSpacelike,
    NotLong,
    NotPSD,
    SingularMetric,
)
from lorentz_corrugate.fields import (
    EmbeddingJet,
    Grid,
    LinearForm,
    MetricField,
    c0_distance,
    c1_increment,
    corrugation_frame,
    export_obj,
    form_norm,
    isometric_default,
    jet_consistency_audit,
    operator_norm_form,
    operator_norm_map,
    pullback_metric,
    read_metric_csv,
    read_scalar_csv,
    require_long,
    write_metric_csv,
    write_scalar_csv,
)
from lorentz_corrugate.lorentz import minkowski_inner
from lorentz_corrugate.scenarios import flat_inclusion


def graph_jet(grid, zx, zy):
    """Jet of the graph (x, y, z(x,y)) with constant slopes zx, zy."""
    X, Y = grid.mesh()
    one = np.ones(grid.shape)
    zero = np.zeros(grid.shape)
    pos = np.stack([X, Y, zx * X + zy * Y], axis=-1)
    dfx = np.stack([one, zero, zx * one], axis=-1)
    dfy = np.stack([zero, one, zy * one], axis=-1)
    return EmbeddingJet(grid, pos, dfx, dfy)


def random_pd_metric(rng, shape, scale=1.0):
    a = rng.uniform(0.5, 1.5, size=shape) * scale
    c = rng.uniform(0.5, 1.5, size=shape) * scale
    b = rng.uniform(-0.4, 0.4, size=shape) * np.sqrt(a * c)
    return MetricField(a, b, c)


# ---------------------------------------------------------------- grid


def test_grid_basic():
    g = Grid(5, 3)
    assert g.shape == (5, 3)
    assert g.hx == 0.25 and g.hy == 0.5
    assert g.x[0] == 0.0 and g.x[-1] == 1.0
    X, Y = g.mesh()
    assert X.shape == (5, 3)
    assert X[2, 0] == 0.5 and Y[0, 1] == 0.5


def test_grid_too_small():
    with pytest.raises(DomainError):
        Grid(1, 5)


# ---------------------------------------------------------------- metric field


def test_metric_eigenvalues_against_eigvalsh():
    rng = np.random.default_rng(3)
    g = random_pd_metric(rng, (7, 6))
    lo, hi = g.eigenvalues()
    mats = np.empty((7, 6, 2, 2))
    mats[..., 0, 0] = g.E
    mats[..., 0, 1] = mats[..., 1, 0] = g.F
    mats[..., 1, 1] = g.G
    ev = np.linalg.eigvalsh(mats)
    assert np.allclose(lo, ev[..., 0], atol=1e-13)
    assert np.allclose(hi, ev[..., 1], atol=1e-13)
    assert np.allclose(g.det(), np.linalg.det(mats), atol=1e-13)


def test_metric_arith_and_copy():
    g = MetricField.constant(2.0, 0.5, 1.0, (3, 3))
    h = MetricField.identity((3, 3))
    s = g + h - 2.0 * h
    assert np.allclose(s.E, 1.0) and np.allclose(s.F, 0.5) and np.allclose(s.G, 0.0)
    c = g.copy()
    c.E[0, 0] = 99.0
    assert g.E[0, 0] == 2.0


def test_metric_shape_mismatch():
    with pytest.raises(GridMismatch):
        MetricField(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(GridMismatch):
        MetricField.identity((2, 2)) + MetricField.identity((3, 3))


def test_metric_pd_and_psd_guards():
    flat = MetricField.constant(1.0, 0.0, -0.5, (2, 2))
    with pytest.raises(SingularMetric):
        flat.require_positive_definite()
    with pytest.raises(NotPSD):
        flat.require_psd()
    # A tiny negative eigenvalue passes the PSD gate but not the PD one.
    near = MetricField.constant(1.0, 0.0, -1e-14, (2, 2))
    near.require_psd()
    with pytest.raises(SingularMetric):
        near.require_positive_definite()


def test_metric_inner_matches_matrix_product():
    rng = np.random.default_rng(5)
    g = random_pd_metric(rng, (4, 4))
    u = rng.normal(size=(4, 4, 2))
    w = rng.normal(size=(4, 4, 2))
    got = g.inner(u, w)
    expect = (
        g.E * u[..., 0] * w[..., 0]
        + g.F * u[..., 0] * w[..., 1]
        + g.F * u[..., 1] * w[..., 0]
        + g.G * u[..., 1] * w[..., 1]
    )
    assert np.allclose(got, expect, atol=1e-14)


def test_metric_frobenius():
    g = MetricField.constant(3.0, 2.0, 1.0, (2, 2))
    # sqrt(9 + 2*4 + 1) on every node.
    assert np.allclose(g.frobenius(), np.sqrt(18.0))


# ---------------------------------------------------------------- linear form


def test_linear_form_kernel_and_outer():
    ell = LinearForm(0.6, -0.8)
    assert ell.of(ell.kernel_direction()) == 0.0
    out = ell.outer(2.0, shape=(2, 2))
    assert np.allclose(out.E, 2.0 * 0.36)
    assert np.allclose(out.F, -2.0 * 0.48)
    assert np.allclose(out.G, 2.0 * 0.64)
    with pytest.raises(DomainError):
        LinearForm(0.0, 0.0)


def test_linear_form_phase_and_angle():
    ell = LinearForm.from_angle(np.pi / 2)
    assert abs(ell.a) < 1e-15 and abs(ell.b - 1.0) < 1e-15
    X = np.array([[0.0, 1.0]])
    Y = np.array([[2.0, 3.0]])
    ph = LinearForm(2.0, 1.0).phase(X, Y)
    assert np.array_equal(ph, np.array([[2.0, 5.0]]))


def test_form_norm_against_inverse_metric():
    rng = np.random.default_rng(9)
    g = random_pd_metric(rng, (5, 5))
    ell = LinearForm(0.3, 1.1)
    got = form_norm(ell, g)
    mats = np.empty((5, 5, 2, 2))
    mats[..., 0, 0] = g.E
    mats[..., 0, 1] = mats[..., 1, 0] = g.F
    mats[..., 1, 1] = g.G
    vec = np.array([ell.a, ell.b])
    expect = np.sqrt(np.einsum("i,...ij,j->...", vec, np.linalg.inv(mats), vec))
    assert np.allclose(got, expect, atol=1e-12)


def test_form_norm_frozen():
    g = MetricField.constant(4.0, 0.0, 1.0, (2, 2))
    assert np.allclose(form_norm(LinearForm(1.0, 0.0), g), 0.5)
    assert np.allclose(form_norm(LinearForm(0.0, 1.0), g), 1.0)


# ---------------------------------------------------------------- jets


def test_pullback_flat_inclusion_is_identity():
    f = flat_inclusion(Grid(9, 9))
    g = pullback_metric(f)
    assert np.allclose(g.E, 1.0) and np.allclose(g.F, 0.0) and np.allclose(g.G, 1.0)


def test_pullback_tilted_graph_frozen():
    # Graph (x, y, 0.9 x): E = 1 - 0.81, the timelike axis subtracts.
    f = graph_jet(Grid(4, 4), 0.9, 0.0)
    g = pullback_metric(f)
    assert np.allclose(g.E, 0.19, atol=1e-15)
    assert np.allclose(g.F, 0.0) and np.allclose(g.G, 1.0)


def test_jet_shape_guard():
    grid = Grid(3, 3)
    with pytest.raises(GridMismatch):
        EmbeddingJet(grid, np.zeros((3, 3, 3)), np.zeros((3, 3, 3)), np.zeros((3, 2, 3)))


def test_apply_d():
    rng = np.random.default_rng(2)
    f = graph_jet(Grid(3, 3), 0.2, -0.1)
    u = rng.normal(size=(3, 3, 2))
    got = f.apply_d(u)
    expect = u[..., 0:1] * f.dfx + u[..., 1:2] * f.dfy
    assert np.array_equal(got, expect)


def test_require_spacelike():
    flat_inclusion(Grid(3, 3)).require_spacelike()
    steep = graph_jet(Grid(3, 3), 1.2, 0.0)
    with pytest.raises(LostSpacelike):
        steep.require_spacelike()


def test_longness():
    f = flat_inclusion(Grid(5, 5))
    g_short = MetricField.constant(0.5, 0.0, 0.5, (5, 5))
    d = require_long(f, g_short)
    assert d.min_eigenvalue() == pytest.approx(0.5)
    g_big = MetricField.constant(2.0, 0.0, 0.5, (5, 5))
    with pytest.raises(NotLong):
        require_long(f, g_big)
    with pytest.raises(GridMismatch):
        isometric_default(f, MetricField.identity((4, 4)))


# ---------------------------------------------------------------- operator norms


def test_operator_norm_form_frozen():
    g = MetricField.identity((2, 2))
    b = MetricField.constant(2.0, 0.0, -0.5, (2, 2))
    # Eigenvalues 2 and -0.5; the norm takes the largest magnitude.
    assert np.allclose(operator_norm_form(b, g), 2.0)
    assert np.allclose(operator_norm_form(MetricField.constant(-0.5, 0.0, 0.25, (2, 2)), g), 0.5)


def test_operator_norm_form_against_dense():
    rng = np.random.default_rng(21)
    for _ in range(50):
        g = random_pd_metric(rng, ())
        b = MetricField(rng.normal(), rng.normal(), rng.normal())
        gm = np.array([[float(g.E), float(g.F)], [float(g.F), float(g.G)]])
        bm = np.array([[float(b.E), float(b.F)], [float(b.F), float(b.G)]])
        w = np.linalg.cholesky(gm)
        winv = np.linalg.inv(w)
        lam = np.linalg.eigvalsh(winv @ bm @ winv.T)
        assert operator_norm_form(b, g) == pytest.approx(np.max(np.abs(lam)), abs=1e-12)


def test_operator_norm_map_against_svd():
    rng = np.random.default_rng(23)
    for _ in range(50):
        g = random_pd_metric(rng, ())
        A = rng.normal(size=(3, 2))
        gm = np.array([[float(g.E), float(g.F)], [float(g.F), float(g.G)]])
        winv = np.linalg.inv(np.linalg.cholesky(gm))
        s = np.linalg.svd(A @ winv.T, compute_uv=False)
        got = operator_norm_map(A[:, 0], A[:, 1], g)
        assert got == pytest.approx(s[0], abs=1e-12)


def test_operator_norm_map_homogeneity():
    rng = np.random.default_rng(25)
    g = random_pd_metric(rng, (3, 3))
    Ax = rng.normal(size=(3, 3, 3))
    Ay = rng.normal(size=(3, 3, 3))
    base = operator_norm_map(Ax, Ay, g)
    assert np.allclose(operator_norm_map(3.0 * Ax, 3.0 * Ay, g), 3.0 * base, atol=1e-12)
    assert np.allclose(operator_norm_map(Ax, Ay, 4.0 * g), 0.5 * base, atol=1e-12)


def test_c0_c1_distances():
    f1 = flat_inclusion(Grid(4, 4))
    f2 = f1.copy()
    f2.pos[2, 1] += np.array([0.0, 3.0, 4.0])
    assert c0_distance(f1, f2) == pytest.approx(5.0)
    f2.dfx[0, 0] += np.array([0.0, 0.0, 0.5])
    g = MetricField.identity((4, 4))
    assert c1_increment(f1, f2, g) == pytest.approx(0.5)
    with pytest.raises(GridMismatch):
        c0_distance(f1, flat_inclusion(Grid(5, 5)))


# ---------------------------------------------------------------- frame


def test_frame_flat_diagonal_form():
    f = flat_inclusion(Grid(5, 5))
    ell = LinearForm(1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0))
    fr = corrugation_frame(f, ell)
    assert np.allclose(fr.dlu, 1.0, atol=1e-15)
    assert np.allclose(ell.of(fr.v), 0.0, atol=1e-15)


def test_frame_orthonormal_random():
    rng = np.random.default_rng(31)
    grid = Grid(6, 5)
    for _ in range(20):
        f = graph_jet(grid, rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
        ell = LinearForm.from_angle(rng.uniform(0.0, 2.0 * np.pi))
        fr = corrugation_frame(f, ell)
        g = pullback_metric(f)
        assert np.allclose(g.inner(fr.v, fr.v), 1.0, atol=1e-12)
        assert np.allclose(g.inner(fr.u, fr.u), 1.0, atol=1e-12)
        assert np.allclose(g.inner(fr.u, fr.v), 0.0, atol=1e-12)
        assert np.all(fr.dlu > 0.0)
        assert np.allclose(ell.of(fr.v), 0.0, atol=1e-12)
        # Images of a pullback-orthonormal pair are h-orthonormal.
        assert np.allclose(minkowski_inner(fr.t, fr.t), 1.0, atol=1e-12)
        assert np.allclose(minkowski_inner(fr.vhat, fr.vhat), 1.0, atol=1e-12)
        assert np.allclose(minkowski_inner(fr.t, fr.vhat), 0.0, atol=1e-12)
        assert np.allclose(minkowski_inner(fr.n, fr.n), -1.0, atol=1e-12)
        assert np.allclose(minkowski_inner(fr.n, fr.t), 0.0, atol=1e-12)
        assert np.all(fr.n[..., 2] > 0.0)


# ---------------------------------------------------------------- audits and io


def test_jet_audit_exact_for_quadratic():
    grid = Grid(9, 7)
    X, Y = grid.mesh()
    pos = np.stack([X, Y, X**2], axis=-1)
    dfx = np.stack([np.ones(grid.shape), np.zeros(grid.shape), 2.0 * X], axis=-1)
    dfy = np.stack([np.zeros(grid.shape), np.ones(grid.shape), np.zeros(grid.shape)], axis=-1)
    rep = jet_consistency_audit(EmbeddingJet(grid, pos, dfx, dfy))
    # Central differences are exact on quadratics.
    assert rep["max_err_x"] < 1e-13
    assert rep["max_err_y"] < 1e-13
    assert rep["per_step"] < 1e-12


def test_export_obj_layout(tmp_path):
    f = flat_inclusion(Grid(2, 2))
    path = tmp_path / "m.obj"
    export_obj(f, str(path))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 4 + 2
    assert lines[0] == "v 0 0 0"
    assert lines[1] == "v 0 1 0"
    assert lines[2] == "v 1 0 0"
    assert lines[4] == "f 1 3 4"
    assert lines[5] == "f 1 4 2"


def test_metric_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(41)
    g = random_pd_metric(rng, (4, 3))
    path = tmp_path / "g.csv"
    write_metric_csv(str(path), g)
    back = read_metric_csv(str(path))
    # 17 significant digits round-trip doubles exactly.
    assert np.array_equal(back.E, g.E)
    assert np.array_equal(back.F, g.F)
    assert np.array_equal(back.G, g.G)


def test_scalar_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(43)
    field = rng.normal(size=(3, 5))
    path = tmp_path / "s.csv"
    write_scalar_csv(str(path), field, name="eta")
    assert np.array_equal(read_scalar_csv(str(path)), field)
    assert path.read_text().splitlines()[0] == "x_idx,y_idx,eta"


def test_metric_csv_incomplete(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_idx,y_idx,E,F,G\n0,0,1,0,1\n1,1,1,0,1\n")
    with pytest.raises(DomainError):
        read_metric_csv(str(path))
