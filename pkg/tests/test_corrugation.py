"""Tests for the corrugation step: amplitude solve, oscillation tables,
the exact pullback identity, and the corrugation-number search.

Library Bessel/quadrature/root-finding routines serve as independent
oracles for the hand-rolled series and solvers.
"""
import numpy as np
import pytest
from scipy import integrate, optimize, special

from lorentz_corrugate.corrugation import (
    ALPHA_CAP,
    amplitude,
    apply_corrugation,
    bessel_table,
    cp_step,
    loop_average,
    loop_average_quadrature,
    loop_gamma,
    phi,
    phi_inverse,
    phi_prime,
    phi_quadrature,
    prepare_step,
    radial_factor,
    remainder_quadrature,
    remainder_series,
    select_corrugation_number,
    series_orders,
    sin_table,
    successive_cp,
    target_differential,
)
from lorentz_corrugate.decomp import build_dictionary, decompose
from lorentz_corrugate.errors import (
    BudgetExceeded,
    DomainError,
    LostSpacelike,
    NotRiemannian,
)
from lorentz_corrugate.fields import (
    Grid,
    LinearForm,
    MetricField,
    corrugation_frame,
    isometric_default,
    minkowski_inner,
    operator_norm_form,
    pullback_metric,
)
from lorentz_corrugate.scenarios import (
    STRIP_FORM,
    collar_eta_field,
    flat_inclusion,
    strip_eta_field,
)


def strip_jet(n=33):
    grid = Grid(n, n)
    return grid, flat_inclusion(grid), strip_eta_field(grid)


# --- average function phi and its inverse ---


def test_phi_matches_library_bessel():
    rng = np.random.default_rng(11)
    a = rng.uniform(0.0, 5.0, size=100)
    ref = special.iv(0, a)
    assert np.max(np.abs(phi(a) - ref) / ref) < 1e-14


def test_phi_frozen_values():
    # I_0(1) and I_0(2) to full double precision.
    assert float(phi(0.0)) == 1.0
    assert abs(float(phi(1.0)) - 1.2660658777520084) < 1e-15
    assert abs(float(phi(2.0)) - 2.2795853023360673) < 1e-15


def test_phi_prime_matches_library_bessel():
    rng = np.random.default_rng(12)
    a = rng.uniform(1e-6, 5.0, size=100)
    ref = special.iv(1, a)
    assert np.max(np.abs(phi_prime(a) - ref) / ref) < 1e-13
    assert float(phi_prime(0.0)) == 0.0


def test_phi_domain_guard():
    phi(ALPHA_CAP)  # boundary is admissible
    with pytest.raises(DomainError):
        phi(-0.1)
    with pytest.raises(DomainError):
        phi(ALPHA_CAP + 1.0)


def test_phi_quadrature_cross_check():
    """The series and the trapezoid average agree; quad agrees with both."""
    for a in (0.3, 1.7, 4.0):
        assert abs(float(phi(a)) - float(phi_quadrature(a))) < 1e-12
    q, _ = integrate.quad(lambda s: np.cosh(1.7 * np.cos(2 * np.pi * s)), 0.0, 1.0)
    assert abs(float(phi(1.7)) - q) < 1e-12


def test_phi_inverse_roundtrip():
    rng = np.random.default_rng(13)
    a = rng.uniform(1e-3, 5.0, size=40)
    res = phi_inverse(phi(a))
    assert np.max(np.abs(np.asarray(res.alpha) - a)) < 1e-9


def test_phi_inverse_frozen_and_edges():
    # alpha with I_0(alpha) = sqrt(2), pinned by bracketing root-finding.
    r = phi_inverse(np.sqrt(2.0))
    assert abs(float(r.alpha) - 1.2282198517512042) < 1e-11
    assert float(phi_inverse(1.0).alpha) == 0.0
    # tiny dips below 1 are clamped, genuine ones rejected
    assert float(phi_inverse(1.0 - 1e-13).alpha) == 0.0
    with pytest.raises(DomainError):
        phi_inverse(0.9)


def test_phi_inverse_library_oracle():
    for y in (1.05, 2.0, 11.3, 150.0):
        ref = optimize.brentq(
            lambda a: special.iv(0, a) - y, 1e-12, 20.0, xtol=1e-14
        )
        assert abs(float(phi_inverse(y).alpha) - ref) < 1e-10


def test_phi_inverse_monotone_vectorized():
    y = np.linspace(1.0, 40.0, 80)
    a = np.asarray(phi_inverse(y).alpha)
    assert a.shape == y.shape
    assert np.all(np.diff(a) > 0.0)


# --- loop radius, amplitude, loop average ---


def test_radial_factor_values_and_guard():
    assert abs(float(radial_factor(0.5, 1.0)) - np.sqrt(0.5)) < 1e-15
    assert abs(float(radial_factor(0.0, 2.0)) - 0.5) < 1e-15
    with pytest.raises(NotRiemannian):
        radial_factor(1.0, 1.0)
    with pytest.raises(NotRiemannian):
        radial_factor(np.array([0.1, 0.9]), np.array([1.0, 1.1]))


def test_amplitude_average_condition():
    """r phi(alpha) dlu = 1: the corrugated average matches the original."""
    rng = np.random.default_rng(14)
    eta = rng.uniform(0.0, 0.9, size=200)
    dlu = rng.uniform(0.3, 1.0, size=200)
    r = radial_factor(eta, dlu)
    a = np.asarray(amplitude(r, dlu).alpha)
    assert np.max(np.abs(r * phi(a) * dlu - 1.0)) < 1e-10


def test_loop_gamma_causal_norm():
    """h(gamma, gamma) = r^2 for any h-orthonormal pair, any phase."""
    rng = np.random.default_rng(15)
    b = rng.uniform(-1.0, 1.0, size=30)
    t = np.stack([np.cosh(b), np.zeros_like(b), np.sinh(b)], axis=-1)
    n = np.stack([np.sinh(b), np.zeros_like(b), np.cosh(b)], axis=-1)
    r = rng.uniform(0.2, 2.0, size=30)
    al = rng.uniform(0.0, 2.0, size=30)
    s = rng.uniform(0.0, 1.0, size=30)
    g = loop_gamma(r, al, t, n, s)
    assert np.max(np.abs(minkowski_inner(g, g) - r**2)) < 1e-12


def test_loop_average_closed_form_vs_quadrature():
    rng = np.random.default_rng(16)
    b = rng.uniform(-0.5, 0.5, size=20)
    t = np.stack([np.cosh(b), np.zeros_like(b), np.sinh(b)], axis=-1)
    n = np.stack([np.sinh(b), np.zeros_like(b), np.cosh(b)], axis=-1)
    r = rng.uniform(0.2, 2.0, size=20)
    al = rng.uniform(0.0, 3.0, size=20)
    closed = loop_average(r, al, t)
    quad = loop_average_quadrature(r, al, t, n)
    assert np.max(np.abs(closed - quad)) < 1e-12


# --- oscillation tables ---


def test_series_orders_bounds_and_monotone():
    assert series_orders(1e-8) == 10
    assert series_orders(1e6) == 120
    vals = [series_orders(a) for a in (0.5, 2.0, 8.0, 40.0)]
    assert vals == sorted(vals)
    assert all(10 <= v <= 120 for v in vals)


def test_bessel_table_library_oracle():
    orders = 24
    a = np.array([0.0, 1e-3, 0.3, 0.7, 3.0, 30.0, 300.0, 499.0])
    tab = bessel_table(a, orders)
    ref = np.array([[special.iv(k, x) for x in a] for k in range(orders + 1)])
    nz = ref != 0.0
    assert np.max(np.abs(tab[nz] - ref[nz]) / np.abs(ref[nz])) < 5e-14
    # exact zero column: I_0 = 1, higher orders 0
    assert tab[0, 0] == 1.0
    assert np.all(tab[1:, 0] == 0.0)
    # scalar-shaped input keeps working
    scal = bessel_table(np.array(2.5), 6)
    assert scal.shape == (7,)
    assert abs(scal[3] - special.iv(3, 2.5)) < 1e-14


def test_sin_table_recurrence():
    rng = np.random.default_rng(17)
    x = rng.uniform(0.0, 1.0, size=64)
    S = sin_table(x, 60)
    for k in (0, 1, 7, 31, 60):
        assert np.max(np.abs(S[k] - np.sin(2.0 * np.pi * k * x))) < 1e-10


def test_remainder_series_vs_quadrature():
    for a in (0.5, 2.0):
        orders = series_orders(a)
        coeff = bessel_table(np.array([a]), orders)
        for x in (0.13, 0.37, 0.5, 0.81):
            sines = sin_table(np.array([x]), orders)
            Ac, As = remainder_series(coeff, sines)
            qc, qs = remainder_quadrature(a, x, samples_per_period=32768)
            assert abs(float(Ac[0]) - qc) < 1e-6
            assert abs(float(As[0]) - qs) < 1e-6


def test_remainder_vanishes_at_integer_phase():
    a = 1.3
    orders = series_orders(a)
    coeff = bessel_table(np.array([a]), orders)
    sines = sin_table(np.array([0.0]), orders)
    Ac, As = remainder_series(coeff, sines)
    assert float(Ac[0]) == 0.0 and float(As[0]) == 0.0
    qc, qs = remainder_quadrature(a, 1.0, samples_per_period=32768)
    assert abs(qc) < 1e-8 and abs(qs) < 1e-12


# --- step construction ---


def test_prepare_step_guards():
    grid, f, eta = strip_jet(9)
    with pytest.raises(DomainError):
        prepare_step(f, -eta, STRIP_FORM)
    with pytest.raises(DomainError):
        prepare_step(f, eta[:-1], STRIP_FORM)


def test_prepare_step_intermediate_metric():
    grid, f, eta = strip_jet(17)
    params = prepare_step(f, eta, STRIP_FORM)
    want = pullback_metric(f) - STRIP_FORM.outer(eta)
    assert np.max(np.abs(params.mu.E - want.E)) == 0.0
    assert np.max(np.abs(params.mu.F - want.F)) == 0.0
    assert np.max(np.abs(params.mu.G - want.G)) == 0.0


def test_target_differential_pullback_identity():
    """L*h = mu exactly, at arbitrary oscillation phase."""
    grid, f, eta = strip_jet(17)
    params = prepare_step(f, eta, STRIP_FORM)
    rng = np.random.default_rng(18)
    xhat = rng.uniform(0.0, 1.0, size=grid.shape)
    Lx, Ly = target_differential(params, xhat)
    assert np.max(np.abs(minkowski_inner(Lx, Lx) - params.mu.E)) < 1e-12
    assert np.max(np.abs(minkowski_inner(Lx, Ly) - params.mu.F)) < 1e-12
    assert np.max(np.abs(minkowski_inner(Ly, Ly) - params.mu.G)) < 1e-12


def test_target_differential_fixes_kernel_direction():
    """Along ker dl the corrugated differential equals the original."""
    grid, f, eta = strip_jet(17)
    params = prepare_step(f, eta, STRIP_FORM)
    v = params.frame.v
    Lx, Ly = target_differential(params, np.full(grid.shape, 0.37))
    new = v[..., 0:1] * Lx + v[..., 1:2] * Ly
    old = v[..., 0:1] * f.dfx + v[..., 1:2] * f.dfy
    assert np.max(np.abs(new - old)) < 1e-13


def test_zero_eta_step_is_identity():
    grid = Grid(17, 17)
    f = flat_inclusion(grid)
    out, rec = cp_step(f, np.zeros(grid.shape), STRIP_FORM, 8)
    assert np.array_equal(out.pos, f.pos)
    assert np.array_equal(out.dfx, f.dfx)
    assert np.array_equal(out.dfy, f.dfy)
    assert rec.sup_default == 0.0 and rec.c0_shift == 0.0


def test_collar_support_is_bitwise_untouched():
    """Nodes whose neighborhood misses supp(eta) keep position and
    differential bit for bit."""
    grid = Grid(33, 33)
    f = flat_inclusion(grid)
    eta = collar_eta_field(grid)
    out, rec = cp_step(f, eta, STRIP_FORM, 16)
    zero = eta == 0.0
    assert np.array_equal(out.pos[zero], f.pos[zero])
    quiet = zero.copy()
    quiet[1:-1] &= zero[2:] & zero[:-2]
    quiet[0] &= zero[1]
    quiet[-1] &= zero[-2]
    quiet[:, 1:-1] &= zero[:, 2:] & zero[:, :-2]
    quiet[:, 0] &= zero[:, 1]
    quiet[:, -1] &= zero[:, -2]
    assert np.count_nonzero(quiet) > 0
    assert np.array_equal(out.dfx[quiet], f.dfx[quiet])
    assert np.array_equal(out.dfy[quiet], f.dfy[quiet])
    assert rec.spacelike_min > 0.0


def test_step_audits_on_strip():
    grid, f, eta = strip_jet(33)
    out, rec = cp_step(f, eta, STRIP_FORM, 32)
    aud = rec.audits
    assert aud["identity_max"] < 1e-12
    assert aud["average_max"] < 1e-10
    assert aud["normal_unit_predicted"] < 1e-8
    assert aud["normal_ortho_exact"] < 1e-12
    assert aud["normal_ortho_predicted"] <= aud["normal_ortho_budget"]
    assert aud["normal_ortho_actual"] <= aud["normal_ortho_budget"]
    assert aud["normal_unit_actual"] < 1e-6
    assert aud["increment_margin"] <= 0.0
    assert aud["growth_margin"] <= 0.0
    assert aud["normal_growth_margin"] <= 0.0


def test_defect_decays_with_corrugation_number():
    grid, f, eta = strip_jet(33)
    sups = []
    for N in (24, 48, 96):
        out, rec = cp_step(f, eta, STRIP_FORM, N)
        sups.append(rec.sup_default)
    assert sups[0] > sups[1] > sups[2]


def test_apply_corrugation_rejects_bad_N():
    grid, f, eta = strip_jet(9)
    params = prepare_step(f, eta, STRIP_FORM)
    with pytest.raises(DomainError):
        apply_corrugation(params, 0)


def test_chained_steps_can_lose_spacelikeness():
    """Corrugating an already corrugated jet at too small an N drives the
    pullback metric past the light cone; the guard reports it."""
    grid = Grid(33, 33)
    f = flat_inclusion(grid)
    g1 = MetricField.constant(0.75, 0.0, 0.75, grid.shape)
    dec = decompose(isometric_default(f, g1), build_dictionary(5))
    act = [i for i, e in enumerate(dec.etas) if float(np.max(e)) > 1e-14]
    mid, _ = cp_step(f, dec.etas[act[0]], dec.forms[act[0]], 16)
    with pytest.raises(LostSpacelike):
        cp_step(mid, dec.etas[act[1]], dec.forms[act[1]], 4)
    out, rec = cp_step(mid, dec.etas[act[1]], dec.forms[act[1]], 4, raise_on_loss=False)
    assert rec.spacelike_min <= 0.0
    assert rec.audits["normal_unit_actual"] == np.inf


# --- corrugation number search ---


def test_select_accepts_zero_field_at_start():
    grid = Grid(17, 17)
    f = flat_inclusion(grid)
    out, rec = select_corrugation_number(f, np.zeros(grid.shape), STRIP_FORM, 0.05)
    assert rec.N == 16


def test_select_monotone_in_epsilon():
    grid, f, eta = strip_jet(33)
    _, loose = select_corrugation_number(f, eta, STRIP_FORM, 0.05)
    _, tight = select_corrugation_number(f, eta, STRIP_FORM, 0.0125)
    assert loose.sup_default <= 0.05
    assert tight.sup_default <= 0.0125
    assert tight.N >= loose.N


def test_select_budget_exhaustion():
    # tilted form so no ladder N aligns with the node lattice
    grid, f, eta = strip_jet(17)
    ell = LinearForm(1.0, 0.3)
    with pytest.raises(BudgetExceeded):
        select_corrugation_number(f, eta, ell, 1e-15, cap=256)
    with pytest.raises(BudgetExceeded):
        select_corrugation_number(f, eta, ell, 0.05, c0_budget=1e-12, cap=256)


def test_successive_cp_zero_decomposition():
    grid = Grid(17, 17)
    f = flat_inclusion(grid)
    dec = decompose(
        MetricField.constant(0.0, 0.0, 0.0, grid.shape), build_dictionary(5)
    )
    out, records = successive_cp(f, dec, 0.05)
    assert records == []
    assert np.array_equal(out.pos, f.pos)


def test_successive_cp_triangle_bound():
    """Per-step errors accumulate at most additively: after k steps the
    defect against the stage target is below k * eps plus slack."""
    grid = Grid(33, 33)
    f = flat_inclusion(grid)
    g1 = MetricField.constant(0.75, 0.0, 0.75, grid.shape)
    dec = decompose(isometric_default(f, g1), build_dictionary(3))
    eps = 0.02
    out, records = successive_cp(f, dec, eps, norm_metric=g1)
    k = len(records)
    assert k == 3
    final = float(np.max(operator_norm_form(isometric_default(out, g1), g1)))
    assert final <= k * eps + dec.residual + 1e-9
    for rec in records:
        assert rec.sup_default <= eps
        assert rec.alpha_max > 0.0
        assert rec.spacelike_min > 0.0
