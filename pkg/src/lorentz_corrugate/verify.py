"""Self-contained audit suite over every module's checkable claims.

Each check measures a slack against a stated tolerance and returns a
CheckResult; failures are report content, not exceptions. quick level runs
65x65 grids, full level 257x257 plus the oscillation-decay measurement.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import bounds as bnd
from . import corrugation as cor
from .decomp import build_dictionary, decompose
from .errors import ConeViolation
from .fields import (
    EmbeddingJet,
    Grid,
    LinearForm,
    MetricField,
    corrugation_frame,
    jet_consistency_audit,
    operator_norm_form,
    operator_norm_map,
    pullback_metric,
)
from .lorentz import minkowski_inner, timelike_unit_normal
from .scenarios import collar_eta_field, flat_inclusion, scenario, strip_eta_field, STRIP_FORM
from .scheduler import make_schedule, run_nash_kuiper


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    note: str = ""
    seconds: float = 0.0

    def line(self):
        state = "PASS" if self.passed else "FAIL"
        txt = "%s %-34s measured=%.3e tol=%.3e (%.2fs)" % (
            state,
            self.name,
            self.measured,
            self.tolerance,
            self.seconds,
        )
        if self.note:
            txt += "  " + self.note
        return txt


def _perturbed_jet(grid, rng, scale=0.15):
    """Random spacelike graph-like jet with exact analytic differentials."""
    X, Y = grid.mesh()
    ax, ay, bx, by = rng.uniform(0.5, 2.5, size=4)
    w = scale * np.sin(ax * X + bx * Y) * np.cos(ay * Y)
    z = scale * np.sin(ax * X) * np.sin(by * Y)
    pos = np.stack([X + 0.1 * np.sin(Y), Y + w, z], axis=-1)
    dfx = np.stack(
        [
            np.ones_like(X),
            scale * ax * np.cos(ax * X + bx * Y) * np.cos(ay * Y),
            scale * ax * np.cos(ax * X) * np.sin(by * Y),
        ],
        axis=-1,
    )
    dfy = np.stack(
        [
            0.1 * np.cos(Y),
            1.0 + scale * (bx * np.cos(ax * X + bx * Y) * np.cos(ay * Y)
                           - ay * np.sin(ax * X + bx * Y) * np.sin(ay * Y)),
            scale * by * np.sin(ax * X) * np.cos(by * Y),
        ],
        axis=-1,
    )
    return EmbeddingJet(grid, pos, dfx, dfy)


def _check_lorentz(n):
    rng = np.random.default_rng(7)
    v = rng.normal(size=(64, 3))
    w = rng.normal(size=(64, 3))
    sym = float(np.max(np.abs(minkowski_inner(v, w) - minkowski_inner(w, v))))
    basis = np.eye(3)
    sig = np.array([minkowski_inner(basis[i], basis[i]) for i in range(3)])
    ok = sym == 0.0 and np.array_equal(sig, np.array([1.0, 1.0, -1.0]))
    return CheckResult(n, ok, sym, 0.0, note="signature (+,+,-)")


def _check_normal(n):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        t1 = np.array([1.0, 0.0, 0.0]) + 0.3 * rng.normal(size=3) * np.array([1, 1, 0.8])
        t2 = np.array([0.0, 1.0, 0.0]) + 0.3 * rng.normal(size=3) * np.array([1, 1, 0.8])
        g = np.array(
            [[minkowski_inner(t1, t1), minkowski_inner(t1, t2)],
             [minkowski_inner(t1, t2), minkowski_inner(t2, t2)]]
        )
        if np.linalg.eigvalsh(g)[0] < 0.05:
            continue
        m = timelike_unit_normal(t1, t2)
        worst = max(
            worst,
            abs(minkowski_inner(m, t1)),
            abs(minkowski_inner(m, t2)),
            abs(minkowski_inner(m, m) + 1.0),
        )
        if m[2] <= 0.0:
            worst = max(worst, 1.0)
    return CheckResult(n, worst <= 1e-12, worst, 1e-12, note="orthogonal, unit, future")


def _check_flat_pullback(n, grid):
    g = pullback_metric(flat_inclusion(grid))
    worst = max(
        float(np.max(np.abs(g.E - 1.0))),
        float(np.max(np.abs(g.F))),
        float(np.max(np.abs(g.G - 1.0))),
    )
    return CheckResult(n, worst == 0.0, worst, 0.0)


def _check_frame(n, grid):
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(6):
        f = _perturbed_jet(grid, rng)
        ell = LinearForm.from_angle(rng.uniform(0.0, np.pi))
        fr = corrugation_frame(f, ell)
        g = pullback_metric(f)
        worst = max(
            worst,
            float(np.max(np.abs(g.inner(fr.v, fr.v) - 1.0))),
            float(np.max(np.abs(g.inner(fr.u, fr.u) - 1.0))),
            float(np.max(np.abs(g.inner(fr.u, fr.v)))),
            float(np.max(np.abs(minkowski_inner(fr.t, fr.t) - 1.0))),
            float(np.max(np.abs(minkowski_inner(fr.vhat, fr.vhat) - 1.0))),
            float(np.max(np.abs(minkowski_inner(fr.t, fr.vhat)))),
            float(np.max(np.abs(minkowski_inner(fr.n, fr.n) + 1.0))),
            float(np.max(np.abs(minkowski_inner(fr.n, fr.t)))),
            float(np.max(np.abs(minkowski_inner(fr.n, fr.vhat)))),
        )
        if np.any(fr.dlu <= 0.0):
            worst = max(worst, 1.0)
    return CheckResult(n, worst <= 1e-10, worst, 1e-10, note="orthonormality and dl(u) > 0")


def _check_operator_norms(n):
    shape = (1, 1)
    g = MetricField.constant(0.25, 0.0, 0.25, shape)
    Ax = np.zeros(shape + (3,))
    Ax[..., 0] = 1.0
    Ay = np.zeros(shape + (3,))
    Ay[..., 1] = 1.0
    v1 = float(operator_norm_map(Ax, Ay, g)[0, 0])
    B = MetricField.constant(0.5, 0.0, 0.25, shape)
    v2 = float(operator_norm_form(B, MetricField.identity(shape))[0, 0])
    rng = np.random.default_rng(31)
    Mx = rng.normal(size=(4, 3))
    My = rng.normal(size=(4, 3))
    gI = MetricField.identity((4,))
    hom = float(np.max(np.abs(operator_norm_map(2.0 * Mx, 2.0 * My, gI)
                              - 2.0 * operator_norm_map(Mx, My, gI))))
    worst = max(abs(v1 - 2.0), abs(v2 - 0.5), hom)
    return CheckResult(n, worst <= 1e-12, worst, 1e-12, note="known values, homogeneity")


def _check_phi(n):
    a = np.linspace(0.0, 5.0, 101)
    d = float(np.max(np.abs(cor.phi(a) - cor.phi_quadrature(a, samples=8192))))
    exact0 = cor.phi(0.0) == 1.0
    mono = np.all(cor.phi(a) <= np.cosh(a) + 1e-14)
    y = np.linspace(1.0, 30.0, 57)
    res = cor.phi_inverse(y)
    rt = float(np.max(np.abs(cor.phi(res.alpha) - y)))
    ok = d <= 1e-12 and exact0 and bool(mono) and rt <= 1e-9
    return CheckResult(n, ok, max(d, rt), 1e-9, note="series vs quadrature, inverse round-trip")


def _check_psi(n):
    worst = max(abs(bnd.psi2(1e-3) - 2.0) / 1e-3, abs(bnd.psi1(1e-3) - 1.5) / 5e-3)
    iden = 0.0
    for a in (0.5, 1.0, 2.0):
        iden = max(
            iden,
            abs(bnd.psi(a) - (np.sqrt(2.0 * bnd.psi1(a)) + np.sqrt(bnd.psi2(a)))),
        )
    ok = worst <= 1.0 and iden <= 1e-10
    return CheckResult(n, ok, iden, 1e-10, note="limits 2 and 3/2, split identity")


def _check_envelope(n):
    rng = np.random.default_rng(41)
    worst = 0.0
    for amax in (0.5, 1.5, 3.0):
        M = bnd.increment_constant(amax)
        a = rng.uniform(0.0, amax, size=4096)
        worst = max(worst, float(np.max(bnd.psi(np.maximum(a, 1e-9)) / M)))
    k_ok = bnd.chained_growth_constant(1.0, 3) == (2.0 * bnd.growth_constant(1.0)) ** 3
    return CheckResult(n, worst <= 1.0 and k_ok, worst, 1.0, note="psi below padded sup")


def _check_decomp(n):
    rng = np.random.default_rng(53)
    dic5 = build_dictionary(5)
    dic3 = build_dictionary(3)
    worst = 0.0
    for _ in range(25):
        etas = rng.uniform(0.0, 1.0, size=(5, 8, 8))
        target = None
        for ell, eta in zip(dic5.forms, etas):
            term = ell.outer(eta)
            target = term if target is None else target + term
        dec = decompose(target, dic5)
        worst = max(worst, float(np.max((target - dec.reconstruct()).frobenius())))
        if any(float(np.min(e)) < 0.0 for e in dec.etas):
            worst = max(worst, 1.0)
    delta = MetricField.constant(1.0, 0.2, 0.8, (4, 4))
    dec3 = decompose(delta, dic3)
    A = np.array([[f.a * f.a for f in dic3.forms],
                  [f.a * f.b for f in dic3.forms],
                  [f.b * f.b for f in dic3.forms]])
    x = np.linalg.solve(A, np.array([1.0, 0.2, 0.8]))
    closed = np.array([float(dec3.etas[j][0, 0]) for j in range(3)])
    d3 = float(np.max(np.abs(closed - x)))
    try:
        # rank-1 along dy falls outside the span of any 3-form family
        decompose(MetricField.constant(0.0, 0.0, 1.0, (2, 2)), dic3)
        caught = False
    except ConeViolation:
        caught = True
    ok = worst <= 1e-9 and d3 <= 1e-12 and caught
    return CheckResult(n, ok, max(worst, d3), 1e-9, note="round-trip, closed form, cone detect")


def _strip_setup(grid_n):
    grid = Grid(grid_n, grid_n)
    f = flat_inclusion(grid)
    eta = strip_eta_field(grid)
    return f, eta, STRIP_FORM


def _check_average(n, grid_n):
    f, eta, ell = _strip_setup(grid_n)
    params = cor.prepare_step(f, eta, ell)
    worst = float(np.max(np.abs(params.r * params.coeff[0] - 1.0 / params.frame.dlu)))
    return CheckResult(n, worst <= 1e-10, worst, 1e-10)


def _check_identity(n, grid_n):
    f, eta, ell = _strip_setup(grid_n)
    _, rec = cor.cp_step(f, eta, ell, N=12)
    worst = rec.audits["identity_max"]
    return CheckResult(n, worst <= 1e-9, worst, 1e-9, note="target differential pullback")


def _check_series_vs_quadrature(n):
    worst = 0.0
    for alpha in (0.5, 1.3, 2.5):
        coeff = cor.bessel_table(np.array(alpha), cor.series_orders(alpha))
        for x in (0.3, 0.7, 1.9):
            xf = x - np.floor(x)
            sines = cor.sin_table(np.array(xf), coeff.shape[0] - 1)
            Ac, As = cor.remainder_series(coeff, sines)
            qc, qs = cor.remainder_quadrature(alpha, x, samples_per_period=4096)
            worst = max(worst, abs(float(Ac) - qc), abs(float(As) - qs))
    return CheckResult(n, worst <= 1e-6, worst, 1e-6, note="harmonic sums vs trapezoid")


def _check_gluing(n, grid_n):
    grid = Grid(grid_n, grid_n)
    f = flat_inclusion(grid)
    eta = collar_eta_field(grid)
    out, _ = cor.cp_step(f, eta, LinearForm(1.0, 0.0), N=24)
    collar = eta == 0.0
    pos_ok = bool(np.all(out.pos[collar] == f.pos[collar]))
    inner = collar.copy()
    inner[1:, :] &= collar[:-1, :]
    inner[:-1, :] &= collar[1:, :]
    inner[:, 1:] &= collar[:, :-1]
    inner[:, :-1] &= collar[:, 1:]
    d_ok = bool(
        np.all(out.dfx[inner] == f.dfx[inner]) and np.all(out.dfy[inner] == f.dfy[inner])
    )
    ok = pos_ok and d_ok
    return CheckResult(n, ok, 0.0 if ok else 1.0, 0.0, note="bitwise on zero-coefficient collar")


def _check_normal_step(n, grid_n):
    f, eta, ell = _strip_setup(grid_n)
    _, rec = cor.cp_step(f, eta, ell, N=40)
    a = rec.audits
    worst = max(a["normal_unit_actual"], a["normal_unit_predicted"])
    ortho_ok = a["normal_ortho_predicted"] <= a["normal_ortho_budget"]
    return CheckResult(
        n,
        worst <= 1e-8 and ortho_ok,
        worst,
        1e-8,
        note="unit timelike; tilt pairing %.2e <= %.2e" % (a["normal_ortho_predicted"], a["normal_ortho_budget"]),
    )


def _check_small_run(n, grid_n):
    gr = Grid(grid_n, grid_n)
    sc = scenario("flat-shrink")
    f0, g = sc.build(gr)
    final, ledger = run_nash_kuiper(f0, g, stages=3, mode="practical", eps=0.05)
    margin = 0.0
    flags = True
    for row in ledger.rows:
        flags = flags and row.stage_bound_pass and row.c0_pass and row.triangle_pass
        for rec in row.step_records:
            margin = max(
                margin,
                rec.audits["increment_margin"],
                rec.audits["growth_margin"],
                rec.audits["normal_growth_margin"],
            )
    ok = flags and margin <= 1e-9 and ledger.summary["monotone_pass"]
    return CheckResult(n, ok, margin, 1e-9, note="stage flags and step bound margins")


def _check_summability(n):
    K_tilde = bnd.chained_growth_constant(1.0, 3)
    sch = make_schedule(K_tilde, 20, "theoretical")
    terms = sch.summability_terms()
    ratios = [terms[i + 1] / terms[i] for i in range(len(terms) - 1)]
    worst = max(ratios)
    return CheckResult(n, worst <= 0.9, worst, 0.9, note="geometric tail of schedule terms")


def _check_decay(n, grid_n):
    f, eta, ell = _strip_setup(grid_n)
    params = cor.prepare_step(f, eta, ell)
    errs = {}
    for N in (20, 40, 80, 160):
        _, rec = cor.apply_corrugation(params, N)
        errs[N] = rec.sup_default
    ratios = [errs[20] / errs[40], errs[40] / errs[80], errs[80] / errs[160]]
    ok = all(1.5 <= r <= 2.5 for r in ratios) and errs[160] <= errs[20] / 4.0
    worst = max(abs(r - 2.0) for r in ratios)
    return CheckResult(
        n, ok, worst, 0.5, note="ratios %s" % ",".join("%.3f" % r for r in ratios)
    )


def _check_jet_report(n, grid_n):
    f, eta, ell = _strip_setup(grid_n)
    out, _ = cor.cp_step(f, eta, ell, N=24)
    audit = jet_consistency_audit(out)
    return CheckResult(
        n,
        True,
        audit["per_step"],
        float("inf"),
        note="finite differences vs stored partials, reported only",
    )


def run_checks(level="quick"):
    """Run the audit suite; returns a list of CheckResult."""
    grid_n = 65 if level == "quick" else 257
    small = 65
    plan = [
        ("metric-signature", _check_lorentz),
        ("timelike-normal", _check_normal),
        ("flat-pullback-identity", lambda n: _check_flat_pullback(n, Grid(small, small))),
        ("corrugation-frame", lambda n: _check_frame(n, Grid(33, 33))),
        ("operator-norms", _check_operator_norms),
        ("loop-average-phi", _check_phi),
        ("envelope-limits", _check_psi),
        ("increment-envelope-sup", _check_envelope),
        ("primitive-decomposition", _check_decomp),
        ("average-condition", lambda n: _check_average(n, grid_n)),
        ("pullback-identity", lambda n: _check_identity(n, small)),
        ("remainder-series-quadrature", _check_series_vs_quadrature),
        ("compact-support-gluing", lambda n: _check_gluing(n, small)),
        ("corrugated-normal", lambda n: _check_normal_step(n, grid_n)),
        ("staged-run-audits", lambda n: _check_small_run(n, 33)),
        ("schedule-summability", _check_summability),
        ("jet-consistency-report", lambda n: _check_jet_report(n, small)),
    ]
    if level == "full":
        plan.append(("oscillation-decay", lambda n: _check_decay(n, 257)))
    results = []
    for name, make in plan:
        t0 = time.perf_counter()
        try:
            res = make(name)
        except Exception as exc:  # a crashed check is a failed check
            res = CheckResult(name, False, float("nan"), 0.0, note=repr(exc))
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
