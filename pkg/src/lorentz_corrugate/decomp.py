"""Decomposition of PSD metric fields over a dictionary of squared forms.

A defect field D is written as sum_j eta_j * ell_j (x) ell_j with eta_j >= 0
per node. Symmetric forms on the plane are 3-dimensional, so the exact
nonnegative least-squares optimum per node is supported on at most 3
dictionary forms; the solver enumerates all supports of size <= 3 in a fixed
order, solves each candidate batched over every node, and keeps the first
one that passes the optimality conditions. This is deterministic, exact and
fully vectorized. Least squares runs in the weighted coordinates
(E, sqrt(2) F, G) so residuals are pointwise Frobenius norms.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConeViolation, DomainError, GridMismatch
from .fields import LinearForm, MetricField

MAX_FORMS = 12

_FEAS_TOL = 1e-11
_OPT_TOL = 1e-10


def resolve_threads(value=None):
    """Thread count from an explicit value or LORENTZ_CORRUGATE_THREADS."""
    if value is None:
        value = os.environ.get("LORENTZ_CORRUGATE_THREADS")
    if value is None:
        return 1
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise DomainError("thread count %r is not an integer" % (value,)) from None
    if n < 1:
        raise DomainError("thread count must be at least 1")
    return n


@dataclass(frozen=True)
class FormDictionary:
    """Ordered tuple of pairwise non-parallel unit forms."""

    forms: tuple
    canonical: bool = False

    def __post_init__(self):
        k = len(self.forms)
        if k < 3:
            raise DomainError("dictionary needs at least 3 forms")
        if k > MAX_FORMS:
            raise DomainError("dictionary capped at %d forms" % MAX_FORMS)
        for i in range(k):
            for j in range(i + 1, k):
                fi, fj = self.forms[i], self.forms[j]
                if abs(fi.a * fj.b - fi.b * fj.a) < 1e-12:
                    raise DomainError("dictionary forms %d and %d are parallel" % (i, j))

    @property
    def k(self):
        return len(self.forms)

    def weighted_matrix(self):
        """3 x k matrix of squared forms in (E, sqrt(2) F, G) coordinates."""
        cols = []
        for f in self.forms:
            cols.append([f.a * f.a, np.sqrt(2.0) * f.a * f.b, f.b * f.b])
        return np.array(cols).T


def build_dictionary(k):
    """Evenly spread directions theta_i = (i-1) pi / k, i = 1..k."""
    forms = tuple(LinearForm.from_angle((i * np.pi) / k) for i in range(k))
    return FormDictionary(forms=forms, canonical=True)


@dataclass
class PrimitiveDecomposition:
    """Coefficient fields per dictionary form plus the achieved residual."""

    forms: tuple
    etas: list
    residual: float

    def reconstruct(self):
        out = None
        for ell, eta in zip(self.forms, self.etas):
            term = ell.outer(eta)
            out = term if out is None else out + term
        return out


def reconstruct(decomp):
    """Sum of eta_j * ell_j (x) ell_j as a MetricField."""
    return decomp.reconstruct()


def _closed_form_k3(delta):
    """Exact coefficients for the canonical 3-form dictionary."""
    E, F, G = delta.E, delta.F, delta.G
    c1 = E - G / 3.0
    c2 = 2.0 * G / 3.0 + 2.0 * F / np.sqrt(3.0)
    c3 = 2.0 * G / 3.0 - 2.0 * F / np.sqrt(3.0)
    return [c1, c2, c3]


def _support_plan(A):
    """Precompute solve data for every support of size 3, 2, 1 in fixed order."""
    k = A.shape[1]
    plan = []
    for size in (3, 2, 1):
        for S in combinations(range(k), size):
            As = A[:, S]
            if size == 3:
                solver = np.linalg.inv(As)
            else:
                solver = np.linalg.pinv(As)
            plan.append((S, As, solver))
    return plan


def _solve_chunk(b, A, plan, feas_tol, opt_tol):
    """Exact per-node NNLS over one block of weighted rows b (m, 3)."""
    m = b.shape[0]
    k = A.shape[1]
    coeff = np.zeros((m, k))
    resid = np.full(m, np.nan)
    open_mask = np.ones(m, dtype=bool)
    scale = 1.0 + np.sqrt(np.einsum("ij,ij->i", b, b))

    for S, As, solver in plan:
        if not np.any(open_mask):
            break
        idx = np.flatnonzero(open_mask)
        bs = b[idx]
        x = bs @ solver.T
        feasible = np.all(x >= -feas_tol, axis=1)
        if len(S) == 3:
            ok = feasible
            r = np.zeros(len(idx))
        else:
            res = bs - x @ As.T
            w = res @ A
            off = np.ones(k, dtype=bool)
            off[list(S)] = False
            optimal = np.all(w[:, off] <= opt_tol * scale[idx, None], axis=1)
            ok = feasible & optimal
            r = np.sqrt(np.einsum("ij,ij->i", res, res))
        hit = idx[ok]
        if hit.size:
            xs = np.maximum(x[ok], 0.0)
            coeff[np.repeat(hit, len(S)), np.tile(list(S), hit.size)] = xs.ravel()
            resid[hit] = r[ok]
            open_mask[hit] = False

    if np.any(open_mask):
        # Remaining nodes: zero vector is the last KKT candidate.
        idx = np.flatnonzero(open_mask)
        bs = b[idx]
        resid[idx] = np.sqrt(np.einsum("ij,ij->i", bs, bs))
    return coeff, resid


def decompose(delta, dictionary, tol_residual=1e-9, threads=None):
    """Nonnegative per-node coefficients of delta over the dictionary.

    Parameters
    ----------
    delta : MetricField
        Pointwise positive semidefinite field (within 1e-12).
    dictionary : FormDictionary
    tol_residual : float
        Sup-node Frobenius reconstruction tolerance; beyond it the field is
        outside the dictionary cone and ConeViolation is raised.
    threads : int or None
        Node-block parallel width; None reads LORENTZ_CORRUGATE_THREADS.
        Results are identical for any value.

    Returns
    -------
    PrimitiveDecomposition
    """
    delta.require_psd(tol=1e-12, what="decomposition input")
    shape = delta.shape

    if dictionary.canonical and dictionary.k == 3:
        coeffs = _closed_form_k3(delta)
        worst = min(float(np.min(c)) for c in coeffs)
        if worst < -1e-12:
            i, j = np.unravel_index(
                np.argmin(np.minimum.reduce([np.asarray(c) for c in coeffs])), shape
            )
            raise ConeViolation(
                "closed-form coefficient %.3e < 0 at node (%d, %d); "
                "matrix E=%.6g F=%.6g G=%.6g"
                % (worst, i, j, delta.E[i, j], delta.F[i, j], delta.G[i, j])
            )
        etas = [np.maximum(np.asarray(c, dtype=float), 0.0) for c in coeffs]
        dec = PrimitiveDecomposition(forms=dictionary.forms, etas=etas, residual=0.0)
        dec.residual = float(np.max((delta - dec.reconstruct()).frobenius()))
        return dec

    A = dictionary.weighted_matrix()
    plan = _support_plan(A)
    b = np.stack([delta.E, np.sqrt(2.0) * delta.F, delta.G], axis=-1).reshape(-1, 3)
    nthreads = resolve_threads(threads)

    if nthreads == 1 or b.shape[0] < 4096:
        coeff, resid = _solve_chunk(b, A, plan, _FEAS_TOL, _OPT_TOL)
    else:
        bounds = np.linspace(0, b.shape[0], nthreads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(
                pool.map(
                    lambda s: _solve_chunk(b[s[0] : s[1]], A, plan, _FEAS_TOL, _OPT_TOL),
                    zip(bounds[:-1], bounds[1:]),
                )
            )
        coeff = np.concatenate([p[0] for p in parts], axis=0)
        resid = np.concatenate([p[1] for p in parts], axis=0)

    sup = float(np.max(resid)) if resid.size else 0.0
    if sup > tol_residual:
        flat = int(np.argmax(resid))
        i, j = np.unravel_index(flat, shape)
        raise ConeViolation(
            "field leaves the dictionary cone: residual %.3e at node (%d, %d); "
            "matrix E=%.6g F=%.6g G=%.6g"
            % (sup, i, j, delta.E[i, j], delta.F[i, j], delta.G[i, j])
        )
    etas = [coeff[:, j].reshape(shape) for j in range(dictionary.k)]
    return PrimitiveDecomposition(forms=dictionary.forms, etas=etas, residual=sup)


def decomposition_jump_audit(dec):
    """Max nearest-neighbor jump of each coefficient field, for smoothness reports."""
    worst = 0.0
    for eta in dec.etas:
        if eta.shape[0] > 1:
            worst = max(worst, float(np.max(np.abs(np.diff(eta, axis=0)))))
        if eta.shape[1] > 1:
            worst = max(worst, float(np.max(np.abs(np.diff(eta, axis=1)))))
    return worst
