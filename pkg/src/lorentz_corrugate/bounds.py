"""Quantitative constants controlling one corrugation step and their chains.

psi bounds the C1 increment of a step per unit sqrt(eta) dl(u); its square
splits as psi = sqrt(2 psi1) + sqrt(psi2). All three have removable
singularities at alpha = 0 with limits sqrt(3) + sqrt(2), 3/2 and 2; below
a small threshold the limits are returned so the three stay algebraically
consistent. The per-run constants M (padded sup of psi), K (differential
growth), (2K)^k (growth chained through a dictionary sweep), the form
family constant c and the C1 budget T feed the scheduler's audits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corrugation import phi
from .errors import DomainError
from .fields import form_norm, operator_norm_form, operator_norm_map
from .lorentz import euclidean_norm, timelike_unit_normal

SMALL_ALPHA = 1e-4
PSI_LIMIT = np.sqrt(3.0) + np.sqrt(2.0)
PSI1_LIMIT = 1.5
PSI2_LIMIT = 2.0


def _split(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0.0):
        raise DomainError("psi needs alpha >= 0")
    small = a < SMALL_ALPHA
    return small, np.where(small, 1.0, a)


def psi(alpha):
    """C1 increment envelope (sqrt(2 cosh^2 - 2 phi) + sinh) / sqrt(phi^2 - 1)."""
    small, safe = _split(alpha)
    p = phi(safe)
    num = np.sqrt(2.0 * np.cosh(safe) ** 2 - 2.0 * p) + np.sinh(safe)
    val = num / np.sqrt(p**2 - 1.0)
    out = np.where(small, PSI_LIMIT, val)
    return out if out.shape else float(out)


def psi1(alpha):
    """(cosh^2 - phi) / (phi^2 - 1), the squared even part of psi."""
    small, safe = _split(alpha)
    p = phi(safe)
    val = (np.cosh(safe) ** 2 - p) / (p**2 - 1.0)
    out = np.where(small, PSI1_LIMIT, val)
    return out if out.shape else float(out)


def psi2(alpha):
    """sinh^2 / (phi^2 - 1), the squared odd part of psi."""
    small, safe = _split(alpha)
    p = phi(safe)
    val = np.sinh(safe) ** 2 / (p**2 - 1.0)
    out = np.where(small, PSI2_LIMIT, val)
    return out if out.shape else float(out)


def increment_constant(alpha_max, samples=4096, pad=1.01):
    """Padded sup of psi over (0, alpha_max].

    Dense sampling (log and linear mixed) joined with the alpha -> 0 limit;
    no monotonicity of psi is assumed. The pad covers sampling gaps.
    """
    a = float(alpha_max)
    if a <= 0.0:
        raise DomainError("increment_constant needs alpha_max > 0")
    grid = np.concatenate(
        [np.geomspace(a * 1e-6, a, samples // 2), np.linspace(a / samples, a, samples // 2)]
    )
    sup = max(float(np.max(psi(grid))), PSI_LIMIT)
    return pad * sup


def growth_constant(alpha_max):
    """K = 2 cosh(alpha_max) + 1 bounding one step's differential growth."""
    a = float(alpha_max)
    if a < 0.0:
        raise DomainError("growth_constant needs alpha_max >= 0")
    return 2.0 * np.cosh(a) + 1.0


def chained_growth_constant(alpha_max, k):
    """(2K)^k, the growth factor across one full dictionary sweep."""
    if k < 1:
        raise DomainError("chained growth needs at least one form")
    return (2.0 * growth_constant(alpha_max)) ** int(k)


def form_family_constant(decomposition, g):
    """Measured c with sum_j sqrt(eta_j) |dl_j|_g <= c |sum eta_j dl_j^2|_g^(1/2).

    Taken as the max over nodes where the reconstruction is nonzero; 0.0
    when every coefficient vanishes.
    """
    recon = decomposition.reconstruct()
    den = np.sqrt(operator_norm_form(recon, g))
    num = np.zeros_like(den)
    for ell, eta in zip(decomposition.forms, decomposition.etas):
        num += np.sqrt(np.maximum(eta, 0.0)) * form_norm(ell, g)
    mask = den > 1e-14
    if not np.any(mask):
        return 0.0
    return float(np.max(num[mask] / den[mask]))


def c1_budget_constant(increment, form_constant, f0, g):
    """T = 2 M c (|df0|_{g} + |n0|), the chained C1 drift budget."""
    df_norm = float(np.max(operator_norm_map(f0.dfx, f0.dfy, g)))
    n0 = timelike_unit_normal(f0.dfx, f0.dfy)
    n_norm = float(np.max(euclidean_norm(n0)))
    return 2.0 * increment * form_constant * (df_norm + n_norm)


@dataclass
class BoundConstants:
    """Constant pack for a run at a given amplitude cap and dictionary size."""

    alpha_max: float
    k: int
    increment: float
    growth: float
    chained_growth: float
    form_constant: float = float("nan")
    c1_budget: float = float("nan")

    def rows(self):
        out = [
            ("alpha_max", self.alpha_max),
            ("dictionary_size", float(self.k)),
            ("increment_constant", self.increment),
            ("growth_constant", self.growth),
            ("chained_growth_constant", self.chained_growth),
        ]
        if np.isfinite(self.form_constant):
            out.append(("form_constant", self.form_constant))
        if np.isfinite(self.c1_budget):
            out.append(("c1_budget_constant", self.c1_budget))
        return out


def compute_constants(alpha_max, k, decomposition=None, f0=None, g=None):
    """BoundConstants for (alpha_max, k); c and T when initial data is given."""
    bc = BoundConstants(
        alpha_max=float(alpha_max),
        k=int(k),
        increment=increment_constant(alpha_max),
        growth=growth_constant(alpha_max),
        chained_growth=chained_growth_constant(alpha_max, k),
    )
    if decomposition is not None and g is not None:
        bc.form_constant = form_family_constant(decomposition, g)
        if f0 is not None:
            bc.c1_budget = c1_budget_constant(bc.increment, bc.form_constant, f0, g)
    return bc
