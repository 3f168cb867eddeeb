"""
Self-checks of the discrete operators against independent references.

Each function returns a flat dict of measured maxima so that the CLI can
write them into a report and the test-suite can assert on them.
"""
from __future__ import annotations

import numpy as np

from . import spatial_spectral as sp
from . import velocity_basis as vb

__all__ = [
    "random_coefficients",
    "oracle_deltas",
    "structural_identities",
    "bernstein_violations",
    "random_band_field",
]


def random_coefficients(trunc, rng, max_degree=None, size=None):
    """Complex Gaussian coefficients, zero above ``max_degree``."""
    shape = (len(trunc),) if size is None else (len(trunc), size)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if max_degree is not None:
        c[trunc.degrees > max_degree] = 0
    return c


def _oracle_integral(rule, g_samples):
    # int g dv = sum_q w_q g(v_q) / M(v_q), over the leading node axis
    w = (rule.weights / rule.sqrt_maxwellian ** 2).reshape((-1,) + (1,) * (np.ndim(g_samples) - 1))
    return np.sum(w * g_samples, axis=0)


def oracle_deltas(N: int, d: int = 3, n_random: int = 200, seed: int = 0) -> dict:
    """Largest |ladder - quadrature| over random inputs of degree <= N - 1.

    All inputs are processed as one batch (columns of ``c``).  The nu-norm
    entry is relative to max(1, |reference|).
    """
    trunc = vb.enumerate_truncation(d, N)
    rule = vb.make_quadrature(d, N + 4)
    rng = np.random.default_rng(seed)
    c = random_coefficients(trunc, rng, N - 1, size=n_random)
    c /= np.linalg.norm(c, axis=0)

    def proj(samples):
        return vb.quadrature_project(samples, rule, trunc)

    def worst(x):
        return float(np.max(np.abs(x)))

    out = {"fokker_planck": worst(vb.apply_fokker_planck(c, trunc)
                                  - proj(vb.oracle_apply(c, trunc, rule, "fokker_planck")))}
    out["multiply_by_v"] = max(worst(vb.multiply_by_v(c, trunc, i)
                                     - proj(vb.oracle_apply(c, trunc, rule, "v", i)))
                               for i in range(d))
    out["differentiate_v"] = max(worst(vb.differentiate_v(c, trunc, i)
                                       - proj(vb.oracle_apply(c, trunc, rule, "dv", i)))
                                 for i in range(d))
    f = vb.quadrature_oracle(c, trunc, rule)
    sm = rule.sqrt_maxwellian[:, None]
    v = rule.nodes
    gam = 0.0
    for i in range(d):
        for j in range(d):
            weight = (v[:, i] * v[:, j] - (i == j))[:, None] * sm
            gam = max(gam, worst(vb.gamma_moment(c, trunc, i, j) - _oracle_integral(rule, weight * f)))
    out["gamma_moment"] = gam
    grads = [vb.oracle_apply(c, trunc, rule, "dv", i) for i in range(d)]
    nu_ref = _oracle_integral(rule, sum(np.abs(g) ** 2 for g in grads)
                              + (1 + np.sum(v ** 2, axis=1))[:, None] * np.abs(f) ** 2)
    out["nu_norm_sq"] = worst((vb.nu_norm_sq(c, trunc) - nu_ref) / np.maximum(1.0, np.abs(nu_ref)))
    a, b, micro = vb.macro_micro_split(c, trunc)
    a_ref = _oracle_integral(rule, sm * f)
    b_ref = np.stack([_oracle_integral(rule, v[:, i, None] * sm * f) for i in range(d)])
    macro_samples = a_ref * sm + sum(b_ref[i] * v[:, i, None] * sm for i in range(d))
    out["macro_micro_split"] = max(worst(a - a_ref), worst(b - b_ref),
                                   worst(micro - proj(f - macro_samples)))
    return out


def structural_identities(N: int, d: int = 3, n_random: int = 50, seed: int = 0) -> dict:
    """Kernel identity, projection algebra and the truncated coercivity constant."""
    trunc = vb.enumerate_truncation(d, N)
    rng = np.random.default_rng(seed)
    kernel = idem = orth = 0.0
    for _ in range(n_random):
        f = random_coefficients(trunc, rng)
        g = random_coefficients(trunc, rng)
        pf = vb.macro_part(f, trunc)
        p1f = pf.copy()
        p1f[0] = 0
        kernel = max(kernel, np.max(np.abs(vb.apply_fokker_planck(pf, trunc) + p1f)))
        idem = max(idem, np.max(np.abs(vb.macro_part(pf, trunc) - pf)),
                   np.max(np.abs(vb.micro_part(vb.micro_part(f, trunc), trunc)
                                 - vb.micro_part(f, trunc))))
        orth = max(orth, abs(np.vdot(vb.micro_part(g, trunc), pf)))
    return {"kernel_identity": float(kernel), "idempotency": float(idem),
            "orthogonality": float(orth), "coercivity": vb.coercivity_constant(trunc)}


def random_band_field(grid, rng, kmax_modes=None):
    """Real random field keeping modes with every |m_axis| <= kmax_modes (default n/3)."""
    kmax_modes = grid.n // 3 if kmax_modes is None else kmax_modes
    g = sp.transform(grid, rng.standard_normal(grid.shape))
    return np.where(np.all(np.abs(grid.mode_numbers) <= kmax_modes, axis=0), g, 0)


def bernstein_violations(grid, n_fields: int = 100, seed: int = 0, rel_tol: float = 1e-12):
    """Count violations of ||g^H|| <= (2/r0)||grad g|| and ||grad^2 g^L|| <= r0 ||grad g^L||.

    r0 is drawn per field between 2 and n/3 lattice spacings.  Returns
    (violations, worst ratio of left to right-hand side).
    """
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(n_fields):
        g = random_band_field(grid, rng)
        r0 = grid.dk * rng.uniform(2.0, grid.n / 3)
        low, high = sp.freq_split(grid, g, r0)
        grad = grid.l2_sq(sp.gradient(grid, g))
        grad_low = grid.l2_sq(sp.gradient(grid, low))
        hess_low = sp.sobolev_norm_sq(grid, grid.k2 * low, 0)
        lhs1, rhs1 = np.sqrt(grid.l2_sq(high)), 2.0 / r0 * np.sqrt(grad)
        lhs2, rhs2 = np.sqrt(hess_low), r0 * np.sqrt(grad_low)
        for lhs, rhs in ((lhs1, rhs1), (lhs2, rhs2)):
            if lhs > rhs * (1 + rel_tol):
                violations += 1
            if rhs > 0:
                worst = max(worst, lhs / rhs)
    return violations, worst
