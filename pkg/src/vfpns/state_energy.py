"""
System state (f, rho, u) and the norms and energy functionals evaluated on it.

All functionals are computed mode by mode in Fourier space.  Velocity
integrals go through the ladder matrices of the truncation (consistent with
the zero-flux closure); the Gauss-Hermite rule is used only for the mixed
Lebesgue norms and the positivity probe, where a pointwise value in v is
needed.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass

import numpy as np

from . import spatial_spectral as sp
from . import velocity_basis as vb
from .params import EnergyWeights, ModelParams
from .spatial_spectral import Grid
from .velocity_basis import QuadratureRule, Truncation

__all__ = [
    "StateQualityError",
    "SystemState",
    "DiagnosticsRecord",
    "CSV_COLUMNS",
    "mixed_norm_Hxv_sq",
    "zq_norm",
    "state_zq_norm",
    "first_order_functionals",
    "second_order_functionals",
    "conserved_quantities",
    "positivity_min",
    "diagnostics",
]


class StateQualityError(RuntimeError):
    """The state left the admissible region (1 + rho <= 0 or non-finite values)."""


@dataclass(frozen=True, eq=False)
class SystemState:
    """Spectral coefficients of f (shape (n_alpha, *grid)), rho (*grid) and u (d, *grid)."""

    grid: Grid
    trunc: Truncation
    f: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        g, t = self.grid, self.trunc
        if g.dim != t.dim_v:
            raise ValueError("grid and truncation dimensions differ")
        if self.f.shape != (len(t),) + g.shape:
            raise ValueError(f"f has shape {self.f.shape}, expected {(len(t),) + g.shape}")
        if self.rho.shape != g.shape:
            raise ValueError(f"rho has shape {self.rho.shape}, expected {g.shape}")
        if self.u.shape != (g.dim,) + g.shape:
            raise ValueError(f"u has shape {self.u.shape}, expected {(g.dim,) + g.shape}")

    @classmethod
    def zeros(cls, grid: Grid, trunc: Truncation, time: float = 0.0) -> "SystemState":
        return cls(grid, trunc,
                   np.zeros((len(trunc),) + grid.shape, complex),
                   np.zeros(grid.shape, complex),
                   np.zeros((grid.dim,) + grid.shape, complex),
                   time)

    @classmethod
    def from_physical(cls, grid, trunc, f, rho, u, time=0.0) -> "SystemState":
        return cls(grid, trunc, sp.transform(grid, f), sp.transform(grid, rho),
                   sp.transform(grid, u), time)

    @classmethod
    def from_stack(cls, grid, trunc, stack, time=0.0) -> "SystemState":
        n = len(trunc)
        return cls(grid, trunc, stack[:n], stack[n], stack[n + 1:], time)

    @property
    def n_components(self) -> int:
        return len(self.trunc) + 1 + self.grid.dim

    def stack(self) -> np.ndarray:
        """Per-mode state vectors (c_alpha, rho, u), shape (n_alpha + 1 + d, *grid)."""
        return np.concatenate([self.f, self.rho[None], self.u])

    def replace(self, **changes) -> "SystemState":
        return dataclasses.replace(self, **changes)

    def scaled(self, factor) -> "SystemState":
        return self.replace(f=factor * self.f, rho=factor * self.rho, u=factor * self.u)

    @property
    def a(self):
        return self.f[0]

    @property
    def b(self):
        return self.f[1:self.grid.dim + 1]

    def micro(self):
        return vb.micro_part(self.f, self.trunc)

    def density_physical(self):
        return sp.inverse_transform(self.grid, self.rho)

    def check_quality(self):
        if not (np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.rho))
                and np.all(np.isfinite(self.u))):
            raise StateQualityError(f"non-finite values at t={self.time}")
        rho = self.density_physical()
        if np.min(1 + rho) <= 0:
            raise StateQualityError(
                f"1 + rho reaches {np.min(1 + rho):.3e} <= 0 at t={self.time}")


# ---------------------------------------------------------------------------
# per-mode symbols


def _symbol(grid: Grid, s: int) -> np.ndarray:
    return sp._multi_index_symbol(grid, s)


def _pairs(d):
    return [(i, j) for i in range(d) for j in range(i, d)]


def _vel_derivatives(c, trunc, order):
    """List of d_v^beta c over multi-indices |beta| == order (each counted once)."""
    d = trunc.dim_v
    if order == 1:
        return [vb.differentiate_v(c, trunc, i) for i in range(d)]
    first = [vb.differentiate_v(c, trunc, i) for i in range(d)]
    return [vb.differentiate_v(first[i], trunc, j) for i, j in _pairs(d)]


def _modal_sum(grid, weight, power) -> float:
    return float(np.sum(weight * power)) * grid.volume / grid.n ** (2 * grid.dim)


def _power(c):
    """sum over leading axis of |c|^2."""
    return np.sum(np.abs(c) ** 2, axis=0)


def mixed_norm_Hxv_sq(state: SystemState, s: int = 2) -> float:
    """sum_{|alpha| + |beta| <= s} ||d_x^alpha d_v^beta f||^2 (multi-index convention)."""
    if s not in (0, 1, 2):
        raise ValueError("mixed norm order must be 0, 1 or 2")
    grid, trunc = state.grid, state.trunc
    total = 0.0
    for vorder in range(s + 1):
        xw = _symbol(grid, s - vorder)
        if vorder == 0:
            total += _modal_sum(grid, xw, _power(state.f))
        else:
            for g in _vel_derivatives(state.f, trunc, vorder):
                total += _modal_sum(grid, xw, _power(g))
    return total


def zq_norm(grid: Grid, trunc: Truncation, fhat, q: float = 2.0,
            rule: QuadratureRule | None = None) -> float:
    """||f||_{Z_q} = (int ||f(., v)||_{L^q_x}^2 dv)^(1/2) by Gauss-Hermite nodes in v."""
    if q < 1:
        raise ValueError(f"Z_q needs q >= 1, got {q}")
    if rule is None:
        rule = vb.make_quadrature(trunc.dim_v, trunc.max_degree + 4)
    # polynomial part p(x, v_q) with f = p sqrt(M); int G dv = sum_q w_q G(v_q) / M(v_q)
    fx = sp.inverse_transform(grid, fhat)
    tabs = [vb._hermite_tables(rule.nodes[:, i], trunc.max_degree) for i in range(trunc.dim_v)]
    basis = np.ones((rule.nodes.shape[0], len(trunc)))
    for i in range(trunc.dim_v):
        basis *= tabs[i][:, trunc.indices[:, i]]
    total = 0.0
    flat = fx.reshape(len(trunc), -1)
    for node in range(rule.nodes.shape[0]):
        p = basis[node] @ flat
        total += rule.weights[node] * sp.lebesgue_norm(grid, p, q) ** 2
    return float(np.sqrt(total))


def state_zq_norm(state: SystemState, q: float = 2.0, rule=None) -> float:
    """(||f||_{Z_q}^2 + ||rho||_{L^q}^2 + ||u||_{L^q}^2)^(1/2)."""
    grid = state.grid
    fz = zq_norm(grid, state.trunc, state.f, q, rule)
    rho = sp.lebesgue_norm(grid, sp.inverse_transform(grid, state.rho), q)
    uphys = sp.inverse_transform(grid, state.u)
    umag = np.sqrt(np.sum(uphys ** 2, axis=0))
    return float(np.sqrt(fz ** 2 + rho ** 2 + sp.lebesgue_norm(grid, umag, q) ** 2))


# ---------------------------------------------------------------------------
# energy functionals


def _gamma_cross(grid, bhat, gam, weight):
    """sum_k weight Re sum_ij (i k_i b_j + i k_j b_i) conj(Gamma_ij)."""
    d = grid.dim
    acc = np.zeros(grid.shape)
    for i in range(d):
        for j in range(d):
            sym = 1j * grid.k[i] * bhat[j] + 1j * grid.k[j] * bhat[i]
            acc += np.real(sym * np.conj(gam[i, j]))
    return _modal_sum(grid, weight, acc)


def _a_divb(grid, ahat, bhat, weight):
    """sum_k weight Re a conj(i k . b)."""
    ikb = sum(1j * grid.k[i] * bhat[i] for i in range(grid.dim))
    return _modal_sum(grid, weight, np.real(ahat * np.conj(ikb)))


def macro_functional(state: SystemState) -> float:
    """The cross functional E_0 built on Gamma_ij of the micro part (derivative order <= 1)."""
    grid, trunc = state.grid, state.trunc
    w1 = _symbol(grid, 1)
    gam = vb.gamma_matrix(state.micro(), trunc)
    return _gamma_cross(grid, state.b, gam, w1) - _a_divb(grid, state.a, state.b, w1)


def first_order_functionals(state: SystemState, params: ModelParams,
                            weights: EnergyWeights | None = None):
    """Return (E, D, E0) for the a-priori estimate dE/dt + lambda D <= 0.

    E = sum_{|alpha|<=2} (||d^alpha f||^2 + P'(1) ||d^alpha rho||^2 + ||d^alpha u||^2)
        + tau_1 E0 + tau_2 sum_{|alpha|<=1} int d^alpha u . d^alpha grad rho
        + tau_3 sum_k C_k sum_{|beta|=k, |alpha|+|beta|<=2} ||d_x^alpha d_v^beta (I-P) f||^2

    The base norm carries the P'(1) weight on rho and velocity derivatives
    only enter through the tau_3 micro terms; this is the combination whose
    time derivative is dissipative.
    """
    weights = weights or EnergyWeights()
    grid, trunc = state.grid, state.trunc
    w1, w2 = _symbol(grid, 1), _symbol(grid, 2)
    k2 = grid.k2
    dp1 = params.dp1
    micro = state.micro()

    e0 = macro_functional(state)
    base = _modal_sum(grid, w2, _power(state.f) + dp1 * np.abs(state.rho) ** 2 + _power(state.u))
    grad_rho = sp.gradient(grid, state.rho)
    cross_u = _modal_sum(grid, w1, np.real(np.sum(state.u * np.conj(grad_rho), axis=0)))
    dv1 = _vel_derivatives(micro, trunc, 1)
    dv2 = _vel_derivatives(micro, trunc, 2)
    mixed = (weights.ck[0] * sum(_modal_sum(grid, w1, _power(g)) for g in dv1)
             + weights.ck[1] * sum(_modal_sum(grid, 1.0, _power(g)) for g in dv2))
    energy = base + weights.t(1) * e0 + weights.t(2) * cross_u + weights.t(3) * mixed

    a, b, u, rho = state.a, state.b, state.u, state.rho
    nu_micro = vb.nu_norm_sq(micro, trunc)
    diss = (_modal_sum(grid, w2, _power(b - u))
            + _modal_sum(grid, k2 * w1, np.abs(a) ** 2 + _power(b) + np.abs(rho) ** 2)
            + _modal_sum(grid, k2 * w2, _power(u))
            + 2 * _modal_sum(grid, w2, nu_micro)
            + sum(_modal_sum(grid, w1, vb.nu_norm_sq(g, trunc)) for g in dv1)
            + sum(_modal_sum(grid, 1.0, vb.nu_norm_sq(g, trunc)) for g in dv2))
    return float(energy), float(diss), float(e0)


def high_macro_functional(state: SystemState, r0: float) -> float:
    """E_0^H: the cross functional restricted to high frequencies, one derivative higher."""
    grid, trunc = state.grid, state.trunc
    phi1 = 1.0 - sp.cutoff_low(grid.kmag, r0)
    gam = vb.gamma_matrix(state.micro(), trunc) * phi1
    bh = state.b * phi1
    ah = state.a * phi1
    return _gamma_cross(grid, bh, gam, grid.k2) - _a_divb(grid, ah, bh, grid.k2)


def second_order_functionals(state: SystemState, params: ModelParams,
                             weights: EnergyWeights | None = None, r0: float = 1.0):
    """Return (E1, D1, E0H) for the second-order estimate with low-frequency source.

    ``r0`` is the cutoff radius in absolute wavenumber units.
    """
    weights = weights or EnergyWeights()
    grid, trunc = state.grid, state.trunc
    k4 = grid.k2 ** 2
    dp1 = params.dp1
    phi1 = 1.0 - sp.cutoff_low(grid.kmag, r0)
    micro = state.micro()

    e0h = high_macro_functional(state, r0)
    # int grad div u . grad rho^H
    div_u = sp.divergence(grid, state.u)
    grad_div = sp.gradient(grid, div_u)
    grad_rho_h = sp.gradient(grid, phi1 * state.rho)
    cross = _modal_sum(grid, 1.0, np.real(np.sum(grad_div * np.conj(grad_rho_h), axis=0)))
    energy = (_modal_sum(grid, k4, _power(state.f) + dp1 * np.abs(state.rho) ** 2 + _power(state.u))
              + weights.t(6) * e0h - weights.t(7) * cross)

    a, b, u, rho = state.a, state.b, state.u, state.rho
    high = phi1 ** 2 * (np.abs(a) ** 2 + _power(b) + np.abs(rho) ** 2)
    diss = (_modal_sum(grid, k4, _power(b - u)) + _modal_sum(grid, k4, high)
            + _modal_sum(grid, k4, _power(u))
            + _modal_sum(grid, k4, vb.nu_norm_sq(micro, trunc)))
    return float(energy), float(diss), float(e0h)


def low_frequency_source(state: SystemState, r0: float) -> float:
    """||grad^2 (a^L, b^L, rho^L, u^L)||^2, the right-hand side of the second-order estimate."""
    grid = state.grid
    phi0 = sp.cutoff_low(grid.kmag, r0)
    power = np.abs(state.a) ** 2 + _power(state.b) + np.abs(state.rho) ** 2 + _power(state.u)
    return _modal_sum(grid, grid.k2 ** 2 * phi0 ** 2, power)


def conserved_quantities(state: SystemState):
    """(int a dx, int rho dx, int (b + (1 + rho) u) dx) from k = 0 coefficients."""
    grid = state.grid
    mass_p = float(np.real(grid.mean_integral(state.a)))
    mass_f = float(np.real(grid.mean_integral(state.rho)))
    mom = np.empty(grid.dim)
    for i in range(grid.dim):
        rho_u = sp.dealiased_product(grid, state.rho, state.u[i])
        mom[i] = np.real(grid.mean_integral(state.b[i] + state.u[i] + rho_u))
    return mass_p, mass_f, mom


def positivity_min(state: SystemState, rule: QuadratureRule | None = None) -> float:
    """min over grid points and probe velocities of F = M + sqrt(M) f."""
    trunc = state.trunc
    if rule is None:
        rule = vb.make_quadrature(trunc.dim_v, trunc.max_degree + 4)
    fx = np.ascontiguousarray(sp.inverse_transform(state.grid, state.f)).reshape(len(trunc), -1)
    tabs = [vb._hermite_tables(rule.nodes[:, i], trunc.max_degree) for i in range(trunc.dim_v)]
    basis = np.ones((rule.nodes.shape[0], len(trunc)))
    for i in range(trunc.dim_v):
        basis *= tabs[i][:, trunc.indices[:, i]]
    maxwellian = rule.sqrt_maxwellian ** 2
    # F = M (1 + p) with f = p sqrt(M); grid points in chunks to bound memory
    pmin = np.full(basis.shape[0], np.inf)
    for start in range(0, fx.shape[1], 16384):
        pmin = np.minimum(pmin, np.min(basis @ fx[:, start:start + 16384], axis=1))
    return float(np.min(maxwellian * (1.0 + pmin)))


# ---------------------------------------------------------------------------
# diagnostics record

CSV_COLUMNS = (
    "time", "zq2", "h2_f", "h2_rho", "h2_u", "E", "D", "E1", "D1",
    "mass_p", "mass_f", "mom_x", "mom_y", "mom_z", "pos_min",
    "grad_f", "grad_rho", "grad_u",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One time sample.  Norm entries are norms (not squared); E, D, E1, D1 are functionals."""

    time: float
    zq2: float
    h2_f: float
    h2_rho: float
    h2_u: float
    E: float
    D: float
    E1: float
    D1: float
    mass_p: float
    mass_f: float
    mom_x: float
    mom_y: float
    mom_z: float
    pos_min: float
    grad_f: float
    grad_rho: float
    grad_u: float

    def as_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "DiagnosticsRecord":
        return cls(**{c: float(data[c]) for c in CSV_COLUMNS})


def records_to_csv(records, handle=None) -> str:
    """Write records with the fixed column order; returns the text when ``handle`` is None."""
    out = handle if handle is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow([f"{v:.17g}" for v in rec.as_row()])
    if handle is None:
        return out.getvalue()
    return ""


def diagnostics(state: SystemState, params: ModelParams, weights: EnergyWeights | None = None,
                r0: float = 1.0, rule: QuadratureRule | None = None) -> DiagnosticsRecord:
    grid = state.grid
    weights = weights or EnergyWeights()
    energy, diss, _ = first_order_functionals(state, params, weights)
    e1, d1, _ = second_order_functionals(state, params, weights, r0)
    mass_p, mass_f, mom = conserved_quantities(state)
    mom = list(mom) + [0.0] * (3 - grid.dim)
    k2 = grid.k2
    grad_f = _modal_sum(grid, k2, _power(state.f))
    grad_rho = _modal_sum(grid, k2, np.abs(state.rho) ** 2)
    grad_u = _modal_sum(grid, k2, _power(state.u))
    zq2 = np.sqrt(grid.l2_sq(state.f) + grid.l2_sq(state.rho) + grid.l2_sq(state.u))
    return DiagnosticsRecord(
        time=float(state.time),
        zq2=float(zq2),
        h2_f=float(np.sqrt(mixed_norm_Hxv_sq(state, 2))),
        h2_rho=float(np.sqrt(sp.sobolev_norm_sq(grid, state.rho, 2))),
        h2_u=float(np.sqrt(sp.sobolev_norm_sq(grid, state.u, 2))),
        E=energy, D=diss, E1=e1, D1=d1,
        mass_p=mass_p, mass_f=mass_f,
        mom_x=float(mom[0]), mom_y=float(mom[1]), mom_z=float(mom[2]),
        pos_min=positivity_min(state, rule),
        grad_f=float(np.sqrt(grad_f)), grad_rho=float(np.sqrt(grad_rho)),
        grad_u=float(np.sqrt(grad_u)),
    )
