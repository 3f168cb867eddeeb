"""
Right-hand side of the perturbation system

    d_t f   + v.grad_x f + u.grad_v f - u.v f / 2 - u.v sqrt(M)
            = L f + rho (L f - u.grad_v f + u.v f / 2 + u.v sqrt(M)),
    d_t rho + (1 + rho) div u + grad rho . u = 0,
    d_t u   + u.grad u + P'(1+rho)/(1+rho) grad rho - mu Lap u / (1+rho) = b - u - a u,

split into the constant-coefficient linear part and the remainder.  Both
parts return state-shaped increments (SystemState with time 0).

Products of band-limited fields use the 2/3 rule.  Products with the
non-polynomial coefficients P'(1+rho)/(1+rho) and rho/(1+rho) are formed on
the grid from the untruncated coefficient and only the result is truncated;
this keeps the pointwise identity (1+rho) * rho/(1+rho) = rho that the
discrete momentum balance relies on.
"""
from __future__ import annotations

import numpy as np

from . import spatial_spectral as sp
from . import velocity_basis as vb
from .params import ModelParams
from .state_energy import StateQualityError, SystemState

__all__ = [
    "pressure_coefficient",
    "linear_rhs",
    "nonlinear_rhs",
    "kinetic_source_gh",
    "full_rhs",
    "direct_rhs",
]


def pressure_coefficient(rho_physical, params: ModelParams) -> np.ndarray:
    """P'(1 + rho) / (1 + rho) = c0 gamma (1 + rho)^(gamma - 2), pointwise."""
    n = 1.0 + np.asarray(rho_physical, dtype=float)
    if np.any(n <= 0):
        raise StateQualityError(f"nonpositive density 1 + rho = {np.min(n):.3e}")
    return params.c0 * params.gamma * n ** (params.gamma - 2.0)


def linear_rhs(state: SystemState, params: ModelParams) -> SystemState:
    grid, trunc = state.grid, state.trunc
    d = grid.dim
    f, rho, u = state.f, state.rho, state.u
    df = vb.apply_fokker_planck(f, trunc)
    for j in range(d):
        df = df - 1j * grid.k[j] * vb.multiply_by_v(f, trunc, j)
        df[1 + j] += u[j]
    drho = -sp.divergence(grid, u)
    grad_rho = sp.gradient(grid, rho)
    du = -params.dp1 * grad_rho + params.mu * sp.laplacian(grid, u) - u + state.b
    return SystemState(grid, trunc, df, drho, du)


def _physical(grid, a):
    return sp.inverse_transform(grid, sp.dealias(grid, a))


def _spectral(grid, a):
    return sp.dealias(grid, sp.transform(grid, a))


def _fluid_nonlinear(state, params, rho_x, u_x, a_x):
    """S_rho and S_u in spectral form."""
    grid = state.grid
    d = grid.dim
    grad_rho = sp.gradient(grid, state.rho)
    grad_rho_x = sp.inverse_transform(grid, grad_rho)
    div_u_x = sp.inverse_transform(grid, sp.divergence(grid, state.u))
    s_rho = -_spectral(grid, rho_x * div_u_x + np.sum(grad_rho_x * u_x, axis=0))

    coef = pressure_coefficient(rho_x, params) - params.dp1
    ratio = rho_x / (1.0 + rho_x)
    lap_u_x = sp.inverse_transform(grid, sp.laplacian(grid, state.u))
    s_u = np.empty_like(state.u)
    for i in range(d):
        grad_ui_x = sp.inverse_transform(grid, sp.gradient(grid, state.u[i]))
        adv = np.sum(u_x * grad_ui_x, axis=0)
        s_u[i] = -_spectral(grid, adv + coef * grad_rho_x[i]
                            + params.mu * ratio * lap_u_x[i] + a_x * u_x[i])
    return s_rho, s_u


def nonlinear_rhs(state: SystemState, params: ModelParams) -> SystemState:
    """Remainder S_f, S_rho, S_u of the full system after removing :func:`linear_rhs`."""
    grid, trunc = state.grid, state.trunc
    d = grid.dim
    rho_x = _physical(grid, state.rho)
    if np.min(1.0 + rho_x) <= 0:
        raise StateQualityError(f"1 + rho reaches {np.min(1 + rho_x):.3e} <= 0 at t={state.time}")
    u_x = _physical(grid, state.u)
    f_x = _physical(grid, state.f)

    # (1 + rho) u, dealiased before entering the kinetic product
    w_x = np.stack([_physical(grid, _spectral(grid, (1.0 + rho_x) * u_x[i])) for i in range(d)])

    # -(1+rho) u.grad_v f + (1+rho) u.v f / 2 is (1+rho) u_i times the raising operator
    kin = rho_x * vb.apply_fokker_planck(f_x, trunc)
    for i in range(d):
        kin += w_x[i] * vb.raise_v(f_x, trunc, i)
        kin[1 + i] += rho_x * u_x[i]
    s_f = _spectral(grid, kin)

    s_rho, s_u = _fluid_nonlinear(state, params, rho_x, u_x, f_x[0])
    return SystemState(grid, trunc, s_f, s_rho, s_u)


def kinetic_source_gh(state: SystemState, params: ModelParams) -> np.ndarray:
    """S_f assembled as div_v G - v.G/2 + (1+rho) a u.v sqrt(M) + h + rho (u - b).v sqrt(M).

    G = -(1+rho) u (I - P_0) f and h = rho L (I - P) f.  Used as an
    independent check of the kinetic part of :func:`nonlinear_rhs`.
    """
    grid, trunc = state.grid, state.trunc
    d = grid.dim
    rho_x = _physical(grid, state.rho)
    u_x = _physical(grid, state.u)
    f_x = _physical(grid, state.f)
    w_x = np.stack([_physical(grid, _spectral(grid, (1.0 + rho_x) * u_x[i])) for i in range(d)])
    not_p0 = f_x.copy()
    not_p0[0] = 0
    a_x = f_x[0]
    b_x = f_x[1:d + 1]
    out = np.zeros_like(f_x)
    for i in range(d):
        g_i = -w_x[i] * not_p0
        out += vb.differentiate_v(g_i, trunc, i) - 0.5 * vb.multiply_by_v(g_i, trunc, i)
        out[1 + i] += w_x[i] * a_x + rho_x * (u_x[i] - b_x[i])
    out += rho_x * vb.apply_fokker_planck(vb.micro_part(f_x, trunc), trunc)
    return _spectral(grid, out)


def _add(s1: SystemState, s2: SystemState) -> SystemState:
    return SystemState(s1.grid, s1.trunc, s1.f + s2.f, s1.rho + s2.rho, s1.u + s2.u)


def full_rhs(state: SystemState, params: ModelParams) -> SystemState:
    return _add(linear_rhs(state, params), nonlinear_rhs(state, params))


def direct_rhs(state: SystemState, params: ModelParams) -> SystemState:
    """The full right-hand side written term by term without the linear/nonlinear split."""
    grid, trunc = state.grid, state.trunc
    d = grid.dim
    rho_x = _physical(grid, state.rho)
    n_x = 1.0 + rho_x
    u_x = _physical(grid, state.u)
    f_x = _physical(grid, state.f)
    a_x, b_x = f_x[0], f_x[1:d + 1]

    # kinetic equation
    transport = np.zeros_like(state.f)
    for j in range(d):
        transport += 1j * grid.k[j] * vb.multiply_by_v(state.f, trunc, j)
    w_x = np.stack([_physical(grid, _spectral(grid, n_x * u_x[i])) for i in range(d)])
    force = np.zeros_like(f_x)
    for i in range(d):
        force += w_x[i] * (-vb.differentiate_v(f_x, trunc, i) + 0.5 * vb.multiply_by_v(f_x, trunc, i))
        force[1 + i] += w_x[i]
    collision = n_x * vb.apply_fokker_planck(f_x, trunc)
    df = -transport + _spectral(grid, force + collision)

    # continuity
    grad_rho_x = sp.inverse_transform(grid, sp.gradient(grid, state.rho))
    div_u_x = sp.inverse_transform(grid, sp.divergence(grid, state.u))
    drho = -_spectral(grid, n_x * div_u_x + np.sum(grad_rho_x * u_x, axis=0))

    # momentum
    coef = pressure_coefficient(rho_x, params)
    lap_u_x = sp.inverse_transform(grid, sp.laplacian(grid, state.u))
    du = np.empty_like(state.u)
    for i in range(d):
        grad_ui_x = sp.inverse_transform(grid, sp.gradient(grid, state.u[i]))
        rhs = (-np.sum(u_x * grad_ui_x, axis=0) - coef * grad_rho_x[i]
               + params.mu * lap_u_x[i] / n_x + b_x[i] - u_x[i] - a_x * u_x[i])
        du[i] = _spectral(grid, rhs)
    return SystemState(grid, trunc, df, drho, du)
