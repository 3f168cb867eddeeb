"""
Per-wavenumber linear theory.

For one wavevector k the linearized system is the ODE x' = B(k) x on the
vector x = (c_alpha for alpha in the truncation, rho, u_1..u_d), with

    c' = -i (k.v) c + L c + u.v sqrt(M)
    rho' = -i k.u
    u' = -i k P'(1) rho - mu |k|^2 u - u + b.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import spatial_spectral as sp
from . import velocity_basis as vb
from .params import ModelParams
from .velocity_basis import Truncation

__all__ = [
    "ModeMatrix",
    "DecayFit",
    "build_mode_matrix",
    "propagator",
    "spectral_abscissa",
    "kernel_dimension",
    "gap_survey",
    "lyapunov_value",
    "lyapunov_form",
    "gap_certificate",
    "GapCertificate",
    "radial_profile",
    "semigroup_decay_curve",
    "fit_decay_exponent",
    "fit_exponential_rate",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModeMatrix:
    k: np.ndarray
    trunc: Truncation
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def rho_index(self) -> int:
        return len(self.trunc)

    @property
    def u_slice(self) -> slice:
        return slice(len(self.trunc) + 1, None)


@dataclass
class DecayFit:
    times: np.ndarray
    values: np.ndarray
    fitted_exponent: float
    fit_window: tuple
    residual: float
    intercept: float = 0.0

    def to_dict(self) -> dict:
        return {"fitted_exponent": self.fitted_exponent, "fit_window": list(self.fit_window),
                "residual": self.residual, "intercept": self.intercept}


def build_mode_matrix(k, trunc: Truncation, params: ModelParams) -> ModeMatrix:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    d = trunc.dim_v
    if k.shape != (d,):
        raise ValueError(f"wavevector must have {d} components")
    n = len(trunc)
    size = n + 1 + d
    mat = np.zeros((size, size), dtype=complex)
    mat[:n, :n] = -1j * np.einsum("i,ijk->jk", k, trunc.v_matrices) - np.diag(trunc.degrees)
    r, us = n, slice(n + 1, None)
    for j in range(d):
        mat[1 + j, n + 1 + j] += 1.0
        mat[r, n + 1 + j] = -1j * k[j]
        mat[n + 1 + j, r] = -1j * k[j] * params.dp1
        mat[n + 1 + j, n + 1 + j] = -params.mu * (k @ k) - 1.0
        mat[n + 1 + j, 1 + j] += 1.0
    del us
    return ModeMatrix(k=k, trunc=trunc, matrix=mat)


def propagator(mm: ModeMatrix, t: float) -> np.ndarray:
    """exp(t B(k)) by scaling and squaring."""
    return scipy.linalg.expm(t * mm.matrix)


def spectral_abscissa(mm, exclude_conserved: bool = False) -> float:
    """Largest real part of the spectrum; at k = 0 optionally drop the d + 2 conserved directions."""
    mat = mm.matrix if isinstance(mm, ModeMatrix) else np.asarray(mm)
    try:
        ev = scipy.linalg.eigvals(mat)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    re = np.sort(ev.real)[::-1]
    if exclude_conserved and isinstance(mm, ModeMatrix) and not np.any(mm.k):
        re = re[mm.trunc.dim_v + 2:]
    return float(re[0])


def kernel_dimension(mm: ModeMatrix, tol: float = 1e-10) -> int:
    s = scipy.linalg.svdvals(mm.matrix)
    return int(np.sum(s < tol * max(1.0, s[0])))


def gap_survey(kmags, trunc: Truncation, params: ModelParams, direction=None):
    """Per-|k| decay rates r(k) = -abscissa and the constant c = min r(k)(1+|k|^2)/|k|^2."""
    d = trunc.dim_v
    direction = np.ones(d) if direction is None else np.asarray(direction, float)
    direction = direction / np.linalg.norm(direction)
    kmags = np.asarray(kmags, dtype=float)
    rates = np.array([-spectral_abscissa(build_mode_matrix(km * direction, trunc, params))
                      for km in kmags])
    shape = kmags ** 2 / (1 + kmags ** 2)
    return rates, float(np.min(rates / shape))


# ---------------------------------------------------------------------------
# per-mode Lyapunov functional


def _inner(x, y):
    """(x|y) = sum x conj(y)."""
    return np.sum(x * np.conj(y), axis=0)


def lyapunov_value(k, x, trunc: Truncation, tau4: float, tau5: float, dp1: float):
    """E_F for mode vectors x (shape (n_alpha + 1 + d, ...)); returns real values."""
    k = np.asarray(k, dtype=float)
    d = trunc.dim_v
    n = len(trunc)
    x = np.asarray(x)
    c, rho, u = x[:n], x[n], x[n + 1:n + 1 + d]
    kk = k.reshape((d,) + (1,) * (x.ndim - 1))
    k2 = float(k @ k)
    a, b = c[0], c[1:d + 1]
    gam = vb.gamma_matrix(vb.micro_part(c, trunc), trunc)
    e1 = 0.0
    for i in range(d):
        for j in range(d):
            e1 = e1 + (1j * kk[i] * b[j] + 1j * kk[j] * b[i]) * np.conj(gam[i, j])
    e1 = (e1 - a * np.conj(np.sum(1j * kk * b, axis=0))) / (1 + k2)
    cross = _inner(u, 1j * kk * rho) / (1 + k2)
    plain = np.sum(np.abs(c) ** 2, axis=0) + dp1 * np.abs(rho) ** 2 + np.sum(np.abs(u) ** 2, axis=0)
    return np.real(plain + tau4 * np.real(e1) + tau5 * np.real(cross))


def lyapunov_form(k, trunc: Truncation, tau4: float, tau5: float, dp1: float) -> np.ndarray:
    """Hermitian matrix H with E_F(x) = x^* H x, assembled from :func:`lyapunov_value`."""
    d = trunc.dim_v
    size = len(trunc) + 1 + d
    # polarization on the real-linear structure: E(x) = Re x^* H x for Hermitian H
    eye = np.eye(size)
    h = np.zeros((size, size), dtype=complex)
    diag = np.array([lyapunov_value(k, eye[:, i], trunc, tau4, tau5, dp1) for i in range(size)])
    for i in range(size):
        h[i, i] = diag[i]
        for j in range(i + 1, size):
            ex = eye[:, i] + eye[:, j]
            ey = eye[:, i] + 1j * eye[:, j]
            re = 0.5 * (lyapunov_value(k, ex, trunc, tau4, tau5, dp1) - diag[i] - diag[j])
            im = 0.5 * (lyapunov_value(k, ey, trunc, tau4, tau5, dp1) - diag[i] - diag[j])
            # x^* H x with x = e_i + e_j gives 2 Re H_ij; with e_i + i e_j gives -2 Im H_ij
            h[i, j] = re - 1j * im
            h[j, i] = np.conj(h[i, j])
    return h


@dataclass
class GapCertificate:
    lam: float
    kmags: np.ndarray
    margins: np.ndarray
    tau4: float
    tau5: float
    searched: bool = False
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"lambda_hat": self.lam, "tau4": self.tau4, "tau5": self.tau5,
                "searched": self.searched,
                "per_k": [{"k": float(k), "lambda": float(m)} for k, m in zip(self.kmags, self.margins)]}


def _certificate_once(kmags, trunc, params, tau4, tau5, times, trials, rng, direction):
    d = trunc.dim_v
    size = len(trunc) + 1 + d
    margins = []
    for km in kmags:
        k = km * direction
        mm = build_mode_matrix(k, trunc, params)
        x0 = rng.standard_normal((size, trials)) + 1j * rng.standard_normal((size, trials))
        # the slowest eigenvector bounds lambda by 2 r(k) (1+|k|^2)/|k|^2 for all t
        lam_k, vecs = scipy.linalg.eig(mm.matrix)
        x0 = np.column_stack([x0, vecs[:, np.argmax(lam_k.real)]])
        e0 = lyapunov_value(k, x0, trunc, tau4, tau5, params.dp1)
        shape = km ** 2 / (1 + km ** 2)
        best = np.inf
        x = x0
        t_prev = 0.0
        for t in times:
            x = scipy.linalg.expm((t - t_prev) * mm.matrix) @ x
            t_prev = t
            et = lyapunov_value(k, x, trunc, tau4, tau5, params.dp1)
            if np.any(et <= 0) or np.any(e0 <= 0):
                best = -np.inf
                break
            # smallest lambda with E(t) <= exp(-lambda shape t) E(0)
            lam = -np.log(et / e0) / (shape * t)
            best = min(best, float(np.min(lam)))
        margins.append(best)
    margins = np.array(margins)
    return float(np.min(margins)), margins


def gap_certificate(kmags, trunc: Truncation, params: ModelParams, tau4: float = 0.1,
                    tau5: float = 0.1, t_max: float = 50.0, n_times: int = 200, trials: int = 8,
                    seed: int = 0, direction=None, search: bool = True) -> GapCertificate:
    """Largest lambda with E_F(t) <= exp(-lambda |k|^2 t / (1+|k|^2)) E_F(0) on trial states.

    The trial states are ``trials`` random complex mode states plus the
    eigenvector of the slowest eigenvalue of B(k).

    If the default weights fail (lambda <= 0) and ``search`` is set, a grid
    of smaller (tau4, tau5) is tried and the best certificate is returned.
    """
    kmags = np.atleast_1d(np.asarray(kmags, dtype=float))
    if kmags.size == 0 or np.any(kmags <= 0):
        raise ValueError("gap certificate needs nonzero wavenumbers")
    d = trunc.dim_v
    direction = np.eye(d)[0] if direction is None else np.asarray(direction, float)
    direction = direction / np.linalg.norm(direction)
    times = np.concatenate([np.geomspace(1e-3, 1.0, n_times // 4, endpoint=False),
                            np.linspace(1.0, t_max, n_times - n_times // 4)])
    lam, margins = _certificate_once(kmags, trunc, params, tau4, tau5, times, trials,
                                     np.random.default_rng(seed), direction)
    cert = GapCertificate(lam, kmags, margins, tau4, tau5)
    if lam > 0 or not search:
        return cert
    cert.history.append((tau4, tau5, lam))
    for t4 in (0.05, 0.02, 0.01, 0.005):
        for t5 in (0.05, 0.02, 0.01, 0.005):
            lam2, m2 = _certificate_once(kmags, trunc, params, t4, t5, times, trials,
                                         np.random.default_rng(seed), direction)
            cert.history.append((t4, t5, lam2))
            if lam2 > cert.lam:
                cert = GapCertificate(lam2, kmags, m2, t4, t5, True, cert.history)
    cert.searched = True
    return cert


# ---------------------------------------------------------------------------
# semigroup decay curves


def radial_profile(trunc: Truncation, kind: str = "flat") -> np.ndarray:
    """Default unit direction in state space: equal parts of a and rho (rotation invariant)."""
    size = len(trunc) + 1 + trunc.dim_v
    vec = np.zeros(size, dtype=complex)
    if kind == "flat":
        vec[0] = 1.0
        vec[len(trunc)] = 1.0
    else:
        raise ValueError(f"unknown profile {kind!r}")
    return vec / np.linalg.norm(vec)


def semigroup_decay_curve(times, trunc: Truncation, params: ModelParams, m: int = 0,
                          vector=None, envelope=None, kmin: float = 1e-3, kmax: float = 20.0,
                          shells: int = 400, low_cutoff: float | None = None):
    """(int |k|^(2m) ||exp(t B(k)) U0(k)||^2 dk)^(1/2) over R^3 by radial quadrature.

    U0(k) = envelope(|k|) * vector with a rotation-invariant ``vector`` (only
    the a and rho slots), so the integrand depends on |k| alone and the
    angular integral is the factor 4 pi.  ``envelope`` defaults to
    exp(-|k|^2).  With ``low_cutoff`` = r0 the integrand is multiplied by
    phi_0(|k|)^2, i.e. only the low-frequency part of the solution is measured.
    """
    if trunc.dim_v != 3:
        raise ValueError("radial decay curves are set up for d = 3")
    times = np.asarray(times, dtype=float)
    vector = radial_profile(trunc) if vector is None else np.asarray(vector, complex)
    iso = np.zeros_like(vector)
    iso[0] = vector[0]
    iso[len(trunc)] = vector[len(trunc)]
    if not np.allclose(iso, vector):
        raise ValueError("decay-curve profile must only excite a and rho (rotation invariant)")
    envelope = envelope or (lambda km: np.exp(-km ** 2))

    # log-spaced shells, trapezoid in log|k|: dk = |k| d(log|k|)
    logk = np.linspace(np.log(kmin), np.log(kmax), shells)
    kmags = np.exp(logk)
    wlog = np.full(shells, logk[1] - logk[0])
    wlog[0] *= 0.5
    wlog[-1] *= 0.5
    weight = 4 * np.pi * kmags ** 3 * wlog * kmags ** (2 * m)
    if low_cutoff is not None:
        weight = weight * sp.cutoff_low(kmags, low_cutoff) ** 2

    tail = envelope(kmax) ** 2 * kmax ** (2 * m + 2)
    total = np.sum(weight * envelope(kmags) ** 2)
    if tail > 0.01 * total:
        warnings.warn("k_max too small: profile tail exceeds 1% of the initial value", RuntimeWarning)

    values2 = np.zeros_like(times)
    for km, w in zip(kmags, weight):
        if w == 0:
            continue
        mm = build_mode_matrix(np.array([km, 0.0, 0.0]), trunc, params)
        x0 = envelope(km) * vector
        values2 += w * _evolved_norms_sq(mm.matrix, x0, times)
    return np.sqrt(values2)


def _evolved_norms_sq(mat, x0, times, max_cond: float = 1e6):
    """||exp(t B) x0||^2 at all ``times``: eigen-expansion, or exact stepping if ill-conditioned."""
    lam, vecs = scipy.linalg.eig(mat)
    if np.linalg.cond(vecs) < max_cond:
        y = np.linalg.solve(vecs, x0)
        x = vecs @ (np.exp(np.outer(lam, times)) * y[:, None])
        return np.sum(np.abs(x) ** 2, axis=0)
    out = np.empty(len(times))
    x, t_prev = x0, 0.0
    for idx in np.argsort(times):
        x = scipy.linalg.expm((times[idx] - t_prev) * mat) @ x
        t_prev = times[idx]
        out[idx] = np.real(np.vdot(x, x))
    return out


def fit_decay_exponent(times, values, window=None) -> DecayFit:
    """Least-squares slope of log(value) against log(1 + t) on ``window``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    window = (times.min(), times.max()) if window is None else tuple(window)
    sel = (times >= window[0]) & (times <= window[1])
    if np.count_nonzero(sel) < 2:
        raise ValueError("fit window holds fewer than two samples")
    if np.any(values[sel] <= 0):
        raise ValueError("decay fit needs positive values on the window")
    x = np.log1p(times[sel])
    y = np.log(values[sel])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return DecayFit(times=times, values=values, fitted_exponent=float(coef[0]),
                    fit_window=(float(window[0]), float(window[1])), residual=residual,
                    intercept=float(coef[1]))


def fit_exponential_rate(times, values, window=None):
    """Fit log(value) = c - rate * t; returns (rate, R^2)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    window = (times.min(), times.max()) if window is None else tuple(window)
    sel = (times >= window[0]) & (times <= window[1])
    if np.any(values[sel] <= 0):
        raise ValueError("exponential fit needs positive values on the window")
    x, y = times[sel], np.log(values[sel])
    coef = np.polyfit(x, y, 1)
    pred = np.polyval(coef, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-coef[0]), r2
