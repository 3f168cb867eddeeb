"""
Hermite velocity basis for the linearized Fokker-Planck operator.

A distribution perturbation f(v) is stored as coefficients c_alpha in the
orthonormal basis

    e_alpha(v) = He_alpha(v) sqrt(M(v)) / sqrt(alpha!),
    M(v) = (2 pi)^(-d/2) exp(-|v|^2 / 2),

with He the probabilists' Hermite polynomials and alpha a multi-index of
total degree <= N.  In this basis the Fokker-Planck operator is diagonal
with eigenvalue -|alpha|, and multiplication by v_i and d/dv_i are sparse
ladder operators.  Couplings into degree N+1 are dropped (zero-flux
closure).

Every operation acts on arrays whose *leading* axis runs over the
truncation's index list, so the same functions work on a single velocity
vector and on a spectral field of coefficients c_alpha(k).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
from numpy.polynomial import hermite_e

__all__ = [
    "Truncation",
    "QuadratureRule",
    "enumerate_truncation",
    "apply_fokker_planck",
    "multiply_by_v",
    "differentiate_v",
    "raise_v",
    "macro_micro_split",
    "macro_part",
    "micro_part",
    "gamma_moment",
    "gamma_matrix",
    "nu_norm_sq",
    "nu_gram",
    "coercivity_constant",
    "make_quadrature",
    "quadrature_oracle",
    "quadrature_project",
    "oracle_apply",
]


@dataclass(frozen=True, eq=False)
class Truncation:
    """All multi-indices of ``dim_v`` entries with total degree <= ``max_degree``.

    Ordering is graded; inside one degree, multi-indices are sorted in
    descending lexicographic order, so position 0 is the zero index and
    positions 1..d hold e_1, ..., e_d.
    """

    dim_v: int
    max_degree: int
    index_list: tuple = field(repr=False)

    def __len__(self):
        return len(self.index_list)

    @property
    def size(self) -> int:
        return len(self.index_list)

    @cached_property
    def indices(self) -> np.ndarray:
        return np.array(self.index_list, dtype=int).reshape(len(self), self.dim_v)

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    @cached_property
    def position(self) -> dict:
        return {alpha: j for j, alpha in enumerate(self.index_list)}

    def index_of(self, alpha) -> int:
        return self.position[tuple(int(a) for a in alpha)]

    def unit(self, alpha, dtype=float) -> np.ndarray:
        """Coefficient vector of the single basis function e_alpha."""
        c = np.zeros(len(self), dtype=dtype)
        c[self.index_of(alpha)] = 1.0
        return c

    def unit_index(self, axis: int, power: int = 1) -> tuple:
        alpha = [0] * self.dim_v
        alpha[axis] = power
        return tuple(alpha)

    @cached_property
    def _raise_tables(self):
        # (R_i c)_beta = sqrt(beta_i) c_{beta - e_i}
        src = np.full((self.dim_v, len(self)), -1, dtype=int)
        wt = np.zeros((self.dim_v, len(self)))
        for j, beta in enumerate(self.index_list):
            for i in range(self.dim_v):
                if beta[i] > 0:
                    lower = list(beta)
                    lower[i] -= 1
                    src[i, j] = self.position[tuple(lower)]
                    wt[i, j] = math.sqrt(beta[i])
        return src, wt

    @cached_property
    def _lower_tables(self):
        # (A_i c)_beta = sqrt(beta_i + 1) c_{beta + e_i}, dropped at degree N
        src = np.full((self.dim_v, len(self)), -1, dtype=int)
        wt = np.zeros((self.dim_v, len(self)))
        for j, beta in enumerate(self.index_list):
            if sum(beta) == self.max_degree:
                continue
            for i in range(self.dim_v):
                upper = list(beta)
                upper[i] += 1
                src[i, j] = self.position[tuple(upper)]
                wt[i, j] = math.sqrt(beta[i] + 1)
        return src, wt

    @cached_property
    def nu_gram(self) -> np.ndarray:
        """I + sum_i (D_i^T D_i + V_i^T V_i) from the closed ladder matrices."""
        gram = np.eye(len(self))
        for i in range(self.dim_v):
            gram += self.dv_matrices[i].T @ self.dv_matrices[i]
            gram += self.v_matrices[i].T @ self.v_matrices[i]
        gram.setflags(write=False)
        return gram

    @cached_property
    def lowering_matrices(self) -> np.ndarray:
        """Dense A_i with (A_i)_{beta, beta+e_i} = sqrt(beta_i + 1); shape (d, n, n)."""
        src, wt = self._lower_tables
        mats = np.zeros((self.dim_v, len(self), len(self)))
        for i in range(self.dim_v):
            rows = np.nonzero(src[i] >= 0)[0]
            mats[i, rows, src[i, rows]] = wt[i, rows]
        mats.setflags(write=False)
        return mats

    @cached_property
    def v_matrices(self) -> np.ndarray:
        """Dense matrices of multiplication by v_i (symmetric under the closure)."""
        a = self.lowering_matrices
        out = a + np.transpose(a, (0, 2, 1))
        out.setflags(write=False)
        return out

    @cached_property
    def dv_matrices(self) -> np.ndarray:
        """Dense matrices of d/dv_i (skew-symmetric under the closure)."""
        a = self.lowering_matrices
        out = 0.5 * (a - np.transpose(a, (0, 2, 1)))
        out.setflags(write=False)
        return out

    @cached_property
    def second_degree_positions(self) -> np.ndarray:
        """Positions of e_i + e_j, shape (d, d)."""
        pos = np.empty((self.dim_v, self.dim_v), dtype=int)
        for i in range(self.dim_v):
            for j in range(self.dim_v):
                alpha = [0] * self.dim_v
                alpha[i] += 1
                alpha[j] += 1
                pos[i, j] = self.position[tuple(alpha)]
        return pos


def enumerate_truncation(d: int, N: int) -> Truncation:
    """Graded enumeration of all multi-indices in ``d`` variables with degree <= ``N``."""
    if d not in (1, 2, 3):
        raise ValueError(f"velocity dimension must be 1, 2 or 3, got {d}")
    if int(N) != N or N < 2:
        raise ValueError(f"max degree must be an integer >= 2, got {N}")
    N = int(N)
    index_list = []
    for degree in range(N + 1):
        level = [a for a in itertools.product(range(degree + 1), repeat=d) if sum(a) == degree]
        index_list.extend(sorted(level, reverse=True))
    return Truncation(dim_v=d, max_degree=N, index_list=tuple(index_list))


def _gather(c, src, wt):
    c = np.asarray(c)
    shape = (-1,) + (1,) * (c.ndim - 1)
    valid = src >= 0
    out = c[np.where(valid, src, 0)] * (wt * valid).reshape(shape)
    return out


def apply_fokker_planck(c, trunc: Truncation) -> np.ndarray:
    """Coefficients of L f; diagonal with eigenvalue -|alpha|."""
    c = np.asarray(c)
    return -trunc.degrees.reshape((-1,) + (1,) * (c.ndim - 1)) * c


def raise_v(c, trunc: Truncation, axis: int) -> np.ndarray:
    """Coefficients of (v_i/2 - d/dv_i) f, the pure raising operator."""
    src, wt = trunc._raise_tables
    return _gather(c, src[axis], wt[axis])


def _lower_v(c, trunc, axis):
    src, wt = trunc._lower_tables
    return _gather(c, src[axis], wt[axis])


def multiply_by_v(c, trunc: Truncation, axis: int) -> np.ndarray:
    """Coefficients of v_axis f under the zero-flux closure (``axis`` is 0-based)."""
    _check_axis(trunc, axis)
    return raise_v(c, trunc, axis) + _lower_v(c, trunc, axis)


def differentiate_v(c, trunc: Truncation, axis: int) -> np.ndarray:
    """Coefficients of d f / d v_axis under the zero-flux closure (``axis`` is 0-based)."""
    _check_axis(trunc, axis)
    return 0.5 * (_lower_v(c, trunc, axis) - raise_v(c, trunc, axis))


def _check_axis(trunc, axis):
    if not 0 <= axis < trunc.dim_v:
        raise ValueError(f"axis {axis} out of range for d={trunc.dim_v}")


def macro_micro_split(c, trunc: Truncation):
    """Return ``(a, b, micro)`` with a = <sqrt M, f>, b_i = <v_i sqrt M, f>."""
    c = np.asarray(c)
    d = trunc.dim_v
    a = c[0].copy()
    b = c[1:d + 1].copy()
    micro = c.copy()
    micro[:d + 1] = 0
    return a, b, micro


def macro_part(c, trunc: Truncation) -> np.ndarray:
    c = np.asarray(c)
    out = np.zeros_like(c)
    out[:trunc.dim_v + 1] = c[:trunc.dim_v + 1]
    return out


def micro_part(c, trunc: Truncation) -> np.ndarray:
    return macro_micro_split(c, trunc)[2]


def gamma_matrix(c, trunc: Truncation) -> np.ndarray:
    """All moments Gamma_ij(f) = <(v_i v_j - 1) sqrt M, f>, shape (d, d, ...)."""
    c = np.asarray(c)
    pos = trunc.second_degree_positions
    out = c[pos]
    diag = np.arange(trunc.dim_v)
    out[diag, diag] = math.sqrt(2.0) * c[pos[diag, diag]]
    return out


def gamma_moment(c, trunc: Truncation, i: int, j: int):
    """Gamma_ij(f) for 0-based axes i, j."""
    c = np.asarray(c)
    value = c[trunc.second_degree_positions[i, j]]
    return math.sqrt(2.0) * value if i == j else value


def nu_gram(trunc: Truncation) -> np.ndarray:
    """Gram matrix of |g|_nu^2 = int |grad_v g|^2 + (1 + |v|^2)|g|^2 dv in the truncated space."""
    return trunc.nu_gram.copy()


def nu_norm_sq(c, trunc: Truncation):
    """|f|_nu^2 per trailing position (scalar for a single coefficient vector)."""
    c = np.asarray(c)
    flat = c.reshape(len(trunc), -1)
    total = np.real(np.sum(np.conj(flat) * (trunc.nu_gram @ flat), axis=0))
    return total.reshape(c.shape[1:]) if c.ndim > 1 else float(total[0])


def coercivity_constant(trunc: Truncation) -> float:
    """Smallest lambda with <-L f, f> >= lambda |f|_nu^2 on span{e_alpha : alpha != 0}."""
    keep = slice(1, None)
    quad = np.diag(trunc.degrees.astype(float))[keep, keep]
    gram = nu_gram(trunc)[keep, keep]
    return float(scipy.linalg.eigh(quad, gram, eigvals_only=True)[0])


# ---------------------------------------------------------------------------
# Gauss-Hermite oracle: pointwise evaluation independent of the ladder algebra


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensor Gauss-Hermite rule for integrals against the normalized Maxwellian."""

    dim_v: int
    order: int
    nodes: np.ndarray = field(repr=False)    # shape (q, d)
    weights: np.ndarray = field(repr=False)  # shape (q,), sum 1

    @cached_property
    def sqrt_maxwellian(self) -> np.ndarray:
        v2 = np.sum(self.nodes ** 2, axis=1)
        return (2 * np.pi) ** (-self.dim_v / 4) * np.exp(-v2 / 4)


def make_quadrature(d: int, order: int) -> QuadratureRule:
    x, w = hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * np.pi)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return QuadratureRule(dim_v=d, order=order, nodes=nodes, weights=weights)


def _hermite_tables(x, nmax, deriv=0):
    """Values of He_n^{(deriv)}(x) / sqrt(n!) for n = 0..nmax; shape (len(x), nmax+1)."""
    out = np.empty((len(x), nmax + 1))
    for n in range(nmax + 1):
        coef = np.zeros(n + 1)
        coef[n] = 1.0
        if deriv:
            coef = hermite_e.hermeder(coef, deriv)
        out[:, n] = hermite_e.hermeval(x, coef) / math.sqrt(math.factorial(n))
    return out


def _polynomial_parts(c, trunc, rule, nmax):
    """p(v), grad p(v) and the diagonal of the Hessian of p at the nodes, f = p sqrt(M)."""
    d = trunc.dim_v
    tab = [_hermite_tables(rule.nodes[:, i], nmax) for i in range(d)]
    tab1 = [_hermite_tables(rule.nodes[:, i], nmax, 1) for i in range(d)]
    tab2 = [_hermite_tables(rule.nodes[:, i], nmax, 2) for i in range(d)]
    idx = trunc.indices
    c = np.asarray(c)

    def basis(which):
        # which[i] selects the derivative order table along axis i
        cols = np.ones((rule.nodes.shape[0], len(trunc)))
        for i in range(d):
            t = (tab, tab1, tab2)[which[i]][i]
            cols *= t[:, idx[:, i]]
        return cols

    p = basis([0] * d) @ c
    grad = []
    hess_diag = []
    for i in range(d):
        w = [0] * d
        w[i] = 1
        grad.append(basis(w) @ c)
        w[i] = 2
        hess_diag.append(basis(w) @ c)
    return p, grad, hess_diag


def _nodal(x, like):
    """Reshape a per-node vector to broadcast against samples with trailing batch axes."""
    return np.reshape(x, (-1,) + (1,) * (np.ndim(like) - 1))


def quadrature_oracle(c, trunc: Truncation, rule: QuadratureRule) -> np.ndarray:
    """Pointwise values f(v_q) = sum_alpha c_alpha e_alpha(v_q) at the rule's nodes."""
    p, _, _ = _polynomial_parts(c, trunc, rule, trunc.max_degree)
    return p * _nodal(rule.sqrt_maxwellian, p)


def quadrature_project(samples, rule: QuadratureRule, trunc: Truncation) -> np.ndarray:
    """Project pointwise samples of f onto the truncated basis by quadrature."""
    if rule.order < trunc.max_degree + 2:
        raise ValueError(
            f"quadrature order {rule.order} < N + 2 = {trunc.max_degree + 2}; round trip is not exact")
    if rule.dim_v != trunc.dim_v:
        raise ValueError("rule and truncation dimensions differ")
    samples = np.asarray(samples)
    poly = samples / _nodal(rule.sqrt_maxwellian, samples)
    d = trunc.dim_v
    tab = [_hermite_tables(rule.nodes[:, i], trunc.max_degree) for i in range(d)]
    cols = np.ones((rule.nodes.shape[0], len(trunc)))
    for i in range(d):
        cols *= tab[i][:, trunc.indices[:, i]]
    return cols.T @ (_nodal(rule.weights, poly) * poly)


def oracle_apply(c, trunc: Truncation, rule: QuadratureRule, op: str, axis: int = 0) -> np.ndarray:
    """Pointwise evaluation of an operator applied to f, returned as samples at the nodes.

    ``op`` is one of ``"v"`` (v_axis f), ``"dv"`` (d f / d v_axis) or
    ``"fokker_planck"`` (Delta_v f - |v|^2/4 f + d/2 f).  Derivatives come
    from differentiating the Hermite polynomials directly, never from the
    ladder relations.
    """
    p, grad, hdiag = _polynomial_parts(c, trunc, rule, trunc.max_degree)
    sm = _nodal(rule.sqrt_maxwellian, p)
    v = [_nodal(rule.nodes[:, i], p) for i in range(trunc.dim_v)]
    if op == "v":
        return v[axis] * p * sm
    if op == "dv":
        return (grad[axis] - 0.5 * v[axis] * p) * sm
    if op == "fokker_planck":
        d = trunc.dim_v
        v2 = sum(vi ** 2 for vi in v)
        lap = sum(hdiag[i] - v[i] * grad[i] + (0.25 * v[i] ** 2 - 0.5) * p for i in range(d))
        return (lap - 0.25 * v2 * p + 0.5 * d * p) * sm
    raise ValueError(f"unknown oracle operator {op!r}")
