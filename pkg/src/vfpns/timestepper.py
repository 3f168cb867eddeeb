"""
Exponential time differencing for the full system.

The linear part is integrated exactly per Fourier mode with e^{dt B(k)};
the nonlinearity enters through the second-order Cox–Matthews scheme

    a       = e^{hB} U_n + h phi_1(hB) N(U_n)
    U_{n+1} = a + h phi_2(hB) (N(a) - N(U_n)),

phi_1(z) = (e^z - 1)/z, phi_2(z) = (e^z - 1 - z)/z^2.  All three matrix
functions come out of one exponential of the block matrix
[[hB, I, 0], [0, 0, I], [0, 0, 0]], which has no removable singularity at
B = 0 and therefore needs no series fallback.

Only modes inside the 2/3 band are evolved (the nonlinear terms are
dealiased, so the band is invariant).  B(k) commutes with the signed axis
permutations of the lattice: B(Gk) = Q B(k) Q^T where Q permutes the Hermite
indices and the velocity components and flips signs.  The table therefore
stores matrices for one representative per orbit (|m| sorted ascending) and
maps every other mode into the representative's frame on the fly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import dynamics
from . import linear_analysis as la
from .params import EnergyWeights, ModelParams
from .spatial_spectral import Grid
from .state_energy import StateQualityError, SystemState, diagnostics
from .velocity_basis import QuadratureRule, Truncation

__all__ = [
    "PropagatorTable",
    "IntegrationAborted",
    "IntegrationResult",
    "phi_functions",
    "frame_map",
    "precompute_propagators",
    "step",
    "integrate",
]

log = logging.getLogger(__name__)


class IntegrationAborted(StateQualityError):
    """Raised when a step fails; ``records`` holds the series up to the last good state."""

    def __init__(self, message, records, last_state):
        super().__init__(message)
        self.records = records
        self.last_state = last_state


def phi_functions(mat, h: float):
    """(e^{hA}, phi_1(hA), phi_2(hA)) from one augmented exponential."""
    s = mat.shape[0]
    aug = np.zeros((3 * s, 3 * s), dtype=complex)
    aug[:s, :s] = h * mat
    aug[:s, s:2 * s] = np.eye(s)
    aug[s:2 * s, 2 * s:] = np.eye(s)
    big = scipy.linalg.expm(aug)
    return big[:s, :s], big[:s, s:2 * s], big[:s, 2 * s:]


def frame_map(trunc: Truncation, perm, signs):
    """Gather indices and signs of Q for the lattice symmetry (Gk)_{perm[j]} = signs[j] k_j.

    (Q x)[i] = sign[i] * x[src[i]] on state vectors (c_alpha, rho, u).
    """
    d = trunc.dim_v
    n = len(trunc)
    size = n + 1 + d
    src = np.empty(size, dtype=int)
    sgn = np.empty(size)
    for pos, alpha in enumerate(trunc.indices):
        beta = np.empty(d, dtype=int)
        beta[list(perm)] = alpha
        target = trunc.index_of(tuple(beta))
        src[target] = pos
        sgn[target] = np.prod(np.asarray(signs, float) ** alpha)
    src[n], sgn[n] = n, 1.0
    for j in range(d):
        src[n + 1 + perm[j]] = n + 1 + j
        sgn[n + 1 + perm[j]] = signs[j]
    return src, sgn


@dataclass(eq=False)
class PropagatorTable:
    """e^{dt B}, dt phi_1(dt B) and dt phi_2(dt B) for every orbit of band modes."""

    grid: Grid
    trunc: Truncation
    params: ModelParams
    dt: float
    band_flat: np.ndarray          # flat indices of the band modes
    rep_of_mode: np.ndarray        # representative id per band mode
    group_of_mode: np.ndarray      # symmetry id per band mode
    groups: list                   # (src, sgn) per symmetry id
    rep_modes: np.ndarray          # integer mode numbers of the representatives
    expo: np.ndarray               # (n_rep, s, s)
    phi1: np.ndarray               # dt * phi_1
    phi2: np.ndarray               # dt * phi_2
    _order: np.ndarray = field(init=False, repr=False)
    _bounds: np.ndarray = field(init=False, repr=False)
    _src: np.ndarray = field(init=False, repr=False)
    _sgn: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._order = np.argsort(self.rep_of_mode, kind="stable")
        counts = np.bincount(self.rep_of_mode, minlength=len(self.rep_modes))
        self._bounds = np.concatenate([[0], np.cumsum(counts)])
        # per-column gather of Q, columns already sorted by representative
        groups = self.group_of_mode[self._order]
        self._src = np.stack([self.groups[g][0] for g in groups], axis=1)
        self._sgn = np.stack([self.groups[g][1] for g in groups], axis=1)

    @property
    def size(self) -> int:
        return len(self.trunc) + 1 + self.grid.dim

    def matches(self, state: SystemState, params: ModelParams) -> bool:
        same_grid = (state.grid.dim, state.grid.n, state.grid.box_length) == \
            (self.grid.dim, self.grid.n, self.grid.box_length)
        return same_grid and state.trunc == self.trunc and params == self.params

    def apply(self, mats, *vectors):
        """sum_j mats[j] @ vectors[j] per band mode (arrays of shape (s, n_band))."""
        ys = [self._sgn * np.take_along_axis(v[:, self._order], self._src, axis=0)
              for v in vectors]
        out = np.empty_like(ys[0])
        b = self._bounds
        for r in range(len(self.rep_modes)):
            lo, hi = b[r], b[r + 1]
            if lo == hi:
                continue
            acc = mats[0][r] @ ys[0][:, lo:hi]
            for m, y in zip(mats[1:], ys[1:]):
                acc += m[r] @ y[:, lo:hi]
            out[:, lo:hi] = acc
        back = np.empty_like(out)
        np.put_along_axis(back, self._src, self._sgn * out, axis=0)
        res = np.empty_like(back)
        res[:, self._order] = back
        return res

    def gather(self, state_stack):
        flat = state_stack.reshape(self.size, -1)
        return flat[:, self.band_flat]

    def scatter(self, band_values):
        out = np.zeros((self.size, self.grid.n ** self.grid.dim), dtype=complex)
        out[:, self.band_flat] = band_values
        return out.reshape((self.size,) + self.grid.shape)


def precompute_propagators(grid: Grid, trunc: Truncation, params: ModelParams,
                           dt: float) -> PropagatorTable:
    if not dt > 0:
        raise ValueError("time step must be positive")
    if grid.dim != trunc.dim_v:
        raise ValueError("grid and truncation dimensions differ")
    d = grid.dim
    modes = grid.mode_numbers.reshape(d, -1)
    band_flat = np.flatnonzero(grid.dealias_mask.reshape(-1))
    band = modes[:, band_flat]

    # symmetry carrying each mode to its representative (sorted absolute values)
    signs = np.where(band < 0, -1, 1)
    order = np.argsort(np.abs(band), axis=0, kind="stable")   # order[p] = axis placed at p
    perm = np.argsort(order, axis=0, kind="stable")            # perm[j] = slot of axis j
    canon = np.take_along_axis(np.abs(band), order, axis=0)

    group_keys = {}
    groups = []
    group_of_mode = np.empty(band.shape[1], dtype=int)
    for idx, key in enumerate(zip(map(tuple, perm.T), map(tuple, signs.T))):
        g = group_keys.get(key)
        if g is None:
            g = group_keys[key] = len(groups)
            groups.append(frame_map(trunc, key[0], key[1]))
        group_of_mode[idx] = g

    rep_keys, rep_of_mode = np.unique(canon.T, axis=0, return_inverse=True)
    rep_of_mode = rep_of_mode.reshape(-1)
    s = len(trunc) + 1 + d
    expo = np.empty((len(rep_keys), s, s), dtype=complex)
    phi1 = np.empty_like(expo)
    phi2 = np.empty_like(expo)
    for r, m in enumerate(rep_keys):
        mm = la.build_mode_matrix(grid.dk * m.astype(float), trunc, params)
        e, p1, p2 = phi_functions(mm.matrix, dt)
        expo[r], phi1[r], phi2[r] = e, dt * p1, dt * p2
    log.debug("propagator table: %d band modes, %d representatives, %d symmetries",
              band.shape[1], len(rep_keys), len(groups))
    return PropagatorTable(grid, trunc, params, float(dt), band_flat, rep_of_mode,
                           group_of_mode, groups, rep_keys, expo, phi1, phi2)


def _nonlinear_band(state, table, params):
    return table.gather(dynamics.nonlinear_rhs(state, params).stack())


def step(state: SystemState, table: PropagatorTable, params: ModelParams,
         nonlinear: bool = True) -> SystemState:
    """One ETD2 step of size ``table.dt``; modes outside the 2/3 band are discarded."""
    if not table.matches(state, params):
        raise ValueError("propagator table does not match the state or parameters")
    u0 = table.gather(state.stack())
    t1 = state.time + table.dt
    if not nonlinear:
        out = table.apply([table.expo], u0)
    else:
        n0 = _nonlinear_band(state, table, params)
        a = table.apply([table.expo, table.phi1], u0, n0)
        mid = SystemState.from_stack(state.grid, state.trunc, table.scatter(a), t1)
        n1 = _nonlinear_band(mid, table, params)
        out = a + table.apply([table.phi2], n1 - n0)
    new = SystemState.from_stack(state.grid, state.trunc, table.scatter(out), t1)
    if not np.all(np.isfinite(out)):
        raise StateQualityError(f"non-finite values after step to t={t1}")
    return new


@dataclass
class IntegrationResult:
    records: list
    final_state: SystemState
    steps: int


def integrate(state: SystemState, params: ModelParams, t_end: float, dt: float,
              sample_every: int = 1, weights: EnergyWeights | None = None, r0: float = 1.0,
              rule: QuadratureRule | None = None, nonlinear: bool = True,
              table: PropagatorTable | None = None, observer=None) -> IntegrationResult:
    """Fixed-step march from ``state.time`` to ``t_end``, recording every ``sample_every`` steps.

    ``observer(state, record)`` is called at each sample.  A failing step
    raises :class:`IntegrationAborted` carrying the records gathered so far.
    """
    if t_end < state.time:
        raise ValueError("t_end lies before the initial time")
    if sample_every < 1:
        raise ValueError("sample_every must be at least 1")
    span = t_end - state.time
    n_steps = int(round(span / dt))
    if abs(n_steps * dt - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"t_end - t0 = {span} is not a multiple of dt = {dt}")
    if table is None and n_steps:
        table = precompute_propagators(state.grid, state.trunc, params, dt)
    weights = weights or EnergyWeights()
    t0 = state.time

    def record(s):
        rec = diagnostics(s, params, weights, r0, rule)
        if observer is not None:
            observer(s, rec)
        return rec

    records = [record(state)]
    current = state
    for i in range(1, n_steps + 1):
        try:
            nxt = step(current, table, params, nonlinear)
            # keep the clock free of accumulated rounding
            nxt = nxt.replace(time=t0 + i * dt)
            if i % sample_every == 0 or i == n_steps:
                nxt.check_quality()
                records.append(record(nxt))
        except StateQualityError as exc:
            raise IntegrationAborted(f"step {i}: {exc}", records, current) from exc
        current = nxt
    return IntegrationResult(records, current, n_steps)
