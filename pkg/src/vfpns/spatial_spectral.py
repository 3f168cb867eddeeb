"""
Periodic pseudo-spectral layer.

Fields on the box [0, L)^d are sampled on n points per axis and stored as
unnormalized discrete Fourier coefficients (numpy's ``fftn`` convention)
over the last ``d`` array axes.  With this convention

    ||g||_{L^2}^2 = sum_k |g_hat(k)|^2 * L^d / n^(2d),
    int g dx      = g_hat(0) * L^d / n^d,

and every norm in the package goes through :meth:`Grid.l2_sq`, so the
scaling is fixed in one place.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "Grid",
    "make_grid",
    "transform",
    "inverse_transform",
    "derivative",
    "gradient",
    "divergence",
    "laplacian",
    "dealias",
    "dealiased_product",
    "cutoff_low",
    "freq_split",
    "sobolev_norm_sq",
    "lebesgue_norm",
]


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    n: int
    box_length: float

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.box_length

    @property
    def cell_volume(self) -> float:
        return (self.box_length / self.n) ** self.dim

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        """Integer wavenumbers per axis, shape (d, n, ..., n)."""
        m = np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)
        out = np.stack(np.meshgrid(*([m] * self.dim), indexing="ij"))
        out.setflags(write=False)
        return out

    @cached_property
    def k(self) -> np.ndarray:
        """Wavevectors 2 pi / L * m, shape (d, n, ..., n)."""
        out = self.dk * self.mode_numbers
        out.setflags(write=False)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.sum(self.k ** 2, axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def kmag(self) -> np.ndarray:
        out = np.sqrt(self.k2)
        out.setflags(write=False)
        return out

    @cached_property
    def nyquist(self) -> np.ndarray:
        """True on modes whose derivative is ambiguous (any component at n/2)."""
        return np.any(np.abs(self.mode_numbers) == self.n // 2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes with every |m_axis| <= n/3."""
        out = np.all(3 * np.abs(self.mode_numbers) <= self.n, axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def coordinates(self) -> np.ndarray:
        x = np.arange(self.n) * self.box_length / self.n
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def l2_sq(self, ghat, axis=None):
        """||g||^2 from Fourier coefficients (summed over the spatial axes and ``axis``)."""
        s = np.sum(np.abs(ghat) ** 2, axis=axis) if axis is not None else np.abs(ghat) ** 2
        return float(np.sum(s)) * self.volume / self.n ** (2 * self.dim)

    def inner(self, fhat, ghat) -> float:
        """Real L^2 inner product int f g dx of two real fields."""
        return float(np.real(np.vdot(ghat, fhat))) * self.volume / self.n ** (2 * self.dim)

    def mean_integral(self, ghat):
        """int g dx, read from the k = 0 coefficient (works on stacked fields)."""
        ghat = np.asarray(ghat)
        zero = (Ellipsis,) + (0,) * self.dim
        return ghat[zero] * self.volume / self.n ** self.dim


def make_grid(d: int, n: int, L: float = 2 * np.pi) -> Grid:
    if d not in (1, 2, 3):
        raise ValueError(f"grid dimension must be 1, 2 or 3, got {d}")
    if n < 8:
        raise ValueError(f"need at least 8 points per axis, got {n}")
    if n & (n - 1):
        raise ValueError(f"points per axis must be a power of two, got {n}")
    if not L > 0:
        raise ValueError("box length must be positive")
    return Grid(dim=d, n=int(n), box_length=float(L))


def _check_shape(grid, a):
    if np.shape(a)[-grid.dim:] != grid.shape:
        raise ValueError(f"array shape {np.shape(a)} does not end with grid shape {grid.shape}")


def transform(grid: Grid, g) -> np.ndarray:
    _check_shape(grid, g)
    return scipy.fft.fftn(g, axes=grid.axes)


def inverse_transform(grid: Grid, ghat, real: bool = True) -> np.ndarray:
    _check_shape(grid, ghat)
    out = scipy.fft.ifftn(ghat, axes=grid.axes)
    return out.real if real else out


def derivative(grid: Grid, ghat, axis: int) -> np.ndarray:
    """Fourier multiplier i k_axis; the Nyquist plane is zeroed."""
    mult = 1j * np.where(grid.nyquist, 0.0, grid.k[axis])
    return mult * ghat


def gradient(grid: Grid, ghat) -> np.ndarray:
    return np.stack([derivative(grid, ghat, i) for i in range(grid.dim)])


def divergence(grid: Grid, vhat) -> np.ndarray:
    return sum(derivative(grid, vhat[i], i) for i in range(grid.dim))


def laplacian(grid: Grid, ghat) -> np.ndarray:
    return -grid.k2 * ghat


def dealias(grid: Grid, ghat) -> np.ndarray:
    return np.where(grid.dealias_mask, ghat, 0)


def dealiased_product(grid: Grid, fhat, ghat) -> np.ndarray:
    """Pointwise product with both inputs and the output truncated by the 2/3 rule."""
    _check_shape(grid, fhat)
    _check_shape(grid, ghat)
    f = inverse_transform(grid, dealias(grid, fhat))
    g = inverse_transform(grid, dealias(grid, ghat))
    return dealias(grid, transform(grid, f * g))


def cutoff_low(kmag, r0: float) -> np.ndarray:
    """phi_0: 1 on |k| <= r0/2, cos^2 ramp on (r0/2, r0], 0 beyond."""
    if not r0 > 0:
        raise ValueError("cutoff radius must be positive")
    kmag = np.asarray(kmag, dtype=float)
    s = np.clip((kmag - 0.5 * r0) / (0.5 * r0), 0.0, 1.0)
    phi = np.cos(0.5 * np.pi * s) ** 2
    phi = np.where(kmag <= 0.5 * r0, 1.0, phi)
    return np.where(kmag >= r0, 0.0, phi)


def freq_split(grid: Grid, ghat, r0: float):
    """Return (g^L, g^H) with g^L = phi_0(D) g and g^H = g - g^L."""
    low = cutoff_low(grid.kmag, r0) * ghat
    return low, ghat - low


def _multi_index_symbol(grid, s):
    """sum_{|alpha| <= s} prod_i k_i^(2 alpha_i)."""
    sym = np.zeros(grid.shape)
    k2 = grid.k ** 2
    for order in range(s + 1):
        for alpha in itertools.product(range(order + 1), repeat=grid.dim):
            if sum(alpha) != order:
                continue
            term = np.ones(grid.shape)
            for i, a in enumerate(alpha):
                if a:
                    term = term * k2[i] ** a
            sym += term
    return sym


def sobolev_norm_sq(grid: Grid, ghat, s: int = 0) -> float:
    """sum_{|alpha| <= s} ||d^alpha g||^2; stacked fields (leading axes) are summed."""
    if s < 0 or int(s) != s:
        raise ValueError("Sobolev order must be a nonnegative integer")
    ghat = np.asarray(ghat)
    weights = _multi_index_symbol(grid, int(s))
    lead = tuple(range(ghat.ndim - grid.dim))
    power = np.sum(np.abs(ghat) ** 2, axis=lead) if lead else np.abs(ghat) ** 2
    return float(np.sum(weights * power)) * grid.volume / grid.n ** (2 * grid.dim)


def lebesgue_norm(grid: Grid, g, p: float = 2.0) -> float:
    """Rectangle-rule L^p norm of physical samples; ``p = inf`` gives the grid maximum."""
    if p < 1:
        raise ValueError(f"L^p needs p >= 1, got {p}")
    g = np.abs(np.asarray(g))
    if np.isinf(p):
        return float(np.max(g))
    return float((np.sum(g ** p) * grid.cell_volume) ** (1.0 / p))
