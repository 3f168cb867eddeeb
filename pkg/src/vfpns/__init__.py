"""Fourier–Hermite simulator and linear analyzer for a kinetic–fluid system
(Vlasov–Fokker–Planck particles coupled to compressible Navier–Stokes through
density-dependent drag)."""

from .params import EnergyWeights, ModelParams
from .spatial_spectral import Grid, make_grid
from .state_energy import SystemState, StateQualityError
from .velocity_basis import Truncation, enumerate_truncation, make_quadrature

__version__ = "0.1.0"

__all__ = [
    "EnergyWeights",
    "ModelParams",
    "Grid",
    "make_grid",
    "SystemState",
    "StateQualityError",
    "Truncation",
    "enumerate_truncation",
    "make_quadrature",
]
