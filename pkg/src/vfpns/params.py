"""Model constants and functional weights."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict


@dataclass(frozen=True)
class ModelParams:
    """Viscosity and the prototype pressure law P(n) = c0 n^gamma."""

    mu: float = 1.0
    gamma: float = 1.4
    c0: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("viscosity mu must be positive")
        if not self.gamma > 1:
            raise ValueError("pressure exponent gamma must exceed 1")
        if not self.c0 > 0:
            raise ValueError("pressure constant c0 must be positive")

    @property
    def dp1(self) -> float:
        """P'(1) = c0 gamma."""
        return self.c0 * self.gamma

    def pressure(self, n):
        return self.c0 * n ** self.gamma

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EnergyWeights:
    """Small weights of the cross terms in the energy functionals.

    ``tau`` holds tau_1 .. tau_7 (index 0 is tau_1); ``ck`` holds C_1, C_2.
    """

    tau: tuple = (0.05, 0.05, 0.005, 0.1, 0.1, 0.05, 0.05)
    ck: tuple = (1.0, 1.0)
    lambda_fit: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.tau) != 7:
            raise ValueError("expected seven tau weights")
        if len(self.ck) != 2:
            raise ValueError("expected two C_k constants")
        for t in self.tau:
            if not 0 < t < 1:
                raise ValueError(f"tau weights must lie in (0, 1), got {t}")
        if self.tau[2] > self.tau[0] / 10:
            raise ValueError("tau_3 must not exceed tau_1 / 10")
        if any(c <= 0 for c in self.ck):
            raise ValueError("C_k must be positive")

    def t(self, i: int) -> float:
        """tau_i with the 1-based numbering."""
        return self.tau[i - 1]

    def to_dict(self) -> dict:
        return {"tau": list(self.tau), "ck": list(self.ck), "lambda_fit": self.lambda_fit}
