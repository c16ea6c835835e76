"""Ideal-gas closure and coupling-node entropy algebra.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateNodeError, DomainError


@dataclass(frozen=True)
class GasConstants:
    """Ideal-gas constants. ``c_p`` and ``gamma`` are derived from ``R`` and ``c_v``."""

    R: float = 1.0
    c_v: float = 2.5

    def __post_init__(self):
        if not (self.R > 0 and self.c_v > 0):
            raise ConfigError("gas constants R and c_v must be positive")

    @property
    def c_p(self) -> float:
        return self.R + self.c_v

    @property
    def gamma(self) -> float:
        return self.c_p / self.c_v

    @property
    def kappa(self) -> float:
        """Ratio R/c_v so that p = kappa * e."""
        return self.R / self.c_v

    @classmethod
    def from_dict(cls, d: dict) -> "GasConstants":
        g = cls(R=float(d.get("R", 1.0)), c_v=float(d.get("c_v", 2.5)))
        for key, val in (("c_p", g.c_p), ("gamma", g.gamma)):
            if key in d and not np.isclose(float(d[key]), val, rtol=1e-12, atol=0):
                raise ConfigError(f"{key}={d[key]} inconsistent with R and c_v (expected {val})", f"/gas/{key}")
        return g


@dataclass(frozen=True)
class PipeParams:
    """Geometry, friction and heat-exchange data of a single pipe."""

    L: float = 1.0
    d: float = 0.1
    lambda_f: float = 4.0
    k_omega: float = 0.5
    T_inf: float = 1.0
    A: float = 1.0

    def __post_init__(self):
        if not (self.L > 0 and self.d > 0 and self.A > 0):
            raise ConfigError("pipe L, d and A must be positive")
        if self.lambda_f < 0 or self.k_omega < 0 or self.T_inf < 0:
            raise ConfigError("pipe lambda_f, k_omega and T_inf must be nonnegative")


def _require_positive(name, x):
    if np.any(~(np.asarray(x) > 0)):
        raise DomainError(f"{name} must be positive, got min {np.min(x)}")


def pressure(rho, e, g: GasConstants):
    _require_positive("rho", rho)
    _require_positive("e", e)
    return g.kappa * np.asarray(e, dtype=float)


def temperature(rho, e, g: GasConstants):
    _require_positive("rho", rho)
    return np.asarray(e, dtype=float) / (g.c_v * np.asarray(rho, dtype=float))


def specific_entropy(rho, e, g: GasConstants):
    p = pressure(rho, e, g)
    return g.c_v * np.log(p / np.asarray(rho, dtype=float) ** g.gamma)


def energy_from_entropy(rho, s_star, g: GasConstants):
    _require_positive("rho", rho)
    return (g.c_v / g.R) * np.asarray(rho, dtype=float) ** g.gamma * np.exp(np.asarray(s_star) / g.c_v)


def total_specific_enthalpy(rho, m, e, g: GasConstants):
    _require_positive("rho", rho)
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    e = np.asarray(e, dtype=float)
    return m**2 / (2 * rho**2) + (e + g.kappa * e) / rho


def speed_of_sound(rho, e, g: GasConstants):
    p = pressure(rho, e, g)
    return np.sqrt(g.gamma * p / np.asarray(rho, dtype=float))


def is_subsonic(rho, m, e, g: GasConstants):
    c = speed_of_sound(rho, e, g)
    return np.abs(np.asarray(m) / np.asarray(rho)) < c


def entropy_mix(incoming, tol: float = 0.0):
    """Flow-weighted mean of entropies.

    ``incoming`` is a sequence of ``(signed_flow, entropy)`` pairs. The flows are
    already multiplied by the node incidence, so only their ratio matters.
    """
    pairs = list(incoming)
    if not pairs:
        raise DegenerateNodeError("entropy mix over an empty set of pipes")
    flows = np.array([p[0] for p in pairs], dtype=float)
    ents = np.array([p[1] for p in pairs], dtype=float)
    total = flows.sum()
    if abs(total) <= tol:
        raise DegenerateNodeError("total incoming flow at node is zero")
    if np.all(ents == ents[0]):
        return float(ents[0])
    return float(flows @ ents / total)
