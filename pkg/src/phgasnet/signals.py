"""Scalar time signals used as boundary data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t: float) -> float:
        return float(self.value)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Sawtooth:
    """``base`` plus a triangle rising linearly to ``height`` at ``t_peak`` and
    falling back to zero at ``t_end``."""

    base: float
    height: float
    t_peak: float
    t_end: float

    def __call__(self, t: float) -> float:
        if 0.0 <= t < self.t_peak:
            return self.base + self.height * t / self.t_peak
        if self.t_peak <= t < self.t_end:
            return self.base + self.height * (self.t_end - t) / (self.t_end - self.t_peak)
        return float(self.base)

    def to_dict(self):
        return {"kind": "sawtooth", "base": self.base, "height": self.height,
                "t_peak": self.t_peak, "t_end": self.t_end}


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear interpolation, held constant outside the table."""

    times: tuple
    values: tuple

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def to_dict(self):
        return {"kind": "tabulated", "times": list(self.times), "values": list(self.values)}


def signal_from(spec, pointer: str = ""):
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("signal must be a number or an object with 'kind'", pointer)
    kind = spec["kind"]
    try:
        if kind == "constant":
            return Constant(float(spec["value"]))
        if kind == "sawtooth":
            s = Sawtooth(float(spec["base"]), float(spec["height"]), float(spec["t_peak"]), float(spec["t_end"]))
            if not 0 < s.t_peak < s.t_end:
                raise ConfigError("sawtooth needs 0 < t_peak < t_end", pointer)
            return s
        if kind == "tabulated":
            times = tuple(float(x) for x in spec["times"])
            values = tuple(float(x) for x in spec["values"])
            if len(times) != len(values) or len(times) == 0 or np.any(np.diff(times) <= 0):
                raise ConfigError("tabulated signal needs matching, increasing times", pointer)
            return Tabulated(times, values)
    except KeyError as exc:
        raise ConfigError(f"signal is missing field {exc}", pointer) from None
    raise ConfigError(f"unknown signal kind {kind!r}", pointer)
