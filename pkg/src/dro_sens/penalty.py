"""Penalty functions ``L``, their conjugates and budget maximizers.

Callers apply the parametrization ``L_delta(x) = delta * L(x / delta)``
themselves via :meth:`Penalty.scaled`; a :class:`Penalty` is a fixed shape.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class PenaltyError(ValueError):
    pass


class GrowthWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Penalty:
    """One of ``indicator`` (radius ``rho``), ``power`` (``kappa u^m / m``) or ``table``.

    Tabulated penalties are piecewise linear through ``(knots, values)`` and
    continue with their final slope beyond the last knot.
    """

    family: str
    rho: float = 1.0
    m: float = 3.0
    kappa: float = 1.0
    knots: tuple = field(default=())
    values: tuple = field(default=())

    def __post_init__(self):
        if self.family == "indicator" and not self.rho > 0:
            raise PenaltyError("indicator radius must be positive")
        if self.family == "power" and not (self.m > 1 and self.kappa > 0):
            raise PenaltyError("power penalty needs m > 1 and kappa > 0")
        if self.family == "table":
            u, v = np.asarray(self.knots, float), np.asarray(self.values, float)
            if len(u) < 2 or u[0] != 0 or v[0] != 0:
                raise PenaltyError("table must start at (0, 0) and have >= 2 knots")
            if np.any(np.diff(u) <= 0) or np.any(np.diff(v) < 0):
                raise PenaltyError("table knots must increase and values must not decrease")
            slopes = np.diff(v) / np.diff(u)
            if np.any(np.diff(slopes) < -1e-12):
                raise PenaltyError("tabulated penalty must be convex")
        if self.family not in ("indicator", "power", "table"):
            raise PenaltyError(f"unknown penalty family {self.family!r}")

    # constructors

    @classmethod
    def indicator(cls, rho: float = 1.0):
        return cls("indicator", rho=float(rho))

    @classmethod
    def power(cls, m: float, kappa: float = 1.0):
        return cls("power", m=float(m), kappa=float(kappa))

    @classmethod
    def table(cls, knots, values):
        return cls("table", knots=tuple(float(k) for k in knots),
                   values=tuple(float(v) for v in values))

    @property
    def final_slope(self) -> float:
        u, v = np.asarray(self.knots), np.asarray(self.values)
        return float((v[-1] - v[-2]) / (u[-1] - u[-2]))

    # evaluation

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "indicator":
            return np.where(u <= self.rho * (1 + 1e-12), 0.0, np.inf)
        if self.family == "power":
            return self.kappa * u**self.m / self.m
        kn, vals = np.asarray(self.knots), np.asarray(self.values)
        inside = np.interp(u, kn, vals)
        return np.where(u > kn[-1], vals[-1] + self.final_slope * (u - kn[-1]), inside)

    def derivative(self, u):
        """Right derivative ``L'(u)`` (0 inside the indicator ball)."""
        u = np.asarray(u, dtype=float)
        if self.family == "indicator":
            return np.zeros_like(u)
        if self.family == "power":
            return self.kappa * u ** (self.m - 1)
        kn, vals = np.asarray(self.knots), np.asarray(self.values)
        slopes = np.append(np.diff(vals) / np.diff(kn), self.final_slope)
        return slopes[np.clip(np.searchsorted(kn, u, side="right") - 1, 0, len(slopes) - 1)]

    def scaled(self, delta: float, x):
        """``L_delta(x) = delta L(x / delta)``; ``L_0`` is the indicator of ``{0}``."""
        x = np.asarray(x, dtype=float)
        if delta == 0:
            return np.where(x == 0, 0.0, np.inf)
        return delta * self(x / delta)

    def conjugate(self, v):
        """``L*(v) = sup_{u >= 0} (u v - L(u))`` (may be ``inf`` for tables)."""
        v = np.asarray(v, dtype=float)
        if np.any(v < 0):
            raise PenaltyError("conjugate is only evaluated at v >= 0")
        if self.family == "indicator":
            return self.rho * v
        if self.family == "power":
            mc = self.m / (self.m - 1)
            return self.kappa ** (-1.0 / (self.m - 1)) * v**mc / mc
        kn, vals = np.asarray(self.knots), np.asarray(self.values)
        best = np.max(np.multiply.outer(v, kn) - vals, axis=-1)
        return np.where(v > self.final_slope, np.inf, best)

    def optimal_u(self, r: float) -> float:
        """A maximizer ``u`` of ``u r - L(u)``."""
        if r < 0:
            raise PenaltyError("r must be non-negative")
        if r == 0:
            return 0.0
        if self.family == "indicator":
            return self.rho
        if self.family == "power":
            return (r / self.kappa) ** (1.0 / (self.m - 1))
        if r > self.final_slope:
            raise PenaltyError(f"sup of u*{r} - L(u) is unbounded (final slope {self.final_slope})")
        kn, vals = np.asarray(self.knots), np.asarray(self.values)
        return float(kn[np.argmax(r * kn - vals)])

    def validate_growth(self, p: float):
        """Check ``liminf L(u) / u^p = inf``; returns ``("ok", "")`` or ``("warn", details)``."""
        if self.family == "indicator":
            return "ok", ""
        if self.family == "power":
            if self.m > p:
                return "ok", ""
            msg = f"power penalty with m={self.m} <= p={p}: L(u)/u^p stays bounded"
        else:
            msg = f"tabulated penalty grows linearly beyond u={self.knots[-1]}, slower than u^{p}"
        warnings.warn(msg, GrowthWarning, stacklevel=2)
        return "warn", msg

    def spec(self) -> str:
        if self.family == "indicator":
            return f"indicator:{self.rho:g}"
        if self.family == "power":
            return f"power:m={self.m:g},kappa={self.kappa:g}"
        return "table"


def parse_penalty(spec: str) -> Penalty:
    """``indicator:1.0``, ``power:m=3,kappa=1`` or ``table:file.csv`` (columns ``u,L``)."""
    kind, _, body = spec.partition(":")
    if kind == "indicator":
        return Penalty.indicator(float(body) if body else 1.0)
    if kind == "power":
        kv = dict(item.split("=") for item in body.split(",") if item)
        return Penalty.power(float(kv.get("m", 3)), float(kv.get("kappa", 1)))
    if kind == "table":
        data = np.atleast_2d(np.genfromtxt(body, delimiter=",", comments="#"))
        data = data[np.isfinite(data).all(axis=1)]
        return Penalty.table(data[:, 0], data[:, 1])
    raise PenaltyError(f"unknown penalty spec {spec!r}")
