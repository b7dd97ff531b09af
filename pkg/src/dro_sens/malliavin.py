"""Discrete pathwise Malliavin derivative.

``D_n f`` is the derivative of ``f`` along a permanent shift of the path from
index ``n`` onward, i.e. the suffix sum ``sum_{k >= n} d f / d x_k`` of the
coordinate gradient. Fields are returned as arrays of shape ``(P, N, d)``
where slot ``n - 1`` holds ``D_n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class PayoffError(ValueError):
    pass


@dataclass
class Payoff:
    """Path functional evaluated on stacks of grid paths.

    ``evaluate(x, t)`` maps paths ``(P, N + 1, d)`` and the time grid to ``(P,)``.
    ``gradient(x, t)``, when given, returns the coordinate partials with
    respect to ``x_1..x_N`` as ``(P, N, d)``. ``kink(x, t)``, when given,
    returns the distance of each path to the payoff's non-differentiable set.
    """

    evaluate: Callable
    gradient: Callable | None = None
    name: str = "custom"
    growth_p: float | None = None
    kink: Callable | None = None

    def __call__(self, x, t=None):
        x = _stack(x)
        if t is None:
            t = np.arange(x.shape[1], dtype=float)
        return np.asarray(self.evaluate(x, np.asarray(t, dtype=float)), dtype=float)

    def grad(self, x, t=None):
        if self.gradient is None:
            raise PayoffError(f"payoff {self.name!r} has no analytic gradient")
        x = _stack(x)
        if t is None:
            t = np.arange(x.shape[1], dtype=float)
        return np.asarray(self.gradient(x, np.asarray(t, dtype=float)), dtype=float)

    def __add__(self, other):
        return combine(1.0, self, 1.0, other)

    def __mul__(self, alpha):
        return combine(float(alpha), self, 0.0, None)

    __rmul__ = __mul__


def combine(alpha, f, beta, g):
    """The payoff ``alpha f + beta g`` (``g`` may be ``None``)."""

    def ev(x, t):
        out = alpha * f.evaluate(x, t)
        return out if g is None else out + beta * g.evaluate(x, t)

    grad = None
    if f.gradient is not None and (g is None or g.gradient is not None):
        def grad(x, t):
            out = alpha * f.gradient(x, t)
            return out if g is None else out + beta * g.gradient(x, t)

    name = f"{alpha}*{f.name}" if g is None else f"{alpha}*{f.name}+{beta}*{g.name}"
    return Payoff(ev, grad, name)


def _stack(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :, None]
    elif x.ndim == 2:
        x = x[None]
    return x


def default_eps(x):
    """Per-path bump size ``max(1e-5, 1e-7 * ||x||_inf)``."""
    return np.maximum(1e-5, 1e-7 * np.max(np.abs(x), axis=(1, 2)))


def suffix_sum(partials):
    return np.cumsum(partials[:, ::-1], axis=1)[:, ::-1]


def _bump_field(f: Payoff, x, t, eps):
    P, n_t, d = x.shape
    N = n_t - 1
    out = np.empty((P, N, d))
    h = eps[:, None]
    for n in range(1, N + 1):
        for i in range(d):
            up = x.copy()
            up[:, n:, i] += h
            dn = x.copy()
            dn[:, n:, i] -= h
            out[:, n - 1, i] = (f.evaluate(up, t) - f.evaluate(dn, t)) / (2.0 * eps)
    return out


def discrete_malliavin(f: Payoff, x, t=None, backend: str = "auto", eps=None,
                       richardson: bool = False):
    """Field ``D_n f(x)``, ``n = 1..N``, for one path or a stack of paths.

    ``backend`` is ``"analytic"`` (suffix sums of the coordinate gradient),
    ``"bump"`` (central differences of ``f(x +/- eps e 1_[n..N])``) or
    ``"auto"`` (analytic when a gradient is available).
    """
    single = np.asarray(x).ndim < 3
    x = _stack(x)
    if t is None:
        t = np.arange(x.shape[1], dtype=float)
    t = np.asarray(t, dtype=float)
    if backend == "auto":
        backend = "analytic" if f.gradient is not None else "bump"
    if backend == "analytic":
        field = suffix_sum(f.grad(x, t))
    elif backend == "bump":
        h = default_eps(x) if eps is None else np.broadcast_to(np.asarray(eps, float), (x.shape[0],))
        field = _bump_field(f, x, t, h)
        if richardson:
            half = _bump_field(f, x, t, h / 2.0)
            field = (4.0 * half - field) / 3.0
    else:
        raise PayoffError(f"unknown backend {backend!r}")
    if np.isnan(field).any():
        raise PayoffError(f"NaN in Malliavin derivative of {f.name!r}")
    return field[0] if single else field


def bump_derivative(f: Payoff, x, n: int, e, eps: float = 1e-5, t=None) -> float:
    """Central difference ``(f(x + eps e 1_[n..N]) - f(x - eps e 1_[n..N])) / (2 eps)``."""
    x = _stack(x)
    N = x.shape[1] - 1
    if not 1 <= n <= N:
        raise PayoffError(f"index n={n} outside 1..{N}")
    e = np.asarray(e, dtype=float).reshape(-1)
    up = x.copy()
    up[:, n:, :] += eps * e
    dn = x.copy()
    dn[:, n:, :] -= eps * e
    return float((f(up, t) - f(dn, t))[0] / (2.0 * eps))


def grid_malliavin_ct(f: Payoff, x, grid, backend: str = "auto", eps=None):
    """Pathwise derivative ``D_{t_k} f`` on a time grid, ``k = 1..N``.

    The bump is the indicator of ``[t_k, T]``, i.e. the discrete construction
    applied to grid paths.
    """
    return discrete_malliavin(f, x, grid, backend=backend, eps=eps)


def atom_mass(f: Payoff, wp, tol: float = 1e-12) -> float:
    """Probability of paths sitting on the payoff's kink (0 if none declared)."""
    if f.kink is None:
        return 0.0
    dist = f.kink(wp.paths, wp.time_grid)
    return float(np.sum(wp.weights[np.abs(dist) <= tol]))
